#include <doctest.h>

#include <cklab/moments.hpp>
#include <cklab/sampler.hpp>

#include "oracles.hpp"

using namespace cklab;

namespace {

std::vector<std::vector<std::size_t>> supports_of(const SupportPattern& s) {
  std::vector<std::vector<std::size_t>> out;
  for (const auto& c : s.supports()) out.push_back(c.indices());
  return out;
}

SupportPattern transpose(const SupportPattern& s) {
  std::vector<RowSet> cols;
  for (std::size_t i = 0; i < s.n(); ++i) cols.push_back(s.row_support(i));
  return SupportPattern(s.n(), 0, std::move(cols));
}

SupportPattern random_pattern(std::size_t n, Rng& rng, double density) {
  std::vector<RowSet> cols(n, RowSet(n));
  for (auto& c : cols)
    for (std::size_t i = 0; i < n; ++i)
      if (rng.uniform01() < density) c.set(i);
  return SupportPattern(n, 0, std::move(cols));
}

oracle::Elem to_elem(const ConcreteGroup& g, std::size_t x) {
  oracle::Elem e;
  for (std::size_t i = 0; i < g.rank(); ++i) e.push_back(g.digit(x, i));
  return e;
}

// log_p of the index of the subgroup generated by the coordinates from start on outside sigma.
int oracle_log_index(const HomAssignment& f, std::size_t start, std::uint64_t sigma) {
  const oracle::Group g(static_cast<long>(f.target.p()), f.target.base().parts());
  std::vector<oracle::Elem> gens;
  for (std::size_t i = start; i < f.images.size(); ++i)
    if (!((sigma >> (i - start)) & 1u)) gens.push_back(to_elem(f.target, f.images[i]));
  long idx = g.order() / static_cast<long>(oracle::closure(g, gens).size());
  int l = 0;
  for (; idx > 1; idx /= static_cast<long>(f.target.p())) ++l;
  return l;
}

}  // namespace

TEST_CASE("exact moments on tiny patterns") {
  const PGroup z2(2, {1});
  CHECK(exact_moment_bruteforce(full_pattern(1), z2) == Rational(1, 2));
  CHECK(exact_moment_bruteforce(full_pattern(2), z2) == Rational(3, 4));
  CHECK(exact_moment_bruteforce(diagonal_pattern(2), z2) == Rational(5, 4));
  CHECK(oracle::moment(2, {1}, 2, {{0}, {1}}) == Rational(5, 4));
}

TEST_CASE("exact moments agree with the enumeration oracle") {
  Rng rng(2024);
  const std::vector<PGroup> groups{PGroup(2, {1}), PGroup(2, {2}), PGroup(2, {1, 1}), PGroup(3, {1}), PGroup(2, {2, 1})};
  for (const auto& g : groups)
    for (std::size_t n = 1; n <= 4; ++n)
      for (int trial = 0; trial < 6; ++trial) {
        if (std::pow(g.order().convert_to<double>(), static_cast<double>(n)) > 5000) continue;
        const auto s = random_pattern(n, rng, 0.6);
        CAPTURE(g.to_string()); CAPTURE(n); CAPTURE(trial);
        CHECK(exact_moment_bruteforce(s, g) == oracle::moment(static_cast<long>(g.p()), g.parts(), n, supports_of(s)));
      }
}

TEST_CASE("full Haar moments are one minus a tail") {
  for (std::size_t n = 1; n <= 7; ++n) {
    const auto e = exact_moment_bruteforce(full_pattern(n), PGroup(2, {1}));
    CHECK(e == 1 - rational_pow(2, -static_cast<long>(n)));
    CHECK(abs(e - 1) <= rational_pow(2, 1 - static_cast<long>(n)));
  }
}

TEST_CASE("moments are invariant under transpose") {
  Rng rng(31);
  for (int trial = 0; trial < 40; ++trial) {
    const auto s = random_pattern(1 + rng.below(5), rng, 0.55);
    CHECK(exact_moment_bruteforce(s, PGroup(2, {1})) == exact_moment_bruteforce(transpose(s), PGroup(2, {1})));
  }
}

TEST_CASE("moment split") {
  const auto f = d_split(full_pattern(2), PGroup(2, {1}));
  CHECK(f.d_n0 == Rational(3, 4));
  CHECK(f.residual == 0);
  CHECK(d_split(stairs_unit(3, 1), PGroup(2, {1})).residual == 1);
  const auto t = d_split(band_pattern(4, 1), PGroup::trivial(2));
  CHECK(t.moment == 1);
  CHECK(t.residual == 0);
  const auto s = stairs_unit(5, 2);
  for (unsigned th : {1u, 3u, 8u}) CHECK(d_split(s, PGroup(3, {1}), kBruteForceCap, th).moment == d_split(s, PGroup(3, {1}), kBruteForceCap, 1).moment);
  CHECK_THROWS_AS(d_split(full_pattern(12), PGroup(2, {1, 1}), 1000), CapExceeded);
}

TEST_CASE("stairs closed forms") {
  CHECK(stairs_caseI(2, 5, 2) == Rational(3, 4));
  CHECK(stairs_wide_caseI(2, 5, 3, 2) == Rational(3, 4));
  CHECK(stairs_caseI(3, 4, 4) == 0);
  CHECK_THROWS_AS(stairs_caseI(4, 4, 2), ValidationError);
  CHECK_THROWS_AS(stairs_caseI(2, 4, 0), ValidationError);
  CHECK_THROWS_AS(stairs_wide_caseI(2, 5, 3, 1), ValidationError);
  for (std::size_t n = 3; n <= 4; ++n)
    for (std::size_t t = 1; t <= n; ++t) {
      CHECK(d_split(stairs_unit(n, t), PGroup(2, {1})).residual == stairs_caseI(2, n, t));
      // the residual of the enumeration, recomputed independently
      const auto sup = supports_of(stairs_unit(n, t));
      const auto all = oracle::moment(2, {1}, n, sup);
      CHECK(all - d_split(stairs_unit(n, t), PGroup(2, {1})).d_n0 == stairs_caseI(2, n, t));
    }
}

TEST_CASE("Poisson-binomial tail") {
  const std::vector<double> xs{0.1, 0.9, 0.5, 0.5};
  CHECK(f_tail(xs, 0) == 1.0);
  CHECK(f_tail(xs, 4) == doctest::Approx(0.1 * 0.9 * 0.25));
  CHECK(f_tail({0.5, 0.5}, 1) == doctest::Approx(0.75));
  CHECK(f_tail_geomean_check(xs, 2));
  CHECK(f_tail_geomean_check(std::vector<double>(6, 0.3), 3));
  CHECK_THROWS_AS(f_tail(xs, 5), ValidationError);
  CHECK_THROWS_AS(f_tail_geomean_check(xs, 3), ValidationError);
  Rng rng(8);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> v(1 + rng.below(12));
    for (auto& x : v) x = rng.uniform01();
    const auto m = rng.below(v.size() + 1);
    CHECK(f_tail(v, m) == doctest::Approx(oracle::f_tail(v, m)).epsilon(1e-12));
  }
}

TEST_CASE("chain ratios") {
  const ConcreteGroup g(PGroup(2, {1, 1}));
  std::vector<Subgroup> lines;
  for (const auto& h : enumerate_subgroups(g))
    if (h.size() == 2) lines.push_back(h);
  const auto cb = chain_ratio({lines[0], lines[1]});
  CHECK(cb.ratio == Rational(1, 2));
  CHECK(cb.steps == 1);
  CHECK(cb.holds);
  const ConcreteGroup z2(PGroup(2, {1}));
  const auto up = chain_ratio({Subgroup::trivial(z2), Subgroup::full(z2)});
  CHECK(up.ratio == 1);
  CHECK_FALSE(up.holds);
  CHECK(up.corrected_holds);
  const auto down = chain_ratio({Subgroup::full(z2), Subgroup::trivial(z2)});
  CHECK(down.ratio == Rational(1, 2));
  CHECK(down.holds);
  CHECK_THROWS_AS(chain_ratio({}), ValidationError);
}

TEST_CASE("chain ratios agree with set arithmetic") {
  const PGroup base(3, {2});
  const ConcreteGroup g(base);
  const auto subs = enumerate_subgroups(g);
  for (const auto& a : subs)
    for (const auto& b : subs)
      for (const auto& c : subs) {
        if (a.members() == b.members() || b.members() == c.members()) continue;
        oracle::ElemSet sa, sb, sc;
        for (auto x : a.members()) sa.insert(to_elem(g, x));
        for (auto x : b.members()) sb.insert(to_elem(g, x));
        for (auto x : c.members()) sc.insert(to_elem(g, x));
        const Rational expect = Rational(BigInt(oracle::intersect(sa, sb).size()), BigInt(sa.size())) *
                                Rational(BigInt(oracle::intersect(sb, sc).size()), BigInt(sb.size()));
        CHECK(chain_ratio({a, b, c}).ratio == expect);
      }
}

TEST_CASE("chain sum") {
  CHECK(chain_sum_44(PGroup(2, {1}), 1, 1) == 0);
  CHECK(chain_sum_44(PGroup(2, {1}), 2, 1) == Rational(3, 2));
  // direct enumeration of k-tuples of subgroups
  for (const auto& g : {PGroup(2, {1, 1}), PGroup(3, {1}), PGroup(2, {2})}) {
    const auto subs = enumerate_subgroups(ConcreteGroup(g));
    for (std::size_t k = 2; k <= 3; ++k)
      for (unsigned t = 1; t <= 2; ++t) {
        Rational total = 0;
        std::vector<std::size_t> idx(k, 0);
        while (true) {
          bool constant = true;
          for (auto i : idx) constant = constant && i == idx[0];
          if (!constant) {
            Rational term = 1;
            for (std::size_t j = 0; j + 1 < k; ++j) {
              const auto& h = subs[idx[j]];
              term *= Rational(BigInt(subgroup_intersection(h, subs[idx[j + 1]]).size()), BigInt(h.size()));
            }
            Rational tt = 1;
            for (unsigned i = 0; i < t; ++i) tt *= term;
            total += tt;
          }
          std::size_t c = 0;
          while (c < k && ++idx[c] == subs.size()) idx[c++] = 0;
          if (c == k) break;
        }
        CAPTURE(g.to_string()); CAPTURE(k); CAPTURE(t);
        CHECK(chain_sum_44(g, k, t) == total);
      }
  }
}

TEST_CASE("chain sum decreases in t") {
  for (const auto& g : {PGroup(2, {1, 1}), PGroup(3, {2}), PGroup(2, {2, 1})})
    for (std::size_t k = 2; k <= 5; ++k)
      for (unsigned t = 1; t <= 4; ++t) {
        CHECK(chain_sum_44(g, k, t + 1) <= chain_sum_44(g, k, t));
        CHECK(chain_sum_44_cyclic(SubgroupLattice(ConcreteGroup(g)), k, t + 1) <=
              chain_sum_44_cyclic(SubgroupLattice(ConcreteGroup(g)), k, t));
      }
}

TEST_CASE("code checks") {
  const ConcreteGroup z2(PGroup(2, {1}));
  CHECK(is_code(HomAssignment{z2, std::vector<std::size_t>(5, 1)}, 0, 2));
  CHECK_FALSE(is_code(HomAssignment{z2, {1, 0, 0, 0, 0}}, 0, 2));
  CHECK(delta_depth(HomAssignment{z2, std::vector<std::size_t>(5, 1)}, 0, 0.1) == 1);
  // all images inside the trivial (index 2) subgroup: sigma = {} witnesses depth 2
  CHECK(delta_depth(HomAssignment{z2, std::vector<std::size_t>(5, 0)}, 0, 0.5) == 2);
  CHECK_THROWS_AS(is_code(HomAssignment{z2, {2}}, 0, 1), ValidationError);
  CHECK_THROWS_AS(is_code(HomAssignment{z2, {1}}, 3, 1), ValidationError);
}

TEST_CASE("code checks agree with direct enumeration") {
  Rng rng(77);
  for (const auto& base : {PGroup(3, {1}), PGroup(2, {1, 1}), PGroup(2, {2})}) {
    const ConcreteGroup g(base);
    for (int trial = 0; trial < 25; ++trial) {
      HomAssignment f{g, {}};
      for (int i = 0; i < 8; ++i) f.images.push_back(rng.below(g.size()));
      const std::size_t start = rng.below(3);
      const double dist = 1 + static_cast<double>(rng.below(4));
      const double delta = 0.1 * static_cast<double>(1 + rng.below(5));
      const std::size_t m = f.images.size() - start;
      bool code = true;
      int best = 0;
      for (std::uint64_t sigma = 0; sigma < (std::uint64_t{1} << m); ++sigma) {
        const auto size = static_cast<double>(std::popcount(sigma));
        const int l = oracle_log_index(f, start, sigma);
        if (size < dist && l > 0) code = false;
        if (l > best && size < l * delta * static_cast<double>(m)) best = l;
      }
      CHECK(is_code(f, start, dist) == code);
      CHECK(delta_depth(f, start, delta) == big_pow(base.p(), static_cast<unsigned>(best)));
    }
  }
}

TEST_CASE("moment upper bound from the support graph") {
  CHECK(moment_upper_bound_exact(full_pattern(5), 2) == 1);
  for (std::size_t n = 1; n <= 8; ++n)
    CHECK(moment_upper_bound_exact(diagonal_pattern(n), 2) == Rational(BigInt(1) << n) - 1);
  CHECK_THROWS_AS(moment_upper_bound_exact(block_pattern(3, 3, 1), 2), ValidationError);
  CHECK_THROWS_AS(moment_upper_bound_exact(full_pattern(30), 2), CapExceeded);
}

TEST_CASE("moment bound holds on every valid pattern with n <= 3") {
  std::size_t checked = 0;
  for (std::size_t n = 1; n <= 3; ++n)
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << (n * n)); ++mask) {
      std::vector<RowSet> cols(n, RowSet(n));
      for (std::size_t b = 0; b < n * n; ++b)
        if ((mask >> b) & 1u) cols[b / n].set(b % n);
      const SupportPattern s(n, 0, cols);
      if (!validate(s).valid) continue;
      ++checked;
      CHECK(exact_moment_bruteforce(s, PGroup(2, {1})) <= moment_upper_bound_exact(s, 2));
    }
  CHECK(checked == 273);
}
