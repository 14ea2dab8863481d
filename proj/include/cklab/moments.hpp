#pragma once

#include "cklab/concrete_group.hpp"
#include "cklab/expander.hpp"
#include "cklab/patterns.hpp"

#include <cmath>
#include <thread>

namespace cklab {

inline constexpr std::uint64_t kBruteForceCap = 100'000'000;

struct MomentSplit {
  Rational moment;    // E_n(G)
  Rational d_n0;      // contribution of F with every F V_sigma = G
  Rational residual;  // moment - d_n0
};

namespace detail {

// |G|^n, or cap + 1 once it passes cap.
inline std::uint64_t bounded_power(std::uint64_t base, std::size_t n, std::uint64_t cap) {
  std::uint64_t r = 1;
  for (std::size_t i = 0; i < n; ++i) {
    if (base != 0 && r > cap / base) return cap + 1;
    r *= base;
  }
  return r;
}

struct MomentTally {
  std::vector<std::uint64_t> by_exponent;  // surjective F counted by sum_j log_p |F V_sigma_j|
  std::uint64_t all_full = 0;
};

// Depth-first over F = (F(v_1), ..., F(v_n)); each column keeps the index of
// the subgroup generated by the images of its allowed rows, updated in place
// and undone on the way back.
class MomentEnumerator {
 public:
  MomentEnumerator(const SupportPattern& s, const SubgroupLattice& lat) : lat_(lat), n_(s.rows()), cols_(s.cols()) {
    row_cols_.resize(n_);
    for (std::size_t j = 0; j < cols_; ++j)
      for (auto i : s.support(j).indices()) row_cols_[i].push_back(j);
    tally_.by_exponent.assign(cols_ * static_cast<std::size_t>(lat.log_size(lat.full_index())) + 1, 0);
  }

  MomentTally run(std::size_t first_lo, std::size_t first_hi) {
    state_.assign(cols_, lat_.trivial_index());
    log_sum_ = 0;
    full_cols_ = lat_.trivial_index() == lat_.full_index() ? cols_ : 0;
    if (n_ == 0) return tally_;
    for (std::size_t x = first_lo; x < first_hi; ++x) step(0, lat_.trivial_index(), x);
    return tally_;
  }

 private:
  void step(std::size_t i, std::size_t total, std::size_t x) {
    const std::size_t full = lat_.full_index();
    const auto& touched = row_cols_[i];
    std::size_t saved[64];
    std::vector<std::size_t> saved_big;
    std::size_t* undo = saved;
    if (touched.size() > 64) {
      saved_big.resize(touched.size());
      undo = saved_big.data();
    }
    for (std::size_t k = 0; k < touched.size(); ++k) {
      const std::size_t j = touched[k];
      const std::size_t old = state_[j];
      undo[k] = old;
      const std::size_t nw = lat_.join(old, x);
      if (nw != old) {
        state_[j] = nw;
        log_sum_ += lat_.log_size(nw) - lat_.log_size(old);
        if (nw == full) ++full_cols_;
      }
    }
    const std::size_t next_total = lat_.join(total, x);
    if (i + 1 == n_) {
      if (next_total == full) {
        ++tally_.by_exponent[static_cast<std::size_t>(log_sum_)];
        if (full_cols_ == cols_) ++tally_.all_full;
      }
    } else {
      for (std::size_t y = 0; y < lat_.group().size(); ++y) step(i + 1, next_total, y);
    }
    for (std::size_t k = touched.size(); k-- > 0;) {
      const std::size_t j = touched[k];
      if (state_[j] != undo[k]) {
        if (state_[j] == full) --full_cols_;
        log_sum_ -= lat_.log_size(state_[j]) - lat_.log_size(undo[k]);
        state_[j] = undo[k];
      }
    }
  }

  const SubgroupLattice& lat_;
  std::size_t n_, cols_;
  std::vector<std::vector<std::size_t>> row_cols_;
  std::vector<std::size_t> state_;
  long log_sum_ = 0;
  std::size_t full_cols_ = 0;
  MomentTally tally_;
};

}  // namespace detail

// E_n(G) = sum over surjective F of 1 / prod_j |F V_sigma_j|, split as d_n0 + residual.
// The first coordinate's values are divided among `threads` workers.
inline MomentSplit d_split(const SupportPattern& s, const SubgroupLattice& lat, std::uint64_t cap = kBruteForceCap,
                           unsigned threads = 1) {
  const std::size_t m = lat.group().size();
  if (detail::bounded_power(m, s.rows(), cap) > cap)
    throw CapExceeded("brute-force moment: |G|^n exceeds the cap of " + std::to_string(cap));
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(m)));
  std::vector<detail::MomentTally> parts(threads);
  auto work = [&](unsigned c) {
    detail::MomentEnumerator en(s, lat);
    parts[c] = en.run(m * c / threads, m * (c + 1) / threads);
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned c = 0; c < threads; ++c) pool.emplace_back(work, c);
    for (auto& t : pool) t.join();
  }
  detail::MomentTally tally = parts[0];
  for (unsigned c = 1; c < threads; ++c) {
    for (std::size_t k = 0; k < tally.by_exponent.size(); ++k) tally.by_exponent[k] += parts[c].by_exponent[k];
    tally.all_full += parts[c].all_full;
  }
  const std::uint64_t p = lat.group().p();
  MomentSplit out;
  out.moment = 0;
  for (std::size_t k = 0; k < tally.by_exponent.size(); ++k)
    if (tally.by_exponent[k]) out.moment += Rational(BigInt(tally.by_exponent[k])) * rational_pow(p, -static_cast<long>(k));
  const long full_exp = static_cast<long>(s.cols()) * lat.log_size(lat.full_index());
  out.d_n0 = Rational(BigInt(tally.all_full)) * rational_pow(p, -full_exp);
  out.residual = out.moment - out.d_n0;
  return out;
}

inline MomentSplit d_split(const SupportPattern& s, const PGroup& g, std::uint64_t cap = kBruteForceCap,
                           unsigned threads = 1) {
  if (detail::bounded_power(group_order(g).convert_to<std::uint64_t>(), s.rows(), cap) > cap)
    throw CapExceeded("brute-force moment: |G|^n exceeds the cap of " + std::to_string(cap));
  SubgroupLattice lat{ConcreteGroup(g)};
  return d_split(s, lat, cap, threads);
}

inline Rational exact_moment_bruteforce(const SupportPattern& s, const PGroup& g, std::uint64_t cap = kBruteForceCap) {
  return d_split(s, g, cap).moment;
}

inline Rational exact_moment_bruteforce(const SupportPattern& s, const SubgroupLattice& lat,
                                        std::uint64_t cap = kBruteForceCap) {
  return d_split(s, lat, cap).moment;
}

// Residual for unit stairs and G = Z/p: (p-1)(n-t)/p^t.
inline Rational stairs_caseI(std::uint64_t p, std::size_t n, std::size_t t) {
  if (!is_prime(p)) throw ValidationError("stairs_caseI: p must be prime");
  if (t < 1 || t > n) throw ValidationError("stairs_caseI: need 1 <= t <= n");
  return Rational(BigInt(p - 1) * BigInt(n - t)) * rational_pow(p, -static_cast<long>(t));
}

// Residual for width-d stairs and G = Z/p:
//   (p-1)(p^{(d-1)(n-t)} - 1) p^{d-1} / (p^t (p^{d-1} - 1)).
// Derived for d(n-t) <= n; beyond that the pattern has a zero row.
inline Rational stairs_wide_caseI(std::uint64_t p, std::size_t n, std::size_t t, std::size_t d) {
  if (!is_prime(p)) throw ValidationError("stairs_wide_caseI: p must be prime");
  if (t < 1 || t > n) throw ValidationError("stairs_wide_caseI: need 1 <= t <= n");
  if (d < 2) throw ValidationError("stairs_wide_caseI: need d >= 2");
  const BigInt num = BigInt(p - 1) * (big_pow(p, static_cast<unsigned>((d - 1) * (n - t))) - 1) *
                     big_pow(p, static_cast<unsigned>(d - 1));
  const BigInt den = big_pow(p, static_cast<unsigned>(t)) * (big_pow(p, static_cast<unsigned>(d - 1)) - 1);
  return Rational(num, den);
}

// P(at least m of independent Bernoulli(x_j) succeed), O(n m).
inline double f_tail(const std::vector<double>& xs, std::size_t m) {
  if (m > xs.size()) throw ValidationError("f_tail: need 0 <= m <= n");
  for (double x : xs)
    if (!(x >= 0.0 && x <= 1.0)) throw ValidationError("f_tail: probabilities must lie in [0, 1]");
  if (m == 0) return 1.0;
  std::vector<double> dp(m + 1, 0.0);  // dp[k]: exactly k successes so far, dp[m]: at least m
  dp[0] = 1.0;
  for (double x : xs) {
    dp[m] += dp[m - 1] * x;
    for (std::size_t k = m - 1; k > 0; --k) dp[k] = dp[k] * (1 - x) + dp[k - 1] * x;
    dp[0] *= 1 - x;
  }
  return dp[m];
}

inline double geometric_mean(const std::vector<double>& xs) {
  double s = 0;
  for (double x : xs) {
    if (x <= 0) return 0.0;
    s += std::log(x);
  }
  return std::exp(s / static_cast<double>(xs.size()));
}

// f_{m,n}(xs) >= f_{m,n}(t, ..., t) with t the geometric mean of xs.
inline bool f_tail_geomean_check(const std::vector<double>& xs, std::size_t m, double tol = 1e-12) {
  if (m < 2 || m + 2 > xs.size()) throw ValidationError("f_tail_geomean_check: need 2 <= m <= n - 2");
  const std::vector<double> flat(xs.size(), geometric_mean(xs));
  return f_tail(xs, m) >= f_tail(flat, m) - tol;
}

struct ChainBound {
  Rational ratio;              // prod_i |H_i cap H_{i+1}| / |H_i|
  std::size_t steps = 0;       // r
  bool holds = false;          // ratio <= p^{-r/2}
  bool corrected_holds = false;  // ratio <= p^{-r/2} sqrt(|H_r| / |H_0|)
};

inline ChainBound chain_ratio(const std::vector<Subgroup>& hs) {
  if (hs.empty()) throw ValidationError("chain_ratio: empty chain");
  for (std::size_t i = 0; i + 1 < hs.size(); ++i) {
    if (!hs[i].parent().same_as(hs[i + 1].parent())) throw ValidationError("chain_ratio: subgroups of different groups");
    if (hs[i] == hs[i + 1]) throw ValidationError("chain_ratio: consecutive subgroups must differ");
  }
  const std::uint64_t p = hs.front().parent().p();
  ChainBound cb;
  cb.steps = hs.size() - 1;
  cb.ratio = 1;
  for (std::size_t i = 0; i + 1 < hs.size(); ++i)
    cb.ratio *= Rational(BigInt(subgroup_intersection(hs[i], hs[i + 1]).size()), BigInt(hs[i].size()));
  const Rational sq = cb.ratio * cb.ratio;
  const Rational limit = rational_pow(p, -static_cast<long>(cb.steps));
  cb.holds = sq <= limit;
  cb.corrected_holds = sq <= limit * Rational(BigInt(hs.back().size()), BigInt(hs.front().size()));
  return cb;
}

namespace detail {

inline std::vector<std::vector<Rational>> intersection_weights(const SubgroupLattice& lat, unsigned t,
                                                               bool divide_by_first) {
  const std::size_t m = lat.count();
  std::vector<std::vector<Rational>> w(m, std::vector<Rational>(m));
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = 0; b < m; ++b) {
      const BigInt inter(subgroup_intersection(lat.at(a), lat.at(b)).size());
      const BigInt base(divide_by_first ? lat.at(a).size() : lat.at(b).size());
      w[a][b] = Rational(boost::multiprecision::pow(inter, t), boost::multiprecision::pow(base, t));
    }
  return w;
}

inline void check_chain_cap(std::size_t m, std::size_t k, std::uint64_t cap) {
  if (bounded_power(m, k, cap) > cap)
    throw CapExceeded("chain sum: (number of subgroups)^k exceeds the cap of " + std::to_string(cap));
}

}  // namespace detail

// sum over non-constant (H_1..H_k) of
//   ( prod_{j<k} |H_j cap H_{j+1}| / prod_{j<k} |H_j| )^t
// evaluated as 1^T W^{k-1} 1 minus the m_G constant tuples.
inline Rational chain_sum_44(const SubgroupLattice& lat, std::size_t k, unsigned t,
                             std::uint64_t cap = kBruteForceCap) {
  if (k < 1) throw ValidationError("chain_sum_44: k must be positive");
  const std::size_t m = lat.count();
  detail::check_chain_cap(m, k, cap);
  const auto w = detail::intersection_weights(lat, t, true);
  std::vector<Rational> v(m, Rational(1));
  for (std::size_t step = 1; step < k; ++step) {
    std::vector<Rational> nv(m, Rational(0));
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t b = 0; b < m; ++b) nv[a] += w[a][b] * v[b];
    v = std::move(nv);
  }
  Rational total = 0;
  for (const auto& x : v) total += x;
  return total - Rational(BigInt(m));
}

inline Rational chain_sum_44(const PGroup& g, std::size_t k, unsigned t, std::uint64_t cap = kBruteForceCap) {
  SubgroupLattice lat{ConcreteGroup(g)};
  return chain_sum_44(lat, k, t, cap);
}

// The form before the H_0 factor is dropped: cyclic with H_0 = H_k,
//   ( prod_{q=1..k} |H_{q-1} cap H_q| / |H_q| )^t, i.e. trace(W^k) - m_G.
inline Rational chain_sum_44_cyclic(const SubgroupLattice& lat, std::size_t k, unsigned t,
                                    std::uint64_t cap = kBruteForceCap) {
  if (k < 1) throw ValidationError("chain_sum_44_cyclic: k must be positive");
  const std::size_t m = lat.count();
  detail::check_chain_cap(m, k, cap);
  const auto w = detail::intersection_weights(lat, t, false);
  std::vector<std::vector<Rational>> acc = w;
  for (std::size_t step = 1; step < k; ++step) {
    std::vector<std::vector<Rational>> nx(m, std::vector<Rational>(m, Rational(0)));
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t c = 0; c < m; ++c) {
        if (acc[a][c] == 0) continue;
        for (std::size_t b = 0; b < m; ++b) nx[a][b] += acc[a][c] * w[c][b];
      }
    acc = std::move(nx);
  }
  Rational tr = 0;
  for (std::size_t a = 0; a < m; ++a) tr += acc[a][a];
  return tr - Rational(BigInt(m));
}

// F(v_i) for each coordinate i, as element indices of the target.
struct HomAssignment {
  ConcreteGroup target;
  std::vector<std::size_t> images;
};

namespace detail {

inline constexpr std::size_t kSubsetCap = 22;

// log_p [G : <F(v_i) : i in [start, n) \ sigma>] for every sigma over the tail coordinates.
template <class Visit>
void for_each_tail_deletion(const HomAssignment& f, std::size_t start, Visit visit) {
  const std::size_t n = f.images.size();
  if (start > n) throw ValidationError("support_start exceeds the number of coordinates");
  for (auto x : f.images)
    if (x >= f.target.size()) throw ValidationError("HomAssignment: image out of range");
  const std::size_t m = n - start;
  if (m > kSubsetCap) throw CapExceeded("code checks enumerate at most 2^" + std::to_string(kSubsetCap) + " subsets");
  const SubgroupLattice lat(f.target);
  const int top = lat.log_size(lat.full_index());
  for (std::uint64_t sigma = 0; sigma < (std::uint64_t{1} << m); ++sigma) {
    std::size_t h = lat.trivial_index();
    for (std::size_t i = 0; i < m; ++i)
      if (!((sigma >> i) & 1u)) h = lat.join(h, f.images[start + i]);
    if (!visit(static_cast<std::size_t>(std::popcount(sigma)), top - lat.log_size(h))) return;
  }
}

}  // namespace detail

// For every sigma among the coordinates from support_start on with |sigma| < dist,
// the remaining coordinates from support_start on still generate the target.
inline bool is_code(const HomAssignment& f, std::size_t support_start, double dist) {
  bool ok = true;
  detail::for_each_tail_deletion(f, support_start, [&](std::size_t size, int log_index) {
    if (static_cast<double>(size) < dist && log_index > 0) ok = false;
    return ok;
  });
  return ok;
}

// Largest index D = [G : F(V minus sigma)] witnessed by some sigma with
// |sigma| < l(D) delta (n - support_start); 1 when there is none.
inline BigInt delta_depth(const HomAssignment& f, std::size_t support_start, double delta) {
  const double span = delta * static_cast<double>(f.images.size() - std::min(support_start, f.images.size()));
  int best = 0;
  detail::for_each_tail_deletion(f, support_start, [&](std::size_t size, int log_index) {
    if (log_index > best && static_cast<double>(size) < static_cast<double>(log_index) * span) best = log_index;
    return true;
  });
  return big_pow(f.target.p(), static_cast<unsigned>(best));
}

// 1 + c(G_Sigma), exact.
inline Rational moment_upper_bound_exact(const SupportPattern& s, std::uint64_t p) {
  if (!validate(s, p).valid) throw ValidationError("moment bound: pattern has an empty column or an uncovered row");
  if (s.n() > kExactSubsetCap) throw CapExceeded("moment bound: exact c needs n <= " + std::to_string(kExactSubsetCap));
  return 1 + c_value_exact(graph_from_pattern(s), p);
}

inline double moment_upper_bound_via_graph(const SupportPattern& s, std::uint64_t p) {
  return to_double(moment_upper_bound_exact(s, p));
}

}  // namespace cklab
