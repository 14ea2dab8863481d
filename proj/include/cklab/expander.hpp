#pragma once

#include "cklab/patterns.hpp"
#include "cklab/sampler.hpp"

#include <numeric>

namespace cklab {

// Bipartite multigraph on parts A = {a_0..a_{n-1}}, B = {b_0..b_{n-1}}.
// d is the nominal regularity; simplified graphs keep d as a degree bound.
class BipartiteMultigraph {
 public:
  BipartiteMultigraph() = default;
  BipartiteMultigraph(std::size_t n, std::size_t d, std::vector<std::pair<std::size_t, std::size_t>> edges)
      : n_(n), d_(d), edges_(std::move(edges)) {
    for (const auto& [a, b] : edges_)
      if (a >= n_ || b >= n_) throw ValidationError("BipartiteMultigraph: endpoint out of range");
  }

  std::size_t n() const { return n_; }
  std::size_t d() const { return d_; }
  const std::vector<std::pair<std::size_t, std::size_t>>& edges() const { return edges_; }

  bool is_regular() const {
    std::vector<std::size_t> da(n_, 0), db(n_, 0);
    for (const auto& [a, b] : edges_) {
      ++da[a];
      ++db[b];
    }
    return std::all_of(da.begin(), da.end(), [&](auto x) { return x == d_; }) &&
           std::all_of(db.begin(), db.end(), [&](auto x) { return x == d_; });
  }

  // Edge multiplicities mu(a, b), row-major over A x B.
  std::vector<std::size_t> multiplicities() const {
    std::vector<std::size_t> mu(n_ * n_, 0);
    for (const auto& [a, b] : edges_) ++mu[a * n_ + b];
    return mu;
  }

  // Sorted edge list; equal iff same multigraph.
  BipartiteMultigraph canonical() const {
    auto e = edges_;
    std::sort(e.begin(), e.end());
    return BipartiteMultigraph(n_, d_, std::move(e));
  }

  friend bool operator==(const BipartiteMultigraph&, const BipartiteMultigraph&) = default;
  friend auto operator<=>(const BipartiteMultigraph&, const BipartiteMultigraph&) = default;

 private:
  std::size_t n_ = 0, d_ = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges_;
};

inline void to_json(nlohmann::json& j, const BipartiteMultigraph& g) {
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& [a, b] : g.edges()) edges.push_back({a, b});
  j = nlohmann::json{{"n", g.n()}, {"d", g.d()}, {"edges", edges}};
}

inline void from_json(const nlohmann::json& j, BipartiteMultigraph& g) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (it.key() != "n" && it.key() != "d" && it.key() != "edges")
      throw ValidationError("unknown field in graph JSON: " + it.key());
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (const auto& e : j.at("edges")) {
    if (!e.is_array() || e.size() != 2) throw ValidationError("graph JSON: each edge must be [a, b]");
    edges.emplace_back(e[0].get<std::size_t>(), e[1].get<std::size_t>());
  }
  g = BipartiteMultigraph(j.at("n").get<std::size_t>(), j.at("d").get<std::size_t>(), std::move(edges));
  if (!g.is_regular()) throw ValidationError("graph JSON: graph is not d-regular");
}

// A uniform bijection A x [d] -> B x [d], stored as perm[a*d + i] = b*d + j.
struct Configuration {
  std::size_t n = 0, d = 0;
  std::vector<std::size_t> perm;
};

inline Configuration sample_configuration(std::size_t n, std::size_t d, Rng& rng) {
  if (n < 1 || d < 1) throw ValidationError("sample_configuration: need n, d >= 1");
  Configuration c{n, d, std::vector<std::size_t>(n * d)};
  std::iota(c.perm.begin(), c.perm.end(), std::size_t{0});
  for (std::size_t i = c.perm.size(); i > 1; --i) std::swap(c.perm[i - 1], c.perm[rng.below(i)]);
  return c;
}

inline Configuration sample_configuration(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  return sample_configuration(n, d, rng);
}

// Forget the half-edge labels.
inline BipartiteMultigraph project(const Configuration& c) {
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  edges.reserve(c.perm.size());
  for (std::size_t h = 0; h < c.perm.size(); ++h) edges.emplace_back(h / c.d, c.perm[h] / c.d);
  return BipartiteMultigraph(c.n, c.d, std::move(edges));
}

// |phi^{-1}(G)| = (d!)^{2n} / prod mu(a,b)!
inline BigInt preimage_count(const BipartiteMultigraph& g) {
  auto fact = [](std::size_t k) {
    BigInt f = 1;
    for (std::size_t i = 2; i <= k; ++i) f *= i;
    return f;
  };
  BigInt num = pow(fact(g.d()), static_cast<unsigned>(2 * g.n()));
  BigInt den = 1;
  for (auto m : g.multiplicities()) den *= fact(m);
  return num / den;
}

// One edge per adjacent pair.
inline BipartiteMultigraph simplify(const BipartiteMultigraph& g) {
  auto e = g.edges();
  std::sort(e.begin(), e.end());
  e.erase(std::unique(e.begin(), e.end()), e.end());
  return BipartiteMultigraph(g.n(), g.d(), std::move(e));
}

// Neighbourhood masks: a[i] holds the B-neighbours of a_i, b[j] the A-neighbours of b_j.
struct Adjacency {
  std::size_t n = 0;
  std::vector<std::uint64_t> a, b;

  std::uint64_t full() const { return n == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << n) - 1; }
};

inline Adjacency adjacency(const BipartiteMultigraph& g) {
  if (g.n() > 64) throw CapExceeded("adjacency masks support n <= 64");
  Adjacency adj{g.n(), std::vector<std::uint64_t>(g.n(), 0), std::vector<std::uint64_t>(g.n(), 0)};
  for (const auto& [a, b] : g.edges()) {
    adj.a[a] |= std::uint64_t{1} << b;
    adj.b[b] |= std::uint64_t{1} << a;
  }
  return adj;
}

enum class Side { A, B };

// N(S) for S inside one part, as a mask over the other part.
inline std::uint64_t neighborhood(const Adjacency& adj, std::uint64_t s, Side side = Side::A) {
  const auto& nb = side == Side::A ? adj.a : adj.b;
  std::uint64_t out = 0;
  for (; s; s &= s - 1) out |= nb[static_cast<std::size_t>(std::countr_zero(s))];
  return out;
}

// Graph G_Sigma: a_i ~ b_j whenever row j is allowed in column i.
inline BipartiteMultigraph graph_from_pattern(const SupportPattern& s) {
  if (s.t() != 0) throw ValidationError("graph_from_pattern: pattern must be square");
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::size_t dmax = 0;
  for (std::size_t i = 0; i < s.n(); ++i) {
    const auto rows = s.support(i).indices();
    dmax = std::max(dmax, rows.size());
    for (auto j : rows) edges.emplace_back(i, j);
  }
  return BipartiteMultigraph(s.n(), dmax, std::move(edges));
}

inline SupportPattern pattern_from_graph(const BipartiteMultigraph& g) {
  std::vector<std::vector<std::size_t>> cols(g.n());
  const auto simple = simplify(g);
  for (const auto& [a, b] : simple.edges()) cols[a].push_back(b);
  return SupportPattern::from_rows(g.n(), 0, cols);
}

inline constexpr std::size_t kExactSubsetCap = 24;

namespace detail {

// Visits every S in F_A (nonempty, proper, N(S) != B, and no outside w with
// N(w) inside N(S)) in Gray-code order, passing (S, N(S)).
template <class Visit>
void for_each_critical_subset(const Adjacency& adj, Visit visit) {
  const std::size_t n = adj.n;
  if (n > kExactSubsetCap)
    throw CapExceeded("exact subset enumeration supports n <= " + std::to_string(kExactSubsetCap));
  std::vector<std::uint32_t> hits(n, 0);  // |N(b) cap S| for each b
  std::uint64_t s = 0, ns = 0;
  const std::uint64_t all = adj.full();
  const std::uint64_t total = std::uint64_t{1} << n;
  for (std::uint64_t k = 1; k < total; ++k) {
    const auto v = static_cast<std::size_t>(std::countr_zero(k));
    const std::uint64_t bit = std::uint64_t{1} << v;
    if (s & bit) {
      s &= ~bit;
      for (std::uint64_t m = adj.a[v]; m; m &= m - 1) {
        const auto b = static_cast<std::size_t>(std::countr_zero(m));
        if (--hits[b] == 0) ns &= ~(std::uint64_t{1} << b);
      }
    } else {
      s |= bit;
      for (std::uint64_t m = adj.a[v]; m; m &= m - 1) {
        const auto b = static_cast<std::size_t>(std::countr_zero(m));
        if (hits[b]++ == 0) ns |= std::uint64_t{1} << b;
      }
    }
    if (s == all || ns == all) continue;
    bool closed = true;
    for (std::uint64_t out = all & ~s; out; out &= out - 1)
      if ((adj.a[static_cast<std::size_t>(std::countr_zero(out))] & ~ns) == 0) {
        closed = false;
        break;
      }
    if (closed) visit(s, ns);
  }
}

}  // namespace detail

// Counts of S in F_A by exponent |S| - |N(S)|, offset by n.
inline std::vector<std::uint64_t> c_exponent_histogram(const Adjacency& adj) {
  std::vector<std::uint64_t> hist(2 * adj.n + 1, 0);
  detail::for_each_critical_subset(adj, [&](std::uint64_t s, std::uint64_t ns) {
    ++hist[adj.n + static_cast<std::size_t>(std::popcount(s)) - static_cast<std::size_t>(std::popcount(ns))];
  });
  return hist;
}

inline Rational c_from_histogram(const std::vector<std::uint64_t>& hist, std::size_t n, std::uint64_t p) {
  Rational c = 0;
  for (std::size_t k = 0; k < hist.size(); ++k)
    if (hist[k]) c += Rational(BigInt(hist[k])) * rational_pow(p, static_cast<long>(k) - static_cast<long>(n));
  return c;
}

inline Rational c_value_exact(const Adjacency& adj, std::uint64_t p) {
  return c_from_histogram(c_exponent_histogram(adj), adj.n, p);
}

inline Rational c_value_exact(const BipartiteMultigraph& g, std::uint64_t p) { return c_value_exact(adjacency(g), p); }

inline double c_value(const BipartiteMultigraph& g, std::uint64_t p) { return to_double(c_value_exact(g, p)); }

// N(B \ N(S)) = A \ S for every S in F_A.
inline bool duality_check(const BipartiteMultigraph& g) {
  const auto adj = adjacency(g);
  bool ok = true;
  detail::for_each_critical_subset(adj, [&](std::uint64_t s, std::uint64_t ns) {
    if (ok && neighborhood(adj, adj.full() & ~ns, Side::B) != (adj.full() & ~s)) ok = false;
  });
  return ok;
}

struct ProfileRow {
  std::size_t size = 0;
  std::size_t min_a = 0, min_b = 0;
  std::optional<double> small_set_threshold;  // (d - 100 - log_p s) s, for s <= n/d
  std::optional<double> middle_threshold;     // n/64, for s >= n/(2d)
  std::optional<double> large_threshold;      // (1 - 1/sqrt d) n, for s >= n/(2 sqrt d)
};

struct ExpansionProfile {
  std::size_t n = 0, d = 0;
  std::uint64_t p = 2;
  bool exact = true;
  std::vector<ProfileRow> rows;
};

// Minimum |N(S)| per |S| on both sides; exhaustive for n <= 20, otherwise
// over `samples` random subsets of each size.
inline ExpansionProfile expansion_profile(const BipartiteMultigraph& g, std::uint64_t p = 2,
                                          std::size_t samples = 2000, std::uint64_t seed = 1) {
  const auto adj = adjacency(g);
  const std::size_t n = adj.n;
  ExpansionProfile prof{n, g.d(), p, n <= 20, {}};
  std::vector<std::size_t> min_a(n + 1, n), min_b(n + 1, n);
  min_a[0] = min_b[0] = 0;
  auto record = [&](std::uint64_t s) {
    const auto k = static_cast<std::size_t>(std::popcount(s));
    min_a[k] = std::min(min_a[k], static_cast<std::size_t>(std::popcount(neighborhood(adj, s, Side::A))));
    min_b[k] = std::min(min_b[k], static_cast<std::size_t>(std::popcount(neighborhood(adj, s, Side::B))));
  };
  if (prof.exact) {
    for (std::uint64_t s = 1; s < (std::uint64_t{1} << n); ++s) record(s);
  } else {
    Rng rng(seed);
    std::vector<std::size_t> idx(n);
    for (std::size_t k = 1; k <= n; ++k)
      for (std::size_t r = 0; r < samples; ++r) {
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::uint64_t s = 0;
        for (std::size_t i = 0; i < k; ++i) {
          std::swap(idx[i], idx[i + rng.below(n - i)]);
          s |= std::uint64_t{1} << idx[i];
        }
        record(s);
      }
  }
  const double dn = static_cast<double>(n), dd = static_cast<double>(std::max<std::size_t>(g.d(), 1));
  for (std::size_t k = 1; k <= n; ++k) {
    ProfileRow row{k, min_a[k], min_b[k], {}, {}, {}};
    const double s = static_cast<double>(k);
    if (s <= dn / dd) row.small_set_threshold = (dd - 100 - std::log(s) / std::log(static_cast<double>(p))) * s;
    if (s >= dn / (2 * dd)) row.middle_threshold = dn / 64;
    if (s >= dn / (2 * std::sqrt(dd))) row.large_threshold = (1 - 1 / std::sqrt(dd)) * dn;
    prof.rows.push_back(row);
  }
  return prof;
}

inline nlohmann::json to_json_value(const ExpansionProfile& prof) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : prof.rows) {
    nlohmann::json j{{"size", r.size}, {"min_neighbors_A", r.min_a}, {"min_neighbors_B", r.min_b}};
    const double worst = static_cast<double>(std::min(r.min_a, r.min_b));
    auto put = [&](const char* name, const std::optional<double>& th) {
      if (th) j[name] = {{"threshold", *th}, {"margin", worst - *th}};
    };
    put("small_set_bound", r.small_set_threshold);
    put("middle_bound", r.middle_threshold);
    put("large_set_bound", r.large_threshold);
    rows.push_back(std::move(j));
  }
  return {{"n", prof.n}, {"d", prof.d}, {"p", prof.p}, {"exact", prof.exact}, {"rows", rows}};
}

// Empirical P(c(G) < delta) over configuration-model samples.
inline McReport mc_c_distribution(std::size_t n, std::size_t d, std::uint64_t p, double delta, const McOptions& opt) {
  if (n > kExactSubsetCap) throw CapExceeded("mc_c_distribution supports n <= " + std::to_string(kExactSubsetCap));
  if (!(delta > 0)) throw ValidationError("mc_c_distribution: delta must be positive");
  detail::Stopwatch sw;
  McReport r;
  r.kind = "expander-c";
  r.trials = opt.trials;
  r.seed = opt.seed;
  r.threads = resolve_threads(opt.threads);
  const Rational bound(delta);
  struct Acc {
    std::uint64_t below = 0;
    Rational sum = 0, sumsq = 0;
  };
  auto acc = run_trials<Acc>(
      opt.trials, opt.seed, r.threads,
      [&](std::uint64_t, std::uint64_t s, Acc& a) {
        const auto c = c_value_exact(project(sample_configuration(n, d, s)), p);
        if (c < bound) ++a.below;
        a.sum += c;
        a.sumsq += c * c;
      },
      [](Acc& into, const Acc& from) {
        into.below += from.below;
        into.sum += from.sum;
        into.sumsq += from.sumsq;
      });
  r.outcomes.push_back(detail::make_outcome("c<delta", acc.below, opt.trials));
  MeanStat ms;
  ms.exact_mean = opt.trials ? acc.sum / Rational(BigInt(opt.trials)) : Rational(0);
  ms.mean = to_double(ms.exact_mean);
  if (opt.trials > 1) {
    const double N = static_cast<double>(opt.trials);
    const Rational ss = acc.sumsq - acc.sum * acc.sum / Rational(BigInt(opt.trials));
    const double var = std::max(0.0, to_double(ss) / (N - 1));
    ms.std_error = std::sqrt(var / N);
  }
  ms.ci = {ms.mean - 1.96 * ms.std_error, ms.mean + 1.96 * ms.std_error};
  r.mean = ms;
  r.params = {{"n", n}, {"d", d}, {"p", p}, {"delta", delta}};
  r.wall_seconds = sw.seconds();
  return r;
}

}  // namespace cklab
