#pragma once

#include "cklab/limits.hpp"
#include "cklab/modmatrix.hpp"
#include "cklab/patterns.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <random>
#include <thread>
#include <variant>

namespace cklab {

// mt19937_64 with portable bounded-integer and unit-interval draws
// (std distributions differ between standard libraries).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform on [0, bound), Lemire's multiply-and-reject.
  std::uint64_t below(std::uint64_t bound) {
    unsigned __int128 m = static_cast<unsigned __int128>(next()) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        m = static_cast<unsigned __int128>(next()) * bound;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 engine_;
};

struct Haar {};

// Integer values with probabilities, reduced mod p^e when sampled.
struct FinitePMF {
  std::vector<std::int64_t> values;
  std::vector<double> probs;

  FinitePMF() = default;
  FinitePMF(std::vector<std::int64_t> v, std::vector<double> pr) : values(std::move(v)), probs(std::move(pr)) {
    if (values.empty() || values.size() != probs.size())
      throw ValidationError("PMF: values and probabilities must be nonempty and the same length");
    double total = 0;
    for (double x : probs) {
      if (!(x >= 0)) throw ValidationError("PMF: probabilities must be nonnegative");
      total += x;
    }
    if (std::abs(total - 1.0) > 1e-12) throw ValidationError("PMF: probabilities must sum to 1");
    cumulative_.resize(probs.size());
    std::partial_sum(probs.begin(), probs.end(), cumulative_.begin());
    cumulative_.back() = 1.0;
  }

  std::int64_t draw(Rng& rng) const {
    const double u = rng.uniform01();
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    return values[static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - cumulative_.begin(),
                                                                     static_cast<std::ptrdiff_t>(values.size()) - 1))];
  }

 private:
  std::vector<double> cumulative_;
};

struct Rademacher {};

using EntryDistribution = std::variant<Haar, FinitePMF, Rademacher>;

// 1 - max_r P(xi = r mod p).
inline double epsilon_of(const EntryDistribution& dist, std::uint64_t p) {
  return std::visit(
      [p](const auto& d) -> double {
        using D = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<D, Haar>) {
          return 1.0 - 1.0 / static_cast<double>(p);
        } else if constexpr (std::is_same_v<D, Rademacher>) {
          return p == 2 ? 0.0 : 0.5;
        } else {
          std::map<std::uint64_t, double> mass;
          for (std::size_t i = 0; i < d.values.size(); ++i) {
            const auto m = static_cast<std::int64_t>(p);
            mass[static_cast<std::uint64_t>(((d.values[i] % m) + m) % m)] += d.probs[i];
          }
          double top = 0;
          for (const auto& [r, w] : mass) top = std::max(top, w);
          return 1.0 - top;
        }
      },
      dist);
}

inline std::string distribution_name(const EntryDistribution& dist) {
  if (std::holds_alternative<Haar>(dist)) return "haar";
  if (std::holds_alternative<Rademacher>(dist)) return "rademacher";
  const auto& pmf = std::get<FinitePMF>(dist);
  std::ostringstream os;
  os << "pmf:";
  for (std::size_t i = 0; i < pmf.values.size(); ++i) os << (i ? "," : "") << pmf.values[i] << "=" << pmf.probs[i];
  return os.str();
}

// JSON: {"values":[...],"probs":[...]} or {"<value>": prob, ...}.
inline FinitePMF pmf_from_json(const nlohmann::json& j) {
  std::vector<std::int64_t> v;
  std::vector<double> pr;
  if (j.contains("values") || j.contains("probs")) {
    for (auto it = j.begin(); it != j.end(); ++it)
      if (it.key() != "values" && it.key() != "probs") throw ValidationError("unknown field in PMF JSON: " + it.key());
    v = j.at("values").get<std::vector<std::int64_t>>();
    pr = j.at("probs").get<std::vector<double>>();
  } else {
    for (auto it = j.begin(); it != j.end(); ++it) {
      try {
        v.push_back(std::stoll(it.key()));
      } catch (const std::exception&) {
        throw ValidationError("PMF JSON keys must be integers, got " + it.key());
      }
      pr.push_back(it.value().get<double>());
    }
  }
  return FinitePMF(std::move(v), std::move(pr));
}

// "haar", "rademacher", "pmf:0=0.7,1=0.3" or "pmf:<file.json>".
inline EntryDistribution parse_distribution(const std::string& text) {
  if (text == "haar") return Haar{};
  if (text == "rademacher") return Rademacher{};
  if (text.rfind("pmf:", 0) == 0) {
    const std::string body = text.substr(4);
    if (body.find('=') != std::string::npos) {
      std::vector<std::int64_t> v;
      std::vector<double> pr;
      std::stringstream ss(body);
      std::string item;
      while (std::getline(ss, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw ValidationError("pmf: expected value=prob, got " + item);
        try {
          v.push_back(std::stoll(item.substr(0, eq)));
          pr.push_back(std::stod(item.substr(eq + 1)));
        } catch (const std::exception&) {
          throw ValidationError("pmf: cannot parse " + item);
        }
      }
      return FinitePMF(std::move(v), std::move(pr));
    }
    std::ifstream in(body);
    if (!in) throw ValidationError("pmf: cannot open " + body);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& ex) {
      throw ValidationError(std::string("pmf: bad JSON: ") + ex.what());
    }
    return pmf_from_json(j);
  }
  throw ValidationError("unknown distribution: " + text);
}

inline std::uint64_t draw_entry(const EntryDistribution& dist, const ModMatrix& m, Rng& rng) {
  if (std::holds_alternative<Haar>(dist)) return rng.below(m.modulus());
  if (std::holds_alternative<Rademacher>(dist)) return m.reduce((rng.next() >> 63) ? 1 : -1);
  return m.reduce(std::get<FinitePMF>(dist).draw(rng));
}

// Entries are drawn in row-major order over allowed cells only.
inline ModMatrix sample_matrix(const SupportPattern& pattern, const EntryDistribution& dist, std::uint64_t p, int e,
                               Rng& rng) {
  ModMatrix m(p, e, pattern.rows(), pattern.cols());
  for (std::size_t i = 0; i < pattern.rows(); ++i)
    for (std::size_t j = 0; j < pattern.cols(); ++j)
      if (pattern.allowed(i, j)) m.set_reduced(i, j, draw_entry(dist, m, rng));
  return m;
}

inline ModMatrix sample_matrix(const SupportPattern& pattern, const EntryDistribution& dist, std::uint64_t p, int e,
                               std::uint64_t seed) {
  Rng rng(seed);
  return sample_matrix(pattern, dist, p, e, rng);
}

inline ModMatrix sample_matrix(const StairSpec& spec, std::size_t n, const EntryDistribution& dist, std::uint64_t p,
                               int e, std::uint64_t seed) {
  return sample_matrix(k_step_pattern(spec, n), dist, p, e, seed);
}

// Thread count: explicit value, else CKLAB_THREADS, else hardware.
inline unsigned resolve_threads(unsigned requested = 0) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("CKLAB_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// Runs body(trial_index, trial_seed, acc) over contiguous chunks, one
// accumulator per chunk, then folds the chunks in order with merge.
template <class Acc, class Body, class Merge>
Acc run_trials(std::uint64_t trials, std::uint64_t master_seed, unsigned threads, Body body, Merge merge) {
  threads = std::max(1u, static_cast<unsigned>(std::min<std::uint64_t>(threads, std::max<std::uint64_t>(trials, 1))));
  std::vector<Acc> partial(threads);
  std::vector<std::exception_ptr> errors(threads);
  auto work = [&](unsigned c) {
    try {
      const std::uint64_t lo = trials * c / threads, hi = trials * (c + 1) / threads;
      for (std::uint64_t i = lo; i < hi; ++i) body(i, trial_seed(master_seed, i), partial[c]);
    } catch (...) {
      errors[c] = std::current_exception();
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned c = 0; c < threads; ++c) pool.emplace_back(work, c);
    for (auto& th : pool) th.join();
  }
  for (auto& ex : errors)
    if (ex) std::rethrow_exception(ex);
  Acc total{};
  for (auto& a : partial) merge(total, a);
  return total;
}

struct Interval {
  double lo = 0, hi = 0;
};

inline Interval wilson_interval(std::uint64_t k, std::uint64_t n, double z = 1.96) {
  if (n == 0) return {0.0, 1.0};
  const double nn = static_cast<double>(n), ph = static_cast<double>(k) / nn, z2 = z * z;
  const double denom = 1 + z2 / nn;
  const double centre = (ph + z2 / (2 * nn)) / denom;
  const double half = z * std::sqrt(ph * (1 - ph) / nn + z2 / (4 * nn * nn)) / denom;
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

struct OutcomeStat {
  std::string label;
  std::uint64_t count = 0;
  double estimate = 0;
  Interval ci;
  std::optional<double> reference;
  std::string reference_source;
};

struct MeanStat {
  Rational exact_mean;
  double mean = 0;
  double std_error = 0;
  Interval ci;
  std::optional<double> reference;
  std::string reference_source;
};

struct McReport {
  std::string kind;
  nlohmann::json params;
  std::uint64_t trials = 0;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  double wall_seconds = 0;
  std::vector<OutcomeStat> outcomes;
  std::optional<MeanStat> mean;

  const OutcomeStat& outcome(const std::string& label) const {
    for (const auto& o : outcomes)
      if (o.label == label) return o;
    throw std::out_of_range("McReport: no outcome " + label);
  }

  // Everything that must be reproducible: counts and exact mean.
  std::vector<std::uint64_t> counts() const {
    std::vector<std::uint64_t> c;
    for (const auto& o : outcomes) c.push_back(o.count);
    return c;
  }
};

inline nlohmann::json to_json_value(const McReport& r) {
  nlohmann::json out;
  out["kind"] = r.kind;
  out["params"] = r.params;
  out["trials"] = r.trials;
  out["seed"] = r.seed;
  out["threads"] = r.threads;
  out["wall_seconds"] = r.wall_seconds;
  nlohmann::json oc = nlohmann::json::array();
  for (const auto& o : r.outcomes) {
    nlohmann::json j{{"label", o.label}, {"count", o.count}, {"estimate", o.estimate},
                     {"ci95", {o.ci.lo, o.ci.hi}}};
    if (o.reference) {
      j["reference"] = *o.reference;
      j["reference_source"] = o.reference_source;
      j["ci_covers_reference"] = o.ci.lo <= *o.reference && *o.reference <= o.ci.hi;
    }
    oc.push_back(std::move(j));
  }
  out["outcomes"] = oc;
  if (r.mean) {
    nlohmann::json m{{"mean", r.mean->mean},
                     {"mean_exact", to_string(r.mean->exact_mean)},
                     {"std_error", r.mean->std_error},
                     {"ci95", {r.mean->ci.lo, r.mean->ci.hi}}};
    if (r.mean->reference) {
      m["reference"] = *r.mean->reference;
      m["reference_source"] = r.mean->reference_source;
      m["ci_covers_reference"] = r.mean->ci.lo <= *r.mean->reference && *r.mean->reference <= r.mean->ci.hi;
    }
    out["mean"] = m;
  }
  return out;
}

// Columns: kind,label,count,trials,estimate,ci_lo,ci_hi,reference,reference_source
inline std::string to_csv(const McReport& r, bool header = true) {
  std::ostringstream os;
  os.precision(17);
  if (header) os << "kind,label,count,trials,estimate,ci_lo,ci_hi,reference,reference_source\n";
  for (const auto& o : r.outcomes) {
    os << r.kind << ',' << o.label << ',' << o.count << ',' << r.trials << ',' << o.estimate << ',' << o.ci.lo << ','
       << o.ci.hi << ',';
    if (o.reference) os << *o.reference;
    os << ',' << o.reference_source << '\n';
  }
  if (r.mean) {
    os << r.kind << ",mean,," << r.trials << ',' << r.mean->mean << ',' << r.mean->ci.lo << ',' << r.mean->ci.hi << ',';
    if (r.mean->reference) os << *r.mean->reference;
    os << ',' << r.mean->reference_source << '\n';
  }
  return os.str();
}

namespace detail {

using Histogram = std::map<std::string, std::uint64_t>;

inline void merge_histogram(Histogram& into, const Histogram& from) {
  for (const auto& [k, v] : from) into[k] += v;
}

inline OutcomeStat make_outcome(std::string label, std::uint64_t count, std::uint64_t trials) {
  OutcomeStat o;
  o.label = std::move(label);
  o.count = count;
  o.estimate = trials ? static_cast<double>(count) / static_cast<double>(trials) : 0.0;
  o.ci = wilson_interval(count, trials);
  return o;
}

struct Stopwatch {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

}  // namespace detail

struct McOptions {
  std::uint64_t trials = 1000;
  std::uint64_t seed = 1;
  unsigned threads = 0;  // 0: CKLAB_THREADS or hardware
};

inline McReport mc_cokernel_dist(const SupportPattern& pattern, const EntryDistribution& dist, std::uint64_t p, int e,
                                 const std::vector<PGroup>& targets, const McOptions& opt) {
  for (const auto& g : targets) {
    if (g.p() != p) throw ValidationError("mc_cokernel_dist: target " + g.to_string() + " is over another prime");
    if (e < g.exponent_log() + 1)
      throw ValidationError("mc_cokernel_dist: precision e = " + std::to_string(e) + " must exceed the top exponent of " +
                            g.to_string());
  }
  if (pattern.rows() > pattern.cols()) throw ValidationError("mc_cokernel_dist: pattern has more rows than columns");
  detail::Stopwatch sw;
  McReport r;
  r.kind = "cokernel";
  r.trials = opt.trials;
  r.seed = opt.seed;
  r.threads = resolve_threads(opt.threads);
  auto hist = run_trials<std::vector<std::uint64_t>>(
      opt.trials, opt.seed, r.threads,
      [&](std::uint64_t, std::uint64_t s, std::vector<std::uint64_t>& acc) {
        if (acc.empty()) acc.assign(targets.size() + 1, 0);
        const auto tp = cokernel_partition(sample_matrix(pattern, dist, p, e, s));
        std::size_t hit = targets.size();
        for (std::size_t k = 0; k < targets.size(); ++k)
          if (is_cokernel_iso(tp, targets[k])) {
            hit = k;
            break;
          }
        ++acc[hit];
      },
      [&](std::vector<std::uint64_t>& into, const std::vector<std::uint64_t>& from) {
        if (into.empty()) into.assign(targets.size() + 1, 0);
        for (std::size_t k = 0; k < from.size(); ++k) into[k] += from[k];
      });
  if (hist.empty()) hist.assign(targets.size() + 1, 0);
  for (std::size_t k = 0; k < targets.size(); ++k) {
    auto o = detail::make_outcome(targets[k].to_string(), hist[k], opt.trials);
    o.reference = cohen_lenstra_prob(targets[k], static_cast<int>(pattern.t()));
    o.reference_source = "cohen_lenstra_prob(G, t=" + std::to_string(pattern.t()) + ")";
    r.outcomes.push_back(std::move(o));
  }
  r.outcomes.push_back(detail::make_outcome("other", hist.back(), opt.trials));
  r.params = {{"p", p}, {"e", e}, {"n", pattern.n()}, {"t", pattern.t()}, {"dist", distribution_name(dist)}};
  r.wall_seconds = sw.seconds();
  return r;
}

inline McReport mc_corank_dist(std::size_t n, std::uint64_t p, const McOptions& opt) {
  detail::Stopwatch sw;
  McReport r;
  r.kind = "corank";
  r.trials = opt.trials;
  r.seed = opt.seed;
  r.threads = resolve_threads(opt.threads);
  const auto full = full_pattern(n);
  auto hist = run_trials<std::vector<std::uint64_t>>(
      opt.trials, opt.seed, r.threads,
      [&](std::uint64_t, std::uint64_t s, std::vector<std::uint64_t>& acc) {
        const auto m = sample_matrix(full, Haar{}, p, 1, s);
        const std::size_t c = corank_mod_p(m);
        if (acc.size() <= c) acc.resize(c + 1, 0);
        ++acc[c];
      },
      [](std::vector<std::uint64_t>& into, const std::vector<std::uint64_t>& from) {
        if (into.size() < from.size()) into.resize(from.size(), 0);
        for (std::size_t k = 0; k < from.size(); ++k) into[k] += from[k];
      });
  if (hist.size() < 4) hist.resize(std::min<std::size_t>(4, n + 1), 0);
  for (std::size_t m = 0; m < hist.size(); ++m) {
    auto o = detail::make_outcome("corank=" + std::to_string(m), hist[m], opt.trials);
    o.reference = nu_p(static_cast<int>(m), p);
    o.reference_source = "nu_p(" + std::to_string(m) + ", " + std::to_string(p) + ")";
    r.outcomes.push_back(std::move(o));
  }
  r.params = {{"n", n}, {"p", p}};
  r.wall_seconds = sw.seconds();
  return r;
}

inline double full_rank_limit(std::size_t n, std::size_t r, std::uint64_t p) {
  double prod = 1;
  for (std::size_t j = 0; j < r; ++j) prod *= 1.0 - std::pow(static_cast<double>(p), -static_cast<double>(n - j));
  return prod;
}

inline McReport mc_full_rank_prob(std::size_t n, std::size_t rank, std::uint64_t p, const McOptions& opt) {
  if (rank < 1 || rank > n) throw ValidationError("mc_full_rank_prob: need n >= r >= 1");
  detail::Stopwatch sw;
  McReport r;
  r.kind = "fullrank";
  r.trials = opt.trials;
  r.seed = opt.seed;
  r.threads = resolve_threads(opt.threads);
  auto hits = run_trials<std::uint64_t>(
      opt.trials, opt.seed, r.threads,
      [&](std::uint64_t, std::uint64_t s, std::uint64_t& acc) {
        Rng rng(s);
        ModMatrix m(p, 1, n, rank);
        for (auto& x : m.mutable_data()) x = rng.below(p);
        if (rank_mod_p(m) == rank) ++acc;
      },
      [](std::uint64_t& into, std::uint64_t from) { into += from; });
  auto o = detail::make_outcome("full_rank", hits, opt.trials);
  o.reference = full_rank_limit(n, rank, p);
  o.reference_source = "prod_{j<r} (1 - p^-(n-j))";
  r.outcomes.push_back(std::move(o));
  r.params = {{"n", n}, {"r", rank}, {"p", p}};
  r.wall_seconds = sw.seconds();
  return r;
}

// Sample mean of #Sur(cok, G), working at precision e = top exponent of G.
inline McReport mc_moment(const SupportPattern& pattern, const EntryDistribution& dist, std::uint64_t p,
                          const PGroup& g, const McOptions& opt) {
  if (g.p() != p) throw ValidationError("mc_moment: group over another prime");
  if (pattern.rows() > pattern.cols()) throw ValidationError("mc_moment: pattern has more rows than columns");
  const int e = std::max(1, g.exponent_log());
  detail::Stopwatch sw;
  McReport r;
  r.kind = "moment";
  r.trials = opt.trials;
  r.seed = opt.seed;
  r.threads = resolve_threads(opt.threads);
  struct Acc {
    std::map<BigInt, std::uint64_t> values;
    std::unique_ptr<SurjectionCounter> counter;
  };
  auto acc = run_trials<Acc>(
      opt.trials, opt.seed, r.threads,
      [&](std::uint64_t, std::uint64_t s, Acc& a) {
        if (!a.counter) a.counter = std::make_unique<SurjectionCounter>();
        ++a.values[count_sur_cok(sample_matrix(pattern, dist, p, e, s), g, *a.counter)];
      },
      [](Acc& into, const Acc& from) {
        for (const auto& [v, c] : from.values) into.values[v] += c;
      });
  BigInt sum = 0, sumsq = 0;
  for (const auto& [v, c] : acc.values) {
    sum += v * c;
    sumsq += v * v * c;
  }
  MeanStat ms;
  const auto N = static_cast<std::int64_t>(std::max<std::uint64_t>(opt.trials, 1));
  ms.exact_mean = Rational(sum, BigInt(N));
  ms.mean = to_double(ms.exact_mean);
  const Rational var_num = Rational(sumsq) - Rational(sum) * Rational(sum) / Rational(BigInt(N));
  const double var = opt.trials > 1 ? to_double(var_num) / static_cast<double>(N - 1) : 0.0;
  ms.std_error = std::sqrt(std::max(0.0, var) / static_cast<double>(N));
  ms.ci = {ms.mean - 1.96 * ms.std_error, ms.mean + 1.96 * ms.std_error};
  bool full_haar = std::holds_alternative<Haar>(dist);
  for (const auto& s : pattern.supports()) full_haar = full_haar && s.count() == pattern.n();
  if (full_haar) {
    ms.reference = to_double(Rational(BigInt(1), big_pow(p, static_cast<unsigned>(g.log_order()) * static_cast<unsigned>(pattern.t()))));
    ms.reference_source = "|G|^-t";
  }
  for (const auto& [v, c] : acc.values) r.outcomes.push_back(detail::make_outcome("sur=" + v.str(), c, opt.trials));
  r.mean = ms;
  r.params = {{"p", p}, {"e", e}, {"n", pattern.n()}, {"t", pattern.t()}, {"group", g}, {"dist", distribution_name(dist)}};
  r.wall_seconds = sw.seconds();
  return r;
}

}  // namespace cklab
