#pragma once

#include "cklab/expander.hpp"
#include "cklab/limits.hpp"
#include "cklab/moments.hpp"
#include "cklab/patterns.hpp"
#include "cklab/sampler.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <functional>
#include <iomanip>
#include <regex>

namespace cklab {

inline constexpr const char* kArtifactVersion = "0.3.0";

struct ExperimentConfig {
  std::string experiment;
  std::string pattern;  // family spec; {n}, {n/K} and {t} are filled per grid point
  std::string dist = "haar";
  std::uint64_t p = 2;
  int e = 1;
  std::vector<std::size_t> n_grid;
  std::uint64_t trials = 0;
  std::uint64_t seed = 1;
  unsigned threads = 0;
  std::string output;  // path prefix for .json/.csv; empty writes nothing
  nlohmann::json params = nlohmann::json::object();

  McOptions mc(std::uint64_t salt = 0) const { return {trials, salt ? trial_seed(seed, salt) : seed, threads}; }
};

inline const std::vector<std::string>& config_fields() {
  static const std::vector<std::string> f = {"experiment", "pattern", "dist",    "p",      "e",     "n_grid",
                                             "trials",     "seed",    "threads", "output", "params"};
  return f;
}

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = nlohmann::json{{"experiment", c.experiment}, {"pattern", c.pattern}, {"dist", c.dist},
                     {"p", c.p},                   {"e", c.e},             {"n_grid", c.n_grid},
                     {"trials", c.trials},         {"seed", c.seed},       {"threads", c.threads},
                     {"output", c.output},         {"params", c.params}};
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  if (!j.is_object()) throw ValidationError("experiment config must be a JSON object");
  const auto& known = config_fields();
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw ValidationError("experiment config: unknown field '" + it.key() + "'");
  try {
    c = ExperimentConfig{};
    c.experiment = j.at("experiment").get<std::string>();
    if (j.contains("pattern")) c.pattern = j["pattern"].get<std::string>();
    if (j.contains("dist")) c.dist = j["dist"].get<std::string>();
    if (j.contains("p")) c.p = j["p"].get<std::uint64_t>();
    if (j.contains("e")) c.e = j["e"].get<int>();
    if (j.contains("n_grid")) c.n_grid = j["n_grid"].get<std::vector<std::size_t>>();
    if (j.contains("trials")) c.trials = j["trials"].get<std::uint64_t>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("threads")) c.threads = j["threads"].get<unsigned>();
    if (j.contains("output")) c.output = j["output"].get<std::string>();
    if (j.contains("params")) {
      if (!j["params"].is_object()) throw ValidationError("experiment config: params must be an object");
      c.params = j["params"];
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(std::string("experiment config: ") + ex.what());
  }
  if (!is_prime(c.p)) throw ValidationError("experiment config: p must be prime");
  if (c.e < 1) throw ValidationError("experiment config: e must be at least 1");
}

// One empirical-versus-theory line. `source` names the operation and the
// arguments that produced `theoretical`.
struct Comparison {
  std::string quantity;
  std::string at;  // "n=20;t=1"
  double empirical = 0;
  std::optional<Interval> ci;
  std::optional<double> theoretical;
  std::string source;
  std::string relation;  // ci_covers | equal | le | ge | nonincreasing | nondecreasing
  bool ok = false;
  std::string exact_empirical, exact_theoretical;
};

inline nlohmann::json to_json_value(const Comparison& c) {
  nlohmann::json j{{"quantity", c.quantity}, {"at", c.at},       {"empirical", c.empirical},
                   {"source", c.source},     {"relation", c.relation}, {"ok", c.ok}};
  if (c.ci) j["ci"] = {c.ci->lo, c.ci->hi};
  if (c.theoretical) j["theoretical"] = *c.theoretical;
  if (!c.exact_empirical.empty()) j["exact_empirical"] = c.exact_empirical;
  if (!c.exact_theoretical.empty()) j["exact_theoretical"] = c.exact_theoretical;
  return j;
}

struct ResultRecord {
  std::string experiment;
  std::string claim;
  nlohmann::json config;
  nlohmann::json results = nlohmann::json::array();
  std::vector<Comparison> comparisons;
  std::string artifact_version = kArtifactVersion;
  nlohmann::json metadata = nlohmann::json::object();  // timestamps, wall time, resolved threads

  std::size_t failures() const {
    return static_cast<std::size_t>(std::count_if(comparisons.begin(), comparisons.end(), [](const auto& c) { return !c.ok; }));
  }
  const Comparison& comparison(const std::string& quantity, const std::string& at = "") const {
    for (const auto& c : comparisons)
      if (c.quantity == quantity && (at.empty() || c.at == at)) return c;
    throw std::out_of_range("ResultRecord: no comparison " + quantity + " at " + at);
  }
};

// The record without metadata is a pure function of the config.
inline nlohmann::json to_json_value(const ResultRecord& r, bool with_metadata = true) {
  nlohmann::json cmp = nlohmann::json::array();
  for (const auto& c : r.comparisons) cmp.push_back(to_json_value(c));
  nlohmann::json j{{"experiment", r.experiment},
                   {"claim", r.claim},
                   {"config", r.config},
                   {"results", r.results},
                   {"comparisons", cmp},
                   {"artifact_version", r.artifact_version}};
  if (with_metadata) j["metadata"] = r.metadata;
  return j;
}

// Columns: experiment,quantity,at,empirical,ci_lo,ci_hi,theoretical,relation,ok,source
inline std::string to_csv(const ResultRecord& r, bool header = true) {
  std::ostringstream os;
  os.precision(17);
  if (header) os << "experiment,quantity,at,empirical,ci_lo,ci_hi,theoretical,relation,ok,source\n";
  auto quote = [](const std::string& s) {
    std::string q = "\"";
    for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    return q + "\"";
  };
  for (const auto& c : r.comparisons) {
    os << r.experiment << ',' << quote(c.quantity) << ',' << quote(c.at) << ',' << c.empirical << ',';
    if (c.ci) os << c.ci->lo << ',' << c.ci->hi;
    else os << ',';
    os << ',';
    if (c.theoretical) os << *c.theoretical;
    os << ',' << c.relation << ',' << (c.ok ? "true" : "false") << ',' << quote(c.source) << '\n';
  }
  return os.str();
}

namespace detail {

inline std::string fill_template(const std::string& text, std::size_t n, std::optional<std::size_t> t = {}) {
  static const std::regex slot(R"(\{(n|t)(?:/(\d+))?\})");
  std::string out;
  auto begin = std::sregex_iterator(text.begin(), text.end(), slot);
  std::size_t last = 0;
  for (auto it = begin; it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    out += text.substr(last, static_cast<std::size_t>(m.position()) - last);
    std::size_t v = n;
    if (m[1] == "t") {
      if (!t) throw ValidationError("pattern template uses {t} where no t is defined");
      v = *t;
    }
    if (m[2].matched) {
      const auto k = std::stoull(m[2].str());
      if (k == 0) throw ValidationError("pattern template divides by zero");
      v /= k;
    }
    out += std::to_string(v);
    last = static_cast<std::size_t>(m.position() + m.length());
  }
  return out + text.substr(last);
}

inline std::string at(std::initializer_list<std::pair<const char*, std::string>> kv) {
  std::string s;
  for (const auto& [k, v] : kv) s += (s.empty() ? "" : ";") + std::string(k) + "=" + v;
  return s;
}

inline std::string num(std::size_t v) { return std::to_string(v); }

inline std::string fmt(double x) {
  std::ostringstream os;
  os << std::setprecision(6) << x;
  return os.str();
}

inline Comparison covers(std::string quantity, std::string where, const OutcomeStat& o, std::uint64_t trials, double z,
                         double theory, std::string source) {
  Comparison c;
  c.quantity = std::move(quantity);
  c.at = std::move(where);
  c.empirical = o.estimate;
  c.ci = wilson_interval(o.count, trials, z);
  c.theoretical = theory;
  c.source = std::move(source);
  c.relation = "ci_covers";
  c.ok = c.ci->lo <= theory && theory <= c.ci->hi;
  return c;
}

inline Comparison mean_covers(std::string quantity, std::string where, const MeanStat& m, double z, double theory,
                              std::string source) {
  Comparison c;
  c.quantity = std::move(quantity);
  c.at = std::move(where);
  c.empirical = m.mean;
  c.ci = Interval{m.mean - z * m.std_error, m.mean + z * m.std_error};
  c.theoretical = theory;
  c.source = std::move(source);
  c.relation = "ci_covers";
  c.ok = c.ci->lo <= theory && theory <= c.ci->hi;
  c.exact_empirical = to_string(m.exact_mean);
  return c;
}

inline Comparison compare(std::string quantity, std::string where, double empirical, const char* relation,
                          double theory, std::string source) {
  Comparison c;
  c.quantity = std::move(quantity);
  c.at = std::move(where);
  c.empirical = empirical;
  c.theoretical = theory;
  c.source = std::move(source);
  c.relation = relation;
  const std::string rel = relation;
  c.ok = rel == "le" ? empirical <= theory : rel == "ge" ? empirical >= theory : empirical == theory;
  return c;
}

inline Comparison exact_equal(std::string quantity, std::string where, const Rational& got, const Rational& want,
                              std::string source) {
  Comparison c;
  c.quantity = std::move(quantity);
  c.at = std::move(where);
  c.empirical = to_double(got);
  c.theoretical = to_double(want);
  c.exact_empirical = to_string(got);
  c.exact_theoretical = to_string(want);
  c.source = std::move(source);
  c.relation = "equal";
  c.ok = got == want;
  return c;
}

// Monotone trend over a sequence of values.
inline Comparison trend(std::string quantity, const std::vector<double>& values, bool increasing, std::string source) {
  Comparison c;
  c.quantity = std::move(quantity);
  c.relation = increasing ? "nondecreasing" : "nonincreasing";
  c.ok = true;
  for (std::size_t i = 0; i + 1 < values.size(); ++i)
    c.ok = c.ok && (increasing ? values[i] <= values[i + 1] : values[i] >= values[i + 1]);
  for (double v : values) c.at += (c.at.empty() ? "" : "/") + fmt(v);
  c.empirical = values.empty() ? 0.0 : values.back();
  c.source = std::move(source);
  return c;
}

inline nlohmann::json strip_timing(nlohmann::json mc) {
  mc.erase("wall_seconds");
  mc.erase("threads");
  return mc;
}

inline PGroup group_param(const nlohmann::json& params, const char* key, std::uint64_t p) {
  if (!params.contains(key)) return PGroup::cyclic(p, 1);
  PGroup g = params[key].get<PGroup>();
  if (g.p() != p) throw ValidationError(std::string("params.") + key + " is over a different prime than p");
  return g;
}

inline double z_of(const ExperimentConfig& c) { return c.params.value("z", 3.0); }

// (1 - p^{-d-1}) prod_{i=1}^{n-b} (1 - p^{-i}) with d = n - a - b.
inline double block_zero_bound(std::size_t n, std::size_t a, std::size_t b, std::uint64_t p) {
  if (a + b > n) return 0.0;
  const double q = static_cast<double>(p);
  double r = 1 - std::pow(q, -static_cast<double>(n - a - b + 1));
  for (std::size_t i = 1; i <= n - b; ++i) r *= 1 - std::pow(q, -static_cast<double>(i));
  return r;
}

// Full-rank probability of the lower-left (n-a) x b block times the trivial-cokernel
// probability of the complementary square block.
inline double block_zero_exact(std::size_t n, std::size_t a, std::size_t b, std::uint64_t p) {
  if (a + b > n) return 0.0;
  const double q = static_cast<double>(p);
  const std::size_t y = n - a;
  double r = 1;
  for (std::size_t i = 1; i <= b; ++i) r *= 1 - std::pow(q, -static_cast<double>(y - i + 1));
  for (std::size_t i = 1; i <= n - b; ++i) r *= 1 - std::pow(q, -static_cast<double>(i));
  return r;
}

inline std::size_t ceil_log(std::size_t n, std::uint64_t p) {
  std::size_t k = 0;
  for (std::uint64_t v = 1; v < n; v *= p) ++k;
  return k;
}

inline std::vector<PGroup> cl_targets(std::uint64_t p, int max_log, int e) {
  std::vector<PGroup> out;
  for (auto& g : groups_up_to(p, max_log))
    if (g.exponent_log() + 1 <= e) out.push_back(g);
  return out;
}

inline void cokernel_block(ResultRecord& rec, const ExperimentConfig& cfg, const SupportPattern& pat,
                           const EntryDistribution& dist, const std::vector<PGroup>& targets, const std::string& where,
                           std::uint64_t salt) {
  const auto mc = mc_cokernel_dist(pat, dist, cfg.p, cfg.e, targets, cfg.mc(salt));
  rec.results.push_back({{"at", where}, {"pattern_size", pat.total_size()}, {"cokernel", strip_timing(to_json_value(mc))}});
  for (const auto& o : mc.outcomes) {
    if (!o.reference) continue;
    rec.comparisons.push_back(covers("P(cok=" + o.label + ")", where, o, mc.trials, z_of(cfg), *o.reference,
                                     o.reference_source));
  }
}

}  // namespace detail

struct Experiment {
  std::string name;
  std::string claim;
  nlohmann::json defaults;  // a full config minus "experiment"
  nlohmann::json smoke;     // overlay for a quick run
  std::function<void(const ExperimentConfig&, ResultRecord&)> run;
};

namespace detail {

inline void run_cl_baseline(const ExperimentConfig& cfg, ResultRecord& rec) {
  const auto dist = parse_distribution(cfg.dist);
  const auto targets = cl_targets(cfg.p, cfg.params.value("max_log", 2), cfg.e);
  for (std::size_t k = 0; k < cfg.n_grid.size(); ++k) {
    const std::size_t n = cfg.n_grid[k];
    cokernel_block(rec, cfg, make_pattern(fill_template(cfg.pattern, n)), dist, targets, at({{"n", num(n)}}), k);
  }
}

inline void run_block_zero(const ExperimentConfig& cfg, ResultRecord& rec) {
  const auto dist = parse_distribution(cfg.dist);
  const auto cases = cfg.params.at("cases").get<std::vector<std::vector<std::size_t>>>();
  for (std::size_t k = 0; k < cases.size(); ++k) {
    if (cases[k].size() != 3) throw ValidationError("block-zero: each case is [n, a, b]");
    const std::size_t n = cases[k][0], a = cases[k][1], b = cases[k][2];
    const auto pat = block_pattern(n, a, b);
    const auto where = at({{"n", num(n)}, {"a", num(a)}, {"b", num(b)}});
    const auto mc = mc_cokernel_dist(pat, dist, cfg.p, cfg.e, {PGroup::trivial(cfg.p)}, cfg.mc(k));
    const auto& zero = mc.outcomes.front();
    rec.results.push_back({{"at", where}, {"gap", static_cast<long long>(n) - static_cast<long long>(a + b)},
                           {"cokernel", strip_timing(to_json_value(mc))}});
    const std::string args = "(n=" + num(n) + ", a=" + num(a) + ", b=" + num(b) + ", p=" + std::to_string(cfg.p) + ")";
    rec.comparisons.push_back(covers("P(cok=0)", where, zero, mc.trials, z_of(cfg), *zero.reference, zero.reference_source));
    rec.comparisons.push_back(compare("P(cok=0)", where, zero.estimate, "le", block_zero_bound(n, a, b, cfg.p),
                                      "block_zero_bound" + args));
    rec.comparisons.push_back(covers("P(cok=0)", where, zero, mc.trials, z_of(cfg), block_zero_exact(n, a, b, cfg.p),
                                     "block_zero_exact" + args));
  }
}

inline std::vector<std::uint64_t> primes_param(const ExperimentConfig& cfg) {
  if (!cfg.params.contains("primes")) return {cfg.p};
  auto ps = cfg.params["primes"].get<std::vector<std::uint64_t>>();
  for (auto q : ps)
    if (!is_prime(q)) throw ValidationError("params.primes must hold primes");
  return ps;
}

inline void run_stairs(const ExperimentConfig& cfg, ResultRecord& rec, bool wide) {
  const std::size_t d = wide ? cfg.params.value("d", std::size_t{2}) : 1;
  for (auto q : primes_param(cfg))
    for (std::size_t n : cfg.n_grid)
      for (std::size_t t = 1; t <= n; ++t) {
        const auto pat = make_pattern(fill_template(cfg.pattern, n, t));
        const auto split = d_split(pat, PGroup::cyclic(q, 1), kBruteForceCap, cfg.threads);
        const auto where = at({{"p", std::to_string(q)}, {"n", num(n)}, {"t", num(t)}});
        nlohmann::json row{{"at", where},
                           {"moment", to_string(split.moment)},
                           {"d_n0", to_string(split.d_n0)},
                           {"residual", to_string(split.residual)}};
        const std::string args = "(p=" + std::to_string(q) + ", n=" + num(n) + ", t=" + num(t);
        if (!wide) {
          rec.comparisons.push_back(exact_equal("residual", where, split.residual, stairs_caseI(q, n, t),
                                                "stairs_caseI" + args + ")"));
        } else if (d * (n - t) <= n) {
          rec.comparisons.push_back(exact_equal("residual", where, split.residual, stairs_wide_caseI(q, n, t, d),
                                                "stairs_wide_caseI" + args + ", d=" + num(d) + ")"));
        } else {
          row["formula_domain"] = "outside: d(n-t) > n";
        }
        rec.results.push_back(std::move(row));
      }
}

inline void run_corank(const ExperimentConfig& cfg, ResultRecord& rec) {
  const int max_m = cfg.params.value("max_m", 3);
  for (std::size_t k = 0; k < cfg.n_grid.size(); ++k) {
    const std::size_t n = cfg.n_grid[k];
    const auto mc = mc_corank_dist(n, cfg.p, cfg.mc(k));
    rec.results.push_back({{"at", at({{"n", num(n)}})}, {"corank", strip_timing(to_json_value(mc))}});
    for (int m = 0; m <= max_m && static_cast<std::size_t>(m) < mc.outcomes.size(); ++m) {
      const auto& o = mc.outcomes[static_cast<std::size_t>(m)];
      rec.comparisons.push_back(covers("P(" + o.label + ")", at({{"n", num(n)}, {"m", std::to_string(m)}}), o,
                                       mc.trials, z_of(cfg), *o.reference, o.reference_source));
    }
  }
}

inline void run_lemma21(const ExperimentConfig& cfg, ResultRecord& rec) {
  const auto cases = cfg.params.at("cases").get<std::vector<std::vector<std::size_t>>>();
  for (std::size_t k = 0; k < cases.size(); ++k) {
    if (cases[k].size() != 2) throw ValidationError("lemma21: each case is [n, r]");
    const std::size_t n = cases[k][0], r = cases[k][1];
    const auto mc = mc_full_rank_prob(n, r, cfg.p, cfg.mc(k));
    const auto where = at({{"n", num(n)}, {"r", num(r)}});
    rec.results.push_back({{"at", where}, {"fullrank", strip_timing(to_json_value(mc))}});
    const auto& o = mc.outcomes.front();
    rec.comparisons.push_back(covers("P(full rank)", where, o, mc.trials, z_of(cfg), *o.reference,
                                     "full_rank_limit(n=" + num(n) + ", r=" + num(r) + ", p=" + std::to_string(cfg.p) + ")"));
  }
}

inline std::vector<std::size_t> rademacher_sizes(const ExperimentConfig& cfg, std::size_t n) {
  if (cfg.params.contains("sizes") && !cfg.params["sizes"].empty())
    return cfg.params["sizes"].get<std::vector<std::size_t>>();
  // one size per case
  const std::size_t da = n >= 6 ? n - 4 : 1;
  return {n + da * (da - 1) + 1, n + (n - 1) * (n - 2) + 1, n * n - 1};
}

inline void run_rademacher(const ExperimentConfig& cfg, ResultRecord& rec) {
  const auto dist = parse_distribution(cfg.dist);
  const auto targets = cl_targets(cfg.p, cfg.params.value("max_log", 1), cfg.e);
  std::uint64_t salt = 0;
  for (std::size_t n : cfg.n_grid)
    for (std::size_t a : rademacher_sizes(cfg, n)) {
      const auto lay = rademacher_layout(n, a);
      const auto pat = rademacher_construction_pattern(n, a);
      const auto where = at({{"n", num(n)}, {"a", num(a)}, {"case", std::string(1, lay.which)}});
      rec.comparisons.push_back(compare("pattern size", where, static_cast<double>(pat.total_size()), "equal",
                                        static_cast<double>(a), "requested size a"));
      cokernel_block(rec, cfg, pat, dist, targets, where, salt++);
      rec.results.back()["block"] = lay.d;
    }
}

inline void run_block_cyclic(const ExperimentConfig& cfg, ResultRecord& rec) {
  const auto dist = parse_distribution(cfg.dist);
  const auto targets = cl_targets(cfg.p, cfg.params.value("max_log", 1), cfg.e);
  const auto chain_group = group_param(cfg.params, "chain_group", cfg.p);
  const SubgroupLattice lat(ConcreteGroup(chain_group, kDefaultGroupCap));
  const double mg = static_cast<double>(lat.count());
  for (std::size_t k = 0; k < cfg.n_grid.size(); ++k) {
    const std::size_t n = cfg.n_grid[k];
    const std::size_t width = !cfg.params.value("width", nlohmann::json()).is_null() ? cfg.params["width"].get<std::size_t>()
                                                           : block_cyclic_width(n, cfg.p);
    const auto bp = block_cyclic_params(n, width);
    const auto pat = block_cyclic_pattern_with_width(n, width);
    const auto where = at({{"n", num(n)}, {"width", num(width)}});
    const auto chain = chain_sum_44(lat, bp.k, static_cast<unsigned>(width));
    const auto cyclic = chain_sum_44_cyclic(lat, bp.k, static_cast<unsigned>(width));
    const double q = static_cast<double>(cfg.p);
    const double bound = mg * (std::pow(1 + mg * std::pow(q, -static_cast<double>(width) / 2), static_cast<double>(bp.k - 1)) - 1);
    const std::string args = "(G=" + chain_group.to_string() + ", k=" + num(bp.k) + ", t=" + num(width) + ")";
    rec.comparisons.push_back(compare("chain sum", where, to_double(chain), "le", bound,
                                      "m_G((1 + m_G p^{-t/2})^{k-1} - 1) with m_G=" + fmt(mg) + " " + args));
    cokernel_block(rec, cfg, pat, dist, targets, where, k);
    auto& row = rec.results.back();
    row["blocks"] = bp.k;
    row["gauge"] = validate(pat, cfg.p).gauge;
    row["chain_sum"] = {{"value", to_string(chain)}, {"source", "chain_sum_44" + args}};
    row["chain_sum_cyclic"] = {{"value", to_string(cyclic)}, {"source", "chain_sum_44_cyclic" + args}};
  }
}

inline void run_band(const ExperimentConfig& cfg, ResultRecord& rec) {
  const auto dist = parse_distribution(cfg.dist);
  const auto targets = cl_targets(cfg.p, cfg.params.value("max_log", 1), cfg.e);
  const auto offsets = cfg.params.value("w_offsets", std::vector<long long>{0});
  std::uint64_t salt = 0;
  for (std::size_t n : cfg.n_grid)
    for (long long off : offsets) {
      const long long w0 = static_cast<long long>(ceil_log(n, cfg.p)) + off;
      const auto w = static_cast<std::size_t>(std::clamp<long long>(w0, 0, static_cast<long long>(n)));
      const auto pat = band_pattern(n, w);
      const auto where = at({{"n", num(n)}, {"w", num(w)}});
      if (2 * w <= n) {
        const double formula = static_cast<double>(n * (2 * w + 1) - w * w - w);
        rec.comparisons.push_back(compare("pattern size", where, static_cast<double>(pat.total_size()), "equal", formula,
                                          "n(2w+1) - w^2 - w"));
      }
      cokernel_block(rec, cfg, pat, dist, targets, where, salt++);
      rec.results.back()["gauge"] = validate(pat, cfg.p).gauge;
    }
}

inline void run_nonuniversality(const ExperimentConfig& cfg, ResultRecord& rec) {
  const auto dist = parse_distribution(cfg.dist);
  const std::size_t k = cfg.params.value("k", std::size_t{6});
  const double eps = cfg.params.value("eps", 0.3);
  const auto np = nonuniversality_params(k, cfg.p, eps);
  const auto pat = nonuniversality_pattern(k, cfg.p, eps);
  const auto where = at({{"k", num(k)}, {"n", num(np.n)}, {"kn", num(np.kn)}});
  // A special column vanishes mod p with probability P(xi = 0 mod p)^k.
  double p_zero = 0;
  if (const auto* f = std::get_if<FinitePMF>(&dist)) {
    for (std::size_t i = 0; i < f->values.size(); ++i)
      if (f->values[i] % static_cast<std::int64_t>(cfg.p) == 0) p_zero += f->probs[i];
  } else if (std::holds_alternative<Haar>(dist)) {
    p_zero = 1.0 / static_cast<double>(cfg.p);
  }
  const double no_zero_col = std::pow(1 - std::pow(p_zero, static_cast<double>(k)), static_cast<double>(np.kn));
  const auto mc = mc_cokernel_dist(pat, dist, cfg.p, cfg.e, {PGroup::trivial(cfg.p)}, cfg.mc());
  const auto& zero = mc.outcomes.front();
  rec.results.push_back({{"at", where},
                         {"predicted_P_some_special_column_zero", 1 - no_zero_col},
                         {"cokernel", strip_timing(to_json_value(mc))}});
  rec.comparisons.push_back(covers("P(cok=0)", where, zero, mc.trials, z_of(cfg), *zero.reference, zero.reference_source));
  rec.comparisons.push_back(compare("P(cok=0)", where, zero.estimate, "le", no_zero_col,
                                    "(1 - P(xi=0 mod p)^k)^{k_n} with P(xi=0 mod p)=" + fmt(p_zero)));
}

inline void run_moment_trend(const ExperimentConfig& cfg, ResultRecord& rec) {
  const auto dist = parse_distribution(cfg.dist);
  const auto g = group_param(cfg.params, "group", cfg.p);
  const double final_tol = cfg.params.value("final_tol", 0.15);
  std::vector<double> dev;
  for (std::size_t k = 0; k < cfg.n_grid.size(); ++k) {
    const std::size_t n = cfg.n_grid[k];
    const auto pat = make_pattern(fill_template(cfg.pattern, n));
    const auto mc = mc_moment(pat, dist, cfg.p, g, cfg.mc(k));
    const auto where = at({{"n", num(n)}});
    rec.results.push_back({{"at", where}, {"moment", strip_timing(to_json_value(mc))}});
    rec.comparisons.push_back(mean_covers("E#Sur(cok," + g.to_string() + ")", where, *mc.mean, z_of(cfg), 1.0,
                                          "limit moment 1"));
    dev.push_back(std::abs(mc.mean->mean - 1.0));
  }
  rec.comparisons.push_back(trend("|moment - 1|", dev, false, "limit moment 1"));
  if (!dev.empty())
    rec.comparisons.push_back(compare("|moment - 1|", at({{"n", num(cfg.n_grid.back())}}), dev.back(), "le", final_tol,
                                      "params.final_tol"));
}

inline void run_rectangular(const ExperimentConfig& cfg, ResultRecord& rec) {
  const auto dist = parse_distribution(cfg.dist);
  const auto g = group_param(cfg.params, "group", cfg.p);
  const auto ts = cfg.params.value("t", std::vector<std::size_t>{1});
  const auto targets = cl_targets(cfg.p, cfg.params.value("max_log", 1), cfg.e);
  std::uint64_t salt = 0;
  for (std::size_t n : cfg.n_grid)
    for (std::size_t t : ts) {
      const auto pat = make_pattern(fill_template(cfg.pattern, n, t));
      const auto where = at({{"n", num(n)}, {"t", num(t)}});
      const auto mc = mc_moment(pat, dist, cfg.p, g, cfg.mc(salt++));
      rec.results.push_back({{"at", where}, {"moment", strip_timing(to_json_value(mc))}});
      const double theory = to_double(Rational(BigInt(1), big_pow(cfg.p, static_cast<unsigned>(g.log_order() * static_cast<int>(t)))));
      rec.comparisons.push_back(mean_covers("E#Sur(cok," + g.to_string() + ")", where, *mc.mean, z_of(cfg), theory,
                                            "|G|^-t with G=" + g.to_string() + ", t=" + num(t)));
      cokernel_block(rec, cfg, pat, dist, targets, where, salt++);
    }
}

inline void run_expander(const ExperimentConfig& cfg, ResultRecord& rec) {
  const double delta = cfg.params.value("delta", 0.5);
  const std::size_t offset = cfg.params.value("d_offset", std::size_t{4});
  const double target = cfg.params.value("target", 0.9);
  std::vector<double> probs;
  for (std::size_t k = 0; k < cfg.n_grid.size(); ++k) {
    const std::size_t n = cfg.n_grid[k];
    const std::size_t d = ceil_log(n, cfg.p) + offset;
    const auto mc = mc_c_distribution(n, d, cfg.p, delta, cfg.mc(k));
    const auto& o = mc.outcomes.front();
    const auto where = at({{"n", num(n)}, {"d", num(d)}});
    rec.results.push_back({{"at", where}, {"c", strip_timing(to_json_value(mc))}});
    auto c = compare("P(c<delta)", where, o.estimate, "ge", target, "params.target");
    c.ci = wilson_interval(o.count, mc.trials, z_of(cfg));
    rec.comparisons.push_back(std::move(c));
    probs.push_back(o.estimate);
  }
  rec.comparisons.push_back(trend("P(c<delta)", probs, true, "expansion of configuration-model graphs"));
}

inline void run_moment_sweep(const ExperimentConfig& cfg, ResultRecord& rec) {
  const auto g = group_param(cfg.params, "group", cfg.p);
  const auto families = cfg.params.value("families", std::vector<std::string>{"full:n={n}"});
  const bool cyclic_p = g.parts() == std::vector<int>{1};
  for (std::size_t n : cfg.n_grid)
    for (const auto& fam : families) {
      const auto spec = fill_template(fam, n);
      const auto pat = make_pattern(spec);
      const auto split = d_split(pat, g, kBruteForceCap, cfg.threads);
      const auto where = at({{"pattern", spec}});
      nlohmann::json row{{"at", where},
                         {"moment", to_string(split.moment)},
                         {"d_n0", to_string(split.d_n0)},
                         {"residual", to_string(split.residual)}};
      if (PatternSpec::parse(spec).family == "full") {
        // Haar on all entries: #Sur((Z/p^e)^n, G) / |G|^n.
        const PGroup free(cfg.p, std::vector<int>(n, std::max(1, g.exponent_log())));
        const Rational want(count_surjections(free, g), big_pow(cfg.p, static_cast<unsigned>(g.log_order()) * static_cast<unsigned>(n)));
        rec.comparisons.push_back(exact_equal("moment", where, split.moment, want, "count_surjections(Z^n, G)/|G|^n"));
      }
      if (cyclic_p && validate(pat, cfg.p).valid && pat.t() == 0) {
        const auto bound = moment_upper_bound_exact(pat, cfg.p);
        auto c = compare("moment", where, to_double(split.moment), "le", to_double(bound), "moment_upper_bound_exact");
        c.ok = split.moment <= bound;
        c.exact_empirical = to_string(split.moment);
        c.exact_theoretical = to_string(bound);
        rec.comparisons.push_back(std::move(c));
        row["upper_bound"] = to_string(bound);
      }
      rec.results.push_back(std::move(row));
    }
}

}  // namespace detail

inline const std::vector<Experiment>& experiment_catalog() {
  using nlohmann::json;
  static const std::vector<Experiment> catalog = {
      {"cl-baseline",
       "Haar-random square matrices have Cohen-Lenstra distributed cokernels",
       {{"pattern", "full:n={n}"}, {"dist", "haar"}, {"p", 2}, {"e", 6}, {"n_grid", {20}}, {"trials", 200000},
        {"params", {{"max_log", 2}, {"z", 3.0}}}},
       {{"trials", 4000}},
       detail::run_cl_baseline},
      {"block-zero",
       "A zero a x b block keeps the Cohen-Lenstra limit exactly when n - a - b grows",
       {{"dist", "haar"}, {"p", 2}, {"e", 5}, {"trials", 100000},
        {"params", {{"cases", {{24, 8, 8}, {16, 8, 8}}}, {"z", 3.0}}}},
       {{"trials", 4000}},
       detail::run_block_zero},
      {"stairs-unit",
       "Unit stairs: E_n(Z/p) - d_{n,0} = (p-1)(n-t)/p^t",
       {{"pattern", "stairs-unit:n={n},t={t}"}, {"p", 2}, {"n_grid", {3, 4, 5, 6}}, {"params", {{"primes", {2, 3}}}}},
       {{"n_grid", {3, 4}}},
       [](const ExperimentConfig& c, ResultRecord& r) { detail::run_stairs(c, r, false); }},
      {"stairs-wide",
       "Stairs of height 1 and width d: closed form for E_n(Z/p) - d_{n,0}",
       {{"pattern", "stairs-wide:n={n},t={t},d=2"}, {"p", 2}, {"n_grid", {3, 4, 5, 6}},
        {"params", {{"primes", {2, 3}}, {"d", 2}}}},
       {{"n_grid", {3, 4}}},
       [](const ExperimentConfig& c, ResultRecord& r) { detail::run_stairs(c, r, true); }},
      {"corank-law",
       "The corank of a random square matrix over F_p follows nu_p",
       {{"p", 2}, {"n_grid", {40}}, {"trials", 100000}, {"params", {{"max_m", 3}, {"z", 3.0}}}},
       {{"trials", 4000}},
       detail::run_corank},
      {"lemma21",
       "A random n x r matrix over F_p has full rank with probability prod_{j<r}(1 - p^{j-n})",
       {{"p", 2}, {"trials", 100000}, {"params", {{"cases", {{6, 3}}}, {"z", 3.0}}}},
       {{"trials", 4000}},
       detail::run_lemma21},
      {"rademacher-construction",
       "For p odd and +-1 entries every size n <= a <= n^2 has a support reaching the CL limit",
       {{"dist", "rademacher"}, {"p", 3}, {"e", 2}, {"n_grid", {12, 24}}, {"trials", 20000},
        {"params", {{"sizes", json::array()}, {"max_log", 1}, {"z", 3.0}}}},
       {{"trials", 2000}},
       detail::run_rademacher},
      {"block-cyclic-44",
       "Block-cyclic supports of width about 2 log_p n reach the CL limit",
       {{"dist", "haar"}, {"p", 2}, {"e", 3}, {"n_grid", {16, 24, 40}}, {"trials", 20000},
        {"params", {{"chain_group", {{"p", 2}, {"parts", {1}}}}, {"width", nullptr}, {"max_log", 1}, {"z", 3.0}}}},
       {{"n_grid", {16, 24}}, {"trials", 2000}},
       detail::run_block_cyclic},
      {"band-meszaros",
       "Band supports |i - j| <= w reach the CL limit iff w - log_p n grows",
       {{"dist", "haar"}, {"p", 2}, {"e", 3}, {"n_grid", {16, 32, 64}}, {"trials", 20000},
        {"params", {{"w_offsets", {-2, 0, 2}}, {"max_log", 1}, {"z", 3.0}}}},
       {{"n_grid", {16, 32}}, {"trials", 2000}},
       detail::run_band},
      {"nonuniversality",
       "With entries of P(0) = 1 - eps, narrow special columns break the CL limit",
       {{"dist", "pmf:0=0.7,1=0.3"}, {"p", 2}, {"e", 1}, {"trials", 20000},
        {"params", {{"k", 6}, {"eps", 0.3}, {"z", 3.0}}}},
       {{"trials", 1000}, {"params", {{"k", 4}}}},
       detail::run_nonuniversality},
      {"kstep-universality",
       "eps-balanced matrices with k-step stairs of 0 have Z/p moments tending to 1",
       {{"pattern", "kstep:n={n},alphas={n/3},betas={n/3}"}, {"dist", "pmf:0=0.7,1=0.3"}, {"p", 2},
        {"n_grid", {9, 18, 27, 36}}, {"trials", 50000},
        {"params", {{"group", {{"p", 2}, {"parts", {1}}}}, {"final_tol", 0.15}, {"z", 3.0}}}},
       {{"n_grid", {9, 18}}, {"trials", 2000}},
       detail::run_moment_trend},
      {"rectangular-t",
       "Random n x (n+t) matrices have G-moments |G|^-t and a CL limit twisted by |G|^-t",
       {{"pattern", "full:n={n},t={t}"}, {"dist", "haar"}, {"p", 2}, {"e", 3}, {"n_grid", {20}}, {"trials", 50000},
        {"params", {{"t", {1}}, {"group", {{"p", 2}, {"parts", {1}}}}, {"max_log", 1}, {"z", 3.0}}}},
       {{"trials", 2000}},
       detail::run_rectangular},
      {"expander-c",
       "A random d-regular bipartite multigraph with d about log_p n has small c with probability >= 0.9",
       {{"p", 2}, {"n_grid", {12, 16, 20}}, {"trials", 200},
        {"params", {{"delta", 0.5}, {"d_offset", 4}, {"target", 0.9}, {"z", 3.0}}}},
       {{"n_grid", {10, 12}}, {"trials", 20}},
       detail::run_expander},
      {"moment-exact-sweep",
       "Exact Z/p moments by enumeration, bounded by 1 + c(G_Sigma)",
       {{"p", 2}, {"n_grid", {2, 3, 4, 5, 6, 7}},
        {"params", {{"group", {{"p", 2}, {"parts", {1}}}},
                    {"families", {"full:n={n}", "diagonal:n={n}", "band:n={n},w=1", "stairs-unit:n={n},t=1"}}}}},
       {{"n_grid", {2, 3, 4}}},
       detail::run_moment_sweep},
  };
  return catalog;
}

inline const Experiment& find_experiment(const std::string& name) {
  for (const auto& e : experiment_catalog())
    if (e.name == name) return e;
  throw ValidationError("unknown experiment: " + name);
}

// Catalog defaults, then the smoke overlay when asked, then the user's fields.
inline ExperimentConfig resolve_config(const nlohmann::json& user, bool smoke = false) {
  if (!user.is_object() || !user.contains("experiment") || !user["experiment"].is_string())
    throw ValidationError("experiment config needs an \"experiment\" name");
  const auto& entry = find_experiment(user["experiment"].get<std::string>());
  nlohmann::json merged = entry.defaults;
  merged["experiment"] = entry.name;
  if (!merged.contains("params")) merged["params"] = nlohmann::json::object();
  const nlohmann::json known_params = merged["params"];
  auto overlay = [&](const nlohmann::json& layer) {
    for (auto it = layer.begin(); it != layer.end(); ++it) {
      if (it.key() == "params" && it.value().is_object()) {
        for (auto p = it.value().begin(); p != it.value().end(); ++p) {
          if (!known_params.contains(p.key()))
            throw ValidationError("experiment " + entry.name + ": unknown parameter '" + p.key() + "'");
          merged["params"][p.key()] = p.value();
        }
      } else {
        merged[it.key()] = it.value();
      }
    }
  };
  if (smoke) overlay(entry.smoke);
  overlay(user);
  return merged.get<ExperimentConfig>();
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

inline void write_outputs(const ResultRecord& rec, const std::string& prefix) {
  if (prefix.empty()) return;
  auto write = [](const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path);
    out << text;
  };
  write(prefix + ".json", to_json_value(rec, false).dump(2) + "\n");
  write(prefix + ".csv", to_csv(rec));
  write(prefix + ".meta.json", rec.metadata.dump(2) + "\n");
}

inline ResultRecord run_experiment(const ExperimentConfig& cfg) {
  const auto& entry = find_experiment(cfg.experiment);
  ResultRecord rec;
  rec.experiment = entry.name;
  rec.claim = entry.claim;
  rec.config = cfg;
  rec.metadata["started_at"] = utc_timestamp();
  detail::Stopwatch sw;
  entry.run(cfg, rec);
  rec.metadata["finished_at"] = utc_timestamp();
  rec.metadata["wall_seconds"] = sw.seconds();
  rec.metadata["threads"] = resolve_threads(cfg.threads);
  rec.metadata["artifact_version"] = kArtifactVersion;
  write_outputs(rec, cfg.output);
  return rec;
}

inline ResultRecord run_experiment(const nlohmann::json& user, bool smoke = false) {
  return run_experiment(resolve_config(user, smoke));
}

inline nlohmann::json list_experiments() {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& e : experiment_catalog()) out.push_back({{"name", e.name}, {"claim", e.claim}});
  return out;
}

}  // namespace cklab
