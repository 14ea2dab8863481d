#pragma once

#include "cklab/concrete_group.hpp"

#include <cmath>
#include <sstream>

namespace cklab {

using RowSet = ElementSet;

// Fixed-zero mask of an n x (n+t) matrix: supports[j] is the set of rows
// allowed to be nonzero in column j. Rows and columns are 0-based here and
// 1-based in JSON.
class SupportPattern {
 public:
  SupportPattern() = default;
  SupportPattern(std::size_t n, std::size_t t, std::vector<RowSet> supports)
      : n_(n), t_(t), supports_(std::move(supports)) {
    if (n_ == 0) throw ValidationError("SupportPattern: n must be positive");
    if (supports_.size() != n_ + t_)
      throw ValidationError("SupportPattern: expected " + std::to_string(n_ + t_) + " column supports");
    for (const auto& s : supports_)
      if (s.words().size() != (n_ + 63) / 64) throw ValidationError("SupportPattern: support width mismatch");
  }

  // Builds from explicit 0-based row lists.
  static SupportPattern from_rows(std::size_t n, std::size_t t, const std::vector<std::vector<std::size_t>>& cols) {
    std::vector<RowSet> sup;
    for (const auto& rows : cols) {
      RowSet s(n);
      for (auto r : rows) {
        if (r >= n) throw ValidationError("SupportPattern: row index out of range");
        s.set(r);
      }
      sup.push_back(std::move(s));
    }
    return SupportPattern(n, t, std::move(sup));
  }

  std::size_t n() const { return n_; }
  std::size_t t() const { return t_; }
  std::size_t rows() const { return n_; }
  std::size_t cols() const { return n_ + t_; }
  const RowSet& support(std::size_t j) const { return supports_[j]; }
  const std::vector<RowSet>& supports() const { return supports_; }
  bool allowed(std::size_t i, std::size_t j) const { return supports_[j].test(i); }

  std::size_t total_size() const {
    std::size_t s = 0;
    for (const auto& c : supports_) s += c.count();
    return s;
  }

  std::vector<std::size_t> column_sizes() const {
    std::vector<std::size_t> out;
    for (const auto& c : supports_) out.push_back(c.count());
    return out;
  }

  // Row i's allowed columns.
  RowSet row_support(std::size_t i) const {
    RowSet r(cols());
    for (std::size_t j = 0; j < cols(); ++j)
      if (supports_[j].test(i)) r.set(j);
    return r;
  }

  bool is_subpattern_of(const SupportPattern& o) const {
    if (n_ != o.n_ || t_ != o.t_) return false;
    for (std::size_t j = 0; j < cols(); ++j)
      if (!supports_[j].subset_of(o.supports_[j])) return false;
    return true;
  }

  friend bool operator==(const SupportPattern&, const SupportPattern&) = default;

 private:
  std::size_t n_ = 0, t_ = 0;
  std::vector<RowSet> supports_;
};

inline void to_json(nlohmann::json& j, const SupportPattern& s) {
  nlohmann::json sup = nlohmann::json::array();
  for (const auto& c : s.supports()) {
    nlohmann::json rows = nlohmann::json::array();
    for (auto r : c.indices()) rows.push_back(r + 1);
    sup.push_back(std::move(rows));
  }
  j = nlohmann::json{{"n", s.n()}, {"t", s.t()}, {"supports", sup}};
}

inline void from_json(const nlohmann::json& j, SupportPattern& s) {
  if (!j.is_object()) throw ValidationError("pattern JSON must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (it.key() != "n" && it.key() != "t" && it.key() != "supports")
      throw ValidationError("unknown field in pattern JSON: " + it.key());
  const auto n = j.at("n").get<std::size_t>();
  const auto t = j.value("t", std::size_t{0});
  std::vector<std::vector<std::size_t>> cols;
  for (const auto& col : j.at("supports")) {
    std::vector<std::size_t> rows;
    for (const auto& r : col) {
      const auto v = r.get<std::int64_t>();
      if (v < 1 || static_cast<std::size_t>(v) > n) throw ValidationError("pattern JSON: row index out of range");
      rows.push_back(static_cast<std::size_t>(v - 1));
    }
    cols.push_back(std::move(rows));
  }
  s = SupportPattern::from_rows(n, t, cols);
}

namespace detail {

inline RowSet row_range(std::size_t n, std::size_t lo, std::size_t hi) {  // [lo, hi)
  RowSet s(n);
  for (std::size_t i = lo; i < std::min(hi, n); ++i) s.set(i);
  return s;
}

inline void pad_full_columns(std::vector<RowSet>& cols, std::size_t n, std::size_t t) {
  for (std::size_t j = 0; j < t; ++j) cols.push_back(row_range(n, 0, n));
}

}  // namespace detail

inline SupportPattern full_pattern(std::size_t n, std::size_t t = 0) {
  std::vector<RowSet> cols(n + t, detail::row_range(n, 0, n));
  return SupportPattern(n, t, std::move(cols));
}

inline SupportPattern diagonal_pattern(std::size_t n) {
  std::vector<RowSet> cols;
  for (std::size_t j = 0; j < n; ++j) cols.push_back(detail::row_range(n, j, j + 1));
  return SupportPattern(n, 0, std::move(cols));
}

// Zero block in rows 1..a of columns 1..b.
inline SupportPattern block_pattern(std::size_t n, std::size_t a, std::size_t b, std::size_t t = 0) {
  if (a < 1 || a > n || b < 1 || b > n) throw ValidationError("block_pattern: need 1 <= a, b <= n");
  std::vector<RowSet> cols;
  for (std::size_t j = 0; j < n; ++j) cols.push_back(detail::row_range(n, j < b ? a : 0, n));
  detail::pad_full_columns(cols, n, t);
  return SupportPattern(n, t, std::move(cols));
}

// Column i (1-based) allowed in rows [t + ceil(i/d) - 1] while i <= d(n-t),
// full afterwards. d = 1 is accepted here; the public generators split it.
inline SupportPattern stairs_pattern(std::size_t n, std::size_t t, std::size_t d) {
  if (t < 1 || t > n) throw ValidationError("stairs: need 1 <= t <= n");
  if (d < 1) throw ValidationError("stairs: width d must be positive");
  std::vector<RowSet> cols;
  for (std::size_t i = 1; i <= n; ++i) {
    const std::size_t top = i <= d * (n - t) ? t + (i + d - 1) / d - 1 : n;
    cols.push_back(detail::row_range(n, 0, top));
  }
  return SupportPattern(n, 0, std::move(cols));
}

inline SupportPattern stairs_unit(std::size_t n, std::size_t t) { return stairs_pattern(n, t, 1); }

inline SupportPattern stairs_wide(std::size_t n, std::size_t t, std::size_t d) {
  if (d < 2) throw ValidationError("stairs_wide: width d must be at least 2");
  return stairs_pattern(n, t, d);
}

// Zero region is the union of [1..alpha_l] x [1..beta_l].
struct StairSpec {
  std::vector<std::size_t> alphas;  // strictly decreasing
  std::vector<std::size_t> betas;   // strictly increasing
  std::size_t t = 0;

  std::size_t k() const { return alphas.size(); }

  void validate(std::size_t n) const {
    if (alphas.empty() || alphas.size() != betas.size())
      throw ValidationError("StairSpec: need k >= 1 matching alphas and betas");
    for (std::size_t l = 0; l < alphas.size(); ++l) {
      if (alphas[l] < 1 || alphas[l] > n || betas[l] < 1 || betas[l] > n)
        throw ValidationError("StairSpec: alphas and betas must lie in [1, n]");
      if (l > 0 && (alphas[l] >= alphas[l - 1] || betas[l] <= betas[l - 1]))
        throw ValidationError("StairSpec: alphas must strictly decrease and betas strictly increase");
    }
  }
};

inline SupportPattern k_step_pattern(const StairSpec& spec, std::size_t n) {
  spec.validate(n);
  std::vector<RowSet> cols;
  for (std::size_t j = 1; j <= n; ++j) {
    std::size_t skip = 0;
    for (std::size_t l = 0; l < spec.k(); ++l)
      if (j <= spec.betas[l]) {
        skip = spec.alphas[l];
        break;
      }
    cols.push_back(detail::row_range(n, skip, n));
  }
  detail::pad_full_columns(cols, n, spec.t);
  return SupportPattern(n, spec.t, std::move(cols));
}

// Column i allowed in rows j with |i - j| <= w.
inline SupportPattern band_pattern(std::size_t n, std::size_t w) {
  std::vector<RowSet> cols;
  for (std::size_t i = 0; i < n; ++i) cols.push_back(detail::row_range(n, i >= w ? i - w : 0, i + w + 1));
  return SupportPattern(n, 0, std::move(cols));
}

struct BlockCyclicParams {
  std::size_t t = 0, k = 0, u = 0, v = 0;
};

inline BlockCyclicParams block_cyclic_params(std::size_t n, std::size_t width) {
  if (width < 1) throw ValidationError("block_cyclic: width must be positive");
  BlockCyclicParams bp;
  bp.t = width;
  bp.k = n / width;
  if (bp.k < 1 || (width + 1) * bp.k < n)
    throw ValidationError("block_cyclic: [n] cannot be split into blocks of width " + std::to_string(width) +
                          " and " + std::to_string(width + 1));
  bp.u = (width + 1) * bp.k - n;
  bp.v = bp.k - bp.u;
  return bp;
}

// floor(2 log_p n) - 1, computed in integers.
inline std::size_t block_cyclic_width(std::size_t n, std::uint64_t p) {
  std::size_t l = 0;
  // largest l with p^l <= n^2
  const unsigned __int128 n2 = static_cast<unsigned __int128>(n) * n;
  unsigned __int128 pw = p;
  while (pw <= n2) {
    ++l;
    pw *= p;
  }
  return l - 1;
}

// Blocks tau_1..tau_k (u of width t, then v of width t+1); every column in
// block q is supported on tau_q and tau_{q+1}, cyclically.
inline SupportPattern block_cyclic_pattern_with_width(std::size_t n, std::size_t width) {
  const auto bp = block_cyclic_params(n, width);
  std::vector<std::pair<std::size_t, std::size_t>> tau;  // [lo, hi)
  std::size_t lo = 0;
  for (std::size_t q = 0; q < bp.k; ++q) {
    const std::size_t w = q < bp.u ? bp.t : bp.t + 1;
    tau.emplace_back(lo, lo + w);
    lo += w;
  }
  std::vector<RowSet> cols;
  for (std::size_t q = 0; q < bp.k; ++q) {
    const auto [a0, a1] = tau[q];
    const auto [b0, b1] = tau[(q + 1) % bp.k];
    const RowSet s = detail::row_range(n, a0, a1) | detail::row_range(n, b0, b1);
    for (std::size_t r = a0; r < a1; ++r) cols.push_back(s);
  }
  return SupportPattern(n, 0, std::move(cols));
}

// n < p gives the all-empty pattern.
inline SupportPattern block_cyclic_pattern(std::size_t n, std::uint64_t p) {
  if (!is_prime(p)) throw ValidationError("block_cyclic: p must be prime");
  if (n < p) return SupportPattern(n, 0, std::vector<RowSet>(n, RowSet(n)));
  return block_cyclic_pattern_with_width(n, block_cyclic_width(n, p));
}

struct NonuniversalityParams {
  std::size_t t = 0;   // special support width, equal to k
  std::size_t kn = 0;  // number of special columns
  std::size_t n = 0;
};

inline NonuniversalityParams nonuniversality_params(std::size_t k, std::uint64_t p, double eps) {
  if (!is_prime(p)) throw ValidationError("nonuniversality: p must be prime");
  if (!(eps > 0.0) || !(eps < 1.0 - 1.0 / static_cast<double>(p)))
    throw ValidationError("nonuniversality: eps must lie in (0, 1 - 1/p)");
  if (k < 1) throw ValidationError("nonuniversality: k must be positive");
  const double a = std::log(static_cast<double>(p));
  const double b = -std::log1p(-eps);
  const double c = (a + b) / 2;
  NonuniversalityParams np;
  np.t = k;
  np.kn = static_cast<std::size_t>(std::floor(std::exp(c * static_cast<double>(k))));
  np.n = k * np.kn;
  return np;
}

// First n - k_n columns full, the last k_n columns have disjoint supports of size k.
inline SupportPattern nonuniversality_pattern(std::size_t k, std::uint64_t p, double eps) {
  const auto np = nonuniversality_params(k, p, eps);
  std::vector<RowSet> cols(np.n - np.kn, detail::row_range(np.n, 0, np.n));
  for (std::size_t i = 0; i < np.kn; ++i) cols.push_back(detail::row_range(np.n, i * k, (i + 1) * k));
  return SupportPattern(np.n, 0, std::move(cols));
}

// Sizes a in [n, n^2] realised by supports whose cokernel reduces to a small
// full block when the nonzero entries are units. Case a: d <= n - 2, case b:
// d = n - 1 with a <= n^2 - n + 1, case c: a >= n^2 - n + 2, where d is the
// largest integer with a >= n + d(d - 1).
struct RademacherLayout {
  char which = 'a';
  std::size_t d = 0;
};

inline RademacherLayout rademacher_layout(std::size_t n, std::size_t a) {
  if (n < 1 || a < n || a > n * n) throw ValidationError("rademacher construction: need n <= a <= n^2");
  if (n >= 2 && a >= n * n - n + 2) return {'c', n};
  std::size_t d = 1;
  while (d + 1 <= n && a >= n + (d + 1) * d) ++d;
  if (d + 2 <= n) return {'a', d};
  return {'b', d};
}

inline SupportPattern rademacher_construction_pattern(std::size_t n, std::size_t a) {
  const auto lay = rademacher_layout(n, a);
  const std::size_t d = lay.d;
  std::vector<RowSet> cols;
  if (lay.which == 'a') {
    const std::size_t extra = a - n - d * (d - 1);
    const std::size_t first = std::min(extra, d);
    for (std::size_t i = 0; i < d; ++i) cols.push_back(detail::row_range(n, 0, d));
    RowSet c1 = detail::row_range(n, 0, first), c2 = detail::row_range(n, 0, extra - first);
    c1.set(d);
    c2.set(d + 1);
    cols.push_back(c1);
    cols.push_back(c2);
    for (std::size_t i = d + 2; i < n; ++i) cols.push_back(detail::row_range(n, i, i + 1));
  } else if (lay.which == 'b') {
    std::size_t extras = a - 1 - (n - 1) * (n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i, extras -= extras ? 1 : 0)
      cols.push_back(detail::row_range(n, 0, extras ? n : n - 1));
    cols.push_back(detail::row_range(n, n - 1, n));
  } else {
    for (std::size_t i = 0; i < n; ++i) cols.push_back(detail::row_range(n, 0, i < n * n - a ? n - 1 : n));
  }
  return SupportPattern(n, 0, std::move(cols));
}

struct PatternReport {
  bool valid = true;
  std::vector<std::size_t> empty_columns;   // 1-based
  std::vector<std::size_t> uncovered_rows;  // 1-based
  std::size_t size = 0;
  double gauge = 0.0;  // |Sigma| / n - log_p n
};

inline PatternReport validate(const SupportPattern& s, std::uint64_t p = 2) {
  PatternReport r;
  RowSet covered(s.n());
  for (std::size_t j = 0; j < s.cols(); ++j) {
    if (!s.support(j).any()) r.empty_columns.push_back(j + 1);
    covered = covered | s.support(j);
  }
  for (std::size_t i = 0; i < s.n(); ++i)
    if (!covered.test(i)) r.uncovered_rows.push_back(i + 1);
  r.valid = r.empty_columns.empty() && r.uncovered_rows.empty();
  r.size = s.total_size();
  const double n = static_cast<double>(s.n());
  r.gauge = static_cast<double>(r.size) / n - std::log(n) / std::log(static_cast<double>(p));
  return r;
}

inline void to_json(nlohmann::json& j, const PatternReport& r) {
  j = nlohmann::json{{"valid", r.valid},
                     {"empty_columns", r.empty_columns},
                     {"uncovered_rows", r.uncovered_rows},
                     {"size", r.size},
                     {"gauge", r.gauge}};
}

// "family:key=value,key=value"; list values are '/'-separated.
struct PatternSpec {
  std::string family;
  std::map<std::string, std::string> params;

  static PatternSpec parse(const std::string& text) {
    PatternSpec ps;
    const auto colon = text.find(':');
    ps.family = text.substr(0, colon);
    if (colon == std::string::npos) return ps;
    std::stringstream ss(text.substr(colon + 1));
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item.empty()) continue;
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw ValidationError("pattern params: expected key=value, got " + item);
      ps.params[item.substr(0, eq)] = item.substr(eq + 1);
    }
    return ps;
  }

  bool has(const std::string& key) const { return params.count(key) != 0; }

  std::size_t size(const std::string& key) const {
    auto it = params.find(key);
    if (it == params.end()) throw ValidationError("pattern family " + family + " needs parameter " + key);
    try {
      std::size_t pos = 0;
      const long long v = std::stoll(it->second, &pos);
      if (pos != it->second.size() || v < 0) throw std::invalid_argument("bad");
      return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      throw ValidationError("pattern parameter " + key + " must be a nonnegative integer");
    }
  }
  std::size_t size_or(const std::string& key, std::size_t fallback) const { return has(key) ? size(key) : fallback; }

  double real(const std::string& key) const {
    auto it = params.find(key);
    if (it == params.end()) throw ValidationError("pattern family " + family + " needs parameter " + key);
    try {
      return std::stod(it->second);
    } catch (const std::exception&) {
      throw ValidationError("pattern parameter " + key + " must be a number");
    }
  }

  std::vector<std::size_t> list(const std::string& key) const {
    auto it = params.find(key);
    if (it == params.end()) throw ValidationError("pattern family " + family + " needs parameter " + key);
    std::vector<std::size_t> out;
    std::stringstream ss(it->second);
    std::string tok;
    while (std::getline(ss, tok, '/')) {
      try {
        out.push_back(static_cast<std::size_t>(std::stoull(tok)));
      } catch (const std::exception&) {
        throw ValidationError("pattern parameter " + key + " must be a '/'-separated integer list");
      }
    }
    return out;
  }
};

inline const std::vector<std::string>& pattern_families() {
  static const std::vector<std::string> names = {"full",       "diagonal",     "block", "stairs-unit",
                                                 "stairs-wide", "kstep",       "band",  "block-cyclic",
                                                 "nonuniversality", "rademacher"};
  return names;
}

inline SupportPattern make_pattern(const PatternSpec& ps) {
  const auto& f = ps.family;
  if (f == "full") return full_pattern(ps.size("n"), ps.size_or("t", 0));
  if (f == "diagonal") return diagonal_pattern(ps.size("n"));
  if (f == "block") return block_pattern(ps.size("n"), ps.size("a"), ps.size("b"), ps.size_or("t", 0));
  if (f == "stairs-unit") return stairs_unit(ps.size("n"), ps.size("t"));
  if (f == "stairs-wide") return stairs_wide(ps.size("n"), ps.size("t"), ps.size("d"));
  if (f == "kstep") {
    StairSpec spec{ps.list("alphas"), ps.list("betas"), ps.size_or("t", 0)};
    return k_step_pattern(spec, ps.size("n"));
  }
  if (f == "band") return band_pattern(ps.size("n"), ps.size("w"));
  if (f == "block-cyclic") {
    if (ps.has("width")) return block_cyclic_pattern_with_width(ps.size("n"), ps.size("width"));
    return block_cyclic_pattern(ps.size("n"), ps.size_or("p", 2));
  }
  if (f == "nonuniversality") return nonuniversality_pattern(ps.size("k"), ps.size_or("p", 2), ps.real("eps"));
  if (f == "rademacher") return rademacher_construction_pattern(ps.size("n"), ps.size("a"));
  throw ValidationError("unknown pattern family: " + f);
}

inline SupportPattern make_pattern(const std::string& text) { return make_pattern(PatternSpec::parse(text)); }

}  // namespace cklab
