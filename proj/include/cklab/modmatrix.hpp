#pragma once

#include "cklab/concrete_group.hpp"
#include "cklab/pgroup.hpp"

#include <istream>
#include <ostream>

namespace cklab {

// Dense matrix over Z/p^e, entries reduced into [0, p^e).
class ModMatrix {
 public:
  ModMatrix(std::uint64_t p, int e, std::size_t rows, std::size_t cols)
      : p_(p), e_(e), rows_(rows), cols_(cols) {
    if (!is_prime(p)) throw ValidationError("ModMatrix: p = " + std::to_string(p) + " is not prime");
    if (e < 1) throw ValidationError("ModMatrix: precision e must be >= 1");
    if (rows < 1 || cols < 1) throw ValidationError("ModMatrix: dimensions must be positive");
    modulus_ = checked_pow(p, static_cast<unsigned>(e));
    a_.assign(rows * cols, 0);
  }

  ModMatrix(std::uint64_t p, int e, std::size_t rows, std::size_t cols, const std::vector<std::int64_t>& entries)
      : ModMatrix(p, e, rows, cols) {
    if (entries.size() != rows * cols) throw ValidationError("ModMatrix: entry count does not match dimensions");
    for (std::size_t i = 0; i < entries.size(); ++i) a_[i] = reduce(entries[i]);
  }

  static ModMatrix identity(std::uint64_t p, int e, std::size_t n) {
    ModMatrix m(p, e, n, n);
    for (std::size_t i = 0; i < n; ++i) m.a_[i * n + i] = 1 % m.modulus_;
    return m;
  }

  static ModMatrix diagonal(std::uint64_t p, int e, const std::vector<std::int64_t>& diag) {
    ModMatrix m(p, e, diag.size(), diag.size());
    for (std::size_t i = 0; i < diag.size(); ++i) m.set(i, i, diag[i]);
    return m;
  }

  std::uint64_t p() const { return p_; }
  int e() const { return e_; }
  std::uint64_t modulus() const { return modulus_; }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  const std::vector<std::uint64_t>& data() const { return a_; }
  std::vector<std::uint64_t>& mutable_data() { return a_; }

  std::uint64_t at(std::size_t i, std::size_t j) const { return a_[i * cols_ + j]; }
  void set(std::size_t i, std::size_t j, std::int64_t v) { a_[i * cols_ + j] = reduce(v); }
  void set_reduced(std::size_t i, std::size_t j, std::uint64_t v) { a_[i * cols_ + j] = v; }

  std::uint64_t reduce(std::int64_t v) const {
    const auto m = static_cast<std::int64_t>(modulus_);
    std::int64_t r = v % m;
    return static_cast<std::uint64_t>(r < 0 ? r + m : r);
  }

  std::uint64_t mul(std::uint64_t x, std::uint64_t y) const {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(x) * y) % modulus_);
  }

  ModMatrix transpose() const {
    ModMatrix t(p_, e_, cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t.a_[j * rows_ + i] = at(i, j);
    return t;
  }

  ModMatrix operator*(const ModMatrix& o) const {
    if (p_ != o.p_ || e_ != o.e_ || cols_ != o.rows_) throw ValidationError("ModMatrix: incompatible product");
    ModMatrix r(p_, e_, rows_, o.cols_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t k = 0; k < cols_; ++k) {
        const std::uint64_t x = at(i, k);
        if (x == 0) continue;
        for (std::size_t j = 0; j < o.cols_; ++j)
          r.a_[i * o.cols_ + j] = (r.a_[i * o.cols_ + j] + mul(x, o.at(k, j))) % modulus_;
      }
    return r;
  }

  // The same matrix reduced to a lower precision.
  ModMatrix reduced(int e) const {
    if (e < 1 || e > e_) throw ValidationError("ModMatrix: can only reduce to a precision in [1, e]");
    ModMatrix r(p_, e, rows_, cols_);
    for (std::size_t i = 0; i < a_.size(); ++i) r.a_[i] = a_[i] % r.modulus_;
    return r;
  }

  friend bool operator==(const ModMatrix& x, const ModMatrix& y) {
    return x.p_ == y.p_ && x.e_ == y.e_ && x.rows_ == y.rows_ && x.cols_ == y.cols_ && x.a_ == y.a_;
  }

 private:
  std::uint64_t p_;
  int e_;
  std::uint64_t modulus_ = 1;
  std::size_t rows_, cols_;
  std::vector<std::uint64_t> a_;
};

namespace detail {

inline int valuation(std::uint64_t x, std::uint64_t p, int cap) {
  if (x == 0) return cap;
  if (p == 2) return std::min(cap, std::countr_zero(x));
  int v = 0;
  while (x % p == 0) {
    x /= p;
    ++v;
  }
  return std::min(v, cap);
}

inline std::uint64_t inverse_mod(std::uint64_t a, std::uint64_t m) {
  __int128 old_r = static_cast<__int128>(a), r = static_cast<__int128>(m);
  __int128 old_s = 1, s = 0;
  while (r != 0) {
    const __int128 q = old_r / r;
    std::tie(old_r, r) = std::make_pair(r, old_r - q * r);
    std::tie(old_s, s) = std::make_pair(s, old_s - q * s);
  }
  if (old_r != 1) throw std::logic_error("inverse_mod: not a unit");
  __int128 x = old_s % static_cast<__int128>(m);
  if (x < 0) x += m;
  return static_cast<std::uint64_t>(x);
}

// Rank over F_2 with rows packed into 64-bit words.
inline std::size_t rank_gf2(const ModMatrix& m) {
  const std::size_t words = (m.cols() + 63) / 64;
  std::vector<std::uint64_t> bits(m.rows() * words, 0);
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j)
      if (m.at(i, j) & 1u) bits[i * words + (j >> 6)] |= std::uint64_t{1} << (j & 63);
  std::size_t rank = 0;
  for (std::size_t j = 0; j < m.cols() && rank < m.rows(); ++j) {
    const std::size_t w = j >> 6;
    const std::uint64_t bit = std::uint64_t{1} << (j & 63);
    std::size_t piv = rank;
    while (piv < m.rows() && !(bits[piv * words + w] & bit)) ++piv;
    if (piv == m.rows()) continue;
    if (piv != rank)
      std::swap_ranges(bits.begin() + static_cast<std::ptrdiff_t>(piv * words),
                       bits.begin() + static_cast<std::ptrdiff_t>((piv + 1) * words),
                       bits.begin() + static_cast<std::ptrdiff_t>(rank * words));
    const std::uint64_t* prow = &bits[rank * words];
    for (std::size_t i = rank + 1; i < m.rows(); ++i) {
      std::uint64_t* row = &bits[i * words];
      if (row[w] & bit)
        for (std::size_t k = w; k < words; ++k) row[k] ^= prow[k];
    }
    ++rank;
  }
  return rank;
}

}  // namespace detail

// Rank of M mod p over F_p.
inline std::size_t rank_mod_p(const ModMatrix& m) {
  if (m.p() == 2) return detail::rank_gf2(m);
  const std::uint64_t p = m.p();
  std::vector<std::uint64_t> a(m.data());
  for (auto& x : a) x %= p;
  auto mulp = [p](std::uint64_t x, std::uint64_t y) {
    return static_cast<std::uint64_t>(static_cast<unsigned __int128>(x) * y % p);
  };
  const std::size_t R = m.rows(), C = m.cols();
  std::size_t rank = 0;
  for (std::size_t j = 0; j < C && rank < R; ++j) {
    std::size_t piv = rank;
    while (piv < R && a[piv * C + j] == 0) ++piv;
    if (piv == R) continue;
    for (std::size_t k = 0; k < C; ++k) std::swap(a[piv * C + k], a[rank * C + k]);
    const std::uint64_t inv = detail::inverse_mod(a[rank * C + j], p);
    for (std::size_t i = rank + 1; i < R; ++i) {
      const std::uint64_t f = mulp(a[i * C + j], inv);
      if (f == 0) continue;
      for (std::size_t k = j; k < C; ++k) a[i * C + k] = (a[i * C + k] + mulp(p - f, a[rank * C + k])) % p;
    }
    ++rank;
  }
  return rank;
}

// Smith normal form valuations d_1 <= ... <= d_min(rows,cols), each in [0, e];
// d_i = e means the pivot vanished mod p^e. Row elimination on a minimal
// valuation pivot (first in row-major order) is enough: the pivot divides
// everything left in its row, so column clearing would not change the
// remaining block.
inline std::vector<int> smith_normal_form(const ModMatrix& m) {
  const std::size_t R = m.rows(), C = m.cols(), K = std::min(R, C);
  const std::uint64_t q = m.modulus(), p = m.p();
  const int e = m.e();
  const bool pow2 = (p == 2);
  const std::uint64_t mask = q - 1;
  std::vector<std::uint64_t> a(m.data());
  std::vector<int> vals;
  vals.reserve(K);
  auto mulmod = [&](std::uint64_t x, std::uint64_t y) -> std::uint64_t {
    if (pow2) return (x * y) & mask;  // wraparound keeps the low bits
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(x) * y) % q);
  };
  for (std::size_t k = 0; k < K; ++k) {
    int best = e;
    std::size_t bi = k, bj = k;
    for (std::size_t i = k; i < R && best > 0; ++i)
      for (std::size_t j = k; j < C; ++j) {
        const int v = detail::valuation(a[i * C + j], p, e);
        if (v < best) {
          best = v;
          bi = i;
          bj = j;
          if (v == 0) break;
        }
      }
    if (best == e) {
      vals.insert(vals.end(), K - k, e);
      break;
    }
    vals.push_back(best);
    if (bi != k)
      for (std::size_t j = 0; j < C; ++j) std::swap(a[bi * C + j], a[k * C + j]);
    if (bj != k)
      for (std::size_t i = 0; i < R; ++i) std::swap(a[i * C + bj], a[i * C + k]);
    const std::uint64_t pv = checked_pow(p, static_cast<unsigned>(best));
    const std::uint64_t unit_inv = detail::inverse_mod(a[k * C + k] / pv % q, q);
    const std::uint64_t* prow = &a[k * C];
    for (std::size_t i = k + 1; i < R; ++i) {
      std::uint64_t* row = &a[i * C];
      if (row[k] == 0) continue;
      const std::uint64_t f = mulmod(row[k] / pv, unit_inv);
      const std::uint64_t nf = (q - f) % q;
      for (std::size_t j = k; j < C; ++j) {
        if (prow[j] == 0) continue;
        const std::uint64_t s = row[j] + mulmod(nf, prow[j]);
        row[j] = pow2 ? (s & mask) : (s >= q ? s - q : s);
      }
    }
  }
  return vals;
}

// Cokernel type at precision e: parts d_i >= 1, where d_i = e reads as "at least e".
struct TruncatedPartition {
  std::uint64_t p = 2;
  int e = 1;
  std::vector<int> parts;  // descending
  std::size_t saturated = 0;

  static TruncatedPartition from_valuations(std::uint64_t p, int e, const std::vector<int>& vals) {
    TruncatedPartition t{p, e, {}, 0};
    for (int v : vals)
      if (v >= 1) t.parts.push_back(std::min(v, e));
    std::sort(t.parts.begin(), t.parts.end(), std::greater<>());
    t.saturated = static_cast<std::size_t>(std::count(t.parts.begin(), t.parts.end(), e));
    return t;
  }

  bool is_trivial() const { return parts.empty(); }

  // The partition seen at a lower precision.
  TruncatedPartition capped(int cap) const {
    if (cap < 1 || cap > e) throw ValidationError("TruncatedPartition: cap must lie in [1, e]");
    std::vector<int> vals(parts);
    return from_valuations(p, cap, vals);
  }

  // cok (x) Z/p^c as a group; ignores saturation semantics.
  PGroup as_group(int c) const {
    std::vector<int> q;
    for (int d : parts) q.push_back(std::min(d, c));
    return PGroup(p, std::move(q));
  }

  friend bool operator==(const TruncatedPartition&, const TruncatedPartition&) = default;
};

inline void to_json(nlohmann::json& j, const TruncatedPartition& t) {
  j = nlohmann::json{{"p", t.p}, {"e", t.e}, {"parts", t.parts}, {"saturated", t.saturated}};
}

inline TruncatedPartition cokernel_partition(const ModMatrix& m) {
  if (m.rows() > m.cols())
    throw ValidationError("cokernel_partition: rows > cols gives an infinite cokernel");
  if (m.e() == 1) {
    const std::size_t corank = m.rows() - rank_mod_p(m);
    return TruncatedPartition::from_valuations(m.p(), 1, std::vector<int>(corank, 1));
  }
  return TruncatedPartition::from_valuations(m.p(), m.e(), smith_normal_form(m));
}

inline bool is_cokernel_iso(const TruncatedPartition& t, const PGroup& g) {
  if (t.p != g.p()) throw ValidationError("is_cokernel_iso: prime mismatch");
  if (t.e < g.exponent_log() + 1)
    throw ValidationError("is_cokernel_iso: precision e = " + std::to_string(t.e) +
                          " must exceed the top exponent of " + g.to_string());
  return t.saturated == 0 && t.parts == g.parts();
}

inline bool is_cokernel_iso(const ModMatrix& m, const PGroup& g) {
  if (m.e() < g.exponent_log() + 1)
    throw ValidationError("is_cokernel_iso: precision e = " + std::to_string(m.e()) +
                          " must exceed the top exponent of " + g.to_string());
  return is_cokernel_iso(cokernel_partition(m), g);
}

// cols - rank of M mod p.
inline std::size_t corank_mod_p(const ModMatrix& m) { return m.cols() - rank_mod_p(m); }

// |Sur(A, (p,[1]^k))| = prod_{i<k} (p^r - p^i), r = rank of A.
inline BigInt count_sur_elementary(std::uint64_t p, std::size_t source_rank, std::size_t k) {
  if (k > source_rank) return 0;
  BigInt r = 1;
  const BigInt top = big_pow(p, static_cast<unsigned>(source_rank));
  for (std::size_t i = 0; i < k; ++i) r *= top - big_pow(p, static_cast<unsigned>(i));
  return r;
}

inline BigInt count_sur_cok(const TruncatedPartition& t, const PGroup& g, SurjectionCounter& counter) {
  if (t.p != g.p()) throw ValidationError("count_sur_cok: prime mismatch");
  if (t.e < g.exponent_log())
    throw ValidationError("count_sur_cok: precision below the exponent of " + g.to_string());
  if (g.is_trivial()) return 1;
  if (g.exponent_log() == 1) return count_sur_elementary(g.p(), t.parts.size(), g.rank());
  return counter.count(t.as_group(g.exponent_log()), g);
}

inline BigInt count_sur_cok(const ModMatrix& m, const PGroup& g, SurjectionCounter& counter) {
  if (m.e() < g.exponent_log())
    throw ValidationError("count_sur_cok: precision below the exponent of " + g.to_string());
  return count_sur_cok(cokernel_partition(m), g, counter);
}

inline BigInt count_sur_cok(const ModMatrix& m, const PGroup& g) {
  SurjectionCounter counter;
  return count_sur_cok(m, g, counter);
}

// Text format: "p e rows cols" then row-major integers.
inline ModMatrix read_matrix_text(std::istream& in) {
  std::uint64_t p = 0;
  int e = 0;
  std::size_t rows = 0, cols = 0;
  if (!(in >> p >> e >> rows >> cols)) throw ValidationError("matrix text: bad header, expected \"p e rows cols\"");
  std::vector<std::int64_t> entries(rows * cols);
  for (auto& x : entries)
    if (!(in >> x)) throw ValidationError("matrix text: too few entries");
  return ModMatrix(p, e, rows, cols, entries);
}

inline void write_matrix_text(std::ostream& out, const ModMatrix& m) {
  out << m.p() << ' ' << m.e() << ' ' << m.rows() << ' ' << m.cols() << '\n';
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) out << (j ? " " : "") << m.at(i, j);
    out << '\n';
  }
}

inline nlohmann::json matrix_to_json(const ModMatrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(m.at(i, j));
    rows.push_back(std::move(row));
  }
  return {{"p", m.p()}, {"e", m.e()}, {"rows", m.rows()}, {"cols", m.cols()}, {"entries", rows}};
}

inline ModMatrix matrix_from_json(const nlohmann::json& j) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (it.key() != "p" && it.key() != "e" && it.key() != "rows" && it.key() != "cols" && it.key() != "entries")
      throw ValidationError("unknown field in matrix JSON: " + it.key());
  const auto rows = j.at("rows").get<std::size_t>();
  const auto cols = j.at("cols").get<std::size_t>();
  std::vector<std::int64_t> flat;
  const auto& entries = j.at("entries");
  if (entries.size() != rows) throw ValidationError("matrix JSON: row count mismatch");
  for (const auto& row : entries) {
    if (row.size() != cols) throw ValidationError("matrix JSON: column count mismatch");
    for (const auto& x : row) flat.push_back(x.get<std::int64_t>());
  }
  return ModMatrix(j.at("p").get<std::uint64_t>(), j.at("e").get<int>(), rows, cols, flat);
}

}  // namespace cklab
