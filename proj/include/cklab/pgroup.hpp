#pragma once

#include "cklab/core.hpp"

#include <json.hpp>

#include <algorithm>
#include <compare>
#include <functional>
#include <numeric>
#include <sstream>
#include <vector>

namespace cklab {

// Finite abelian p-group  Z/p^{l_1} + ... + Z/p^{l_r}, stored as the
// partition l_1 >= ... >= l_r >= 1. The empty partition is the trivial group.
class PGroup {
 public:
  PGroup() = default;

  PGroup(std::uint64_t p, std::vector<int> parts) : p_(p), parts_(std::move(parts)) {
    if (!is_prime(p_)) throw ValidationError("PGroup: p = " + std::to_string(p_) + " is not prime");
    for (int l : parts_)
      if (l < 1) throw ValidationError("PGroup: parts must be positive");
    std::sort(parts_.begin(), parts_.end(), std::greater<>());
  }

  static PGroup trivial(std::uint64_t p) { return PGroup(p, {}); }
  static PGroup cyclic(std::uint64_t p, int exponent) { return PGroup(p, {exponent}); }
  static PGroup elementary(std::uint64_t p, int rank) {
    return PGroup(p, std::vector<int>(static_cast<std::size_t>(rank), 1));
  }

  std::uint64_t p() const { return p_; }
  const std::vector<int>& parts() const { return parts_; }
  std::size_t rank() const { return parts_.size(); }
  bool is_trivial() const { return parts_.empty(); }

  // log_p |G|
  int log_order() const { return std::accumulate(parts_.begin(), parts_.end(), 0); }
  // log_p of the exponent; 0 for the trivial group.
  int exponent_log() const { return parts_.empty() ? 0 : parts_.front(); }

  BigInt order() const { return big_pow(p_, static_cast<unsigned>(log_order())); }
  BigInt exponent() const { return big_pow(p_, static_cast<unsigned>(exponent_log())); }

  // Number of parts >= k, i.e. log_p |p^{k-1}G / p^k G|.
  std::size_t parts_at_least(int k) const {
    return static_cast<std::size_t>(
        std::count_if(parts_.begin(), parts_.end(), [k](int l) { return l >= k; }));
  }

  // The quotient G / p^c G, i.e. every part replaced by min(part, c).
  PGroup capped(int c) const {
    std::vector<int> q;
    for (int l : parts_)
      if (c > 0) q.push_back(std::min(l, c));
    return PGroup(p_, std::move(q));
  }

  std::string to_string() const {
    std::ostringstream os;
    os << "(" << p_ << ",[";
    for (std::size_t i = 0; i < parts_.size(); ++i) os << (i ? "," : "") << parts_[i];
    os << "])";
    return os.str();
  }

  friend bool operator==(const PGroup&, const PGroup&) = default;
  friend auto operator<=>(const PGroup&, const PGroup&) = default;

 private:
  std::uint64_t p_ = 2;
  std::vector<int> parts_;
};

inline void to_json(nlohmann::json& j, const PGroup& g) {
  j = nlohmann::json{{"p", g.p()}, {"parts", g.parts()}};
}

inline void from_json(const nlohmann::json& j, PGroup& g) {
  if (!j.is_object() || !j.contains("p"))
    throw ValidationError("group JSON must be an object with \"p\" and \"parts\"");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (it.key() != "p" && it.key() != "parts")
      throw ValidationError("unknown field in group JSON: " + it.key());
  std::vector<int> parts;
  if (j.contains("parts")) parts = j.at("parts").get<std::vector<int>>();
  g = PGroup(j.at("p").get<std::uint64_t>(), std::move(parts));
}

inline BigInt group_order(const PGroup& g) { return g.order(); }

inline void require_same_prime(const PGroup& a, const PGroup& g) {
  if (a.p() != g.p())
    throw ValidationError("groups over different primes: " + a.to_string() + " vs " + g.to_string());
}

// |Hom(A, G)| = prod_{i,j} p^{min(a_i, g_j)}
inline BigInt count_homs(const PGroup& a, const PGroup& g) {
  require_same_prime(a, g);
  unsigned e = 0;
  for (int x : a.parts())
    for (int y : g.parts()) e += static_cast<unsigned>(std::min(x, y));
  return big_pow(a.p(), e);
}

// Closed form for |Aut(G)| with the parts sorted ascending e_1 <= ... <= e_r:
//   prod_k (p^{d_k} - p^{k-1}) * prod_j p^{e_j (r - d_j)} * prod_i p^{(e_i - 1)(r - c_i + 1)}
// where d_k = max{l : e_l = e_k} and c_k = min{l : e_l = e_k} (1-based).
// Validated against exhaustive enumeration in the test suite.
inline BigInt count_automorphisms(const PGroup& g) {
  std::vector<int> e(g.parts().rbegin(), g.parts().rend());
  const std::size_t r = e.size();
  const std::uint64_t p = g.p();
  BigInt result = 1;
  unsigned extra = 0;
  for (std::size_t k = 0; k < r; ++k) {
    std::size_t d = k, c = k;
    while (d + 1 < r && e[d + 1] == e[k]) ++d;
    while (c > 0 && e[c - 1] == e[k]) --c;
    const std::size_t d1 = d + 1, c1 = c + 1;  // 1-based
    result *= big_pow(p, static_cast<unsigned>(d1)) - big_pow(p, static_cast<unsigned>(k));
    extra += static_cast<unsigned>(e[k]) * static_cast<unsigned>(r - d1);
    extra += static_cast<unsigned>(e[k] - 1) * static_cast<unsigned>(r - c1 + 1);
  }
  return result * big_pow(p, extra);
}

// All groups with |G| <= p^max_log_order, ordered by log order then partition.
inline std::vector<PGroup> groups_up_to(std::uint64_t p, int max_log_order) {
  std::vector<PGroup> out;
  std::vector<int> cur;
  std::function<void(int, int)> rec = [&](int remaining, int max_part) {
    if (remaining == 0) {
      out.emplace_back(p, cur);
      return;
    }
    for (int l = std::min(remaining, max_part); l >= 1; --l) {
      cur.push_back(l);
      rec(remaining - l, l);
      cur.pop_back();
    }
  };
  for (int k = 0; k <= max_log_order; ++k) rec(k, k);
  return out;
}

}  // namespace cklab
