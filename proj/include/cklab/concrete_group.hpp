#pragma once

#include "cklab/pgroup.hpp"

#include <bit>
#include <deque>
#include <map>
#include <memory>
#include <span>
#include <unordered_map>
#include <unordered_set>

namespace cklab {

// Dense bitset over element indices of a ConcreteGroup.
class ElementSet {
 public:
  ElementSet() = default;
  explicit ElementSet(std::size_t universe) : words_((universe + 63) / 64, 0) {}

  bool test(std::size_t i) const { return (words_[i >> 6] >> (i & 63)) & 1u; }
  void set(std::size_t i) { words_[i >> 6] |= std::uint64_t{1} << (i & 63); }
  std::size_t count() const {
    std::size_t c = 0;
    for (auto w : words_) c += static_cast<std::size_t>(std::popcount(w));
    return c;
  }
  const std::vector<std::uint64_t>& words() const { return words_; }

  void reset(std::size_t i) { words_[i >> 6] &= ~(std::uint64_t{1} << (i & 63)); }
  bool any() const {
    return std::any_of(words_.begin(), words_.end(), [](std::uint64_t w) { return w != 0; });
  }
  bool subset_of(const ElementSet& o) const {
    for (std::size_t i = 0; i < words_.size(); ++i)
      if (words_[i] & ~o.words_[i]) return false;
    return true;
  }
  std::vector<std::size_t> indices() const {
    std::vector<std::size_t> out;
    for (std::size_t w = 0; w < words_.size(); ++w)
      for (std::uint64_t x = words_[w]; x; x &= x - 1)
        out.push_back(w * 64 + static_cast<std::size_t>(std::countr_zero(x)));
    return out;
  }

  ElementSet operator&(const ElementSet& o) const {
    ElementSet r = *this;
    for (std::size_t i = 0; i < words_.size(); ++i) r.words_[i] &= o.words_[i];
    return r;
  }
  ElementSet operator|(const ElementSet& o) const {
    ElementSet r = *this;
    for (std::size_t i = 0; i < words_.size(); ++i) r.words_[i] |= o.words_[i];
    return r;
  }

  friend bool operator==(const ElementSet&, const ElementSet&) = default;
  friend auto operator<=>(const ElementSet&, const ElementSet&) = default;

  struct Hash {
    std::size_t operator()(const ElementSet& s) const {
      std::uint64_t h = 0x84222325cbf29ce4ULL;
      for (auto w : s.words_) h = mix64(h ^ w);
      return static_cast<std::size_t>(h);
    }
  };

 private:
  std::vector<std::uint64_t> words_;
};

// Explicit element model of a PGroup. Elements are indexed by mixed radix
// over the cyclic factors; index 0 is the identity. Copies share storage.
class ConcreteGroup {
 public:
  explicit ConcreteGroup(const PGroup& base, std::size_t cap = kDefaultGroupCap) {
    auto impl = std::make_shared<Impl>();
    impl->base = base;
    if (base.order() > cap)
      throw CapExceeded("group " + base.to_string() + " exceeds the concrete-group cap of " +
                        std::to_string(cap));
    std::size_t n = 1;
    for (int l : base.parts()) {
      impl->radix.push_back(static_cast<std::uint32_t>(checked_pow(base.p(), static_cast<unsigned>(l))));
      impl->stride.push_back(n);
      n *= impl->radix.back();
    }
    impl->size = n;
    const std::size_t r = impl->radix.size();
    impl->digits.resize(n * r);
    for (std::size_t x = 0; x < n; ++x)
      for (std::size_t i = 0; i < r; ++i)
        impl->digits[x * r + i] = static_cast<std::uint32_t>((x / impl->stride[i]) % impl->radix[i]);
    if (n <= 256) {
      impl->table.resize(n * n);
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b) impl->table[a * n + b] = static_cast<std::uint32_t>(add_slow(*impl, a, b));
    }
    impl_ = std::move(impl);
  }

  const PGroup& base() const { return impl_->base; }
  std::size_t size() const { return impl_->size; }
  std::size_t rank() const { return impl_->radix.size(); }
  std::uint64_t p() const { return impl_->base.p(); }

  std::uint32_t digit(std::size_t x, std::size_t i) const { return impl_->digits[x * rank() + i]; }

  std::size_t index_of(std::span<const std::uint32_t> digits) const {
    std::size_t x = 0;
    for (std::size_t i = 0; i < rank(); ++i) x += (digits[i] % impl_->radix[i]) * impl_->stride[i];
    return x;
  }

  std::size_t add(std::size_t a, std::size_t b) const {
    if (!impl_->table.empty()) return impl_->table[a * size() + b];
    return add_slow(*impl_, a, b);
  }

  std::size_t neg(std::size_t a) const {
    std::size_t x = 0;
    for (std::size_t i = 0; i < rank(); ++i) {
      const std::uint32_t d = digit(a, i);
      x += (d == 0 ? 0 : impl_->radix[i] - d) * impl_->stride[i];
    }
    return x;
  }

  std::size_t scale(std::size_t a, std::uint64_t k) const {
    std::size_t x = 0;
    for (std::size_t i = 0; i < rank(); ++i)
      x += static_cast<std::size_t>((digit(a, i) * (k % impl_->radix[i])) % impl_->radix[i]) * impl_->stride[i];
    return x;
  }

  // Generator of the i-th cyclic factor.
  std::size_t generator(std::size_t i) const { return impl_->stride[i]; }
  std::uint32_t radix(std::size_t i) const { return impl_->radix[i]; }

  // log_p of the order of x.
  int element_log_order(std::size_t x) const {
    int best = 0;
    for (std::size_t i = 0; i < rank(); ++i) {
      std::uint32_t d = digit(x, i);
      if (d == 0) continue;
      int v = 0;
      while (d % p() == 0) {
        d /= static_cast<std::uint32_t>(p());
        ++v;
      }
      best = std::max(best, base().parts()[i] - v);
    }
    return best;
  }

  bool same_as(const ConcreteGroup& o) const { return impl_ == o.impl_ || base() == o.base(); }

 private:
  struct Impl {
    PGroup base;
    std::size_t size = 1;
    std::vector<std::uint32_t> radix;
    std::vector<std::size_t> stride;
    std::vector<std::uint32_t> digits;
    std::vector<std::uint32_t> table;
  };

  static std::size_t add_slow(const Impl& g, std::size_t a, std::size_t b) {
    const std::size_t r = g.radix.size();
    std::size_t x = 0;
    for (std::size_t i = 0; i < r; ++i) {
      std::uint32_t s = g.digits[a * r + i] + g.digits[b * r + i];
      if (s >= g.radix[i]) s -= g.radix[i];
      x += s * g.stride[i];
    }
    return x;
  }

  std::shared_ptr<const Impl> impl_;
};

class Subgroup {
 public:
  Subgroup(ConcreteGroup parent, ElementSet members)
      : parent_(std::move(parent)), members_(std::move(members)), size_(members_.count()) {}

  static Subgroup trivial(const ConcreteGroup& g) {
    ElementSet s(g.size());
    s.set(0);
    return Subgroup(g, std::move(s));
  }
  static Subgroup full(const ConcreteGroup& g) {
    ElementSet s(g.size());
    for (std::size_t x = 0; x < g.size(); ++x) s.set(x);
    return Subgroup(g, std::move(s));
  }

  const ConcreteGroup& parent() const { return parent_; }
  const ElementSet& bits() const { return members_; }
  std::size_t size() const { return size_; }
  bool contains(std::size_t x) const { return members_.test(x); }
  bool is_trivial() const { return size_ == 1; }
  bool is_full() const { return size_ == parent_.size(); }

  int log_size() const {
    int k = 0;
    for (std::size_t s = size_; s > 1; s /= parent_.p()) ++k;
    return k;
  }

  std::vector<std::size_t> members() const {
    std::vector<std::size_t> out;
    out.reserve(size_);
    for (std::size_t x = 0; x < parent_.size(); ++x)
      if (members_.test(x)) out.push_back(x);
    return out;
  }

  // Exhaustive closure check: identity, sums and negatives stay inside.
  bool verify_closed() const {
    if (!contains(0)) return false;
    const auto m = members();
    for (auto a : m) {
      if (!contains(parent_.neg(a))) return false;
      for (auto b : m)
        if (!contains(parent_.add(a, b))) return false;
    }
    return true;
  }

  // Isomorphism type, read off from the p^k-torsion sizes.
  PGroup type() const {
    const std::uint64_t p = parent_.p();
    const int top = parent_.base().exponent_log();
    std::vector<std::size_t> torsion(static_cast<std::size_t>(top) + 1, 0);
    for (auto x : members()) {
      const int l = parent_.element_log_order(x);
      for (int k = l; k <= top; ++k) ++torsion[static_cast<std::size_t>(k)];
    }
    std::vector<int> parts;
    std::vector<std::size_t> at_least(static_cast<std::size_t>(top) + 2, 0);
    for (int k = 1; k <= top; ++k) {
      std::size_t ratio = torsion[static_cast<std::size_t>(k)] / torsion[static_cast<std::size_t>(k) - 1];
      std::size_t c = 0;
      while (ratio > 1) {
        ratio /= p;
        ++c;
      }
      at_least[static_cast<std::size_t>(k)] = c;
    }
    for (int k = 1; k <= top; ++k) {
      const std::size_t exactly = at_least[static_cast<std::size_t>(k)] - at_least[static_cast<std::size_t>(k) + 1];
      for (std::size_t i = 0; i < exactly; ++i) parts.push_back(k);
    }
    return PGroup(p, std::move(parts));
  }

  friend bool operator==(const Subgroup& a, const Subgroup& b) {
    return a.parent_.same_as(b.parent_) && a.members_ == b.members_;
  }

 private:
  ConcreteGroup parent_;
  ElementSet members_;
  std::size_t size_;
};

namespace detail {

// H + <x> as a bitset: the union of the cosets H + kx, k = 0..m-1.
inline ElementSet join_element(const ConcreteGroup& g, const ElementSet& h, std::size_t x) {
  if (h.test(x)) return h;
  std::vector<std::size_t> base;
  for (std::size_t y = 0; y < g.size(); ++y)
    if (h.test(y)) base.push_back(y);
  ElementSet out = h;
  std::size_t shift = x;
  while (!h.test(shift)) {
    for (auto y : base) out.set(g.add(y, shift));
    shift = g.add(shift, x);
  }
  return out;
}

inline void require_same_parent(const Subgroup& h, const Subgroup& k) {
  if (!h.parent().same_as(k.parent()))
    throw ValidationError("subgroups belong to different parent groups");
}

}  // namespace detail

inline Subgroup generated_subgroup(const ConcreteGroup& g, std::span<const std::size_t> elements) {
  ElementSet s(g.size());
  s.set(0);
  for (auto x : elements) s = detail::join_element(g, s, x);
  return Subgroup(g, std::move(s));
}

inline Subgroup subgroup_intersection(const Subgroup& h, const Subgroup& k) {
  detail::require_same_parent(h, k);
  return Subgroup(h.parent(), h.bits() & k.bits());
}

inline Subgroup subgroup_sum(const Subgroup& h, const Subgroup& k) {
  detail::require_same_parent(h, k);
  ElementSet s = h.bits();
  for (auto x : k.members()) s = detail::join_element(h.parent(), s, x);
  return Subgroup(h.parent(), std::move(s));
}

// All subgroups, sorted by size and then by member bitset. Breadth-first
// over H -> H + <x>, with x restricted to one representative per coset of H.
inline std::vector<Subgroup> enumerate_subgroups(const ConcreteGroup& g) {
  std::unordered_set<ElementSet, ElementSet::Hash> seen;
  std::deque<ElementSet> queue;
  ElementSet zero(g.size());
  zero.set(0);
  seen.insert(zero);
  queue.push_back(zero);
  std::vector<char> covered(g.size());
  while (!queue.empty()) {
    ElementSet h = std::move(queue.front());
    queue.pop_front();
    std::vector<std::size_t> members;
    for (std::size_t y = 0; y < g.size(); ++y)
      if (h.test(y)) members.push_back(y);
    std::fill(covered.begin(), covered.end(), 0);
    for (std::size_t x = 0; x < g.size(); ++x) {
      if (covered[x]) continue;
      for (auto y : members) covered[g.add(x, y)] = 1;
      if (h.test(x)) continue;
      ElementSet next = detail::join_element(g, h, x);
      if (seen.insert(next).second) queue.push_back(std::move(next));
    }
  }
  std::vector<Subgroup> out;
  out.reserve(seen.size());
  for (auto& s : seen) out.emplace_back(g, s);
  std::sort(out.begin(), out.end(), [](const Subgroup& a, const Subgroup& b) {
    if (a.size() != b.size()) return a.size() < b.size();
    return a.bits() < b.bits();
  });
  return out;
}

// Indexed subgroup lattice with a precomputed join table
// join(s, x) = index of (H_s + <x>).
class SubgroupLattice {
 public:
  explicit SubgroupLattice(const ConcreteGroup& g, std::size_t table_cap = std::size_t{1} << 26)
      : group_(g), subgroups_(enumerate_subgroups(g)) {
    const std::size_t m = subgroups_.size();
    if (m * g.size() > table_cap)
      throw CapExceeded("subgroup join table for " + g.base().to_string() + " exceeds cap");
    for (std::size_t i = 0; i < m; ++i) index_.emplace(subgroups_[i].bits(), i);
    log_size_.resize(m);
    for (std::size_t i = 0; i < m; ++i) log_size_[i] = subgroups_[i].log_size();
    join_.resize(m * g.size());
    for (std::size_t s = 0; s < m; ++s)
      for (std::size_t x = 0; x < g.size(); ++x)
        join_[s * g.size() + x] = static_cast<std::uint32_t>(
            subgroups_[s].contains(x) ? s : index_.at(detail::join_element(g, subgroups_[s].bits(), x)));
  }

  const ConcreteGroup& group() const { return group_; }
  std::size_t count() const { return subgroups_.size(); }
  const Subgroup& at(std::size_t i) const { return subgroups_[i]; }
  const std::vector<Subgroup>& subgroups() const { return subgroups_; }
  std::size_t trivial_index() const { return 0; }
  std::size_t full_index() const { return subgroups_.size() - 1; }
  int log_size(std::size_t i) const { return log_size_[i]; }

  std::size_t join(std::size_t s, std::size_t x) const { return join_[s * group_.size() + x]; }

  std::size_t index_of(const Subgroup& h) const { return index_.at(h.bits()); }

 private:
  ConcreteGroup group_;
  std::vector<Subgroup> subgroups_;
  std::unordered_map<ElementSet, std::size_t, ElementSet::Hash> index_;
  std::vector<int> log_size_;
  std::vector<std::uint32_t> join_;
};

// |Sur(A, G)| via Hom(A, G) minus the surjections onto every proper
// subgroup of G, recursing over isomorphism types of subgroups. Subgroup
// type multiplicities are memoised per target type.
class SurjectionCounter {
 public:
  explicit SurjectionCounter(std::size_t cap = kDefaultGroupCap) : cap_(cap) {}

  BigInt count(const PGroup& a, const PGroup& g) {
    require_same_prime(a, g);
    if (g.is_trivial()) return 1;
    if (a.rank() < g.rank()) return 0;
    for (std::size_t k = 1; k <= static_cast<std::size_t>(g.exponent_log()); ++k)
      if (a.parts_at_least(static_cast<int>(k)) < g.parts_at_least(static_cast<int>(k))) return 0;
    auto key = std::make_pair(a, g);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    BigInt total = count_homs(a, g);
    for (const auto& [h, mult] : proper_subgroup_types(g)) total -= count(a, h) * mult;
    memo_.emplace(std::move(key), total);
    return total;
  }

  const std::map<PGroup, std::size_t>& proper_subgroup_types(const PGroup& g) {
    if (auto it = types_.find(g); it != types_.end()) return it->second;
    ConcreteGroup cg(g, cap_);
    std::map<PGroup, std::size_t> counts;
    for (const auto& h : enumerate_subgroups(cg))
      if (!h.is_full()) ++counts[h.type()];
    return types_.emplace(g, std::move(counts)).first->second;
  }

 private:
  std::size_t cap_;
  std::map<std::pair<PGroup, PGroup>, BigInt> memo_;
  std::map<PGroup, std::map<PGroup, std::size_t>> types_;
};

inline BigInt count_surjections(const PGroup& a, const PGroup& g, std::size_t cap = kDefaultGroupCap) {
  SurjectionCounter counter(cap);
  return counter.count(a, g);
}

}  // namespace cklab
