#pragma once

// Slow, direct implementations used as references. Nothing here calls the
// library's algorithms; elements are plain coordinate vectors.

#include <cklab/core.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <utility>
#include <vector>

namespace oracle {

using Elem = std::vector<long>;
using ElemSet = std::set<Elem>;

struct Group {
  std::vector<long> mod;  // Z/mod[0] x Z/mod[1] x ...

  Group(long p, const std::vector<int>& parts) {
    for (int a : parts) {
      long m = 1;
      for (int i = 0; i < a; ++i) m *= p;
      mod.push_back(m);
    }
  }
  explicit Group(std::vector<long> moduli) : mod(std::move(moduli)) {}

  long order() const {
    long s = 1;
    for (long m : mod) s *= m;
    return s;
  }
  Elem zero() const { return Elem(mod.size(), 0); }
  Elem add(const Elem& a, const Elem& b) const {
    Elem r(mod.size());
    for (std::size_t i = 0; i < mod.size(); ++i) r[i] = (a[i] + b[i]) % mod[i];
    return r;
  }
  Elem mul(const Elem& a, long k) const {
    Elem r(mod.size());
    for (std::size_t i = 0; i < mod.size(); ++i) r[i] = (a[i] * (k % mod[i])) % mod[i];
    return r;
  }
  std::vector<Elem> elements() const {
    std::vector<Elem> out{zero()};
    for (std::size_t i = 0; i < mod.size(); ++i) {
      std::vector<Elem> next;
      for (const auto& e : out)
        for (long v = 0; v < mod[i]; ++v) {
          auto f = e;
          f[i] = v;
          next.push_back(f);
        }
      out = std::move(next);
    }
    return out;
  }
};

// Smallest subgroup containing gens, by repeated addition.
inline ElemSet closure(const Group& g, const std::vector<Elem>& gens) {
  ElemSet s{g.zero()};
  std::vector<Elem> frontier{g.zero()};
  while (!frontier.empty()) {
    std::vector<Elem> next;
    for (const auto& x : frontier)
      for (const auto& y : gens) {
        auto z = g.add(x, y);
        if (s.insert(z).second) next.push_back(z);
      }
    frontier = std::move(next);
  }
  return s;
}

inline bool is_closed(const Group& g, const ElemSet& s) {
  if (!s.count(g.zero())) return false;
  for (const auto& a : s)
    for (const auto& b : s)
      if (!s.count(g.add(a, b))) return false;
  return true;
}

// Every subset of the group tested for closure; only for |G| <= 16.
inline std::set<ElemSet> subgroups_by_subsets(const Group& g) {
  const auto els = g.elements();
  std::set<ElemSet> out;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << els.size()); ++mask) {
    ElemSet s;
    for (std::size_t i = 0; i < els.size(); ++i)
      if ((mask >> i) & 1u) s.insert(els[i]);
    if (is_closed(g, s)) out.insert(s);
  }
  return out;
}

// Subgroups generated by tuples of at most `gens` elements.
inline std::set<ElemSet> subgroups_by_generators(const Group& g, std::size_t gens) {
  const auto els = g.elements();
  std::set<ElemSet> out;
  std::vector<Elem> cur;
  std::function<void(std::size_t)> rec = [&](std::size_t from) {
    out.insert(closure(g, cur));
    if (cur.size() == gens) return;
    for (std::size_t i = from; i < els.size(); ++i) {
      cur.push_back(els[i]);
      rec(i);
      cur.pop_back();
    }
  };
  rec(0);
  return out;
}

inline ElemSet intersect(const ElemSet& a, const ElemSet& b) {
  ElemSet r;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::inserter(r, r.begin()));
  return r;
}

// Homomorphisms from Z/p^a1 x ... to g: images of the standard generators
// with p^ai * image = 0.
inline void for_each_hom(long p, const std::vector<int>& source, const Group& g,
                         const std::function<void(const std::vector<Elem>&)>& visit) {
  const auto els = g.elements();
  std::vector<std::vector<Elem>> allowed;
  for (int a : source) {
    long pa = 1;
    for (int i = 0; i < a; ++i) pa *= p;
    std::vector<Elem> ok;
    for (const auto& x : els)
      if (g.mul(x, pa) == g.zero()) ok.push_back(x);
    allowed.push_back(ok);
  }
  std::vector<Elem> cur;
  std::function<void(std::size_t)> rec = [&](std::size_t i) {
    if (i == source.size()) {
      visit(cur);
      return;
    }
    for (const auto& x : allowed[i]) {
      cur.push_back(x);
      rec(i + 1);
      cur.pop_back();
    }
  };
  rec(0);
}

inline long count_homs(long p, const std::vector<int>& a, const std::vector<int>& gparts) {
  long c = 0;
  for_each_hom(p, a, Group(p, gparts), [&](const std::vector<Elem>&) { ++c; });
  return c;
}

inline long count_surjections(long p, const std::vector<int>& a, const std::vector<int>& gparts) {
  const Group g(p, gparts);
  long c = 0;
  for_each_hom(p, a, g, [&](const std::vector<Elem>& imgs) {
    if (static_cast<long>(closure(g, imgs).size()) == g.order()) ++c;
  });
  return c;
}

// Endomorphisms that are bijective.
inline long count_automorphisms(long p, const std::vector<int>& parts) { return count_surjections(p, parts, parts); }

// E_n(G) = sum over surjective F = (F(v_1..v_n)) of 1 / prod_j |<F(v_i) : i in sigma_j>|.
inline cklab::Rational moment(long p, const std::vector<int>& gparts, std::size_t n,
                              const std::vector<std::vector<std::size_t>>& supports) {
  const Group g(p, gparts);
  const auto els = g.elements();
  cklab::Rational total = 0;
  std::vector<std::size_t> idx(n, 0);
  while (true) {
    std::vector<Elem> imgs;
    for (auto i : idx) imgs.push_back(els[i]);
    if (static_cast<long>(closure(g, imgs).size()) == g.order()) {
      cklab::BigInt den = 1;
      for (const auto& s : supports) {
        std::vector<Elem> gens;
        for (auto r : s) gens.push_back(imgs[r]);
        den *= static_cast<long>(closure(g, gens).size());
      }
      total += cklab::Rational(cklab::BigInt(1), den);
    }
    std::size_t k = 0;
    while (k < n && ++idx[k] == els.size()) idx[k++] = 0;
    if (k == n) break;
  }
  return total;
}

// Cokernel of an n x m matrix over Z/p^e (columns span the image), as parts
// min(lambda_i, e) listed in descending order.
inline std::vector<int> cokernel_parts(long p, int e, std::size_t rows, std::size_t cols, const std::vector<long>& entries) {
  long q = 1;
  for (int i = 0; i < e; ++i) q *= p;
  const Group g(std::vector<long>(rows, q));
  std::vector<Elem> gens;
  for (std::size_t j = 0; j < cols; ++j) {
    Elem c(rows);
    for (std::size_t i = 0; i < rows; ++i) c[i] = ((entries[i * cols + j] % q) + q) % q;
    gens.push_back(c);
  }
  const auto im = closure(g, gens);
  // log_p |cok[p^k]| for k = 0..e
  std::vector<int> logs;
  const auto els = g.elements();
  long pk = 1;
  for (int k = 0; k <= e; ++k) {
    long killed = 0;
    for (const auto& x : els)
      if (im.count(g.mul(x, pk))) ++killed;
    const long sz = killed / static_cast<long>(im.size());
    int l = 0;
    for (long v = sz; v > 1; v /= p) ++l;
    logs.push_back(l);
    pk *= p;
  }
  std::vector<int> parts;
  for (int k = e; k >= 1; --k) {
    const int at_least_k = logs[static_cast<std::size_t>(k)] - logs[static_cast<std::size_t>(k - 1)];
    const int at_least_next = k < e ? logs[static_cast<std::size_t>(k + 1)] - logs[static_cast<std::size_t>(k)] : 0;
    for (int i = 0; i < at_least_k - at_least_next; ++i) parts.push_back(k);
  }
  return parts;
}

// c(G) by recursion over subsets of A, read straight off the edge list.
inline cklab::Rational c_functional(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges, long p) {
  std::vector<std::set<std::size_t>> nb(n);
  for (const auto& [a, b] : edges) nb[a].insert(b);
  cklab::Rational total = 0;
  std::vector<bool> in(n, false);
  std::function<void(std::size_t)> rec = [&](std::size_t i) {
    if (i < n) {
      in[i] = false;
      rec(i + 1);
      in[i] = true;
      rec(i + 1);
      in[i] = false;
      return;
    }
    std::size_t s = 0;
    std::set<std::size_t> ns;
    for (std::size_t a = 0; a < n; ++a)
      if (in[a]) {
        ++s;
        ns.insert(nb[a].begin(), nb[a].end());
      }
    if (s == 0 || s == n || ns.size() == n) return;
    for (std::size_t w = 0; w < n; ++w)
      if (!in[w] && std::includes(ns.begin(), ns.end(), nb[w].begin(), nb[w].end())) return;
    total += cklab::rational_pow(static_cast<std::uint64_t>(p), static_cast<long>(s) - static_cast<long>(ns.size()));
  };
  rec(0);
  return total;
}

// P(at least m successes), summed over all subsets.
inline double f_tail(const std::vector<double>& xs, std::size_t m) {
  const std::size_t n = xs.size();
  double total = 0;
  for (std::uint64_t s = 0; s < (std::uint64_t{1} << n); ++s) {
    if (static_cast<std::size_t>(__builtin_popcountll(s)) < m) continue;
    double pr = 1;
    for (std::size_t i = 0; i < n; ++i) pr *= ((s >> i) & 1u) ? xs[i] : 1 - xs[i];
    total += pr;
  }
  return total;
}

// prod_{i>=1} (1 - p^{-i-t}) with 400 factors.
inline long double euler(long p, int t) {
  long double r = 1;
  for (int i = 1; i <= 400; ++i) r *= 1 - std::pow(static_cast<long double>(p), -static_cast<long double>(i + t));
  return r;
}

// Limit corank law, read off the exact corank distribution of a large square matrix:
// #{rank r} = prod_{i<r} (p^N - p^i)^2 / (p^r - p^i).
inline long double corank_prob(long p, int N, int m) {
  const long double q = static_cast<long double>(p);
  const int r = N - m;
  long double logc = 0;  // log of count / p^{N^2}
  for (int i = 0; i < r; ++i) {
    logc += 2 * std::log1p(-std::pow(q, static_cast<long double>(i - N)));
    logc -= std::log(std::pow(q, static_cast<long double>(r)) - std::pow(q, static_cast<long double>(i)));
  }
  logc += static_cast<long double>(2 * N * r - N * N) * std::log(q);
  return std::exp(logc);
}

}  // namespace oracle
