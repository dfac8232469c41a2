#ifndef ISOLAB_NAMING_HPP
#define ISOLAB_NAMING_HPP

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <tuple>
#include <unordered_set>
#include <utility>
#include <vector>

#include "isolab/permutation.hpp"
#include "isolab/projective.hpp"

namespace isolab {

/// Isomorphism-invariant summary of a finite group.
struct GroupFingerprint {
  std::uint64_t order = 1;
  std::map<std::uint64_t, std::uint64_t> element_orders{{1, 1}};
  bool is_abelian = true;
  std::uint64_t center_order = 1;
  std::vector<std::uint64_t> abelianization;  // elementary divisors, ascending
  std::uint64_t derived_order = 1;
  bool exact = true;  // false when the histogram was sampled

  auto key() const {
    return std::tie(order, element_orders, is_abelian, center_order, abelianization, derived_order);
  }
  friend bool operator<(const GroupFingerprint& a, const GroupFingerprint& b) { return a.key() < b.key(); }
  friend bool operator==(const GroupFingerprint& a, const GroupFingerprint& b) { return a.key() == b.key(); }

  std::string to_string() const {
    std::string s = "order=" + std::to_string(order) + " hist={";
    bool first = true;
    for (auto [o, c] : element_orders) {
      s += (first ? "" : ",") + std::to_string(o) + ":" + std::to_string(c);
      first = false;
    }
    s += "} center=" + std::to_string(center_order) + " ab=[";
    for (std::size_t i = 0; i < abelianization.size(); ++i) s += (i ? "," : "") + std::to_string(abelianization[i]);
    return s + "] derived=" + std::to_string(derived_order);
  }
};

struct GroupName {
  std::string label;
  bool exact = false;
};

namespace detail {

inline Permutation perm_power(const Permutation& p, std::uint64_t e) {
  const int n = p.degree();
  std::vector<int> img(n);
  std::vector<char> seen(n, 0);
  std::vector<int> cyc;
  for (int i = 0; i < n; ++i) {
    if (seen[i]) continue;
    cyc.clear();
    for (int j = i; !seen[j]; j = p(j)) {
      seen[j] = 1;
      cyc.push_back(j);
    }
    const std::size_t len = cyc.size();
    for (std::size_t k = 0; k < len; ++k) img[cyc[k]] = cyc[(k + e % len) % len];
  }
  return Permutation(std::move(img));
}

inline std::vector<std::pair<std::uint64_t, int>> factorize(std::uint64_t n) {
  std::vector<std::pair<std::uint64_t, int>> f;
  for (std::uint64_t p = 2; p * p <= n; ++p) {
    int e = 0;
    while (n % p == 0) {
      n /= p;
      ++e;
    }
    if (e) f.emplace_back(p, e);
  }
  if (n > 1) f.emplace_back(n, 1);
  return f;
}

/// Elementary divisors of an abelian group given, for each prime p, the
/// counts N_k = #{x : x^{p^k} = 1}.
inline std::vector<std::uint64_t> elementary_divisors_from_counts(
    std::uint64_t p, const std::vector<std::uint64_t>& counts) {
  // counts[k] = p^{sum_i min(k, e_i)}; successive log ratios give #{i : e_i >= k}.
  std::vector<int> logs;
  for (auto c : counts) {
    int l = 0;
    while (c > 1) {
      c /= p;
      ++l;
    }
    logs.push_back(l);
  }
  std::vector<int> at_least;  // at_least[k-1] = #{e_i >= k}
  for (std::size_t k = 1; k < logs.size(); ++k) at_least.push_back(logs[k] - logs[k - 1]);
  std::vector<std::uint64_t> out;
  for (std::size_t k = 0; k < at_least.size(); ++k) {
    const int next = k + 1 < at_least.size() ? at_least[k + 1] : 0;
    std::uint64_t pk = 1;
    for (std::size_t t = 0; t <= k; ++t) pk *= p;
    for (int c = 0; c < at_least[k] - next; ++c) out.push_back(pk);
  }
  return out;
}

inline std::vector<Permutation> commutator_generators(const std::vector<Permutation>& gens) {
  std::vector<Permutation> out;
  for (const auto& a : gens) {
    for (const auto& b : gens) {
      Permutation c = a * b * a.inverse() * b.inverse();
      if (!c.is_identity()) out.push_back(std::move(c));
    }
  }
  return out;
}

}  // namespace detail

inline constexpr std::uint64_t kExactFingerprintCap = 100'000;

/// Computes every fingerprint field from the explicit element list.
inline GroupFingerprint fingerprint(const PermutationGroup& group) {
  GroupFingerprint fp;
  fp.order = group.order();
  fp.element_orders.clear();
  const auto gens = group.generating_set();
  const std::size_t stride = fp.order > kExactFingerprintCap ? fp.order / kExactFingerprintCap + 1 : 1;
  fp.exact = stride == 1;
  std::uint64_t sampled = 0;
  for (std::size_t i = 0; i < group.order(); i += stride) {
    ++fp.element_orders[group.elements()[i].order()];
    ++sampled;
  }
  if (!fp.exact) {
    // Scale the sampled histogram to the group order; the label carries exact=false.
    for (auto& [o, c] : fp.element_orders) c = c * fp.order / sampled;
  }

  std::uint64_t center = 0;
  for (const auto& e : group.elements()) {
    bool central = true;
    for (const auto& g : gens) {
      if (e * g != g * e) {
        central = false;
        break;
      }
    }
    center += central;
  }
  fp.center_order = center;
  fp.is_abelian = center == fp.order;
  if (!fp.exact) return fp;

  // Derived subgroup: normal closure of commutators of generators.
  std::vector<Permutation> dgens = detail::commutator_generators(gens);
  PermutationGroup derived = closure(group.degree(), dgens);
  bool grew = true;
  while (grew) {
    grew = false;
    for (const auto& g : gens) {
      const Permutation gi = g.inverse();
      for (std::size_t k = 0; k < dgens.size(); ++k) {
        Permutation c = g * dgens[k] * gi;
        if (!derived.contains(c)) {
          dgens.push_back(std::move(c));
          derived = closure(group.degree(), dgens);
          grew = true;
        }
      }
    }
  }
  fp.derived_order = derived.order();

  // Abelianization G / G' from per-prime power counts over coset representatives.
  std::vector<Permutation> reps;
  {
    std::unordered_set<Permutation, PermutationHash> covered;
    for (const auto& e : group.elements()) {
      if (covered.count(e)) continue;
      reps.push_back(e);
      for (const auto& d : derived.elements()) covered.insert(e * d);
    }
  }
  const std::uint64_t quotient = reps.size();
  fp.abelianization.clear();
  for (auto [p, e] : detail::factorize(quotient)) {
    std::vector<std::uint64_t> counts{1};
    std::uint64_t pk = 1;
    for (int k = 1; k <= e + 1; ++k) {
      pk *= p;
      std::uint64_t c = 0;
      for (const auto& r : reps) c += derived.contains(detail::perm_power(r, pk));
      counts.push_back(c);
      if (c == quotient || counts.size() > 64) break;
    }
    // counts only tracks the p-part: divide out the coprime part contribution.
    for (auto& c : counts) {
      std::uint64_t pp = 1;
      while (c % p == 0) {
        c /= p;
        pp *= p;
      }
      c = pp;
    }
    auto divs = detail::elementary_divisors_from_counts(p, counts);
    fp.abelianization.insert(fp.abelianization.end(), divs.begin(), divs.end());
  }
  std::sort(fp.abelianization.begin(), fp.abelianization.end());
  return fp;
}

/// Fingerprint of the cyclic group C_n, computed in closed form.
inline GroupFingerprint cyclic_fingerprint(std::uint64_t n) {
  GroupFingerprint fp;
  fp.order = n;
  fp.element_orders.clear();
  for (std::uint64_t d = 1; d <= n; ++d) {
    if (n % d) continue;
    std::uint64_t phi = d;
    for (auto [p, e] : detail::factorize(d)) phi = phi / p * (p - 1);
    fp.element_orders[d] = phi;
  }
  fp.is_abelian = true;
  fp.center_order = n;
  fp.derived_order = 1;
  for (auto [p, e] : detail::factorize(n)) {
    std::uint64_t pe = 1;
    for (int k = 0; k < e; ++k) pe *= p;
    fp.abelianization.push_back(pe);
  }
  std::sort(fp.abelianization.begin(), fp.abelianization.end());
  return fp;
}

/// Fingerprint of A x B from the fingerprints of A and B.
inline GroupFingerprint direct_product(const GroupFingerprint& a, const GroupFingerprint& b) {
  GroupFingerprint fp;
  fp.order = a.order * b.order;
  fp.element_orders.clear();
  for (auto [oa, ca] : a.element_orders) {
    for (auto [ob, cb] : b.element_orders) fp.element_orders[std::lcm(oa, ob)] += ca * cb;
  }
  fp.is_abelian = a.is_abelian && b.is_abelian;
  fp.center_order = a.center_order * b.center_order;
  fp.derived_order = a.derived_order * b.derived_order;
  fp.abelianization = a.abelianization;
  fp.abelianization.insert(fp.abelianization.end(), b.abelianization.begin(), b.abelianization.end());
  std::sort(fp.abelianization.begin(), fp.abelianization.end());
  fp.exact = a.exact && b.exact;
  return fp;
}

/// Dihedral group of the regular n-gon (order 2n) acting on its vertices.
inline PermutationGroup dihedral_group(int n) {
  if (n == 1) return closure(2, {Permutation::from_cycles(2, {{0, 1}})});
  if (n == 2) {
    return closure(4, {Permutation::from_cycles(4, {{0, 1}, {2, 3}}), Permutation::from_cycles(4, {{0, 2}, {1, 3}})});
  }
  std::vector<int> rot(n), ref(n);
  for (int i = 0; i < n; ++i) {
    rot[i] = (i + 1) % n;
    ref[i] = (n - i) % n;
  }
  return closure(n, {Permutation(rot), Permutation(ref)});
}

inline PermutationGroup alternating_group(int n) {
  if (n <= 2) return closure(std::max(n, 1), {});
  std::vector<Permutation> gens;
  for (int k = 2; k < n; ++k) gens.push_back(Permutation::from_cycles(n, {{0, 1, k}}));
  return closure(n, gens);
}

/// S3 wr C2 acting on 6 points: two copies of S3 swapped by (0 3)(1 4)(2 5).
inline PermutationGroup wreath_s3_c2() {
  return closure(6, {Permutation::from_cycles(6, {{0, 1}}), Permutation::from_cycles(6, {{0, 1, 2}}),
                     Permutation::from_cycles(6, {{0, 3}, {1, 4}, {2, 5}})});
}

inline PermutationGroup pgl32_point_group() {
  auto atlas = enumerate_atlas(2, 2);
  return pgl_point_group(atlas, enumerate_pgl(atlas));
}

/// Generated catalog of named small groups, keyed by fingerprint.
///
/// Each entry is described by its direct-product decomposition into
/// indecomposable factors (cyclic prime powers plus non-abelian tokens), which
/// is unique up to isomorphism. Two entries with equal decompositions are the
/// same group; equal fingerprints with different decompositions are ambiguous.
class GroupCatalog {
 public:
  struct Entry {
    std::string label;
    std::vector<std::string> factors;  // canonical sorted decomposition
    GroupFingerprint fingerprint;
  };

  static const GroupCatalog& instance() {
    static const GroupCatalog catalog;
    return catalog;
  }

  const std::vector<Entry>& entries() const { return entries_; }

  /// Catalog entries whose fingerprint equals fp.
  std::vector<const Entry*> lookup(const GroupFingerprint& fp) const {
    std::vector<const Entry*> out;
    auto it = by_fp_.find(fp);
    if (it == by_fp_.end()) return out;
    for (std::size_t i : it->second) out.push_back(&entries_[i]);
    return out;
  }

  static std::string label_for(const std::vector<std::string>& factors) {
    if (factors.empty()) return "I";
    std::map<std::uint64_t, std::vector<int>> pexp;  // prime -> exponents
    std::vector<std::string> nonab;
    for (const auto& f : factors) {
      if (f.size() > 1 && f[0] == 'C' && std::all_of(f.begin() + 1, f.end(), ::isdigit)) {
        std::uint64_t n = std::stoull(f.substr(1));
        auto fac = detail::factorize(n);
        pexp[fac[0].first].push_back(fac[0].second);
      } else {
        nonab.push_back(f);
      }
    }
    // A single C2 next to an odd dihedral group is itself dihedral: C2 x D_m = D_2m.
    if (nonab.size() == 1 && pexp.size() == 1 && pexp.begin()->first == 2 && pexp.begin()->second == std::vector<int>{1}) {
      const std::string& d = nonab.front();
      if (d == "S3") return "D6";
      if (d[0] == 'D') {
        int m = std::stoi(d.substr(1));
        if (m % 2 == 1) return "D" + std::to_string(2 * m);
      }
    }
    std::vector<std::uint64_t> invariants;
    for (auto& [p, es] : pexp) {
      std::sort(es.rbegin(), es.rend());
      if (invariants.size() < es.size()) invariants.resize(es.size(), 1);
      for (std::size_t i = 0; i < es.size(); ++i) {
        for (int k = 0; k < es[i]; ++k) invariants[i] *= p;
      }
    }
    std::sort(invariants.begin(), invariants.end());
    std::vector<std::string> parts;
    for (std::size_t i = 0; i < invariants.size();) {
      std::size_t j = i;
      while (j < invariants.size() && invariants[j] == invariants[i]) ++j;
      std::string s = "C" + std::to_string(invariants[i]);
      if (j - i > 1) s += "^" + std::to_string(j - i);
      parts.push_back(s);
      i = j;
    }
    std::sort(nonab.begin(), nonab.end(), factor_less);
    parts.insert(parts.end(), nonab.begin(), nonab.end());
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? " x " : "") + parts[i];
    return out;
  }

 private:
  static bool factor_less(const std::string& a, const std::string& b) {
    auto split = [](const std::string& s) {
      std::size_t k = 0;
      while (k < s.size() && !::isdigit(static_cast<unsigned char>(s[k]))) ++k;
      int num = 0;
      std::size_t j = k;
      while (j < s.size() && ::isdigit(static_cast<unsigned char>(s[j]))) num = num * 10 + (s[j++] - '0');
      return std::make_tuple(s.substr(0, k), num, s.substr(j));
    };
    return split(a) < split(b);
  }

  static std::vector<std::string> cyclic_factors(std::uint64_t n) {
    std::vector<std::string> out;
    for (auto [p, e] : detail::factorize(n)) {
      std::uint64_t pe = 1;
      for (int k = 0; k < e; ++k) pe *= p;
      out.push_back("C" + std::to_string(pe));
    }
    return out;
  }

  static std::vector<std::string> dihedral_factors(int n) {
    if (n == 1) return {"C2"};
    if (n == 2) return {"C2", "C2"};
    if (n == 3) return {"S3"};
    if (n % 4 == 2) {
      auto inner = dihedral_factors(n / 2);
      inner.push_back("C2");
      return inner;
    }
    return {"D" + std::to_string(n)};
  }

  GroupFingerprint factor_fingerprint(const std::string& token) {
    auto it = token_fp_.find(token);
    if (it != token_fp_.end()) return it->second;
    GroupFingerprint fp;
    if (token[0] == 'C') {
      fp = cyclic_fingerprint(std::stoull(token.substr(1)));
    } else if (token[0] == 'S' && token.size() <= 2) {
      fp = fingerprint(symmetric_group(std::stoi(token.substr(1))));
    } else if (token[0] == 'A') {
      fp = fingerprint(alternating_group(std::stoi(token.substr(1))));
    } else if (token[0] == 'D') {
      fp = fingerprint(dihedral_group(std::stoi(token.substr(1))));
    } else if (token == "S3 wr C2") {
      fp = fingerprint(wreath_s3_c2());
    } else if (token == "PGL(3,2)") {
      fp = fingerprint(pgl32_point_group());
    } else {
      throw InvalidArgument("unknown catalog token " + token);
    }
    token_fp_.emplace(token, fp);
    return fp;
  }

  void add(std::vector<std::string> factors, const std::string& forced_label = "") {
    std::sort(factors.begin(), factors.end());
    if (!seen_.insert(factors).second) return;
    GroupFingerprint fp = cyclic_fingerprint(1);
    for (const auto& f : factors) fp = direct_product(fp, factor_fingerprint(f));
    Entry e{forced_label.empty() ? label_for(factors) : forced_label, factors, fp};
    by_fp_[fp].push_back(entries_.size());
    entries_.push_back(std::move(e));
  }

  GroupCatalog() {
    for (std::uint64_t n = 1; n <= 5040; ++n) add(cyclic_factors(n));
    for (int n = 1; n <= 20; ++n) add(dihedral_factors(n));
    for (int n = 1; n <= 7; ++n) {
      if (n <= 2) {
        add(n == 2 ? std::vector<std::string>{"C2"} : std::vector<std::string>{});
        continue;
      }
      add({"S" + std::to_string(n)});
    }
    for (int n = 3; n <= 7; ++n) add(n == 3 ? std::vector<std::string>{"C3"} : std::vector<std::string>{"A" + std::to_string(n)});
    const std::vector<std::vector<std::string>> base = {
        {"C2"}, {"C2", "C2"}, {"C2", "C2", "C2"}, {"C3"}, {"C4"}, {"S3"},
        {"S4"}, {"S5"}, {"D4"}, dihedral_factors(6), {"D7"}};
    for (std::size_t i = 0; i < base.size(); ++i) {
      for (std::size_t j = i; j < base.size(); ++j) {
        auto two = base[i];
        two.insert(two.end(), base[j].begin(), base[j].end());
        add(two);
        for (std::size_t k = j; k < base.size(); ++k) {
          auto three = two;
          three.insert(three.end(), base[k].begin(), base[k].end());
          add(three);
        }
      }
    }
    add({"S3 wr C2"}, "S3 wr C2");
    add({"PGL(3,2)"}, "PGL(3,2)");
  }

  std::vector<Entry> entries_;
  std::map<GroupFingerprint, std::vector<std::size_t>> by_fp_;
  std::map<std::string, GroupFingerprint> token_fp_;
  std::set<std::vector<std::string>> seen_;
};

/// Names a group by fingerprint. Unmatched or ambiguous fingerprints are
/// reported verbatim with exact=false; the function never guesses.
inline GroupName name_group(const GroupFingerprint& fp) {
  if (fp.order == 1) return {"I", true};
  if (fp.exact) {
    auto hits = GroupCatalog::instance().lookup(fp);
    if (hits.size() == 1) return {hits.front()->label, true};
  }
  return {"?" + fp.to_string(), false};
}

/// Names a concrete group; a full symmetric group of degree >= 3 is
/// recognized from its order without fingerprinting.
inline GroupName name_group(const PermutationGroup& group) {
  const int n = group.degree();
  if (n >= 3 && n <= 20) {
    std::uint64_t fact = 1;
    for (int k = 2; k <= n; ++k) fact *= k;
    if (group.order() == fact) return {"S" + std::to_string(n), true};
  }
  return name_group(fingerprint(group));
}

}  // namespace isolab

#endif  // ISOLAB_NAMING_HPP
