#ifndef ISOLAB_PERMUTATION_HPP
#define ISOLAB_PERMUTATION_HPP

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "isolab/error.hpp"

namespace isolab {

/// Bijection of {0, ..., N-1}; images[i] is the image of i.
class Permutation {
 public:
  Permutation() = default;

  explicit Permutation(std::vector<int> images) : images_(std::move(images)) {
    std::vector<char> seen(images_.size(), 0);
    for (int v : images_) {
      if (v < 0 || v >= static_cast<int>(images_.size()) || seen[v]) {
        throw InvalidArgument("permutation images are not a bijection");
      }
      seen[v] = 1;
    }
  }

  static Permutation identity(int degree) {
    Permutation p;
    p.images_.resize(degree);
    std::iota(p.images_.begin(), p.images_.end(), 0);
    return p;
  }

  /// Builds a permutation from disjoint cycles, e.g. {{0, 1}, {2, 3, 4}}.
  static Permutation from_cycles(int degree, const std::vector<std::vector<int>>& cycles) {
    std::vector<int> img(degree);
    std::iota(img.begin(), img.end(), 0);
    for (const auto& c : cycles) {
      for (std::size_t k = 0; k < c.size(); ++k) img.at(c[k]) = c[(k + 1) % c.size()];
    }
    return Permutation(std::move(img));
  }

  int degree() const { return static_cast<int>(images_.size()); }
  int operator()(int i) const { return images_[i]; }
  const std::vector<int>& images() const { return images_; }

  /// Composition (a * b)(i) = a(b(i)).
  friend Permutation operator*(const Permutation& a, const Permutation& b) {
    Permutation r;
    r.images_.resize(b.images_.size());
    for (std::size_t i = 0; i < b.images_.size(); ++i) r.images_[i] = a.images_[b.images_[i]];
    return r;
  }

  Permutation inverse() const {
    Permutation r;
    r.images_.resize(images_.size());
    for (std::size_t i = 0; i < images_.size(); ++i) r.images_[images_[i]] = static_cast<int>(i);
    return r;
  }

  bool is_identity() const {
    for (std::size_t i = 0; i < images_.size(); ++i) {
      if (images_[i] != static_cast<int>(i)) return false;
    }
    return true;
  }

  /// Order as the lcm of cycle lengths.
  std::uint64_t order() const {
    std::vector<char> seen(images_.size(), 0);
    std::uint64_t l = 1;
    for (std::size_t i = 0; i < images_.size(); ++i) {
      if (seen[i]) continue;
      std::uint64_t len = 0;
      for (std::size_t j = i; !seen[j]; j = images_[j]) {
        seen[j] = 1;
        ++len;
      }
      l = std::lcm(l, len);
    }
    return l;
  }

  std::string to_string() const {
    std::string s = "[";
    for (std::size_t i = 0; i < images_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(images_[i]);
    }
    return s + "]";
  }

  friend bool operator==(const Permutation&, const Permutation&) = default;
  friend auto operator<=>(const Permutation&, const Permutation&) = default;

 private:
  std::vector<int> images_;
};

struct PermutationHash {
  std::size_t operator()(const Permutation& p) const noexcept {
    std::uint64_t h = 1469598103934665603ull;
    for (int v : p.images()) {
      h ^= static_cast<std::uint64_t>(v) + 0x9e3779b97f4a7c15ull;
      h *= 1099511628211ull;
    }
    return static_cast<std::size_t>(h);
  }
};

inline constexpr std::size_t kDefaultClosureCap = 10'000'000;

/// Finite permutation group held as an explicit, duplicate-free element list.
class PermutationGroup {
 public:
  PermutationGroup() = default;

  /// Wraps an element list known to be a group. Use `closure` or
  /// `subgroup_test` when that is not already established.
  PermutationGroup(int degree, std::vector<Permutation> elements, std::vector<Permutation> generators = {})
      : degree_(degree), elements_(std::move(elements)), generators_(std::move(generators)) {
    for (std::size_t i = 0; i < elements_.size(); ++i) {
      if (elements_[i].degree() != degree_) throw InvalidArgument("element degree mismatch");
      index_.emplace(elements_[i], i);
    }
    if (index_.size() != elements_.size()) throw InvalidArgument("duplicate group elements");
  }

  int degree() const { return degree_; }
  std::size_t order() const { return elements_.size(); }
  const std::vector<Permutation>& elements() const { return elements_; }
  const std::vector<Permutation>& generators() const { return generators_; }
  bool contains(const Permutation& p) const { return index_.count(p) != 0; }
  std::size_t index_of(const Permutation& p) const { return index_.at(p); }

  /// Generating set, computed greedily from the element list when none was
  /// supplied. At most log2(order) elements.
  std::vector<Permutation> generating_set() const;

 private:
  int degree_ = 0;
  std::vector<Permutation> elements_;
  std::vector<Permutation> generators_;
  std::unordered_map<Permutation, std::size_t, PermutationHash> index_;
};

/// Smallest group containing the generators, elements in breadth-first order
/// from the identity.
inline PermutationGroup closure(int degree, const std::vector<Permutation>& generators,
                                std::size_t cap = kDefaultClosureCap) {
  for (const auto& g : generators) {
    if (g.degree() != degree) throw InvalidArgument("generator degree mismatch");
  }
  std::vector<Permutation> elems{Permutation::identity(degree)};
  std::unordered_set<Permutation, PermutationHash> seen{elems.front()};
  for (std::size_t head = 0; head < elems.size(); ++head) {
    for (const auto& g : generators) {
      Permutation p = g * elems[head];
      if (seen.insert(p).second) {
        if (elems.size() >= cap) throw CapExceeded("group closure exceeds cap of " + std::to_string(cap));
        elems.push_back(std::move(p));
      }
    }
  }
  return PermutationGroup(degree, std::move(elems), generators);
}

inline std::vector<Permutation> PermutationGroup::generating_set() const {
  if (!generators_.empty() || elements_.size() <= 1) return generators_;
  std::vector<Permutation> gens;
  std::unordered_set<Permutation, PermutationHash> span{Permutation::identity(degree_)};
  std::vector<Permutation> span_list{Permutation::identity(degree_)};
  for (const auto& e : elements_) {
    if (span.count(e)) continue;
    gens.push_back(e);
    // Extend the current subgroup to the one generated by gens.
    for (std::size_t head = 0; head < span_list.size(); ++head) {
      for (const auto& g : gens) {
        Permutation p = g * span_list[head];
        if (span.insert(p).second) span_list.push_back(std::move(p));
      }
    }
    if (span_list.size() == elements_.size()) break;
  }
  return gens;
}

/// True iff `candidate` contains the identity, is closed under composition and
/// lies inside `group`.
inline bool subgroup_test(std::span<const Permutation> candidate, const PermutationGroup& group) {
  if (candidate.empty()) return false;
  std::unordered_set<Permutation, PermutationHash> set;
  bool has_identity = false;
  for (const auto& p : candidate) {
    if (p.degree() != group.degree() || !group.contains(p)) return false;
    has_identity = has_identity || p.is_identity();
    set.insert(p);
  }
  if (!has_identity) return false;
  for (const auto& a : set) {
    for (const auto& b : set) {
      if (!set.count(a * b)) return false;
    }
  }
  return true;
}

/// Closure test against the full symmetric group of the elements' degree.
inline bool is_group(std::span<const Permutation> candidate) {
  if (candidate.empty()) return false;
  std::unordered_set<Permutation, PermutationHash> set(candidate.begin(), candidate.end());
  if (!set.count(Permutation::identity(candidate.front().degree()))) return false;
  for (const auto& a : set) {
    for (const auto& b : set) {
      if (!set.count(a * b)) return false;
    }
  }
  return true;
}

inline PermutationGroup symmetric_group(int degree) {
  if (degree <= 1) return closure(std::max(degree, 0), {});
  std::vector<Permutation> gens{Permutation::from_cycles(degree, {{0, 1}})};
  if (degree > 2) {
    std::vector<int> cyc(degree);
    std::iota(cyc.begin(), cyc.end(), 0);
    gens.push_back(Permutation::from_cycles(degree, {cyc}));
  }
  return closure(degree, gens);
}

/// Subgroup of `group` fixing `point`.
inline PermutationGroup point_stabilizer(const PermutationGroup& group, int point) {
  std::vector<Permutation> keep;
  for (const auto& p : group.elements()) {
    if (p(point) == point) keep.push_back(p);
  }
  return PermutationGroup(group.degree(), std::move(keep));
}

inline constexpr int kMaxAutomorphismVertices = 10;

/// Automorphisms of an undirected simple graph by backtracking over vertex
/// images with adjacency checks against already-assigned vertices.
inline PermutationGroup graph_automorphisms(int vertices, const std::vector<std::pair<int, int>>& edges) {
  if (vertices > kMaxAutomorphismVertices) {
    throw CapExceeded("graph automorphism search supports at most " +
                      std::to_string(kMaxAutomorphismVertices) + " vertices");
  }
  if (vertices < 0) throw InvalidArgument("negative vertex count");
  std::vector<std::vector<char>> adj(vertices, std::vector<char>(vertices, 0));
  for (auto [a, b] : edges) {
    if (a < 0 || b < 0 || a >= vertices || b >= vertices) throw InvalidArgument("edge endpoint out of range");
    adj[a][b] = adj[b][a] = 1;
  }
  std::vector<int> deg(vertices, 0);
  for (int i = 0; i < vertices; ++i) {
    for (int j = 0; j < vertices; ++j) deg[i] += adj[i][j];
  }
  std::vector<Permutation> found;
  std::vector<int> img(vertices, -1);
  std::vector<char> used(vertices, 0);
  auto rec = [&](auto&& self, int k) -> void {
    if (k == vertices) {
      found.emplace_back(img);
      return;
    }
    for (int c = 0; c < vertices; ++c) {
      if (used[c] || deg[c] != deg[k]) continue;
      bool ok = adj[k][k] == adj[c][c];
      for (int j = 0; j < k && ok; ++j) ok = adj[k][j] == adj[c][img[j]];
      if (!ok) continue;
      img[k] = c;
      used[c] = 1;
      self(self, k + 1);
      used[c] = 0;
    }
    img[k] = -1;
  };
  rec(rec, 0);
  return PermutationGroup(vertices, std::move(found));
}

}  // namespace isolab

#endif  // ISOLAB_PERMUTATION_HPP
