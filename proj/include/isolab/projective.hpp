#ifndef ISOLAB_PROJECTIVE_HPP
#define ISOLAB_PROJECTIVE_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "isolab/error.hpp"
#include "isolab/permutation.hpp"

namespace isolab {

/// Arithmetic modulo a prime q. Elements are ints in [0, q).
class PrimeField {
 public:
  explicit PrimeField(int q) : q_(q) {
    if (q < 2) throw InvalidArgument("field modulus must be >= 2, got " + std::to_string(q));
    for (int d = 2; static_cast<long long>(d) * d <= q; ++d) {
      if (q % d == 0) throw InvalidArgument("field modulus " + std::to_string(q) + " is not prime");
    }
  }

  int q() const { return q_; }
  int reduce(long long a) const {
    long long r = a % q_;
    return static_cast<int>(r < 0 ? r + q_ : r);
  }
  int add(int a, int b) const { return reduce(static_cast<long long>(a) + b); }
  int sub(int a, int b) const { return reduce(static_cast<long long>(a) - b); }
  int neg(int a) const { return reduce(-static_cast<long long>(a)); }
  int mul(int a, int b) const { return reduce(static_cast<long long>(a) * b); }
  int pow(int a, long long e) const {
    long long r = 1, b = reduce(a);
    while (e > 0) {
      if (e & 1) r = r * b % q_;
      b = b * b % q_;
      e >>= 1;
    }
    return static_cast<int>(r);
  }
  int inv(int a) const {
    if (reduce(a) == 0) throw InvalidArgument("inverse of zero in F_" + std::to_string(q_));
    return pow(a, q_ - 2);
  }

  friend bool operator==(const PrimeField&, const PrimeField&) = default;

 private:
  int q_;
};

/// Scales a nonzero vector so its first nonzero coordinate is 1.
inline std::vector<int> normalize_projective(const PrimeField& F, std::vector<int> coords) {
  std::size_t k = 0;
  while (k < coords.size() && F.reduce(coords[k]) == 0) ++k;
  if (k == coords.size()) throw InvalidArgument("the zero vector is not a projective point");
  int s = F.inv(F.reduce(coords[k]));
  for (auto& c : coords) c = F.mul(F.reduce(c), s);
  return coords;
}

/// A point [x_0 : ... : x_n] held by its canonical representative.
struct ProjectivePoint {
  std::vector<int> coords;

  static ProjectivePoint from(const PrimeField& F, std::vector<int> v) {
    return ProjectivePoint{normalize_projective(F, std::move(v))};
  }
  friend bool operator==(const ProjectivePoint&, const ProjectivePoint&) = default;
};

inline constexpr std::size_t kDefaultAtlasCap = 1'000'000;
inline constexpr std::size_t kDefaultGroupCap = 10'000'000;

/// |P^n(F_q)| = (q^{n+1} - 1)/(q - 1); throws on overflow.
inline std::uint64_t projective_size(int n, int q) {
  std::uint64_t total = 0, pw = 1;
  for (int k = 0; k <= n; ++k) {
    if (k > 0) {
      if (pw > std::numeric_limits<std::uint64_t>::max() / q) throw CapExceeded("projective size overflow");
      pw *= q;
    }
    total += pw;
  }
  return total;
}

/// |PGL(n+1, F_q)| = prod_{k=0}^{n} (q^{n+1} - q^k) / (q - 1), or 0 on overflow.
inline std::uint64_t pgl_order(int n, int q) {
  const int dim = n + 1;
  unsigned __int128 qn = 1;
  for (int k = 0; k < dim; ++k) qn *= q;
  unsigned __int128 prod = 1, qk = 1;
  for (int k = 0; k < dim; ++k) {
    prod *= (qn - qk);
    qk *= q;
    if (prod > static_cast<unsigned __int128>(std::numeric_limits<std::uint64_t>::max()) * (q - 1)) return 0;
  }
  return static_cast<std::uint64_t>(prod / (q - 1));
}

/// All points of P^n(F_q) in lexicographic order of canonical coordinates.
class ProjectiveAtlas {
 public:
  ProjectiveAtlas(int n, PrimeField field, std::size_t cap = kDefaultAtlasCap) : n_(n), field_(field) {
    if (n < 0) throw InvalidArgument("projective dimension must be >= 0");
    const std::uint64_t count = projective_size(n, field.q());
    if (count > cap) {
      throw CapExceeded("P^" + std::to_string(n) + "(F_" + std::to_string(field.q()) + ") has " +
                        std::to_string(count) + " points, above cap " + std::to_string(cap));
    }
    std::size_t codes = 1;
    for (int k = 0; k <= n; ++k) codes *= field.q();
    code_index_.assign(codes, -1);
    for (std::size_t code = 1; code < codes; ++code) {
      std::vector<int> c = decode(code);
      std::size_t k = 0;
      while (c[k] == 0) ++k;
      if (c[k] != 1) continue;
      code_index_[code] = static_cast<int>(points_.size());
      points_.push_back(std::move(c));
    }
  }

  int dimension() const { return n_; }
  const PrimeField& field() const { return field_; }
  std::size_t size() const { return points_.size(); }
  const std::vector<int>& point(std::size_t i) const { return points_[i]; }
  const std::vector<std::vector<int>>& points() const { return points_; }

  /// Atlas index of the projective class of a nonzero vector.
  int index_of(std::span<const int> v) const {
    if (static_cast<int>(v.size()) != n_ + 1) throw InvalidArgument("coordinate count mismatch");
    std::size_t k = 0;
    while (k < v.size() && field_.reduce(v[k]) == 0) ++k;
    if (k == v.size()) throw InvalidArgument("the zero vector is not a projective point");
    const int s = field_.inv(field_.reduce(v[k]));
    std::size_t code = 0;
    for (int c : v) code = code * field_.q() + field_.mul(field_.reduce(c), s);
    return code_index_[code];
  }

 private:
  std::vector<int> decode(std::size_t code) const {
    std::vector<int> c(n_ + 1);
    for (int i = n_; i >= 0; --i) {
      c[i] = static_cast<int>(code % field_.q());
      code /= field_.q();
    }
    return c;
  }

  int n_;
  PrimeField field_;
  std::vector<std::vector<int>> points_;
  std::vector<int> code_index_;
};

inline ProjectiveAtlas enumerate_atlas(int n, int q, std::size_t cap = kDefaultAtlasCap) {
  if (n < 1) throw InvalidArgument("projective dimension must be >= 1");
  return ProjectiveAtlas(n, PrimeField(q), cap);
}

/// Element of PGL(n+1, F_q): scalar-normalized matrix plus its point action.
struct PGLElement {
  std::vector<int> matrix;      // row-major (n+1)x(n+1), first nonzero entry 1
  std::vector<int> point_perm;  // point_perm[p] = index of g . point(p)

  Permutation permutation() const { return Permutation(point_perm); }
};

namespace detail {

inline int det_mod(const PrimeField& F, std::vector<int> m, int dim) {
  int det = 1;
  for (int c = 0; c < dim; ++c) {
    int piv = -1;
    for (int r = c; r < dim; ++r) {
      if (m[r * dim + c] != 0) {
        piv = r;
        break;
      }
    }
    if (piv < 0) return 0;
    if (piv != c) {
      for (int k = 0; k < dim; ++k) std::swap(m[piv * dim + k], m[c * dim + k]);
      det = F.neg(det);
    }
    det = F.mul(det, m[c * dim + c]);
    const int inv = F.inv(m[c * dim + c]);
    for (int r = c + 1; r < dim; ++r) {
      const int f = F.mul(m[r * dim + c], inv);
      if (f == 0) continue;
      for (int k = c; k < dim; ++k) m[r * dim + k] = F.sub(m[r * dim + k], F.mul(f, m[c * dim + k]));
    }
  }
  return det;
}

inline std::vector<int> apply_matrix(const PrimeField& F, const std::vector<int>& m, const std::vector<int>& x) {
  const int dim = static_cast<int>(x.size());
  std::vector<int> y(dim, 0);
  for (int r = 0; r < dim; ++r) {
    long long acc = 0;
    for (int k = 0; k < dim; ++k) acc += static_cast<long long>(m[r * dim + k]) * x[k];
    y[r] = F.reduce(acc);
  }
  return y;
}

}  // namespace detail

/// Point permutation induced by a matrix on the atlas.
inline std::vector<int> induced_point_perm(const ProjectiveAtlas& atlas, const std::vector<int>& matrix) {
  std::vector<int> perm(atlas.size());
  for (std::size_t p = 0; p < atlas.size(); ++p) {
    perm[p] = atlas.index_of(detail::apply_matrix(atlas.field(), matrix, atlas.point(p)));
  }
  return perm;
}

/// Matrix product a*b, scalar-normalized.
inline std::vector<int> pgl_multiply(const PrimeField& F, const std::vector<int>& a, const std::vector<int>& b,
                                     int dim) {
  std::vector<int> c(static_cast<std::size_t>(dim) * dim, 0);
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) {
      long long acc = 0;
      for (int k = 0; k < dim; ++k) acc += static_cast<long long>(a[i * dim + k]) * b[k * dim + j];
      c[i * dim + j] = F.reduce(acc);
    }
  }
  return normalize_projective(F, std::move(c));
}

/// Visits every canonical invertible matrix in lexicographic order of the
/// flattened entries. The callback receives the matrix only; the point action
/// is computed by `enumerate_pgl`.
inline std::uint64_t for_each_pgl_matrix(int n, const PrimeField& F,
                                         const std::function<void(const std::vector<int>&)>& visit,
                                         std::size_t cap = kDefaultGroupCap) {
  const int dim = n + 1;
  const std::uint64_t expected = pgl_order(n, F.q());
  if (expected == 0 || expected > cap) {
    throw CapExceeded("PGL(" + std::to_string(dim) + "," + std::to_string(F.q()) + ") order exceeds cap " +
                      std::to_string(cap));
  }
  const int entries = dim * dim;
  std::vector<int> m(entries, 0);
  std::uint64_t count = 0;
  // Odometer over all entry tuples; the least significant digit is the last entry.
  while (true) {
    int k = entries - 1;
    while (k >= 0 && m[k] == F.q() - 1) {
      m[k] = 0;
      --k;
    }
    if (k < 0) break;
    ++m[k];
    int first = 0;
    while (first < entries && m[first] == 0) ++first;
    if (first == entries || m[first] != 1) continue;
    if (detail::det_mod(F, m, dim) == 0) continue;
    ++count;
    if (visit) visit(m);
  }
  return count;
}

inline std::vector<PGLElement> enumerate_pgl(const ProjectiveAtlas& atlas, std::size_t cap = kDefaultGroupCap) {
  std::vector<PGLElement> out;
  const std::uint64_t expected = pgl_order(atlas.dimension(), atlas.field().q());
  if (expected != 0 && expected <= cap) out.reserve(expected);
  for_each_pgl_matrix(
      atlas.dimension(), atlas.field(),
      [&](const std::vector<int>& m) { out.push_back(PGLElement{m, induced_point_perm(atlas, m)}); }, cap);
  return out;
}

/// The group as permutations of atlas points, in enumeration order.
inline PermutationGroup pgl_point_group(const ProjectiveAtlas& atlas, const std::vector<PGLElement>& elements) {
  std::vector<Permutation> perms;
  perms.reserve(elements.size());
  for (const auto& g : elements) perms.push_back(g.permutation());
  return PermutationGroup(static_cast<int>(atlas.size()), std::move(perms));
}

/// (g . f)(x) = f(g^{-1} x): the value at point p moves to point g(p).
inline std::vector<double> act_on_function(const std::vector<int>& point_perm, std::span<const double> f) {
  if (point_perm.size() != f.size()) throw InvalidArgument("function length does not match atlas size");
  std::vector<double> out(f.size());
  for (std::size_t p = 0; p < f.size(); ++p) out[point_perm[p]] = f[p];
  return out;
}

inline std::vector<double> act_on_function(const PGLElement& g, std::span<const double> f) {
  return act_on_function(g.point_perm, f);
}

/// Index data of f -> r(g . f): targets[k] is the atlas index of g^{-1} i(x_k).
struct RestrictionMap {
  std::vector<int> targets;
  int coset_size = 1;
};

/// Atlas indices in P^n of the embedded hyperplane points i(x) = [x : 0].
inline std::vector<int> embedded_hyperplane(const ProjectiveAtlas& big, const ProjectiveAtlas& small) {
  std::vector<int> idx;
  idx.reserve(small.size());
  for (const auto& x : small.points()) {
    std::vector<int> y = x;
    y.push_back(0);
    idx.push_back(big.index_of(y));
  }
  return idx;
}

/// One map per group element, or (dedup) one per distinct target vector with
/// its multiplicity, in order of first appearance.
inline std::vector<RestrictionMap> restriction_maps(const ProjectiveAtlas& big, const ProjectiveAtlas& small,
                                                    const std::vector<PGLElement>& group, bool dedup = true) {
  if (big.dimension() != small.dimension() + 1) throw InvalidArgument("atlas dimensions must differ by one");
  if (!(big.field() == small.field())) throw InvalidArgument("atlases over different fields");
  const std::vector<int> hyper = embedded_hyperplane(big, small);
  std::vector<RestrictionMap> out;
  std::map<std::vector<int>, std::size_t> seen;
  std::vector<int> inv(big.size());
  for (const auto& g : group) {
    for (std::size_t p = 0; p < big.size(); ++p) inv[g.point_perm[p]] = static_cast<int>(p);
    std::vector<int> t(hyper.size());
    for (std::size_t k = 0; k < hyper.size(); ++k) t[k] = inv[hyper[k]];
    if (!dedup) {
      out.push_back(RestrictionMap{std::move(t), 1});
      continue;
    }
    auto [it, fresh] = seen.emplace(t, out.size());
    if (fresh) {
      out.push_back(RestrictionMap{std::move(t), 1});
    } else {
      ++out[it->second].coset_size;
    }
  }
  return out;
}

/// Number of group elements fixing every point of the embedded hyperplane.
inline std::size_t hyperplane_pointwise_stabilizer_order(const ProjectiveAtlas& big, const ProjectiveAtlas& small,
                                                         const std::vector<PGLElement>& group) {
  const std::vector<int> hyper = embedded_hyperplane(big, small);
  std::size_t count = 0;
  for (const auto& g : group) {
    bool fixes = true;
    for (int h : hyper) fixes = fixes && g.point_perm[h] == h;
    count += fixes;
  }
  return count;
}

}  // namespace isolab

#endif  // ISOLAB_PROJECTIVE_HPP
