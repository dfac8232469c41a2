#ifndef ISOLAB_LOSSES_HPP
#define ISOLAB_LOSSES_HPP

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "isolab/error.hpp"
#include "isolab/jet.hpp"
#include "isolab/kernels.hpp"
#include "isolab/permutation.hpp"
#include "isolab/projective.hpp"
#include "isolab/rng.hpp"

namespace isolab {

struct FunctionOnPoints {
  std::size_t points = 0;
};
struct ScalarPerVertex {
  int vertex_count = 0;
};
struct ParticlesInPlane {
  int n = 0;
  bool fix_y_of_first = false;
};
using Geometry = std::variant<FunctionOnPoints, ScalarPerVertex, ParticlesInPlane>;

/// Length of the optimization vector.
inline std::size_t dimension(const Geometry& g) {
  return std::visit(
      [](const auto& v) -> std::size_t {
        using G = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<G, FunctionOnPoints>) {
          return v.points;
        } else if constexpr (std::is_same_v<G, ScalarPerVertex>) {
          return static_cast<std::size_t>(v.vertex_count);
        } else {
          return static_cast<std::size_t>(2 * v.n - (v.fix_y_of_first ? 1 : 0));
        }
      },
      g);
}

/// Number of sites the ambient group permutes.
inline int site_count(const Geometry& g) {
  return std::visit(
      [](const auto& v) -> int {
        using G = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<G, FunctionOnPoints>) {
          return static_cast<int>(v.points);
        } else if constexpr (std::is_same_v<G, ScalarPerVertex>) {
          return v.vertex_count;
        } else {
          return v.n;
        }
      },
      g);
}

/// Values attached to each site: one scalar, or a 2-D position with the
/// gauge-fixed coordinate reinserted as 0.
inline std::vector<std::vector<double>> site_values(const Geometry& g, const Eigen::VectorXd& x) {
  if (static_cast<std::size_t>(x.size()) != dimension(g)) throw InvalidArgument("configuration length mismatch");
  std::vector<std::vector<double>> out;
  if (const auto* p = std::get_if<ParticlesInPlane>(&g)) {
    int k = 0;
    for (int i = 0; i < p->n; ++i) {
      double a = x[k++];
      double b = (i == 0 && p->fix_y_of_first) ? 0.0 : x[k++];
      out.push_back({a, b});
    }
  } else {
    for (Eigen::Index i = 0; i < x.size(); ++i) out.push_back({x[i]});
  }
  return out;
}

/// Inverse of site_values. A gauge-fixed coordinate must be 0.
inline Eigen::VectorXd from_site_values(const Geometry& g, const std::vector<std::vector<double>>& sites) {
  Eigen::VectorXd x(dimension(g));
  Eigen::Index k = 0;
  const auto* p = std::get_if<ParticlesInPlane>(&g);
  for (std::size_t i = 0; i < sites.size(); ++i) {
    for (std::size_t c = 0; c < sites[i].size(); ++c) {
      if (p && p->fix_y_of_first && i == 0 && c == 1) continue;
      x[k++] = sites[i][c];
    }
  }
  return x;
}

struct Configuration {
  Eigen::VectorXd values;
  Geometry geometry;
};

enum class LossFamily { ProjectiveTarget, ProjectiveFree, GraphEdgePairs, ParticlePairs };

inline std::string to_string(LossFamily f) {
  switch (f) {
    case LossFamily::ProjectiveTarget: return "projective_target";
    case LossFamily::ProjectiveFree: return "projective_free";
    case LossFamily::GraphEdgePairs: return "graph_edge_pairs";
    case LossFamily::ParticlePairs: return "particle_pairs";
  }
  return "?";
}

struct ProjectiveData {
  std::shared_ptr<const ProjectiveAtlas> big;
  std::shared_ptr<const ProjectiveAtlas> small;
  std::vector<RestrictionMap> maps;
  bool dedup = true;
  int q = 2;
  int n = 2;
};

/// One of the four loss families, with its ambient symmetry group acting on
/// sites. Immutable after construction; evaluation is pure.
class LossInstance {
 public:
  /// (f,f) - 2(f,1) + (1,1) with kernel <u,w>^d summed over restriction maps.
  static LossInstance projective_target(int n, int q, int d, bool dedup = true) {
    LossInstance L = projective_common(n, q, dedup);
    L.family_ = LossFamily::ProjectiveTarget;
    L.kernel_ = InnerPower{d};
    validate(L.kernel_);
    return L;
  }

  /// (f,f) alone, with an inner-power-pair kernel.
  static LossInstance projective_free(int n, int q, InnerPowerPair k, bool dedup = true) {
    if (k.c <= 0) throw InvalidArgument("projective_free: c must be positive");
    LossInstance L = projective_common(n, q, dedup);
    L.family_ = LossFamily::ProjectiveFree;
    L.kernel_ = k;
    validate(L.kernel_);
    return L;
  }

  /// Sum of the kernel over all ordered pairs of directed edges; each
  /// undirected edge contributes both orientations.
  static LossInstance graph_edge_pairs(int vertices, const std::vector<std::pair<int, int>>& edges, Kernel k) {
    validate(k);
    LossInstance L;
    L.family_ = LossFamily::GraphEdgePairs;
    L.kernel_ = std::move(k);
    L.geometry_ = ScalarPerVertex{vertices};
    L.undirected_ = edges;
    for (auto [a, b] : edges) {
      if (a == b) throw InvalidArgument("self-loops are not supported");
      L.directed_.emplace_back(a, b);
      L.directed_.emplace_back(b, a);
    }
    L.group_ = std::make_shared<PermutationGroup>(graph_automorphisms(vertices, edges));
    return L;
  }

  /// Sum over ordered particle pairs (i, j), diagonal included by default.
  static LossInstance particle_pairs(int n, Kernel k, bool include_diagonal = true, bool fix_y_of_first = false) {
    validate(k);
    if (n < 1) throw InvalidArgument("particle count must be positive");
    LossInstance L;
    L.family_ = LossFamily::ParticlePairs;
    L.kernel_ = std::move(k);
    L.geometry_ = ParticlesInPlane{n, fix_y_of_first};
    L.include_diagonal_ = include_diagonal;
    L.group_ = std::make_shared<PermutationGroup>(symmetric_group(n));
    return L;
  }

  LossFamily family() const { return family_; }
  const Kernel& kernel() const { return kernel_; }
  const Geometry& geometry() const { return geometry_; }
  std::size_t dimension() const { return isolab::dimension(geometry_); }
  const PermutationGroup& symmetry_group() const { return *group_; }
  const std::vector<std::pair<int, int>>& directed_edges() const { return directed_; }
  const std::vector<std::pair<int, int>>& undirected_edges() const { return undirected_; }
  bool include_diagonal() const { return include_diagonal_; }
  const ProjectiveData* projective() const { return proj_ ? proj_.get() : nullptr; }
  bool gauge_fixed() const {
    const auto* p = std::get_if<ParticlesInPlane>(&geometry_);
    return p && p->fix_y_of_first;
  }

  double loss(const Eigen::VectorXd& x) const { return evaluate_impl<0>(x, nullptr, nullptr); }

  double loss_grad(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const {
    grad.setZero(x.size());
    return evaluate_impl<1>(x, &grad, nullptr);
  }

  double loss_grad_hess(const Eigen::VectorXd& x, Eigen::VectorXd& grad, Eigen::MatrixXd& hess) const {
    grad.setZero(x.size());
    hess.setZero(x.size(), x.size());
    return evaluate_impl<2>(x, &grad, &hess);
  }

  /// Moves the value at site i to site sigma(i). For gauge-fixed particles
  /// sigma must fix particle 0.
  Eigen::VectorXd act(const Permutation& sigma, const Eigen::VectorXd& x) const {
    if (sigma.degree() != site_count(geometry_)) throw InvalidArgument("permutation degree mismatch");
    if (gauge_fixed() && sigma(0) != 0) throw InvalidArgument("gauge-fixed action requires sigma(0) = 0");
    auto sites = site_values(geometry_, x);
    std::vector<std::vector<double>> moved(sites.size());
    for (std::size_t i = 0; i < sites.size(); ++i) moved[sigma(static_cast<int>(i))] = sites[i];
    return from_site_values(geometry_, moved);
  }

  /// Kernel values between every ordered pair of "edges" (directed edges for
  /// graphs, particles for particle systems), row-major. Not defined for the
  /// projective families.
  std::vector<double> pair_kernel_matrix(const Eigen::VectorXd& x) const {
    auto sites = site_values(geometry_, x);
    std::vector<std::vector<double>> items;
    if (family_ == LossFamily::GraphEdgePairs) {
      for (auto [i, j] : directed_) items.push_back({sites[i][0], sites[j][0]});
    } else if (family_ == LossFamily::ParticlePairs) {
      items = sites;
    } else {
      throw InvalidArgument("pair kernel matrix is undefined for projective losses");
    }
    std::vector<double> out(items.size() * items.size());
    for (std::size_t a = 0; a < items.size(); ++a) {
      for (std::size_t b = 0; b < items.size(); ++b) {
        out[a * items.size() + b] = eval(kernel_, items[a], items[b]);
      }
    }
    return out;
  }

 private:
  LossInstance() = default;

  static LossInstance projective_common(int n, int q, bool dedup) {
    LossInstance L;
    auto data = std::make_shared<ProjectiveData>();
    data->big = std::make_shared<ProjectiveAtlas>(enumerate_atlas(n, q));
    data->small = std::make_shared<ProjectiveAtlas>(n - 1, PrimeField(q));
    auto elements = enumerate_pgl(*data->big);
    data->maps = restriction_maps(*data->big, *data->small, elements, dedup);
    data->dedup = dedup;
    data->q = q;
    data->n = n;
    L.group_ = std::make_shared<PermutationGroup>(pgl_point_group(*data->big, elements));
    L.geometry_ = FunctionOnPoints{data->big->size()};
    L.proj_ = std::move(data);
    return L;
  }

  template <int Order>
  double evaluate_impl(const Eigen::VectorXd& x, Eigen::VectorXd* grad, Eigen::MatrixXd* hess) const {
    if (static_cast<std::size_t>(x.size()) != dimension()) throw InvalidArgument("configuration length mismatch");
    switch (family_) {
      case LossFamily::ProjectiveTarget:
      case LossFamily::ProjectiveFree:
        return projective_impl<Order>(x, grad, hess);
      case LossFamily::GraphEdgePairs:
        return graph_impl<Order>(x, grad, hess);
      case LossFamily::ParticlePairs:
        return particle_impl<Order>(x, grad, hess);
    }
    return 0.0;
  }

  template <int Order>
  using Scalar = std::conditional_t<Order == 0, double, Jet<4, Order == 2>>;

  /// Adds one pair term whose four slots map to optimization variables
  /// (-1 marks a fixed coordinate).
  template <int Order>
  static void scatter(const Scalar<Order>& r, const std::array<int, 4>& var, Eigen::VectorXd* grad,
                      Eigen::MatrixXd* hess) {
    if constexpr (Order >= 1) {
      for (int s = 0; s < 4; ++s) {
        if (var[s] < 0) continue;
        (*grad)[var[s]] += r.g[s];
        if constexpr (Order == 2) {
          for (int t = 0; t < 4; ++t) {
            if (var[t] >= 0) (*hess)(var[s], var[t]) += r.hess(s, t);
          }
        }
      }
    }
  }

  template <int Order>
  static Scalar<Order> seed(double v, int slot) {
    if constexpr (Order == 0) {
      (void)slot;
      return v;
    } else {
      return Scalar<Order>::variable(v, slot);
    }
  }

  template <int Order>
  double graph_impl(const Eigen::VectorXd& x, Eigen::VectorXd* grad, Eigen::MatrixXd* hess) const {
    using T = Scalar<Order>;
    double total = 0.0;
    for (auto [i, j] : directed_) {
      const std::array<T, 2> a{seed<Order>(x[i], 0), seed<Order>(x[j], 1)};
      for (auto [k, l] : directed_) {
        const std::array<T, 2> b{seed<Order>(x[k], 2), seed<Order>(x[l], 3)};
        T r = evaluate<T>(kernel_, a, b);
        total += value_of(r);
        scatter<Order>(r, {i, j, k, l}, grad, hess);
      }
    }
    return total;
  }

  template <int Order>
  double particle_impl(const Eigen::VectorXd& x, Eigen::VectorXd* grad, Eigen::MatrixXd* hess) const {
    using T = Scalar<Order>;
    const auto& geo = std::get<ParticlesInPlane>(geometry_);
    auto sites = site_values(geometry_, x);
    auto var = [&](int i, int c) -> int {
      if (!geo.fix_y_of_first) return 2 * i + c;
      if (i == 0) return c == 0 ? 0 : -1;
      return 2 * i + c - 1;
    };
    double total = 0.0;
    for (int i = 0; i < geo.n; ++i) {
      const std::array<T, 2> a{seed<Order>(sites[i][0], 0), seed<Order>(sites[i][1], 1)};
      for (int j = 0; j < geo.n; ++j) {
        if (i == j && !include_diagonal_) continue;
        const std::array<T, 2> b{seed<Order>(sites[j][0], 2), seed<Order>(sites[j][1], 3)};
        T r = evaluate<T>(kernel_, a, b);
        total += value_of(r);
        scatter<Order>(r, {var(i, 0), var(i, 1), var(j, 0), var(j, 1)}, grad, hess);
      }
    }
    return total;
  }

  // With u_a = r(g_a . f), S = U U^T and kappa = phi(<u, w>), derivatives
  // follow from the bilinear chain rule; each dS_ab/df touches at most 2m
  // coordinates.
  template <int Order>
  double projective_impl(const Eigen::VectorXd& f, Eigen::VectorXd* grad, Eigen::MatrixXd* hess) const {
    const auto& maps = proj_->maps;
    const std::size_t M = maps.size();
    const std::size_t m = proj_->small->size();
    Eigen::MatrixXd U(M, m);
    for (std::size_t a = 0; a < M; ++a) {
      for (std::size_t k = 0; k < m; ++k) U(a, k) = f[maps[a].targets[k]];
    }
    const Eigen::MatrixXd S = U * U.transpose();
    // S is symmetric, so the (b, a) term equals the (a, b) term.
    double total = 0.0;
    for (std::size_t a = 0; a < M; ++a) {
      const auto& ta = maps[a].targets;
      for (std::size_t b = a; b < M; ++b) {
        const double w = a == b ? 1.0 : 2.0;
        auto ph = inner_profile(kernel_, S(a, b));
        for (double& v : ph) v *= w;
        total += ph[0];
        if constexpr (Order >= 1) {
          const auto& tb = maps[b].targets;
          // dS_ab/df_p = sum_k [ta_k = p] U_bk + [tb_k = p] U_ak
          for (std::size_t k = 0; k < m; ++k) {
            (*grad)[ta[k]] += ph[1] * U(b, k);
            (*grad)[tb[k]] += ph[1] * U(a, k);
          }
          if constexpr (Order == 2) {
            for (std::size_t k = 0; k < m; ++k) {
              (*hess)(ta[k], tb[k]) += ph[1];
              (*hess)(tb[k], ta[k]) += ph[1];
              for (std::size_t l = 0; l < m; ++l) {
                const double c = ph[2];
                (*hess)(ta[k], ta[l]) += c * U(b, k) * U(b, l);
                (*hess)(ta[k], tb[l]) += c * U(b, k) * U(a, l);
                (*hess)(tb[k], ta[l]) += c * U(a, k) * U(b, l);
                (*hess)(tb[k], tb[l]) += c * U(a, k) * U(a, l);
              }
            }
          }
        }
      }
    }
    if (family_ == LossFamily::ProjectiveFree) return total;

    // Cross term against the constant target: r(g . 1) is the all-ones vector.
    const double W = static_cast<double>(M);
    for (std::size_t a = 0; a < M; ++a) {
      const auto& ta = maps[a].targets;
      const auto ph = inner_profile(kernel_, U.row(a).sum());
      total -= 2.0 * W * ph[0];
      if constexpr (Order >= 1) {
        for (std::size_t k = 0; k < m; ++k) (*grad)[ta[k]] -= 2.0 * W * ph[1];
        if constexpr (Order == 2) {
          for (std::size_t k = 0; k < m; ++k) {
            for (std::size_t l = 0; l < m; ++l) (*hess)(ta[k], ta[l]) -= 2.0 * W * ph[2];
          }
        }
      }
    }
    total += W * W * inner_profile(kernel_, static_cast<double>(m))[0];
    return total;
  }

  LossFamily family_ = LossFamily::GraphEdgePairs;
  Kernel kernel_ = InnerPower{};
  Geometry geometry_ = ScalarPerVertex{};
  std::shared_ptr<const PermutationGroup> group_;
  std::shared_ptr<const ProjectiveData> proj_;
  std::vector<std::pair<int, int>> undirected_;
  std::vector<std::pair<int, int>> directed_;
  bool include_diagonal_ = true;
};

/// Largest |L(g.x) - L(x)| / (1 + |L(x)|) over `trials` random ambient
/// elements (all elements when trials >= |G|). Gauge-fixed particle systems
/// draw only from the stabilizer of particle 0.
inline double invariance_check(const LossInstance& inst, const Eigen::VectorXd& x, std::size_t trials,
                               std::uint64_t seed = 1) {
  const auto& elems = inst.symmetry_group().elements();
  std::vector<const Permutation*> pool;
  for (const auto& g : elems) {
    if (!inst.gauge_fixed() || g(0) == 0) pool.push_back(&g);
  }
  const double base = inst.loss(x);
  double worst = 0.0;
  SplitMix64 rng(seed);
  const bool all = trials >= pool.size();
  const std::size_t count = all ? pool.size() : trials;
  for (std::size_t t = 0; t < count; ++t) {
    const Permutation& g = all ? *pool[t] : *pool[rng.below(pool.size())];
    const double v = inst.loss(inst.act(g, x));
    worst = std::max(worst, std::abs(v - base) / (1.0 + std::abs(base)));
  }
  return worst;
}

namespace presets {

inline std::vector<std::pair<int, int>> octahedral_edges() {
  return {{0, 1}, {0, 2}, {0, 3}, {0, 4}, {1, 2}, {1, 3}, {1, 5}, {2, 4}, {2, 5}, {3, 4}, {3, 5}, {4, 5}};
}

inline std::vector<std::pair<int, int>> perfect_matching_edges() { return {{0, 3}, {1, 4}, {2, 5}}; }

inline std::vector<std::pair<int, int>> complete_graph_edges(int n) {
  std::vector<std::pair<int, int>> e;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) e.emplace_back(i, j);
  }
  return e;
}

inline LossInstance octahedral() { return LossInstance::graph_edge_pairs(6, octahedral_edges(), InnerPowerPair{6, 4, 7.0}); }

inline LossInstance perfect_matching(DistancePower k = {6, 4, 7.0}) {
  return LossInstance::graph_edge_pairs(6, perfect_matching_edges(), k);
}

}  // namespace presets

}  // namespace isolab

#endif  // ISOLAB_LOSSES_HPP
