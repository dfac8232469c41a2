#ifndef ISOLAB_ISOTROPY_HPP
#define ISOLAB_ISOTROPY_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "isolab/losses.hpp"
#include "isolab/naming.hpp"
#include "isolab/optimize.hpp"
#include "isolab/permutation.hpp"

namespace isolab {

inline constexpr double kDefaultIsotropyTol = 1e-6;

struct IsotropyReport {
  PermutationGroup group;
  GroupName name;
  double tolerance_used = kDefaultIsotropyTol;
  // Smallest deviations among rejected ambient elements, ascending; a value
  // close to the tolerance means the verdict is numerically fragile.
  std::vector<double> witness_violations;
  bool flagged = false;
};

/// The subset as a group when it is closed under composition, else nullopt.
/// Builds the subgroup generated by the subset incrementally and aborts as
/// soon as it escapes the subset.
inline std::optional<PermutationGroup> group_if_closed(int degree, const std::vector<Permutation>& subset) {
  std::unordered_set<Permutation, PermutationHash> members(subset.begin(), subset.end());
  const Permutation id = Permutation::identity(degree);
  if (!members.count(id)) return std::nullopt;
  std::vector<Permutation> gens;
  std::vector<Permutation> span{id};
  std::unordered_set<Permutation, PermutationHash> in_span{id};
  for (const auto& e : subset) {
    if (in_span.count(e)) continue;
    gens.push_back(e);
    for (std::size_t head = 0; head < span.size(); ++head) {
      for (const auto& g : gens) {
        Permutation p = g * span[head];
        if (in_span.count(p)) continue;
        if (!members.count(p)) return std::nullopt;
        in_span.insert(p);
        span.push_back(std::move(p));
      }
    }
  }
  if (span.size() != members.size()) return std::nullopt;
  return PermutationGroup(degree, std::move(span), std::move(gens));
}

namespace detail {

/// Accepts ambient elements whose deviation is within tol, repairing closure
/// by tightening tol up to three times, then falling back to the largest
/// subgroup assembled greedily from the accepted elements.
inline IsotropyReport isotropy_from_deviations(const PermutationGroup& ambient, const std::vector<double>& dev,
                                               double tol) {
  IsotropyReport rep;
  double t = tol;
  for (int attempt = 0; attempt <= 3; ++attempt, t *= 0.1) {
    std::vector<Permutation> accepted;
    std::vector<double> rejected;
    for (std::size_t k = 0; k < ambient.order(); ++k) {
      if (dev[k] <= t) {
        accepted.push_back(ambient.elements()[k]);
      } else {
        rejected.push_back(dev[k]);
      }
    }
    std::sort(rejected.begin(), rejected.end());
    if (rejected.size() > 8) rejected.resize(8);
    if (auto g = group_if_closed(ambient.degree(), accepted)) {
      rep.group = std::move(*g);
      rep.tolerance_used = t;
      rep.witness_violations = std::move(rejected);
      rep.flagged = attempt > 0;
      rep.name = name_group(rep.group);
      return rep;
    }
  }
  // Greedy: add accepted elements in order of deviation while the generated
  // subgroup stays inside the accepted set.
  std::vector<std::size_t> order;
  for (std::size_t k = 0; k < ambient.order(); ++k) {
    if (dev[k] <= tol) order.push_back(k);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dev[a] < dev[b]; });
  std::unordered_set<Permutation, PermutationHash> allowed;
  for (auto k : order) allowed.insert(ambient.elements()[k]);
  std::vector<Permutation> gens;
  PermutationGroup current = closure(ambient.degree(), {});
  for (auto k : order) {
    const auto& e = ambient.elements()[k];
    if (current.contains(e)) continue;
    auto trial = gens;
    trial.push_back(e);
    PermutationGroup h = closure(ambient.degree(), trial);
    bool inside = std::all_of(h.elements().begin(), h.elements().end(),
                              [&](const Permutation& p) { return allowed.count(p) > 0; });
    if (inside) {
      gens = std::move(trial);
      current = std::move(h);
    }
  }
  rep.group = std::move(current);
  rep.tolerance_used = tol;
  rep.flagged = true;
  rep.name = name_group(rep.group);
  return rep;
}

}  // namespace detail

/// Ambient elements sigma with max_i |x_sigma(i) - x_i| <= tol (1 + |x|_inf),
/// comparing full site values (2-D positions for particles).
namespace detail {

/// max_i |x_sigma(i) - x_i| / (1 + |x|_inf) for every ambient element.
inline std::vector<double> vertex_deviations(const PermutationGroup& ambient, const Geometry& geometry,
                                             const Eigen::VectorXd& x) {
  const auto sites = site_values(geometry, x);
  if (static_cast<int>(sites.size()) != ambient.degree()) throw InvalidArgument("ambient degree does not match sites");
  double scale = 0.0;
  for (const auto& s : sites) {
    for (double v : s) scale = std::max(scale, std::abs(v));
  }
  scale += 1.0;
  std::vector<double> dev(ambient.order(), 0.0);
  for (std::size_t k = 0; k < ambient.order(); ++k) {
    const auto& g = ambient.elements()[k];
    double d = 0.0;
    for (std::size_t i = 0; i < sites.size(); ++i) {
      const auto& a = sites[g(static_cast<int>(i))];
      for (std::size_t c = 0; c < a.size(); ++c) d = std::max(d, std::abs(a[c] - sites[i][c]));
    }
    dev[k] = d / scale;
  }
  return dev;
}

}  // namespace detail

inline IsotropyReport vertex_isotropy(const PermutationGroup& ambient, const Geometry& geometry,
                                      const Eigen::VectorXd& x, double tol = kDefaultIsotropyTol) {
  return detail::isotropy_from_deviations(ambient, detail::vertex_deviations(ambient, geometry, x), tol);
}

inline IsotropyReport vertex_isotropy(const LossInstance& inst, const Eigen::VectorXd& x,
                                      double tol = kDefaultIsotropyTol) {
  return vertex_isotropy(inst.symmetry_group(), inst.geometry(), x, tol);
}

/// Ambient elements preserving every kernel value between pairs of directed
/// edges (graphs) or ordered particle pairs (particle systems), within
/// tol (1 + max|kappa|).
inline IsotropyReport edge_isotropy(const LossInstance& inst, const Eigen::VectorXd& x,
                                    double tol = kDefaultIsotropyTol) {
  const auto& ambient = inst.symmetry_group();
  const std::vector<double> K = inst.pair_kernel_matrix(x);
  const std::size_t m = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(K.size()))));
  double scale = 0.0;
  for (double v : K) scale = std::max(scale, std::abs(v));
  scale += 1.0;

  // Image of each item under sigma: directed edges map to directed edges.
  std::function<std::vector<int>(const Permutation&)> item_map;
  if (inst.family() == LossFamily::GraphEdgePairs) {
    const auto& E = inst.directed_edges();
    std::map<std::pair<int, int>, int> eidx;
    for (std::size_t e = 0; e < E.size(); ++e) eidx[E[e]] = static_cast<int>(e);
    item_map = [E, eidx](const Permutation& g) {
      std::vector<int> img(E.size());
      for (std::size_t e = 0; e < E.size(); ++e) {
        auto it = eidx.find({g(E[e].first), g(E[e].second)});
        img[e] = it == eidx.end() ? -1 : it->second;
      }
      return img;
    };
  } else {
    item_map = [](const Permutation& g) { return g.images(); };
  }

  std::vector<double> dev(ambient.order(), 0.0);
  for (std::size_t k = 0; k < ambient.order(); ++k) {
    const auto img = item_map(ambient.elements()[k]);
    double d = 0.0;
    for (std::size_t a = 0; a < m && std::isfinite(d); ++a) {
      if (img[a] < 0) {
        d = std::numeric_limits<double>::infinity();
        break;
      }
      for (std::size_t b = 0; b < m; ++b) {
        d = std::max(d, std::abs(K[img[a] * m + img[b]] - K[a * m + b]));
      }
    }
    dev[k] = d / scale;
  }
  return detail::isotropy_from_deviations(ambient, dev, tol);
}

/// Refines a converged record stuck in a flat valley next to a more
/// symmetric critical point. Ambient elements within loose_tol generate a
/// group H; the configuration is averaged over H and Newton restarts from
/// there (Newton steps are H-equivariant, so the iterate stays H-fixed). The
/// refined record is returned when it converges to the same loss within
/// loss_tol (1 + |L|), widened by the rounding noise of the loss, and its
/// tight-tolerance I_V is strictly larger.
inline std::optional<CriticalPointRecord> symmetrize_polish(const LossInstance& inst, const CriticalPointRecord& rec,
                                                            double loose_tol, const OptimizerSettings& newton_settings,
                                                            double tight_tol = kDefaultIsotropyTol,
                                                            double loss_tol = 1e-9) {
  const auto& ambient = inst.symmetry_group();
  const auto dev = detail::vertex_deviations(ambient, inst.geometry(), rec.config.values);
  std::vector<Permutation> near;
  for (std::size_t k = 0; k < ambient.order(); ++k) {
    if (dev[k] <= loose_tol) near.push_back(ambient.elements()[k]);
  }
  const PermutationGroup H = closure(ambient.degree(), near);
  const std::size_t before = vertex_isotropy(inst, rec.config.values, tight_tol).group.order();
  if (H.order() <= before) return std::nullopt;

  const auto sites = site_values(inst.geometry(), rec.config.values);
  std::vector<std::vector<double>> avg(sites.size(), std::vector<double>(sites[0].size(), 0.0));
  for (const auto& h : H.elements()) {
    for (std::size_t i = 0; i < sites.size(); ++i) {
      auto& dst = avg[h(static_cast<int>(i))];
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += sites[i][c];
    }
  }
  for (auto& v : avg) {
    for (double& c : v) c /= static_cast<double>(H.order());
  }
  if (inst.gauge_fixed()) {
    // Averaging can lift particle 0 off the x-axis; rotating about the origin
    // restores the gauge and commutes with relabeling.
    const double r = std::hypot(avg[0][0], avg[0][1]);
    if (r > 0) {
      const double c = avg[0][0] / r, s = avg[0][1] / r;
      for (auto& p : avg) p = {c * p[0] + s * p[1], -s * p[0] + c * p[1]};
    }
    avg[0][1] = 0.0;
  }
  OptimizerSettings ns = newton_settings;
  ns.method = Method::Newton;
  auto out = newton(inst, from_site_values(inst.geometry(), avg), ns, rec.seed);
  if (out.status != RunStatus::Converged) return std::nullopt;
  double lam = 0.0;
  for (double l : rec.hess_spectrum) lam = std::max(lam, std::abs(l));
  const double xs = 1.0 + inf_norm(rec.config.values);
  const double noise = 64.0 * std::numeric_limits<double>::epsilon() * lam * xs * xs;
  if (std::abs(out.record.loss - rec.loss) > loss_tol * (1.0 + std::abs(rec.loss)) + noise) return std::nullopt;
  if (vertex_isotropy(inst, out.record.config.values, tight_tol).group.order() <= before) return std::nullopt;
  out.record.method = rec.method;
  out.record.iterations += rec.iterations;
  return out.record;
}

// GlobalSign identifies x with -x, a symmetry of every even kernel that the
// ambient group does not see.
enum class ContinuousSymmetry { None, PlanarIsometry, SignFlipsAndGauge, GlobalSign };

inline std::string to_string(ContinuousSymmetry c) {
  switch (c) {
    case ContinuousSymmetry::None: return "none";
    case ContinuousSymmetry::PlanarIsometry: return "planar_isometry";
    case ContinuousSymmetry::SignFlipsAndGauge: return "sign_flips_and_gauge";
    case ContinuousSymmetry::GlobalSign: return "global_sign";
  }
  return "?";
}

namespace detail {

/// Site-level invariant compared under relabeling: the values themselves,
/// the distance matrix (planar isometries) or the Gram matrix (orthogonal
/// maps fixing the origin).
struct SiteSignature {
  std::vector<std::vector<double>> unary;  // per site
  std::vector<double> binary;              // n x n, empty when unused
  int n = 0;
  double scale = 1.0;
};

inline SiteSignature signature(const Geometry& geo, const Eigen::VectorXd& x, ContinuousSymmetry mode) {
  SiteSignature s;
  auto sites = site_values(geo, x);
  s.n = static_cast<int>(sites.size());
  double mx = 0.0;
  if (mode == ContinuousSymmetry::None || mode == ContinuousSymmetry::GlobalSign) {
    s.unary = sites;
    for (const auto& v : sites) {
      for (double c : v) mx = std::max(mx, std::abs(c));
    }
  } else {
    s.binary.resize(sites.size() * sites.size());
    for (int i = 0; i < s.n; ++i) {
      for (int j = 0; j < s.n; ++j) {
        double v = 0.0;
        for (std::size_t c = 0; c < sites[i].size(); ++c) {
          v += mode == ContinuousSymmetry::PlanarIsometry ? (sites[i][c] - sites[j][c]) * (sites[i][c] - sites[j][c])
                                                          : sites[i][c] * sites[j][c];
        }
        s.binary[i * s.n + j] = v;
        mx = std::max(mx, std::abs(v));
      }
    }
  }
  s.scale = 1.0 + mx;
  return s;
}

/// Searches for sigma in `ambient` with sig_b(sigma(i), sigma(j)) ~ sig_a(i, j),
/// assigning images one site at a time with pruning.
inline std::optional<Permutation> find_relabeling(const SiteSignature& a, const SiteSignature& b,
                                                  const PermutationGroup& ambient, double tol) {
  if (a.n != b.n) return std::nullopt;
  const int n = a.n;
  const double eps = tol * std::max(a.scale, b.scale);
  std::vector<int> img(n, -1);
  std::vector<char> used(n, 0);
  std::optional<Permutation> found;
  auto unary_ok = [&](int i, int c) {
    if (!a.unary.empty()) {
      for (std::size_t k = 0; k < a.unary[i].size(); ++k) {
        if (std::abs(a.unary[i][k] - b.unary[c][k]) > eps) return false;
      }
    }
    if (!a.binary.empty() && std::abs(a.binary[i * n + i] - b.binary[c * n + c]) > eps) return false;
    return true;
  };
  auto rec = [&](auto&& self, int i) -> bool {
    if (i == n) {
      Permutation p(img);
      if (!ambient.contains(p)) return false;
      found = std::move(p);
      return true;
    }
    for (int c = 0; c < n; ++c) {
      if (used[c] || !unary_ok(i, c)) continue;
      bool ok = true;
      if (!a.binary.empty()) {
        for (int j = 0; j < i && ok; ++j) {
          ok = std::abs(a.binary[i * n + j] - b.binary[c * n + img[j]]) <= eps &&
               std::abs(a.binary[j * n + i] - b.binary[img[j] * n + c]) <= eps;
        }
      }
      if (!ok) continue;
      img[i] = c;
      used[c] = 1;
      if (self(self, i + 1)) return true;
      used[c] = 0;
    }
    img[i] = -1;
    return false;
  };
  rec(rec, 0);
  return found;
}

}  // namespace detail

struct OrbitCatalog {
  std::vector<CriticalPointRecord> representatives;
  std::vector<std::size_t> indices;  // position of each representative in the input
  std::vector<std::size_t> multiplicities;
  double tolerance = kDefaultIsotropyTol;
};

/// Greedy clustering of records into ambient orbits. Records are visited in
/// ascending loss order so each representative is the lowest-loss member.
inline OrbitCatalog dedup_orbits(const std::vector<CriticalPointRecord>& records, const PermutationGroup& ambient,
                                 ContinuousSymmetry mode, double tol) {
  OrbitCatalog cat;
  cat.tolerance = tol;
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return records[a].loss < records[b].loss; });
  std::vector<detail::SiteSignature> sigs;
  for (std::size_t idx : order) {
    const auto& r = records[idx];
    auto sig = detail::signature(r.config.geometry, r.config.values, mode);
    std::optional<detail::SiteSignature> neg;
    if (mode == ContinuousSymmetry::GlobalSign) neg = detail::signature(r.config.geometry, -r.config.values, mode);
    bool matched = false;
    for (std::size_t k = 0; k < cat.representatives.size(); ++k) {
      const auto& rep = cat.representatives[k];
      if (std::abs(rep.loss - r.loss) > tol * (1.0 + std::abs(rep.loss)) * 10.0) continue;
      if (detail::find_relabeling(sig, sigs[k], ambient, tol) ||
          (neg && detail::find_relabeling(*neg, sigs[k], ambient, tol))) {
        ++cat.multiplicities[k];
        matched = true;
        break;
      }
    }
    if (!matched) {
      cat.representatives.push_back(r);
      cat.indices.push_back(idx);
      cat.multiplicities.push_back(1);
      sigs.push_back(std::move(sig));
    }
  }
  return cat;
}

namespace detail {

/// Planar configurations equivalent to `sites` in the gauge slice y_0 = 0:
/// rotate particle 0 onto the positive x-axis, then apply the four axis sign
/// flips. A particle 0 at the origin leaves the rotation free; it is then
/// left unrotated.
inline std::vector<std::vector<std::vector<double>>> gauge_images(const std::vector<std::vector<double>>& sites) {
  const double r = std::hypot(sites[0][0], sites[0][1]);
  const double c = r > 0 ? sites[0][0] / r : 1.0;
  const double s = r > 0 ? sites[0][1] / r : 0.0;
  std::vector<std::vector<double>> rot(sites.size());
  for (std::size_t i = 0; i < sites.size(); ++i) {
    rot[i] = {c * sites[i][0] + s * sites[i][1], -s * sites[i][0] + c * sites[i][1]};
  }
  std::vector<std::vector<std::vector<double>>> out;
  for (double sx : {1.0, -1.0}) {
    for (double sy : {1.0, -1.0}) {
      auto v = rot;
      for (auto& p : v) {
        p[0] *= sx;
        p[1] *= sy;
      }
      out.push_back(std::move(v));
    }
  }
  return out;
}

}  // namespace detail

/// Number of distinct configurations in the orbit of `x` under the ambient
/// group, after quotienting by the continuous symmetry. Distinctness is
/// judged on a rounding grid of tol (1 + |x|_inf).
inline std::size_t count_orbit_members(const Geometry& geo, const Eigen::VectorXd& x, const PermutationGroup& ambient,
                                       ContinuousSymmetry mode, double tol = kDefaultIsotropyTol) {
  const auto sites = site_values(geo, x);
  double mx = 0.0;
  for (const auto& s : sites) {
    for (double v : s) mx = std::max(mx, std::abs(v));
  }
  const double grid = std::max(tol, 1e-9) * (1.0 + mx) * 100.0;
  auto key_of = [&](const std::vector<double>& flat) {
    std::vector<long long> k;
    k.reserve(flat.size());
    for (double v : flat) k.push_back(std::llround(v / grid));
    return k;
  };
  std::set<std::vector<long long>> seen;
  for (const auto& g : ambient.elements()) {
    std::vector<std::vector<double>> moved(sites.size());
    for (std::size_t i = 0; i < sites.size(); ++i) moved[g(static_cast<int>(i))] = sites[i];
    if (mode == ContinuousSymmetry::None) {
      std::vector<double> flat;
      for (const auto& p : moved) flat.insert(flat.end(), p.begin(), p.end());
      seen.insert(key_of(flat));
    } else if (mode == ContinuousSymmetry::GlobalSign) {
      // canonical sign: the first coordinate off the grid's zero cell is positive
      std::vector<double> flat;
      for (const auto& p : moved) flat.insert(flat.end(), p.begin(), p.end());
      auto key = key_of(flat);
      auto it = std::find_if(key.begin(), key.end(), [](long long v) { return v != 0; });
      if (it != key.end() && *it < 0) {
        for (double& v : flat) v = -v;
        key = key_of(flat);
      }
      seen.insert(key);
    } else if (mode == ContinuousSymmetry::PlanarIsometry) {
      std::vector<double> flat;
      for (const auto& p : moved) {
        for (const auto& q : moved) {
          double d2 = 0.0;
          for (std::size_t c = 0; c < p.size(); ++c) d2 += (p[c] - q[c]) * (p[c] - q[c]);
          flat.push_back(std::sqrt(d2));
        }
      }
      seen.insert(key_of(flat));
    } else {
      for (const auto& img : detail::gauge_images(moved)) {
        std::vector<double> flat;
        for (const auto& p : img) flat.insert(flat.end(), p.begin(), p.end());
        seen.insert(key_of(flat));
      }
    }
  }
  return seen.size();
}

}  // namespace isolab

#endif  // ISOLAB_ISOTROPY_HPP
