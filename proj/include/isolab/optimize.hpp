#ifndef ISOLAB_OPTIMIZE_HPP
#define ISOLAB_OPTIMIZE_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "isolab/losses.hpp"
#include "isolab/rng.hpp"

namespace isolab {

enum class Method { GD, Newton };
enum class Classification { Minimum, Saddle, Degenerate };
enum class RunStatus { Converged, NonConvergence, NumericOverflow, SingularHessian };

inline std::string to_string(Method m) { return m == Method::GD ? "gd" : "newton"; }
inline std::string to_string(Classification c) {
  switch (c) {
    case Classification::Minimum: return "minimum";
    case Classification::Saddle: return "saddle";
    case Classification::Degenerate: return "degenerate";
  }
  return "?";
}
inline std::string to_string(RunStatus s) {
  switch (s) {
    case RunStatus::Converged: return "converged";
    case RunStatus::NonConvergence: return "nonconvergence";
    case RunStatus::NumericOverflow: return "overflow";
    case RunStatus::SingularHessian: return "singular_hessian";
  }
  return "?";
}

struct OptimizerSettings {
  Method method = Method::Newton;
  double gd_step = 1e-3;
  int max_iters = 200;
  double grad_tol = 1e-10;
  double init_scale = 1.0;
  double step_tol = 1e-9;  // Newton only
  double overflow_norm = 1e8;
  bool check_monotone = false;

  static OptimizerSettings gd() {
    OptimizerSettings s;
    s.method = Method::GD;
    s.max_iters = 100'000;
    s.grad_tol = 1e-8;
    return s;
  }
  static OptimizerSettings newton() { return OptimizerSettings{}; }

  void validate() const {
    if (!(grad_tol > 0) || !(gd_step > 0) || !(step_tol > 0)) {
      throw InvalidArgument("optimizer tolerances and step must be positive");
    }
    if (max_iters < 1) throw InvalidArgument("max_iters must be >= 1");
  }
};

struct CriticalPointRecord {
  Configuration config;
  double loss = 0.0;
  double grad_norm = 0.0;
  std::vector<double> hess_spectrum;
  Classification classification = Classification::Degenerate;
  int null_count = 0;
  Method method = Method::Newton;
  std::uint64_t seed = 0;
  int iterations = 0;
};

struct OptimizeOutcome {
  RunStatus status = RunStatus::NonConvergence;
  CriticalPointRecord record;
};

/// i.i.d. standard normal start scaled by init_scale.
inline Eigen::VectorXd random_start(std::size_t dim, std::uint64_t seed, double scale) {
  SplitMix64 rng(seed);
  Eigen::VectorXd x(dim);
  for (std::size_t i = 0; i < dim; ++i) x[i] = scale * rng.normal();
  return x;
}

inline double inf_norm(const Eigen::VectorXd& x) { return x.size() ? x.cwiseAbs().maxCoeff() : 0.0; }

/// Hessian spectrum with zero_tol = 1e-6 (1 + max|lambda|).
template <class Objective>
void classify(const Objective& obj, CriticalPointRecord& rec) {
  Eigen::VectorXd g;
  Eigen::MatrixXd H;
  obj.loss_grad_hess(rec.config.values, g, H);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (H + H.transpose()), Eigen::EigenvaluesOnly);
  const Eigen::VectorXd lam = es.eigenvalues();
  rec.hess_spectrum.assign(lam.data(), lam.data() + lam.size());
  const double scale = lam.size() ? lam.cwiseAbs().maxCoeff() : 0.0;
  const double zero_tol = 1e-6 * (1.0 + scale);
  int neg = 0, pos = 0, null = 0;
  for (double l : rec.hess_spectrum) {
    if (l < -zero_tol) {
      ++neg;
    } else if (l > zero_tol) {
      ++pos;
    } else {
      ++null;
    }
  }
  rec.null_count = null;
  if (neg > 0) {
    rec.classification = Classification::Saddle;
  } else if (pos > 0) {
    rec.classification = Classification::Minimum;
  } else {
    rec.classification = Classification::Degenerate;
  }
}

namespace detail {

template <class Objective>
OptimizeOutcome finish(const Objective& obj, Eigen::VectorXd x, RunStatus status, Method method, std::uint64_t seed,
                       int iters) {
  OptimizeOutcome out;
  out.status = status;
  auto& r = out.record;
  Eigen::VectorXd g;
  r.loss = obj.loss_grad(x, g);
  r.grad_norm = g.norm();
  r.config = Configuration{std::move(x), obj.geometry()};
  r.method = method;
  r.seed = seed;
  r.iterations = iters;
  if (status == RunStatus::Converged) classify(obj, r);
  return out;
}

inline bool finite(const Eigen::VectorXd& v) { return v.allFinite(); }

inline double gradient_floor(double hess_scale, const Eigen::VectorXd& x) {
  return 16.0 * std::numeric_limits<double>::epsilon() * hess_scale * (1.0 + inf_norm(x));
}

}  // namespace detail

/// Gradient descent with Armijo backtracking (c = 1e-4). Rejected trials
/// halve the step; accepted ones double it for the next iteration. Once the
/// predicted decrease drops below the rounding noise of the loss, a trial is
/// accepted instead when the loss stays within that noise and the gradient
/// norm shrinks.
template <class Objective>
OptimizeOutcome descend(const Objective& obj, Eigen::VectorXd x, const OptimizerSettings& s, std::uint64_t seed = 0) {
  s.validate();
  constexpr double kArmijo = 1e-4;
  constexpr double kNoise = 16.0 * std::numeric_limits<double>::epsilon();
  Eigen::VectorXd g, gt;
  double f = obj.loss_grad(x, g);
  double t = s.gd_step;
  for (int it = 0; it < s.max_iters; ++it) {
    if (!std::isfinite(f) || !detail::finite(g) || inf_norm(x) > s.overflow_norm) {
      return detail::finish(obj, x, RunStatus::NumericOverflow, Method::GD, seed, it);
    }
    const double gn2 = g.squaredNorm();
    if (std::sqrt(gn2) <= s.grad_tol) return detail::finish(obj, x, RunStatus::Converged, Method::GD, seed, it);
    const double noise = kNoise * (1.0 + std::abs(f));
    bool accepted = false;
    while (t > 1e-300) {
      Eigen::VectorXd trial = x - t * g;
      const double ft = obj.loss(trial);
      bool ok = false;
      if (kArmijo * t * gn2 > noise) {
        ok = std::isfinite(ft) && ft <= f - kArmijo * t * gn2;
      } else if (std::isfinite(ft) && ft <= f + noise) {
        obj.loss_grad(trial, gt);
        ok = gt.squaredNorm() < gn2;
      }
      if (ok) {
        if (s.check_monotone && ft > f + noise) throw Error("gradient descent increased the loss");
        x = std::move(trial);
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) return detail::finish(obj, x, RunStatus::NonConvergence, Method::GD, seed, it);
    f = obj.loss_grad(x, g);
    t *= 2.0;
  }
  const RunStatus st = g.norm() <= s.grad_tol ? RunStatus::Converged : RunStatus::NonConvergence;
  return detail::finish(obj, x, st, Method::GD, seed, s.max_iters);
}

/// Damped Newton iteration. Converges to critical points of any index.
/// Stops when the gradient is below grad_tol and the Newton step is below
/// step_tol * (1 + |x|_inf); the step test keeps iterating at degenerate
/// critical points, where the gradient vanishes long before x settles.
/// grad_tol is raised to the rounding floor 16 eps max|lambda| (1 + |x|_inf)
/// when that is larger, since stiff losses cannot resolve gradients below it.
template <class Objective>
OptimizeOutcome newton(const Objective& obj, Eigen::VectorXd x, const OptimizerSettings& s, std::uint64_t seed = 0) {
  s.validate();
  Eigen::VectorXd g;
  Eigen::MatrixXd H;
  int singular_streak = 0;
  double last_floor = 0.0;
  for (int it = 0; it < s.max_iters; ++it) {
    const double f = obj.loss_grad_hess(x, g, H);
    if (!std::isfinite(f) || !detail::finite(g) || !H.allFinite() || inf_norm(x) > s.overflow_norm) {
      return detail::finish(obj, x, RunStatus::NumericOverflow, Method::Newton, seed, it);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (H + H.transpose()));
    Eigen::VectorXd lam = es.eigenvalues();
    const double scale = lam.size() ? lam.cwiseAbs().maxCoeff() : 0.0;
    last_floor = detail::gradient_floor(scale, x);
    const bool small_grad = g.norm() <= std::max(s.grad_tol, last_floor);
    if (!(scale > 0)) {
      if (small_grad) return detail::finish(obj, x, RunStatus::Converged, Method::Newton, seed, it);
      if (++singular_streak >= 5) return detail::finish(obj, x, RunStatus::SingularHessian, Method::Newton, seed, it);
      continue;
    }
    if (lam.cwiseAbs().minCoeff() < 1e-10 * scale) lam.array() += 1e-8 * scale;
    if (lam.cwiseAbs().minCoeff() == 0.0) {
      if (++singular_streak >= 5) return detail::finish(obj, x, RunStatus::SingularHessian, Method::Newton, seed, it);
      lam.array() += 1e-8 * scale;
    } else {
      singular_streak = 0;
    }
    const Eigen::MatrixXd& V = es.eigenvectors();
    Eigen::VectorXd step = V * (V.transpose() * g).cwiseQuotient(lam);
    const double sn = step.norm();
    if (small_grad && sn <= s.step_tol * (1.0 + inf_norm(x))) {
      return detail::finish(obj, x, RunStatus::Converged, Method::Newton, seed, it);
    }
    if (sn > 1.0) step /= sn;
    x -= step;
  }
  obj.loss_grad(x, g);
  const RunStatus st = g.norm() <= std::max(s.grad_tol, last_floor) ? RunStatus::Converged : RunStatus::NonConvergence;
  return detail::finish(obj, x, st, Method::Newton, seed, s.max_iters);
}

/// Perturbation test for a minimum whose Hessian has null modes, where the
/// second-order test is inconclusive. Each trial displaces x by radius (1 +
/// |x|_inf) in a random direction and descends with GD. Returns false when
/// some trial ends more than 1e-6 (1 + |L|) below the record's loss.
template <class Objective>
bool survives_perturbation(const Objective& obj, const CriticalPointRecord& rec, int trials, double radius,
                           const OptimizerSettings& gd) {
  const Eigen::VectorXd& x = rec.config.values;
  const double r = radius * (1.0 + inf_norm(x));
  const double margin = 1e-6 * (1.0 + std::abs(rec.loss));
  for (int k = 0; k < trials; ++k) {
    Eigen::VectorXd u = random_start(static_cast<std::size_t>(x.size()), rec.seed * 1000003ULL + k, 1.0);
    u *= r / std::max(u.norm(), 1e-300);
    const OptimizeOutcome out = descend(obj, x + u, gd, rec.seed);
    if (out.status == RunStatus::NumericOverflow || out.record.loss < rec.loss - margin) return false;
  }
  return true;
}

template <class Objective>
OptimizeOutcome optimize(const Objective& obj, Eigen::VectorXd x0, const OptimizerSettings& s, std::uint64_t seed = 0) {
  return s.method == Method::GD ? descend(obj, std::move(x0), s, seed) : newton(obj, std::move(x0), s, seed);
}

}  // namespace isolab

#endif  // ISOLAB_OPTIMIZE_HPP
