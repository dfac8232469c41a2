#ifndef ISOLAB_KERNELS_HPP
#define ISOLAB_KERNELS_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "isolab/error.hpp"
#include "isolab/jet.hpp"
#include "isolab/rng.hpp"

namespace isolab {

/// <a,b>^d
struct InnerPower {
  int d = 2;
};

/// <a,b>^d - c <a,b>^qexp
struct InnerPowerPair {
  int d = 6;
  int qexp = 4;
  double c = 7.0;
};

/// s^p - c s^qexp with s = |a-b|^2
struct DistancePower {
  int p = 6;
  int qexp = 4;
  double c = 1.0;
};

/// s + 1/s with s = |a-b|^2, and 0 when a == b
struct Repulsive {};

struct Monomial {
  double coeff = 0.0;
  std::array<int, 4> exps{};  // powers of a1, a2, b1, b2
};

/// Polynomial in (a1, a2, b1, b2). Repeated monomials are merged on
/// construction, keeping first-appearance order.
struct SparsePoly {
  std::vector<Monomial> terms;

  SparsePoly() = default;
  explicit SparsePoly(const std::vector<Monomial>& raw) {
    for (const auto& m : raw) {
      for (int e : m.exps) {
        if (e < 0) throw InvalidArgument("negative monomial exponent");
      }
      auto it = std::find_if(terms.begin(), terms.end(), [&](const Monomial& t) { return t.exps == m.exps; });
      if (it == terms.end()) {
        terms.push_back(m);
      } else {
        it->coeff += m.coeff;
      }
    }
  }
};

using Kernel = std::variant<InnerPower, InnerPowerPair, DistancePower, Repulsive, SparsePoly>;

inline constexpr double kNearSingularDistance = 1e-12;

inline std::string family_name(const Kernel& k) {
  static const char* names[] = {"inner_power", "inner_power_pair", "distance_power", "repulsive", "sparse_poly"};
  return names[k.index()];
}

inline void validate(const Kernel& k) {
  std::visit(
      [](const auto& v) {
        using K = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<K, InnerPower>) {
          if (v.d < 1) throw InvalidArgument("inner_power: d must be >= 1");
        } else if constexpr (std::is_same_v<K, InnerPowerPair>) {
          if (v.d < 1 || v.qexp < 0 || v.qexp >= v.d) throw InvalidArgument("inner_power_pair: need 0 <= qexp < d");
        } else if constexpr (std::is_same_v<K, DistancePower>) {
          if (v.qexp < 0 || v.qexp >= v.p) throw InvalidArgument("distance_power: need 0 <= qexp < p");
        }
      },
      k);
}

/// True when the kernel depends on (a, b) only through <a, b>.
inline bool is_inner_product_kernel(const Kernel& k) {
  return std::holds_alternative<InnerPower>(k) || std::holds_alternative<InnerPowerPair>(k);
}

/// True when the kernel depends on (a, b) only through |a - b|.
inline bool is_distance_kernel(const Kernel& k) {
  return std::holds_alternative<DistancePower>(k) || std::holds_alternative<Repulsive>(k);
}

/// phi(t), phi'(t), phi''(t) for an inner-product kernel kappa(a,b) = phi(<a,b>).
inline std::array<double, 3> inner_profile(const Kernel& k, double t) {
  auto term = [t](int e, double c) -> std::array<double, 3> {
    return {c * ipow(t, e), e >= 1 ? c * e * ipow(t, e - 1) : 0.0,
            e >= 2 ? c * e * (e - 1) * ipow(t, e - 2) : 0.0};
  };
  if (const auto* ip = std::get_if<InnerPower>(&k)) return term(ip->d, 1.0);
  if (const auto* pp = std::get_if<InnerPowerPair>(&k)) {
    auto a = term(pp->d, 1.0);
    auto b = term(pp->qexp, pp->c);
    return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
  }
  throw InvalidArgument("inner_profile requires an inner-product kernel");
}

namespace detail {

template <class T>
T monomial_value(const std::array<int, 4>& e, const T& a1, const T& a2, const T& b1, const T& b2) {
  T r(1.0);
  const T* vars[4] = {&a1, &a2, &b1, &b2};
  for (int i = 0; i < 4; ++i) {
    if (e[i] > 0) r *= ipow(*vars[i], e[i]);
  }
  return r;
}

}  // namespace detail

/// Kernel value over any scalar type supporting the jet arithmetic. With
/// T = Jet the result carries exact derivatives.
template <class T>
T evaluate(const Kernel& kernel, std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) throw InvalidArgument("kernel arguments differ in dimension");
  return std::visit(
      [&](const auto& k) -> T {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, InnerPower> || std::is_same_v<K, InnerPowerPair>) {
          T t(0.0);
          for (std::size_t i = 0; i < a.size(); ++i) t += a[i] * b[i];
          if constexpr (std::is_same_v<K, InnerPower>) {
            return ipow(t, k.d);
          } else {
            return ipow(t, k.d) - k.c * ipow(t, k.qexp);
          }
        } else if constexpr (std::is_same_v<K, DistancePower> || std::is_same_v<K, Repulsive>) {
          T s(0.0);
          bool equal = true;
          for (std::size_t i = 0; i < a.size(); ++i) {
            T d = a[i] - b[i];
            equal = equal && value_of(a[i]) == value_of(b[i]);
            s += d * d;
          }
          if constexpr (std::is_same_v<K, DistancePower>) {
            return ipow(s, k.p) - k.c * ipow(s, k.qexp);
          } else {
            if (equal) return T(0.0);
            if (std::sqrt(value_of(s)) < kNearSingularDistance) {
              throw NearSingularity("repulsive kernel at distance below 1e-12");
            }
            return s + 1.0 / s;
          }
        } else {
          if (a.size() != 2) throw InvalidArgument("sparse_poly kernel needs 2-dimensional arguments");
          T r(0.0);
          for (const auto& m : k.terms) r += m.coeff * detail::monomial_value(m.exps, a[0], a[1], b[0], b[1]);
          return r;
        }
      },
      kernel);
}

inline double eval(const Kernel& kernel, std::span<const double> a, std::span<const double> b) {
  return evaluate<double>(kernel, a, b);
}

template <int N, bool H>
Jet<N, H> eval_jet(const Kernel& kernel, std::span<const Jet<N, H>> a, std::span<const Jet<N, H>> b) {
  return evaluate<Jet<N, H>>(kernel, a, b);
}

/// Monomials eligible for random kernels: every monomial of degree 1 to 3 in
/// (a1, a2, b1, b2), plus the degree-4 monomials with all exponents even.
inline std::vector<std::array<int, 4>> sparse_poly_pool() {
  std::vector<std::array<int, 4>> pool;
  for (int deg = 1; deg <= 4; ++deg) {
    for (int e0 = deg; e0 >= 0; --e0) {
      for (int e1 = deg - e0; e1 >= 0; --e1) {
        for (int e2 = deg - e0 - e1; e2 >= 0; --e2) {
          std::array<int, 4> e{e0, e1, e2, deg - e0 - e1 - e2};
          if (deg == 4 && std::any_of(e.begin(), e.end(), [](int x) { return x % 2; })) continue;
          pool.push_back(e);
        }
      }
    }
  }
  return pool;
}

/// Random degree-4 kernel bounded below. The four pure quartics a_i^4 are
/// always present and every quartic coefficient is made positive, so the top
/// form is positive definite.
inline Kernel random_sparse_poly(std::uint64_t seed, int monomial_count) {
  auto pool = sparse_poly_pool();
  const int limit = static_cast<int>(pool.size());
  if (monomial_count < 4 || monomial_count > limit) {
    throw InvalidArgument("random_sparse_poly: monomial_count must lie in [4, " + std::to_string(limit) + "]");
  }
  SplitMix64 rng(seed);
  std::vector<std::array<int, 4>> chosen;
  std::vector<std::array<int, 4>> rest;
  for (const auto& e : pool) {
    const bool pure_quartic = std::count(e.begin(), e.end(), 4) == 1;
    (pure_quartic ? chosen : rest).push_back(e);
  }
  // Partial Fisher-Yates draws the remaining monomials without replacement.
  const int extra = monomial_count - 4;
  for (int i = 0; i < extra; ++i) {
    std::size_t j = i + rng.below(rest.size() - i);
    std::swap(rest[i], rest[j]);
    chosen.push_back(rest[i]);
  }
  std::vector<Monomial> terms;
  for (const auto& e : chosen) {
    double c = rng.normal();
    if (e[0] + e[1] + e[2] + e[3] == 4) c = std::abs(c);
    terms.push_back({c, e});
  }
  return SparsePoly(terms);
}

}  // namespace isolab

#endif  // ISOLAB_KERNELS_HPP
