#ifndef ISOLAB_JET_HPP
#define ISOLAB_JET_HPP

#include <array>
#include <cmath>
#include <cstddef>

namespace isolab {

/// Truncated second-order Taylor jet over N active variables.
///
/// Carries value, gradient and (when WithHessian) the packed upper triangle of
/// the Hessian. Arithmetic propagates exact first and second derivatives, so a
/// scalar function written generically over T yields its derivatives when
/// instantiated with Jet. WithHessian=false gives a cheaper gradient-only dual.
template <int N, bool WithHessian = true>
struct Jet {
  static constexpr int kVars = N;
  static constexpr int kPacked = WithHessian ? N * (N + 1) / 2 : 0;

  double v = 0.0;
  std::array<double, N> g{};
  std::array<double, kPacked> h{};

  Jet() = default;
  Jet(double value) : v(value) {}  // NOLINT: constants promote implicitly

  static Jet variable(double value, int slot) {
    Jet j(value);
    j.g[slot] = 1.0;
    return j;
  }

  static constexpr int packed_index(int i, int j) {
    if (i > j) {
      int t = i;
      i = j;
      j = t;
    }
    return i * N - i * (i - 1) / 2 + (j - i);
  }

  double hess(int i, int j) const {
    if constexpr (WithHessian) {
      return h[packed_index(i, j)];
    } else {
      return 0.0;
    }
  }

  Jet& operator+=(const Jet& o) {
    v += o.v;
    for (int i = 0; i < N; ++i) g[i] += o.g[i];
    for (int k = 0; k < kPacked; ++k) h[k] += o.h[k];
    return *this;
  }
  Jet& operator-=(const Jet& o) {
    v -= o.v;
    for (int i = 0; i < N; ++i) g[i] -= o.g[i];
    for (int k = 0; k < kPacked; ++k) h[k] -= o.h[k];
    return *this;
  }
  Jet& operator*=(double s) {
    v *= s;
    for (int i = 0; i < N; ++i) g[i] *= s;
    for (int k = 0; k < kPacked; ++k) h[k] *= s;
    return *this;
  }
  Jet& operator+=(double s) {
    v += s;
    return *this;
  }

  Jet& operator*=(const Jet& o) {
    if constexpr (WithHessian) {
      int k = 0;
      for (int i = 0; i < N; ++i) {
        for (int j = i; j < N; ++j, ++k) {
          h[k] = h[k] * o.v + v * o.h[k] + g[i] * o.g[j] + g[j] * o.g[i];
        }
      }
    }
    for (int i = 0; i < N; ++i) g[i] = g[i] * o.v + v * o.g[i];
    v *= o.v;
    return *this;
  }
};

template <int N, bool H>
Jet<N, H> operator+(Jet<N, H> a, const Jet<N, H>& b) { return a += b; }
template <int N, bool H>
Jet<N, H> operator-(Jet<N, H> a, const Jet<N, H>& b) { return a -= b; }
template <int N, bool H>
Jet<N, H> operator*(Jet<N, H> a, const Jet<N, H>& b) { return a *= b; }
template <int N, bool H>
Jet<N, H> operator+(Jet<N, H> a, double s) { return a += s; }
template <int N, bool H>
Jet<N, H> operator+(double s, Jet<N, H> a) { return a += s; }
template <int N, bool H>
Jet<N, H> operator-(Jet<N, H> a, double s) { return a += -s; }
template <int N, bool H>
Jet<N, H> operator-(double s, Jet<N, H> a) {
  a *= -1.0;
  return a += s;
}
template <int N, bool H>
Jet<N, H> operator*(Jet<N, H> a, double s) { return a *= s; }
template <int N, bool H>
Jet<N, H> operator*(double s, Jet<N, H> a) { return a *= s; }
template <int N, bool H>
Jet<N, H> operator-(Jet<N, H> a) { return a *= -1.0; }

/// Applies a scalar function given its value and first two derivatives at a.v.
template <int N, bool H>
Jet<N, H> chain(const Jet<N, H>& a, double f0, double f1, double f2) {
  Jet<N, H> r;
  r.v = f0;
  if constexpr (H) {
    int k = 0;
    for (int i = 0; i < N; ++i) {
      for (int j = i; j < N; ++j, ++k) {
        r.h[k] = f1 * a.h[k] + f2 * a.g[i] * a.g[j];
      }
    }
  }
  for (int i = 0; i < N; ++i) r.g[i] = f1 * a.g[i];
  return r;
}

template <int N, bool H>
Jet<N, H> operator/(const Jet<N, H>& a, const Jet<N, H>& b) {
  double inv = 1.0 / b.v;
  return a * chain(b, inv, -inv * inv, 2.0 * inv * inv * inv);
}
template <int N, bool H>
Jet<N, H> operator/(double s, const Jet<N, H>& b) {
  double inv = 1.0 / b.v;
  return chain(b, s * inv, -s * inv * inv, 2.0 * s * inv * inv * inv);
}
template <int N, bool H>
Jet<N, H> operator/(Jet<N, H> a, double s) { return a *= (1.0 / s); }

/// Integer power with exact derivatives; negative exponents allowed for a != 0.
inline double ipow(double x, int k) {
  if (k < 0) return 1.0 / ipow(x, -k);
  double r = 1.0;
  double b = x;
  while (k > 0) {
    if (k & 1) r *= b;
    b *= b;
    k >>= 1;
  }
  return r;
}

template <int N, bool H>
Jet<N, H> ipow(const Jet<N, H>& a, int k) {
  if (k == 0) return Jet<N, H>(1.0);
  if (k == 1) return a;
  double x = a.v;
  double f1 = k * ipow(x, k - 1);
  double f2 = (k == 1) ? 0.0 : static_cast<double>(k) * (k - 1) * ipow(x, k - 2);
  return chain(a, ipow(x, k), f1, f2);
}

inline double value_of(double x) { return x; }
template <int N, bool H>
double value_of(const Jet<N, H>& j) { return j.v; }

}  // namespace isolab

#endif  // ISOLAB_JET_HPP
