#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace kantoreg {

template <int N>
using Vec = std::array<double, std::size_t(N)>;
using Vec2 = Vec<2>;
using Vec3 = Vec<3>;

template <std::size_t N>
inline std::array<double, N> operator+(const std::array<double, N>& a,
                                       const std::array<double, N>& b) {
  std::array<double, N> r;
  for (std::size_t i = 0; i < N; ++i) r[i] = a[i] + b[i];
  return r;
}

template <std::size_t N>
inline std::array<double, N> operator-(const std::array<double, N>& a,
                                       const std::array<double, N>& b) {
  std::array<double, N> r;
  for (std::size_t i = 0; i < N; ++i) r[i] = a[i] - b[i];
  return r;
}

template <std::size_t N>
inline std::array<double, N> operator*(double s, const std::array<double, N>& a) {
  std::array<double, N> r;
  for (std::size_t i = 0; i < N; ++i) r[i] = s * a[i];
  return r;
}

template <std::size_t N>
inline double dot(const std::array<double, N>& a, const std::array<double, N>& b) {
  double s = 0;
  for (std::size_t i = 0; i < N; ++i) s += a[i] * b[i];
  return s;
}

template <std::size_t N>
inline double norm2(const std::array<double, N>& a) {
  return dot(a, a);
}

template <std::size_t N>
inline double norm(const std::array<double, N>& a) {
  return std::sqrt(norm2(a));
}

template <std::size_t N>
inline double dist2(const std::array<double, N>& a, const std::array<double, N>& b) {
  return norm2(a - b);
}

template <std::size_t N>
inline double dist(const std::array<double, N>& a, const std::array<double, N>& b) {
  return std::sqrt(dist2(a, b));
}

inline double cross(const Vec2& a, const Vec2& b) { return a[0] * b[1] - a[1] * b[0]; }

inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

inline Vec2 perp(const Vec2& a) { return {-a[1], a[0]}; }

inline double tol_geom(double scale) { return 1e-9 * (1 + std::fabs(scale)); }

struct Error : std::runtime_error {
  enum Kind {
    EmptyIntersection,
    Unbounded,
    PolarUnbounded,
    DegenerateBody,
    DeltaTooLarge,
    NoValidBalls,
    Infeasible,
    BudgetExceeded,
    NotASubgradient,
    UnboundedSection,
    RhoInfeasible,
    QuadratureNotConverged,
    EnvelopeFailed,
    PreconditionsUnmet,
    MissingReport,
    ConfigError
  };
  Kind kind;
  Error(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

}  // namespace kantoreg
