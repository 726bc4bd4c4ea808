#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <functional>
#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "sections.hpp"

namespace kantoreg {

// ------------------------------------------------------------------ kernels
//
// A kernel is a radially symmetric probability density supported in the unit
// ball, rescaled to radius r as K_r(y) = K(y/r)/r^2.  The mollified Laplacian
//
//   delta_r psi(x) = (m0/r^2) * Int K_r(y) [psi(x+y) - psi(x) - p.y] dy
//
// with m0 = 2 / Int y1^2 K(y) dy and any p in the subdifferential at x equals
// the classical Laplacian on quadratics and is nonnegative on convex inputs.

enum class KernelKind { BallIndicator, SphereSurface, CustomRadial };

struct KernelSpec {
  KernelKind kind = KernelKind::BallIndicator;
  double m0 = 8.0;
  double r = 1.0;
  std::function<double(double)> profile;  // CustomRadial: density on [0,1]
};

namespace detail {

struct GaussLegendre {
  std::vector<double> node, weight;  // on [0,1]
};

inline GaussLegendre gauss_legendre01(int n) {
  GaussLegendre g;
  g.node.resize(size_t(n));
  g.weight.resize(size_t(n));
  for (int i = 0; i < n; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));  // Newton on P_n
    for (int it = 0; it < 100; ++it) {
      double p0 = 1, p1 = x;
      for (int k = 2; k <= n; ++k) {
        double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      double dp = n * (x * p1 - p0) / (x * x - 1);
      double dx = p1 / dp;
      x -= dx;
      if (std::fabs(dx) < 1e-15) break;
    }
    double p0 = 1, p1 = x;
    for (int k = 2; k <= n; ++k) {
      double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    double dp = n * (x * p1 - p0) / (x * x - 1);
    g.node[size_t(i)] = 0.5 * (1 + x);
    g.weight[size_t(i)] = 1.0 / ((1 - x * x) * dp * dp);
  }
  return g;
}

// Int_0^1 rho^k profile(rho) drho, refined until two resolutions agree.
inline double radial_moment(const std::function<double(double)>& profile, int k, double rel,
                            const char* what) {
  double prev = 0;
  bool have = false;
  for (int n = 64; n <= 4096; n *= 2) {
    auto g = gauss_legendre01(n);
    double s = 0;
    for (size_t i = 0; i < g.node.size(); ++i)
      s += g.weight[i] * std::pow(g.node[i], k) * profile(g.node[i]);
    if (have && std::fabs(s - prev) <= rel * (1 + std::fabs(s))) return s;
    prev = s;
    have = true;
  }
  throw Error(Error::QuadratureNotConverged, std::string("radial moment of ") + what);
}

}  // namespace detail

inline KernelSpec ball_kernel(double r) {
  // K = 1/pi on B_1: Int y1^2 K = 1/4, so m0 = 8.
  return KernelSpec{KernelKind::BallIndicator, 8.0, r, nullptr};
}

inline KernelSpec sphere_kernel(double r) {
  // K = normalized arc measure on the unit circle: Int y1^2 K = 1/2, m0 = 4.
  return KernelSpec{KernelKind::SphereSurface, 4.0, r, nullptr};
}

inline KernelSpec custom_radial_kernel(std::function<double(double)> profile, double r) {
  if (!profile || !(r > 0)) throw Error(Error::ConfigError, "custom kernel needs a profile and r > 0");
  double mass = 2 * M_PI * detail::radial_moment(profile, 1, 1e-12, "custom profile");
  if (!(mass > 0)) throw Error(Error::ConfigError, "custom profile has no mass");
  auto scaled = [profile, mass](double rho) { return profile(rho) / mass; };
  double mom2 = M_PI * detail::radial_moment(scaled, 3, 1e-12, "custom profile");
  if (!(mom2 > 0)) throw Error(Error::ConfigError, "custom profile has no second moment");
  return KernelSpec{KernelKind::CustomRadial, 2.0 / mom2, r, scaled};
}

inline std::vector<KernelSpec> kernel_presets(double r = 1.0) {
  return {ball_kernel(r), sphere_kernel(r)};
}

inline void validate_kernel(const KernelSpec& k) {
  if (!(k.r > 0) || !std::isfinite(k.r)) throw Error(Error::ConfigError, "kernel radius must be positive");
  if (!(k.m0 > 0) || !std::isfinite(k.m0)) throw Error(Error::ConfigError, "kernel m0 must be positive");
  double mom2 = 0;
  switch (k.kind) {
    case KernelKind::BallIndicator: mom2 = 0.25; break;
    case KernelKind::SphereSurface: mom2 = 0.5; break;
    case KernelKind::CustomRadial: {
      if (!k.profile) throw Error(Error::ConfigError, "custom kernel lost its profile");
      double mass = 2 * M_PI * detail::radial_moment(k.profile, 1, 1e-12, "custom profile");
      if (std::fabs(mass - 1) > 1e-10) throw Error(Error::ConfigError, "custom kernel is not normalized");
      mom2 = M_PI * detail::radial_moment(k.profile, 3, 1e-12, "custom profile");
      break;
    }
  }
  if (std::fabs(k.m0 * mom2 - 2) > 1e-10)
    throw Error(Error::ConfigError, "kernel m0 disagrees with its second moment");
}

// ------------------------------------------------------------- quadrature core

namespace detail {

// Regular m-gon standing in for the unit disk, scaled so its mean squared
// radius matches the disk's 1/2.  The matching cancels the O(1/m^2) defect of
// every radial moment at once, so quadratics integrate exactly and kinked
// integrands converge at fourth order.
inline Chain matched_disk_polygon(int m, double r) {
  double beta = M_PI / m;
  // mean squared radius of the m-gon at circumradius 1; the disk's is 1/2
  double q2 = 0.5 * std::cos(beta) * std::cos(beta) * (1 + std::tan(beta) * std::tan(beta) / 3);
  double R = r * std::sqrt(0.5 / q2);
  Chain ch;
  ch.reserve(size_t(m));
  for (int i = 0; i < m; ++i) {
    double th = 2 * M_PI * i / m + 0.2605;
    ch.push_back({R * std::cos(th), R * std::sin(th)});
  }
  return ch;
}

// Int_C (a.y + c) dy over the polygon C.
inline double affine_integral(const Chain& ch, const Vec2& a, double c) {
  double area = 0, mx = 0, my = 0;
  for (size_t i = 0; i < ch.size(); ++i) {
    const Vec2& u = ch[i];
    const Vec2& v = ch[(i + 1) % ch.size()];
    double cross = u[0] * v[1] - v[0] * u[1];
    area += cross;
    mx += cross * (u[0] + v[0]);
    my += cross * (u[1] + v[1]);
  }
  area *= 0.5;
  mx /= 6;
  my /= 6;
  return a[0] * mx + a[1] * my + c * area;
}

struct ShiftedPieces {
  std::vector<Vec2> a;    // slope - p
  std::vector<double> c;  // value gap at x, always <= 0
};

// Pieces of y -> psi(x+y) - psi(x) - p.y that can attain the max within
// distance `reach` of the origin; the rest stay strictly below the leader.
inline ShiftedPieces shifted_pieces(const PiecewiseAffineConvex& psi, const Vec2& x, const Vec2& p,
                                    double reach) {
  double vx = psi.value(x);
  const Vec2 slead = psi.slopes[size_t(psi.argmax(x))];
  ShiftedPieces sp;
  sp.a.reserve(psi.slopes.size());
  sp.c.reserve(psi.slopes.size());
  for (size_t j = 0; j < psi.slopes.size(); ++j) {
    double gap = vx - (dot(x, psi.slopes[j]) + psi.intercepts[j]);
    if (gap > reach * norm(psi.slopes[j] - slead) + 1e-12 * (1 + std::fabs(vx))) continue;
    Vec2 aj = psi.slopes[j] - p;
    double cj = -gap;
    bool dup = false;
    for (size_t i = 0; i < sp.a.size(); ++i)
      if (norm(sp.a[i] - aj) == 0 && sp.c[i] == cj) { dup = true; break; }
    if (!dup) {
      sp.a.push_back(aj);
      sp.c.push_back(cj);
    }
  }
  return sp;
}

// Int_P max_j (a_j.y + c_j) dy by clipping P to each piece's active cell.
inline double envelope_integral(const ShiftedPieces& sp, const Chain& P) {
  if (sp.a.size() == 1) return affine_integral(P, sp.a[0], sp.c[0]);
  double total = 0;
  for (size_t j = 0; j < sp.a.size(); ++j) {
    Chain cell = P;
    for (size_t k = 0; k < sp.a.size() && !cell.empty(); ++k) {
      if (k == j) continue;
      cell = clip_chain(cell, sp.a[k] - sp.a[j], sp.c[j] - sp.c[k]);
    }
    if (cell.size() >= 3) total += affine_integral(cell, sp.a[j], sp.c[j]);
  }
  return total;
}

inline double certified_pair(double coarse, double fine, double* err) {
  *err = std::fabs(fine - coarse) / 3;
  return fine;
}

// Exact angular breakpoints of theta -> max_j (A_j cos + B_j sin + c_j).
inline std::vector<double> sinusoid_breakpoints(const std::vector<Vec2>& ab,
                                                const std::vector<double>& c) {
  std::vector<double> cuts;
  for (size_t i = 0; i < ab.size(); ++i)
    for (size_t j = i + 1; j < ab.size(); ++j) {
      double dA = ab[i][0] - ab[j][0], dB = ab[i][1] - ab[j][1], dc = c[j] - c[i];
      double R = std::hypot(dA, dB);
      if (R < 1e-300) continue;
      if (std::fabs(dc) > R) continue;
      double phi = std::atan2(dB, dA), off = std::acos(std::min(1.0, std::max(-1.0, dc / R)));
      for (double th : {phi + off, phi - off}) {
        th = std::fmod(th, 2 * M_PI);
        if (th < 0) th += 2 * M_PI;
        cuts.push_back(th);
      }
    }
  cuts.push_back(0);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end(),
                         [](double u, double v) { return std::fabs(u - v) < 1e-13; }),
             cuts.end());
  return cuts;
}

inline double sinusoid_envelope_mean(const std::vector<Vec2>& ab, const std::vector<double>& c,
                                     int splits) {
  auto cuts = sinusoid_breakpoints(ab, c);
  double total = 0;
  size_t nseg = cuts.size();
  for (size_t s = 0; s < nseg; ++s) {
    double t0 = cuts[s];
    double t1 = (s + 1 < nseg) ? cuts[s + 1] : cuts[0] + 2 * M_PI;
    double w = (t1 - t0) / splits;
    for (int q = 0; q < splits; ++q) {
      double u0 = t0 + q * w, u1 = u0 + w, um = 0.5 * (u0 + u1);
      size_t best = 0;
      double bv = -1e300;
      for (size_t j = 0; j < ab.size(); ++j) {
        double v = ab[j][0] * std::cos(um) + ab[j][1] * std::sin(um) + c[j];
        if (v > bv) { bv = v; best = j; }
      }
      total += ab[best][0] * (std::sin(u1) - std::sin(u0)) -
               ab[best][1] * (std::cos(u1) - std::cos(u0)) + c[best] * (u1 - u0);
    }
  }
  return total / (2 * M_PI);
}

}  // namespace detail

// --------------------------------------------------------- mollified Laplacian

inline double delta_r(const PiecewiseAffineConvex& psi, const Vec2& x, const KernelSpec& kernel,
                      const Vec2& p) {
  validate_kernel(kernel);
  if (!is_subgradient(psi, x, p))
    throw Error(Error::NotASubgradient, "shift slope is not in the subdifferential");
  double r = kernel.r;

  if (kernel.kind == KernelKind::BallIndicator) {
    auto sp = detail::shifted_pieces(psi, x, p, 1.01 * r);
    if (sp.a.size() <= 1) return 0.0;
    double prev = 0;
    bool have = false;
    for (int m = 128; m <= 1024; m *= 2) {
      auto P = detail::matched_disk_polygon(m, r);
      double v = (kernel.m0 / (r * r)) * detail::envelope_integral(sp, P) / detail::chain_area(P);
      if (have) {
        double err = 0;
        v = detail::certified_pair(prev, v, &err);
        if (err <= 1e-6 * (1 + std::fabs(v))) return v;
      }
      prev = v;
      have = true;
    }
    throw Error(Error::QuadratureNotConverged, "disk polygonalization did not certify");
  }

  if (kernel.kind == KernelKind::SphereSurface) {
    auto sp = detail::shifted_pieces(psi, x, p, r);
    if (sp.a.size() <= 1) return 0.0;
    std::vector<Vec2> ab(sp.a.size());
    for (size_t j = 0; j < sp.a.size(); ++j) ab[j] = r * sp.a[j];
    double v1 = detail::sinusoid_envelope_mean(ab, sp.c, 1);
    double v2 = detail::sinusoid_envelope_mean(ab, sp.c, 2);
    double err = 0;
    double v = (kernel.m0 / (r * r)) * detail::certified_pair(v1, v2, &err);
    if (err * kernel.m0 / (r * r) > 1e-6 * (1 + std::fabs(v)))
      throw Error(Error::QuadratureNotConverged, "sinusoid segments did not certify");
    return v;
  }

  // custom radial profile: Gauss-Legendre in radius, exact sinusoid
  // envelopes in angle at each radial node
  auto sp = detail::shifted_pieces(psi, x, p, r);
  if (sp.a.size() <= 1) return 0.0;
  double prev = 0;
  bool have = false;
  for (int nr = 24; nr <= 384; nr *= 2) {
    auto g = detail::gauss_legendre01(nr);
    double s = 0;
    std::vector<Vec2> ab(sp.a.size());
    for (int i = 0; i < nr; ++i) {
      double rho = g.node[size_t(i)];
      for (size_t j = 0; j < sp.a.size(); ++j) ab[j] = (r * rho) * sp.a[j];
      double ring = 2 * M_PI * detail::sinusoid_envelope_mean(ab, sp.c, 1);
      s += g.weight[size_t(i)] * kernel.profile(rho) * rho * ring;
    }
    double v = (kernel.m0 / (r * r)) * s;
    if (have) {
      double err = 0;
      v = detail::certified_pair(prev, v, &err);
      if (err <= 1e-6 * (1 + std::fabs(v))) return v;
    }
    prev = v;
    have = true;
  }
  throw Error(Error::QuadratureNotConverged, "radial quadrature did not certify");
}

inline double delta_r(const PiecewiseAffineConvex& psi, const Vec2& x, const KernelSpec& kernel) {
  return delta_r(psi, x, kernel, pick_subgradient(psi, x));
}

// Quadrature path for smooth potentials: Gauss-Legendre in radius, trapezoid
// in angle, doubled until two resolutions agree.
template <class F>
  requires std::invocable<F&, const Vec2&>
inline double delta_r(F&& f, const Vec2& x, const KernelSpec& kernel, const Vec2& p = Vec2{0, 0}) {
  validate_kernel(kernel);
  double r = kernel.r;
  double fx = f(x);
  double prev = 0;
  bool have = false;
  for (int nr = 24, na = 96; nr <= 384; nr *= 2, na *= 2) {
    double s = 0;
    if (kernel.kind == KernelKind::SphereSurface) {
      for (int i = 0; i < na; ++i) {
        double th = 2 * M_PI * (i + 0.5) / na;
        Vec2 y{r * std::cos(th), r * std::sin(th)};
        s += f(x + y) - fx - dot(p, y);
      }
      s /= na;
    } else {
      auto g = detail::gauss_legendre01(nr);
      for (int i = 0; i < nr; ++i) {
        double rho = g.node[size_t(i)];
        double ring = 0;
        for (int j = 0; j < na; ++j) {
          double th = 2 * M_PI * (j + 0.5) / na;
          Vec2 y{r * rho * std::cos(th), r * rho * std::sin(th)};
          ring += f(x + y) - fx - dot(p, y);
        }
        ring *= 2 * M_PI / na;
        double dens = kernel.kind == KernelKind::BallIndicator ? 1.0 / M_PI : kernel.profile(rho);
        s += g.weight[size_t(i)] * dens * rho * ring;
      }
    }
    double v = (kernel.m0 / (r * r)) * s;
    if (have) {
      double err = 0;
      v = detail::certified_pair(prev, v, &err);
      if (err <= 1e-6 * (1 + std::fabs(v))) return v;
    }
    prev = v;
    have = true;
  }
  throw Error(Error::QuadratureNotConverged, "polar quadrature did not certify");
}

// ----------------------------------------------------------------- field type

struct LaplacianField {
  double xmin = 0, ymin = 0, xmax = 0, ymax = 0;  // region bounding box
  double step = 0, r = 0;
  std::uint64_t nx = 0, ny = 0;
  std::vector<double> values;  // row-major, values[iy*nx+ix], NaN outside
  double l1_norm = 0;          // midpoint rule over inside cells
  double certified_rel_err = 0;

  Vec2 cell_center(std::uint64_t ix, std::uint64_t iy) const {
    return {xmin + (ix + 0.5) * step, ymin + (iy + 0.5) * step};
  }

  double integral() const {
    double s = 0;
    for (double v : values)
      if (std::isfinite(v)) s += v;
    return s * step * step;
  }

  void write_csv(std::ostream& os) const {
    os << "x,y,value\n";
    char line[128];
    for (std::uint64_t iy = 0; iy < ny; ++iy)
      for (std::uint64_t ix = 0; ix < nx; ++ix) {
        double v = values[size_t(iy * nx + ix)];
        if (!std::isfinite(v)) continue;
        Vec2 c = cell_center(ix, iy);
        std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g\n", c[0], c[1], v);
        os << line;
      }
  }

  void write_grid(std::ostream& os) const {
    const char magic[8] = {'K', 'T', 'R', 'G', 'R', 'I', 'D', '\0'};
    os.write(magic, 8);
    double head[6] = {xmin, ymin, xmax, ymax, step, r};
    os.write(reinterpret_cast<const char*>(head), sizeof head);
    std::uint64_t dims[2] = {nx, ny};
    os.write(reinterpret_cast<const char*>(dims), sizeof dims);
    os.write(reinterpret_cast<const char*>(values.data()),
             std::streamsize(values.size() * sizeof(double)));
  }

  static LaplacianField read_grid(std::istream& is) {
    char magic[8] = {};
    is.read(magic, 8);
    if (std::memcmp(magic, "KTRGRID\0", 8) != 0)
      throw Error(Error::ConfigError, "not a field grid stream");
    LaplacianField f;
    double head[6];
    is.read(reinterpret_cast<char*>(head), sizeof head);
    std::uint64_t dims[2];
    is.read(reinterpret_cast<char*>(dims), sizeof dims);
    f.xmin = head[0];
    f.ymin = head[1];
    f.xmax = head[2];
    f.ymax = head[3];
    f.step = head[4];
    f.r = head[5];
    f.nx = dims[0];
    f.ny = dims[1];
    if (!is || f.nx * f.ny > (std::uint64_t(1) << 32))
      throw Error(Error::ConfigError, "field grid header is corrupt");
    f.values.resize(size_t(f.nx * f.ny));
    is.read(reinterpret_cast<char*>(f.values.data()),
            std::streamsize(f.values.size() * sizeof(double)));
    if (!is) throw Error(Error::ConfigError, "field grid payload is short");
    double s = 0;
    for (double v : f.values)
      if (std::isfinite(v)) s += std::fabs(v);
    f.l1_norm = s * f.step * f.step;
    return f;
  }
};

namespace detail {

template <class Psi>
inline LaplacianField field_at_step(const Psi& psi, const Polytope2& region, double h,
                                    const KernelSpec& kernel) {
  double xmin = 1e300, ymin = 1e300, xmax = -1e300, ymax = -1e300;
  for (auto& v : region.vertices) {
    xmin = std::min(xmin, v[0]);
    xmax = std::max(xmax, v[0]);
    ymin = std::min(ymin, v[1]);
    ymax = std::max(ymax, v[1]);
  }
  LaplacianField f;
  f.xmin = xmin;
  f.ymin = ymin;
  f.xmax = xmax;
  f.ymax = ymax;
  f.step = h;
  f.r = kernel.r;
  f.nx = std::uint64_t(std::ceil((xmax - xmin) / h - 1e-9));
  f.ny = std::uint64_t(std::ceil((ymax - ymin) / h - 1e-9));
  f.values.assign(size_t(f.nx * f.ny), std::numeric_limits<double>::quiet_NaN());
  double s = 0;
  for (std::uint64_t iy = 0; iy < f.ny; ++iy)
    for (std::uint64_t ix = 0; ix < f.nx; ++ix) {
      Vec2 c = f.cell_center(ix, iy);
      if (!contains_point(region, c, 0.0)) continue;
      double v = delta_r(psi, c, kernel);
      f.values[size_t(iy * f.nx + ix)] = v;
      s += std::fabs(v);
    }
  f.l1_norm = s * h * h;
  return f;
}

}  // namespace detail

template <class Psi>
inline LaplacianField laplacian_field(const Psi& psi, const Polytope2& region, double r,
                                      KernelSpec kernel, double grid_step = 0) {
  if (region.halfspaces.empty() || region.vertices.empty())
    throw Error(Error::PreconditionsUnmet, "field region needs a full polytope description");
  kernel.r = r;
  validate_kernel(kernel);
  double h = grid_step > 0 ? grid_step : std::min(region.diameter_hint() / 16, r);
  if (!(h > 0)) throw Error(Error::PreconditionsUnmet, "field grid step must be positive");
  LaplacianField coarse = detail::field_at_step(psi, region, h, kernel);
  for (int round = 0; round < 3; ++round) {
    LaplacianField fine = detail::field_at_step(psi, region, coarse.step / 2, kernel);
    double diff = std::fabs(fine.l1_norm - coarse.l1_norm);
    if (diff <= 0.01 * fine.l1_norm + 1e-12) {
      fine.certified_rel_err = diff / (fine.l1_norm + 1e-300);
      return fine;
    }
    coarse = fine;
  }
  throw Error(Error::QuadratureNotConverged, "field mass did not stabilize under refinement");
}

// ------------------------------------------------------------ edge jump mass
//
// The distributional Laplacian of a piecewise affine convex function is the
// sum over active-cell edges of (edge length) x (slope jump across the edge).
inline double edge_jump_mass(const PiecewiseAffineConvex& psi, const Polytope2& window) {
  if (window.halfspaces.empty())
    throw Error(Error::PreconditionsUnmet, "jump mass window needs halfspaces");
  size_t J = psi.slopes.size();
  double total = 0;
  for (size_t i = 0; i < J; ++i)
    for (size_t j = i + 1; j < J; ++j) {
      Vec2 d = psi.slopes[i] - psi.slopes[j];
      double len = norm(d);
      if (len < 1e-14) continue;
      // line where pieces i and j tie: d.x = b_j - b_i
      Vec2 p0 = ((psi.intercepts[j] - psi.intercepts[i]) / (len * len)) * d;
      Vec2 u{-d[1] / len, d[0] / len};
      double lo = -1e300, hi = 1e300;
      auto cut = [&](const Vec2& n, double b) {
        double s = dot(n, u), c0 = b - dot(n, p0);
        if (std::fabs(s) < 1e-300) {
          if (c0 < 0) lo = 1, hi = 0;
          return;
        }
        if (s > 0) hi = std::min(hi, c0 / s);
        else lo = std::max(lo, c0 / s);
      };
      for (size_t k = 0; k < J && lo < hi; ++k) {
        if (k == i || k == j) continue;
        // stay where piece i dominates piece k
        cut(psi.slopes[k] - psi.slopes[i], psi.intercepts[i] - psi.intercepts[k]);
      }
      for (auto& hs : window.halfspaces) {
        if (lo >= hi) break;
        cut(hs.normal, hs.offset);
      }
      if (hi > lo) total += (hi - lo) * len;
    }
  return total;
}

}  // namespace kantoreg
