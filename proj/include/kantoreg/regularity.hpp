#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "kantoreg/mollifier.hpp"
#include "kantoreg/polyunion.hpp"

namespace kantoreg {

// Everything below is specific to the plane: the dimensional constants from the
// envelope construction are spelled out as numbers (n = 2, so 4n^2 = 16,
// 8n^2 = 32, 2n = 4, 3n = 6).

namespace detail {

inline PiecewiseAffineConvex rebase(const PiecewiseAffineConvex& psi, const Vec2& x0,
                                    const Vec2& p0) {
  PiecewiseAffineConvex out;
  out.origin = psi.origin;
  out.slopes.reserve(psi.slopes.size());
  out.intercepts.reserve(psi.intercepts.size());
  double k = psi.value(x0) - dot(p0, x0);
  for (size_t j = 0; j < psi.slopes.size(); ++j) {
    out.slopes.push_back(psi.slopes[j] - p0);
    out.intercepts.push_back(psi.intercepts[j] - k);
  }
  return out;
}

inline Chain dedupe_cloud(Chain pts, double eps) {
  std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
    return a[0] < b[0] || (a[0] == b[0] && a[1] < b[1]);
  });
  Chain out;
  for (auto& v : pts)
    if (out.empty() || dist(out.back(), v) > eps) out.push_back(v);
  return out;  // split clusters may keep a twin; duplicate contacts are harmless
}

inline Vec2 shape_apply(const std::array<std::array<double, 2>, 2>& A, const Vec2& d) {
  return {A[0][0] * d[0] + A[0][1] * d[1], A[1][0] * d[0] + A[1][1] * d[1]};
}

inline double shape_quad(const std::array<std::array<double, 2>, 2>& A, const Vec2& d) {
  return dot(d, shape_apply(A, d));
}

inline double shape_lam_max(const std::array<std::array<double, 2>, 2>& A) {
  double tr = A[0][0] + A[1][1];
  double det = A[0][0] * A[1][1] - A[0][1] * A[1][0];
  double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
  return tr / 2.0 + disc;
}

// inscribed polygon of the norm ball {|x - center|_A <= rad}
inline Polytope2 norm_ball_polygon(const Ellipse& E, double rad, int m) {
  Eigen::Matrix2d A;
  A << E.shape[0][0], E.shape[0][1], E.shape[1][0], E.shape[1][1];
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(A);
  if (es.info() != Eigen::Success || es.eigenvalues()(0) <= 0)
    throw Error(Error::DegenerateBody, "norm ball shape is not positive definite");
  Eigen::Matrix2d B = es.operatorInverseSqrt();
  Chain ch;
  ch.reserve(size_t(m));
  for (int i = 0; i < m; ++i) {
    double th = 2.0 * M_PI * (double(i) + 0.5) / double(m);
    Eigen::Vector2d w = B * Eigen::Vector2d(std::cos(th), std::sin(th));
    ch.push_back({E.center[0] + rad * w(0), E.center[1] + rad * w(1)});
  }
  return finalize_polytope2(std::move(ch), nullptr);
}

inline double dist_to_border(const Polytope2& K, const Vec2& p) {
  if (K.vertices.size() < 2) return 0.0;
  double best = 1e300;
  size_t n = K.vertices.size();
  for (size_t i = 0; i < n; ++i) {
    Vec2 a = K.vertices[i], b = K.vertices[(i + 1) % n];
    Vec2 ab = b - a;
    double s = std::clamp(dot(p - a, ab) / std::max(norm2(ab), 1e-300), 0.0, 1.0);
    best = std::min(best, dist(a + s * ab, p));
  }
  return best;
}

inline Vec2 closest_point_in(const Polytope2& K, const Vec2& p) {
  if (K.vertices.empty()) return p;
  if (K.vertices.size() >= 3 && contains_point(K, p)) return p;
  Vec2 best = K.vertices[0];
  double bd = 1e300;
  size_t n = K.vertices.size();
  for (size_t i = 0; i < n; ++i) {
    Vec2 a = K.vertices[i], b = K.vertices[(i + 1) % std::max<size_t>(n, 1)];
    Vec2 ab = b - a;
    double s = std::clamp(dot(p - a, ab) / std::max(norm2(ab), 1e-300), 0.0, 1.0);
    Vec2 c = a + s * ab;
    double d = dist(c, p);
    if (d < bd) {
      bd = d;
      best = c;
    }
  }
  return best;
}

// smallest dilation factor about the center of mass that captures p
inline double capture_factor(const Polytope2& K, const Vec2& p) {
  Vec2 cm = K.center_of_mass;
  double g = 1.0;
  for (auto& h : K.halfspaces) {
    double room = h.offset - dot(h.normal, cm);
    if (room <= 1e-14) continue;
    g = std::max(g, dot(h.normal, p - cm) / room);
  }
  return g;
}

// midpoint-sampled mean of the smeared laplacian over a body
inline double body_mean_smeared(const PiecewiseAffineConvex& psi, const Polytope2& body,
                                const KernelSpec& kernel, int sub) {
  Vec2 lo = body.vertices[0], hi = lo;
  for (auto& v : body.vertices) {
    lo = {std::min(lo[0], v[0]), std::min(lo[1], v[1])};
    hi = {std::max(hi[0], v[0]), std::max(hi[1], v[1])};
  }
  double hx = (hi[0] - lo[0]) / sub, hy = (hi[1] - lo[1]) / sub;
  double acc = 0;
  int inside = 0;
  for (int i = 0; i < sub; ++i)
    for (int j = 0; j < sub; ++j) {
      Vec2 c{lo[0] + (i + 0.5) * hx, lo[1] + (j + 0.5) * hy};
      if (!contains_point(body, c, 0.0)) continue;
      acc += delta_r(psi, c, kernel);
      ++inside;
    }
  if (inside == 0) return delta_r(psi, body.center_of_mass, kernel);
  return acc / inside;
}

// midpoint quadrature weights: border cells carry their clipped area, so the
// covered region matches |region| exactly instead of its grid over-covering
inline std::vector<double> clipped_cell_weights(const LaplacianField& f,
                                                const Polytope2& region) {
  std::vector<double> w(f.values.size(), 0.0);
  double h = f.step;
  for (std::size_t k = 0; k < f.values.size(); ++k) {
    if (!std::isfinite(f.values[k])) continue;
    Vec2 c = f.cell_center(k % std::size_t(f.nx), k / std::size_t(f.nx));
    bool full = true;
    for (int sx = -1; sx <= 1 && full; sx += 2)
      for (int sy = -1; sy <= 1 && full; sy += 2)
        full = contains_point(region, {c[0] + sx * h / 2, c[1] + sy * h / 2}, 1e-12);
    if (full) {
      w[k] = h * h;
      continue;
    }
    std::vector<Halfspace2> hs = region.halfspaces;
    hs.push_back({{1, 0}, c[0] + h / 2});
    hs.push_back({{-1, 0}, -(c[0] - h / 2)});
    hs.push_back({{0, 1}, c[1] + h / 2});
    hs.push_back({{0, -1}, -(c[1] - h / 2)});
    try {
      w[k] = polytope_from_halfspaces(hs).vol;
    } catch (const Error&) {
      w[k] = 0.0;
    }
  }
  return w;
}

}  // namespace detail

// ------------------------------------------------------- contact construction
//
// For a bounded section S(x0, p0, t): rebase the potential, wrap S in its inner
// max-area ellipse (shape A, so {|x - z|_A <= 1} subset S subset {|x - z|_A <= 2}),
// and look at w = psi - t - p on the window {|x - z|_A <= 4} with
// p(x) = (t/2)(|x - z|_A^2 / 16 - 1).  The lower convex envelope of w, capped at
// zero on the window boundary, touches w only at vertices of the power diagram:
// w is strictly concave inside each cell and along each edge, so any supporting
// plane would cross it there.  That reduces the envelope to finitely many
// halfspace systems, one per diagram vertex, with one constraint per vertex of
// the diagram clipped to the window (the minimum of a concave function over a
// cell sits at cell vertices, so these constraints imply the continuum ones).

struct ContactPoint {
  Vec2 y0{};         // contact location: a power-diagram vertex inside S
  Vec2 q0{};         // representative envelope slope at y0
  Polytope2 slopes;  // all admissible envelope slopes (zero volume when lower-dimensional)
  Vec2 grad_p{};     // gradient of the localizing quadratic at y0
  Vec2 q{};          // q0 + grad_p: subgradient of the rebased potential at y0
};

struct ContactConstruction {
  Section S;
  Ellipse inner;                 // inner ellipse of the section body
  Polytope2 window;              // inscribed polygon of {|x - z|_A <= 4}
  PiecewiseAffineConvex rebased; // psi - psi(x0) - p0 . (x - x0)
  std::vector<ContactPoint> contacts;
  std::vector<Polytope2> v_parts;  // envelope-slope cells shifted by grad_p (rebased slopes)
  double v_area = 0;
  double c_lower = 0;         // |V| |S| / t^2
  double hull_spread = 0;     // area of the contact hull relative to |S|
  double minorant_margin = 0; // worst slack of the quadratic minorant, in units of t
};

inline ContactConstruction contact_construction(const PiecewiseAffineConvex& psi,
                                                const Section& S) {
  if (S.t <= 0 || S.body.vertices.size() < 3 || S.body.vol <= 0)
    throw Error(Error::EnvelopeFailed, "section too thin to carry an envelope");
  ContactConstruction cc;
  cc.S = S;
  try {
    cc.inner = john_ellipsoid(S.body);
  } catch (const Error&) {
    throw Error(Error::EnvelopeFailed, "inner ellipse of the section degenerates");
  }
  cc.rebased = detail::rebase(psi, S.x0, S.p0);
  cc.window = detail::norm_ball_polygon(cc.inner, 4.0, 192);
  const double t = S.t;
  const Vec2 z = cc.inner.center;
  const auto& A = cc.inner.shape;

  auto p_val = [&](const Vec2& x) {
    return 0.5 * t * (detail::shape_quad(A, x - z) / 16.0 - 1.0);
  };

  auto cells = power_cells(cc.rebased, cc.window);
  detail::Chain cloud;
  for (auto& cell : cells)
    for (auto& v : cell.vertices) cloud.push_back(v);
  double dscale = 1 + cc.window.diameter_hint();
  cloud = detail::dedupe_cloud(std::move(cloud), 1e-10 * dscale);
  if (cloud.empty()) throw Error(Error::EnvelopeFailed, "window captured no diagram geometry");

  std::vector<double> wv(cloud.size());
  std::vector<char> border(cloud.size(), 0);
  for (size_t i = 0; i < cloud.size(); ++i) {
    wv[i] = cc.rebased.value(cloud[i]) - t - p_val(cloud[i]);
    for (auto& h : cc.window.halfspaces)
      if (dot(h.normal, cloud[i]) >= h.offset - 1e-9 * dscale) {
        border[i] = 1;
        break;
      }
  }

  const double slack = 1e-8 * t;
  double qscale = 1 + cc.rebased.lipschitz() + t * detail::shape_lam_max(A) * dscale;
  for (size_t i = 0; i < cloud.size(); ++i) {
    if (border[i] || wv[i] > slack) continue;
    std::vector<detail::LpCon> cons;
    std::vector<Halfspace2> hs;
    cons.reserve(cloud.size());
    hs.reserve(cloud.size());
    for (size_t j = 0; j < cloud.size(); ++j) {
      Vec2 d = cloud[j] - cloud[i];
      double len = norm(d);
      if (len < 1e-12 * dscale) continue;
      double cap = border[j] ? std::min(wv[j], 0.0) : wv[j];
      double rhs = (cap - wv[i] + slack) / len;
      Vec2 nrm = (1.0 / len) * d;
      cons.push_back({{nrm[0], nrm[1], 0, 0}, rhs});
      hs.push_back({nrm, rhs});
    }
    auto feas = detail::lp_solve(2, cons, {0, 0, 0, 0}, 1e7 * qscale);
    if (feas.status != detail::LpResult::Optimal) continue;

    ContactPoint cp;
    cp.y0 = cloud[i];
    cp.grad_p = (t / 16.0) * detail::shape_apply(A, cp.y0 - z);
    try {
      cp.slopes = polytope_from_halfspaces(hs);
      cp.q0 = cp.slopes.center_of_mass;
    } catch (const Error&) {
      cp.slopes = Polytope2{};  // contact with a lower-dimensional slope set
      cp.q0 = {feas.x[0], feas.x[1]};
    }
    cp.q = cp.q0 + cp.grad_p;
    cc.contacts.push_back(std::move(cp));
  }
  if (cc.contacts.empty())
    throw Error(Error::EnvelopeFailed, "envelope never touches: no feasible contact system");

  for (auto& cp : cc.contacts)
    if (cp.slopes.vol > 0) cc.v_parts.push_back(translate(cp.slopes, cp.grad_p));
  cc.v_area = cc.v_parts.empty() ? 0.0 : union_area(cc.v_parts);
  cc.c_lower = cc.v_area * S.body.vol / (t * t);

  if (cc.contacts.size() >= 3) {
    detail::Chain pts;
    for (auto& cp : cc.contacts) pts.push_back(cp.y0);
    cc.hull_spread = polytope_from_vertices(pts).vol / S.body.vol;
  }

  // quadratic minorant: psi(x) - psi(y0) >= (t/32)|x - y0|_A^2 + q.(x - y0) on the
  // window; the gap is concave per cell, so checking the vertex cloud is exact.
  double worst = 1e300;
  for (auto& cp : cc.contacts) {
    double base = cc.rebased.value(cp.y0);
    for (size_t j = 0; j < cloud.size(); ++j) {
      Vec2 d = cloud[j] - cp.y0;
      double gap = cc.rebased.value(cloud[j]) - base - (t / 32.0) * detail::shape_quad(A, d) -
                   dot(cp.q, d);
      worst = std::min(worst, gap);
    }
  }
  cc.minorant_margin = worst / t;
  return cc;
}

// ----------------------------------------------------------------- fattening
//
// Around each contact y0 grow the section S(y0, q, h) and, on the slope side,
// W_h(q) = q + (h/2) (S(y0, q, h) - y0)^polar.  The height h0 balances the
// quadratic minorant against the worst pairing (x - y0).(q' - q) <= C h over the
// grown sections, so the smeared laplacian keeps half of its contact lower
// bound on the whole union.  C is resolved by a fixed point: shrinking h only
// shrinks the measured pairing.

struct FattenedSets {
  double h = 0;
  double h0 = 0;        // t r^2 Tr(A) / (32 C m0)
  double engulf_C = 0;  // pairing constant the fixed point settled on
  std::vector<Polytope2> sigma_parts;  // sections S(y0, q, h)
  std::vector<Polytope2> v_parts;      // W_h bodies united with the zero-height slope cells
  double sigma_area = 0;
  double v_area = 0;
  double sigma_ratio = 0;   // |union of sigma parts| / |S|
  double t_over_ell2 = 0;
  double pairing_max = 0;   // measured max of (x - y0).(q' - q) / h
  double conj_slack = 0;    // worst escape of a dual cell from its section
  double spread_factor = 0; // smallest dilation of S capturing every sigma part
  double drpsi_min = 0;     // min sampled smeared laplacian over the union
  double drpsi_bound = 0;   // (t/32) Tr(A)
  double c_pointwise = 0;   // drpsi_min * ell(S)^2 / t
  int samples_used = 0;
  ContactConstruction parent;
};

namespace detail {

inline double pairing_over_parts(const PiecewiseAffineConvex& rebased,
                                 const std::vector<ContactPoint>& contacts,
                                 const std::vector<Polytope2>& parts, double h) {
  double worst = 0;
  for (size_t i = 0; i < parts.size(); ++i) {
    const auto& cp = contacts[i];
    for (auto& x : parts[i].vertices) {
      auto sub = subdifferential(rebased, x, 1e-9 * (1 + std::fabs(rebased.value(x))));
      if (sub.body.vertices.empty()) {
        worst = std::max(worst, dot(x - cp.y0, rebased.gradient(x) - cp.q) / h);
        continue;
      }
      for (auto& qp : sub.body.vertices)
        worst = std::max(worst, dot(x - cp.y0, qp - cp.q) / h);
    }
  }
  return worst;
}

// the envelope slope carries a relaxation-sized defect; snap it back when needed
inline Vec2 snap_to_subdifferential(const PiecewiseAffineConvex& psi, const Vec2& x,
                                    const Vec2& q) {
  if (is_subgradient(psi, x, q, 1e-8)) return q;
  auto sub = subdifferential(psi, x, 1e-10 * (1 + std::fabs(psi.value(x))));
  Vec2 s = closest_point_in(sub.body, q);
  return s + 1e-9 * (sub.body.center_of_mass - s);
}

inline std::vector<Polytope2> grow_sections(const PiecewiseAffineConvex& rebased,
                                            const std::vector<ContactPoint>& contacts,
                                            double h, const Polytope2& bound) {
  std::vector<Polytope2> parts;
  parts.reserve(contacts.size());
  for (auto& cp : contacts) {
    Vec2 q = snap_to_subdifferential(rebased, cp.y0, cp.q);
    try {
      parts.push_back(section(rebased, cp.y0, q, h, bound).body);
    } catch (const Error& e) {
      if (e.kind == Error::UnboundedSection)
        throw Error(Error::PreconditionsUnmet,
                    "fattening height floods the window: h = " + std::to_string(h));
      throw;
    }
  }
  return parts;
}

}  // namespace detail

inline FattenedSets fatten(const ContactConstruction& cc, const PiecewiseAffineConvex& psi,
                           double r, KernelSpec kernel, double delta = 0.0,
                           double h_request = -1.0, double c2_threshold = 0.0) {
  (void)psi;  // the rebased copy carries the same smeared laplacian
  FattenedSets fs;
  fs.parent = cc;
  const double t = cc.S.t;
  const double ell = radii(cc.S.body).inner;
  const double trA = cc.inner.trace();
  fs.t_over_ell2 = t / (ell * ell);
  if (r > ell * (1 + 1e-12))
    throw Error(Error::PreconditionsUnmet,
                "smearing radius exceeds the section width: r/ell = " + std::to_string(r / ell));
  if (delta > 0 && r < std::sqrt(delta) * (1 - 1e-12))
    throw Error(Error::PreconditionsUnmet, "radius below the critical scale: r/sqrt(delta) = " +
                                               std::to_string(r / std::sqrt(delta)));
  if (fs.t_over_ell2 < c2_threshold)
    throw Error(Error::PreconditionsUnmet, "height-to-width ratio too small: t/ell^2 = " +
                                               std::to_string(fs.t_over_ell2));
  kernel.r = r;
  validate_kernel(kernel);
  fs.drpsi_bound = t * trA / 32.0;

  if (h_request == 0.0) {  // definition collapse: the zero-height sets are the contacts
    fs.h = fs.h0 = 0.0;
    fs.v_parts = cc.v_parts;
    fs.v_area = cc.v_area;
    fs.sigma_ratio = 0.0;
    double mn = 1e300;
    for (auto& cp : cc.contacts)
      mn = std::min(mn, delta_r(cc.rebased, cp.y0, kernel,
                                detail::snap_to_subdifferential(cc.rebased, cp.y0, cp.q)));
    fs.drpsi_min = cc.contacts.empty() ? 0.0 : mn;
    fs.c_pointwise = fs.drpsi_min * ell * ell / t;
    fs.samples_used = int(cc.contacts.size());
    return fs;
  }

  double C = 1.0;
  double h = 0.0;
  std::vector<Polytope2> parts;
  for (int pass = 0; pass < 6; ++pass) {
    h = h_request > 0 ? h_request : t * r * r * trA / (32.0 * C * kernel.m0);
    parts = detail::grow_sections(cc.rebased, cc.contacts, h, cc.window);
    fs.pairing_max = detail::pairing_over_parts(cc.rebased, cc.contacts, parts, h);
    if (h_request > 0 || fs.pairing_max <= C * (1 + 1e-9)) break;
    C = fs.pairing_max * 1.05;
  }
  fs.h = h;
  fs.engulf_C = C;
  fs.h0 = t * r * r * trA / (32.0 * C * kernel.m0);
  fs.sigma_parts = parts;
  fs.sigma_area = union_area(parts);
  fs.sigma_ratio = fs.sigma_area / cc.S.body.vol;

  // dual side: W_h around each contact slope, united with the zero-height cells
  fs.v_parts = cc.v_parts;
  double cslack = 0;
  for (size_t i = 0; i < parts.size(); ++i) {
    const auto& cp = cc.contacts[i];
    if (parts[i].vol <= 0 || parts[i].vertices.size() < 3) continue;
    Polytope2 polar = polar_body(parts[i], cp.y0);
    detail::Chain ch;
    ch.reserve(polar.vertices.size());
    for (auto& v : polar.vertices) ch.push_back(cp.q + (h / 2.0) * v);
    Polytope2 W = detail::finalize_polytope2(std::move(ch), nullptr);
    double pscale = 1 + parts[i].diameter_hint();
    for (auto& wq : W.vertices) {
      bool esc = false;
      Polytope2 face = conjugate_subdifferential(cc.rebased, wq, cc.window, &esc);
      for (auto& fv : face.vertices)
        for (auto& hp : parts[i].halfspaces)
          cslack = std::max(cslack, (dot(hp.normal, fv) - hp.offset) / pscale);
    }
    if (W.vol > 0) fs.v_parts.push_back(std::move(W));
  }
  fs.conj_slack = cslack;
  fs.v_area = union_area(fs.v_parts);

  double g = 1.0;
  for (auto& part : parts)
    for (auto& v : part.vertices) g = std::max(g, detail::capture_factor(cc.S.body, v));
  fs.spread_factor = g;

  // sample the smeared laplacian where the local ball stays inside the window
  double lam = std::sqrt(detail::shape_lam_max(cc.inner.shape));
  double mn = 1e300;
  int used = 0;
  for (size_t i = 0; i < parts.size(); ++i) {
    detail::Chain pts{cc.contacts[i].y0, parts[i].center_of_mass};
    for (auto& v : parts[i].vertices) {
      pts.push_back(parts[i].center_of_mass + 0.9 * (v - parts[i].center_of_mass));
      pts.push_back(v);
    }
    for (auto& x : pts) {
      if (std::sqrt(detail::shape_quad(cc.inner.shape, x - cc.inner.center)) + r * lam >
          4.0 * (1 - 1e-9))
        continue;
      mn = std::min(mn, delta_r(cc.rebased, x, kernel));
      ++used;
    }
  }
  fs.samples_used = used;
  fs.drpsi_min = used ? mn : 0.0;
  fs.c_pointwise = fs.drpsi_min * ell * ell / t;
  return fs;
}

// ------------------------------------------------------------ proof thresholds
//
// The covering argument only handles heights below eps * rho, with eps read off
// the measured dilation exponent (2 S(t) subset S(M t) gives C S subset
// S(C^beta t) for beta = log2 M): C1 = 6^beta covers the window blow-up,
// Css = Cstar^beta the covering enlargement.  The entry threshold alpha0 and
// radius cap r0 are then sampled directly from their defining quantities.

struct ChebyshevThresholds {
  double C1 = 0;
  double Css = 0;
  double eps1 = 0, eps2 = 0, eps = 0;
  double alpha0 = 0;  // max sampled section-average of the smeared laplacian, t in [eps rho, rho]
  double r0 = 0;      // min sampled border distance of the engulfing-scale section
};

inline ChebyshevThresholds chebyshev_thresholds(const PiecewiseAffineConvex& psi,
                                                const Polytope2& omega_prime, double rho,
                                                double r, KernelSpec kernel,
                                                const SectionPropertyReport& props,
                                                int grid = 3) {
  ChebyshevThresholds th;
  double beta = std::max(props.beta_hat, 1.0);
  th.C1 = std::pow(6.0, beta);
  th.Css = std::pow(std::max(props.Cstar_hat, 1.0), beta);
  th.eps1 = 1.0 / th.C1;
  th.eps2 = 1.0 / th.Css;
  th.eps = th.eps1 * th.eps2;
  kernel.r = r;
  double M = std::max(props.M_hat, 2.0);
  Polytope2 bound = dilate(omega_prime, 16.0);
  Vec2 lo = omega_prime.vertices[0], hi = lo;
  for (auto& v : omega_prime.vertices) {
    lo = {std::min(lo[0], v[0]), std::min(lo[1], v[1])};
    hi = {std::max(hi[0], v[0]), std::max(hi[1], v[1])};
  }
  double a0 = 0, r0 = 1e300;
  for (int i = 0; i < grid; ++i)
    for (int j = 0; j < grid; ++j) {
      Vec2 x{lo[0] + (i + 0.5) * (hi[0] - lo[0]) / grid, lo[1] + (j + 0.5) * (hi[1] - lo[1]) / grid};
      if (!contains_point(omega_prime, x, 0.0)) continue;
      Vec2 q = pick_subgradient(psi, x);
      // a section that escapes the window sits in a flat facet; it carries no
      // curvature mass and drops out of both thresholds
      for (double t : {th.eps * rho, std::sqrt(th.eps) * rho, rho}) {
        try {
          Section S = section(psi, x, q, t, bound);
          a0 = std::max(a0, detail::body_mean_smeared(psi, S.body, kernel, 4));
        } catch (const Error&) {
        }
      }
      try {
        Section SM = section(psi, x, q, M * th.eps * rho, bound);
        r0 = std::min(r0, detail::dist_to_border(SM.body, x));
      } catch (const Error&) {
      }
    }
  th.alpha0 = a0;
  th.r0 = r0 == 1e300 ? 0.0 : r0;
  return th;
}

// ------------------------------------------------------------ critical heights
//
// For each grid point with smeared laplacian above alpha, bisect for the
// largest height at which either the height-to-width ratio or the scaled
// border-distance test still reaches alpha.  Branch 1 feeds the fattening
// machinery, branch 2 certifies the height floor alpha r^2 / (m0 M).

struct CriticalHeightEntry {
  Vec2 x{}, q{};
  double drpsi = 0;
  double t = 0;
  double ell = 0, L = 0;  // inner and outer radius of the settled section
  double ratio1 = 0;      // t / ell^2
  double ratio2 = 0;      // r alpha / border distance at the engulfing scale
  int branch = 0;         // 1, 2, or 0 when the height capped at rho
};

struct CriticalHeightField {
  double alpha = 0, r = 0, rho = 0;
  ChebyshevThresholds thresholds;
  std::vector<CriticalHeightEntry> entries;
  double c_tx = 0;   // min ratio1 / alpha over entries
  double C_int = 0;  // max sampled section-average / alpha on [t(x), eps1 rho]
  int capped = 0;
};

inline CriticalHeightField critical_heights(const PiecewiseAffineConvex& psi, double alpha,
                                            double r, const Polytope2& omega_prime, double rho,
                                            double grid_step, KernelSpec kernel,
                                            const SectionPropertyReport& props) {
  if (alpha <= 0 || r <= 0 || rho <= 0 || grid_step <= 0)
    throw Error(Error::PreconditionsUnmet, "critical heights need positive alpha, r, rho, step");
  kernel.r = r;
  validate_kernel(kernel);
  CriticalHeightField field;
  field.alpha = alpha;
  field.r = r;
  field.rho = rho;
  field.thresholds = chebyshev_thresholds(psi, omega_prime, rho, r, kernel, props);
  double M = std::max(props.M_hat, 2.0);
  Polytope2 bound = dilate(omega_prime, 16.0);

  Vec2 lo = omega_prime.vertices[0], hi = lo;
  for (auto& v : omega_prime.vertices) {
    lo = {std::min(lo[0], v[0]), std::min(lo[1], v[1])};
    hi = {std::max(hi[0], v[0]), std::max(hi[1], v[1])};
  }
  int nx = std::max(1, int(std::ceil((hi[0] - lo[0]) / grid_step - 1e-9)));
  int ny = std::max(1, int(std::ceil((hi[1] - lo[1]) / grid_step - 1e-9)));

  double c_tx = 1e300, C_int = 0;
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j) {
      Vec2 x{lo[0] + (i + 0.5) * grid_step, lo[1] + (j + 0.5) * grid_step};
      if (!contains_point(omega_prime, x, 0.0)) continue;
      double v = delta_r(psi, x, kernel);
      if (v <= alpha) continue;
      CriticalHeightEntry e;
      e.x = x;
      e.q = pick_subgradient(psi, x);
      e.drpsi = v;

      double bigd = 1 + bound.diameter_hint();
      auto ratios = [&](double t) -> std::pair<double, double> {
        double el = bigd, d = bigd;  // escaped sections read as huge
        try {
          Section S = section(psi, x, e.q, t, bound);
          el = radii(S.body).inner;
        } catch (const Error&) {}
        try {
          Section SM = section(psi, x, e.q, M * t, bound);
          d = detail::dist_to_border(SM.body, x);
        } catch (const Error&) {}
        return {t / (el * el), r * alpha / std::max(d, 1e-300)};
      };
      auto reaches = [&](double t) {
        auto [r1, r2] = ratios(t);
        return std::max(r1, r2) >= alpha;
      };

      double tx;
      bool capped = false;
      if (reaches(rho)) {
        tx = rho;
        capped = true;
        ++field.capped;
      } else {
        double lo_t = rho * 1e-6;
        int guard = 0;
        while (!reaches(lo_t) && guard++ < 40) lo_t *= 0.25;
        if (guard >= 40) continue;  // no height reaches the level: skip the point
        double hi_t = rho;
        for (int it = 0; it < 48; ++it) {
          double mid = 0.5 * (lo_t + hi_t);
          (reaches(mid) ? lo_t : hi_t) = mid;
        }
        tx = lo_t;
      }
      e.t = tx;
      e.ell = e.L = bigd;
      try {
        Section St = section(psi, x, e.q, tx, bound);
        auto rp = radii(St.body);
        e.ell = rp.inner;
        e.L = rp.outer;
      } catch (const Error&) {
      }
      auto [r1, r2] = ratios(tx);
      e.ratio1 = r1;
      e.ratio2 = r2;
      e.branch = capped ? 0 : (r1 >= r2 ? 1 : 2);
      c_tx = std::min(c_tx, r1 / alpha);

      double tcap = field.thresholds.eps1 * rho;
      std::vector<double> probes{tx};
      if (tcap > tx) {
        probes.push_back(std::sqrt(tx * tcap));
        probes.push_back(tcap);
      }
      for (double tp : probes) {
        try {
          Section Sp = section(psi, x, e.q, tp, bound);
          C_int = std::max(C_int, detail::body_mean_smeared(psi, Sp.body, kernel, 4) / alpha);
        } catch (const Error&) {
        }
      }
      field.entries.push_back(std::move(e));
    }
  field.c_tx = field.entries.empty() ? 0.0 : c_tx;
  field.C_int = C_int;
  return field;
}

// ------------------------------------------------------------- section bound
//
// Sampled mean of the smeared laplacian over the section against
// Tr(A) sup of the rebased potential on {|x - z|_A <= 6}; the sup over the
// inscribed polygon is exact at its vertices by convexity.

inline double sup_bound_check(const PiecewiseAffineConvex& psi, const Section& S,
                              KernelSpec kernel, double r) {
  kernel.r = r;
  validate_kernel(kernel);
  Ellipse E = john_ellipsoid(S.body);
  PiecewiseAffineConvex rebased = detail::rebase(psi, S.x0, S.p0);
  double mean = detail::body_mean_smeared(rebased, S.body, kernel, 6);
  Polytope2 hull = detail::norm_ball_polygon(E, 6.0, 96);
  double sup = 0;
  for (auto& v : hull.vertices) sup = std::max(sup, rebased.value(v));
  double denom = E.trace() * sup;
  if (mean <= 1e-12 * (1 + E.trace())) return 0.0;
  return mean / std::max(denom, 1e-300);
}

// -------------------------------------------------------- reversed chebyshev

struct ChebyshevPair {
  double alpha = 0;
  double lhs = 0;          // integral of the smeared laplacian over {>= alpha} in the inner set
  double rhs_measure = 0;  // area of {>= c alpha} in the enlarged set
  double rhs = 0;          // alpha * rhs_measure
  double enlargement = 0;  // local mode: measured radius growth
};

struct ChebyshevReport {
  std::vector<ChebyshevPair> pairs;
  double c_hat = 1.0;
  double C_hat = 0;
  ChebyshevThresholds thresholds;
  bool local = false;
  Vec2 center{};
  double R = 0;
};

struct ChebyshevQuery {
  std::vector<double> alphas;
  double r = 0;
  KernelSpec kernel;
  Polytope2 omega;        // domain carrying the right-hand measure
  Polytope2 omega_prime;  // inner window carrying the left-hand integral
  double rho = 0;
  double grid_step = 0;   // 0: r / 3
  bool local = false;
  Vec2 center{};
  double R = 0;
};

inline ChebyshevReport reversed_chebyshev(const PiecewiseAffineConvex& psi, ChebyshevQuery query,
                                          const SectionPropertyReport& props) {
  if (query.alphas.empty() || query.r <= 0 || query.rho <= 0)
    throw Error(Error::PreconditionsUnmet, "chebyshev query needs alphas, r, rho");
  std::sort(query.alphas.begin(), query.alphas.end());
  query.kernel.r = query.r;
  double step = query.grid_step > 0 ? query.grid_step : query.r / 3.0;
  ChebyshevReport rep;
  rep.local = query.local;
  rep.center = query.center;
  rep.R = query.R;
  rep.thresholds =
      chebyshev_thresholds(psi, query.omega_prime, query.rho, query.r, query.kernel, props);

  LaplacianField field = laplacian_field(psi, query.omega, query.r, query.kernel, step);
  auto cellw = detail::clipped_cell_weights(field, query.omega);

  // local mode: per alpha, the enlargement is the largest settled section
  // diameter over the covered ball, measured by the critical-height machinery
  std::vector<double> grow(query.alphas.size(), 0.0);
  if (query.local) {
    Polytope2 ball = detail::norm_ball_polygon(Ellipse{query.center, {{{1, 0}, {0, 1}}}},
                                               query.R, 48);
    for (size_t a = 0; a < query.alphas.size(); ++a) {
      auto fld = critical_heights(psi, query.alphas[a], query.r, ball, query.rho,
                                  std::max(step * 2, query.R / 4), query.kernel, props);
      for (auto& e : fld.entries) grow[a] = std::max(grow[a], 2.0 * e.L);
    }
  }

  auto accumulate = [&](double alpha, double level, double growR, ChebyshevPair& pr) {
    for (size_t k = 0; k < field.values.size(); ++k) {
      double v = field.values[k];
      if (!std::isfinite(v) || cellw[k] <= 0) continue;
      Vec2 c = field.cell_center(k % size_t(field.nx), k / size_t(field.nx));
      bool in_inner = query.local ? dist(c, query.center) <= query.R
                                  : contains_point(query.omega_prime, c, 0.0);
      bool in_outer = query.local ? dist(c, query.center) <= query.R + growR : true;
      if (in_inner && v >= alpha) pr.lhs += v * cellw[k];
      if (in_outer && v >= level) pr.rhs_measure += cellw[k];
    }
  };

  // minimax per level fraction; a tail superlevel measure scales like
  // (c alpha)^{-n}, so the objective is compared across the grid after
  // normalizing by c^n and the largest c within tolerance of the minimum
  // wins -- otherwise a scale-invariant tail flips the pick between
  // neighboring alpha windows
  const double cgrid[] = {1.0, 0.5, 0.25, 0.125, 0.0625};
  std::vector<std::pair<double, double>> fits;  // (c, minimax C) in descending c
  double best_obj = 1e300;
  for (double c : cgrid) {
    double worst = 0;
    bool valid = true;
    for (size_t a = 0; a < query.alphas.size(); ++a) {
      ChebyshevPair pr;
      accumulate(query.alphas[a], c * query.alphas[a], grow[a], pr);
      if (pr.lhs <= 0) continue;
      if (pr.rhs_measure <= 0) {
        valid = false;
        break;
      }
      worst = std::max(worst, pr.lhs / (query.alphas[a] * pr.rhs_measure));
    }
    if (!valid || worst <= 0) continue;
    fits.emplace_back(c, worst);
    best_obj = std::min(best_obj, worst / (c * c));
  }
  rep.c_hat = 1.0;
  rep.C_hat = 0.0;
  for (auto& [c, worst] : fits)
    if (worst / (c * c) <= 1.1 * best_obj) {
      rep.c_hat = c;
      rep.C_hat = worst;
      break;
    }
  for (size_t a = 0; a < query.alphas.size(); ++a) {
    ChebyshevPair pr;
    pr.alpha = query.alphas[a];
    pr.enlargement = grow[a];
    accumulate(query.alphas[a], rep.c_hat * query.alphas[a], grow[a], pr);
    pr.rhs = pr.alpha * pr.rhs_measure;
    rep.pairs.push_back(pr);
  }
  return rep;
}

// ------------------------------------------------------------ holder modulus
//
// Sampled pairs test the engulfing-derived growth bound: above the resolution
// cutoff the excess divided by |x - y|^(1 + 1/theta) stays bounded; below it a
// companion sweep shows the ratio escaping on creased potentials.  Every vertex
// of the subdifferential at the base point is tested and the worst kept.

struct ModulusPair {
  Vec2 x{}, y{}, q{};
  double dist = 0;
  double excess = 0;
  double ratio = 0;
};

struct ModulusBin {
  double lo = 0, hi = 0;
  double max_ratio = 0;
  int count = 0;
};

struct ModulusTable {
  double cutoff = 0;  // cutoff_coeff * delta^(1/beta)
  double upper = 0;   // largest admissible pair distance seen
  double theta = 0, beta = 0, delta = 0;
  double modulus = 0;  // max ratio at or above the cutoff
  std::vector<ModulusBin> bins;
  std::vector<ModulusPair> worst;  // top pairs behind the modulus
  double below_cutoff_max = 0;
  int count = 0, below_count = 0;
  double engulf_margin = 0;  // min of (p - q).(x - y) - (1 + theta)/theta * excess over passing pairs
  int engulf_checked = 0;
};

inline ModulusTable c1alpha_modulus(const PiecewiseAffineConvex& psi, const Polytope2& omega_pp,
                                    double rho, double delta, double beta_hat, double theta_hat,
                                    int pair_samples, std::uint64_t seed = 0,
                                    double cutoff_coeff = 1.0) {
  if (pair_samples <= 0 || theta_hat <= 0 || beta_hat <= 0)
    throw Error(Error::PreconditionsUnmet, "modulus scan needs positive samples and exponents");
  ModulusTable tab;
  tab.theta = theta_hat;
  tab.beta = beta_hat;
  tab.delta = delta;
  tab.cutoff = delta > 0 ? cutoff_coeff * std::pow(delta, 1.0 / beta_hat) : 0.0;
  double Lgrad = detail::min_enclosing_ball<2>(psi.slopes).r;
  double global_cap = rho / (2.0 * std::max(Lgrad, 1e-300));
  double expo = 1.0 + 1.0 / theta_hat;
  double vscale = 1 + omega_pp.diameter_hint();

  double lo_d = tab.cutoff > 0 ? tab.cutoff / 50.0 : global_cap * 1e-4;
  Rng rng(seed);
  std::vector<ModulusPair> above;
  Vec2 ylo = omega_pp.vertices[0], yhi = ylo;
  for (auto& v : omega_pp.vertices) {
    ylo = {std::min(ylo[0], v[0]), std::min(ylo[1], v[1])};
    yhi = {std::max(yhi[0], v[0]), std::max(yhi[1], v[1])};
  }
  Polytope2 section_bound = dilate(omega_pp, 16.0);
  for (int s = 0; s < pair_samples; ++s) {
    Vec2 y{rng.uniform(ylo[0], yhi[0]), rng.uniform(ylo[1], yhi[1])};
    if (!contains_point(omega_pp, y, 0.0)) continue;
    double cap = std::min(global_cap, detail::dist_to_border(omega_pp, y));
    if (cap <= lo_d) continue;
    double d = rng.log_uniform(lo_d, cap);
    double th = rng.uniform(0.0, 2.0 * M_PI);
    Vec2 x = y + d * Vec2{std::cos(th), std::sin(th)};
    if (!contains_point(omega_pp, x, 0.0)) continue;

    auto sub = subdifferential(psi, y, 1e-10 * (1 + std::fabs(psi.value(y))));
    detail::Chain qs = sub.body.vertices;
    if (qs.empty()) qs.push_back(psi.gradient(y));
    ModulusPair best;
    best.x = x;
    best.y = y;
    best.dist = d;
    for (auto& q : qs) {
      double ex = psi.value(x) - psi.value(y) - dot(q, x - y);
      double ratio = ex / std::pow(d, expo);
      if (ratio >= best.ratio) {
        best.ratio = ratio;
        best.excess = ex;
        best.q = q;
      }
    }
    if (d >= tab.cutoff) {
      tab.upper = std::max(tab.upper, d);
      tab.modulus = std::max(tab.modulus, best.ratio);
      ++tab.count;
      above.push_back(best);

      // engulfing chain: when S(x, p, t) lands inside S(y, q, theta t) the
      // growth bound follows pointwise
      Vec2 p = pick_subgradient(psi, x);
      double t = psi.value(y) - psi.value(x) - dot(p, y - x);
      if (t > 1e-13 * vscale) {
        bool engulfs = true;
        try {
          Section Sx = section(psi, x, p, t, section_bound);
          for (auto& v : Sx.body.vertices)
            if (affine_excess(psi, y, best.q, v) > theta_hat * t * (1 + 1e-9)) {
              engulfs = false;
              break;
            }
        } catch (const Error&) {
          engulfs = false;
        }
        if (engulfs) {
          double lhs = (1.0 + theta_hat) / theta_hat * best.excess;
          double rhs = dot(p - best.q, x - y);
          tab.engulf_margin = tab.engulf_checked == 0 ? rhs - lhs
                                                      : std::min(tab.engulf_margin, rhs - lhs);
          ++tab.engulf_checked;
        }
      }
    } else {
      tab.below_cutoff_max = std::max(tab.below_cutoff_max, best.ratio);
      ++tab.below_count;
    }
  }

  if (tab.count > 0 && tab.upper > tab.cutoff) {
    int nb = 8;
    double blo = tab.cutoff > 0 ? tab.cutoff : tab.upper * 1e-3;
    for (int b = 0; b < nb; ++b) {
      ModulusBin bin;
      bin.lo = blo * std::pow(tab.upper / blo, double(b) / nb);
      bin.hi = blo * std::pow(tab.upper / blo, double(b + 1) / nb);
      tab.bins.push_back(bin);
    }
    for (auto& pr : above)
      for (auto& bin : tab.bins)
        if (pr.dist >= bin.lo && pr.dist <= bin.hi * (1 + 1e-12)) {
          bin.max_ratio = std::max(bin.max_ratio, pr.ratio);
          ++bin.count;
        }
    std::sort(above.begin(), above.end(),
              [](const ModulusPair& a, const ModulusPair& b) { return a.ratio > b.ratio; });
    above.resize(std::min<size_t>(above.size(), 8));
    tab.worst = std::move(above);
  }
  return tab;
}

// --------------------------------------------------------------- sobolev sweep

struct SobolevRow {
  double delta = 0;
  double exponent = 0.5;  // r = delta^exponent
  double r = 0;
  double l1 = 0;
  double llogl = 0;
  std::vector<double> lp;
  double cert = 0;
  int nx = 0, ny = 0;
  std::string status = "ok";
};

struct SobolevSeries {
  std::vector<double> p_list;
  std::vector<double> exponents;
  std::vector<SobolevRow> rows;  // delta-major, exponent-minor, deltas descending
};

inline SobolevSeries sobolev_sweep(const DensitySpec& source, const DensitySpec& target,
                                   std::vector<double> delta_list, std::vector<double> p_list,
                                   const Polytope2& omega_prime, KernelKind kind,
                                   std::vector<double> exponents = {0.5, 0.25, 1.0},
                                   std::uint64_t seed = 1,
                                   Seeding source_seeding = Seeding::Grid,
                                   Seeding target_seeding = Seeding::JitteredGrid) {
  if (delta_list.empty()) throw Error(Error::PreconditionsUnmet, "empty delta list");
  std::sort(delta_list.begin(), delta_list.end(), std::greater<>());
  SobolevSeries series;
  series.p_list = p_list;
  series.exponents = exponents;
  for (double delta : delta_list) {
    PiecewiseAffineConvex psi;
    std::string prep_status = "ok";
    try {
      auto mu = discretize(source, delta, source_seeding, seed);
      auto nu = discretize(target, delta, target_seeding, seed + 1);
      auto cert = verify_assumption1(mu, delta, 400, seed);
      if (!(cert.lambda_hat > 0) || !(cert.Lambda_hat < 1e300))
        prep_status = "density bounds of the discretization fail at this scale";
      auto sol = solve_exact(mu, nu);
      psi = build_potential(sol.phi, nu);
    } catch (const Error& e) {
      prep_status = e.what();
    }
    for (double expo : exponents) {
      SobolevRow row;
      row.delta = delta;
      row.exponent = expo;
      row.r = std::pow(delta, expo);
      row.status = prep_status;
      if (prep_status == "ok") {
        try {
          KernelSpec kernel = kind == KernelKind::SphereSurface ? sphere_kernel(row.r)
                                                                : ball_kernel(row.r);
          LaplacianField f = laplacian_field(psi, omega_prime, row.r, kernel, row.r / 3.0);
          auto w = detail::clipped_cell_weights(f, omega_prime);
          row.nx = f.nx;
          row.ny = f.ny;
          row.cert = f.certified_rel_err;
          row.l1 = f.l1_norm;
          for (size_t k = 0; k < f.values.size(); ++k) {
            if (w[k] <= 0) continue;
            row.llogl += f.values[k] * std::log(2.0 + f.values[k]) * w[k];
          }
          row.lp.assign(p_list.size(), 0.0);
          for (size_t j = 0; j < p_list.size(); ++j)
            for (size_t k = 0; k < f.values.size(); ++k) {
              if (w[k] <= 0) continue;
              row.lp[j] += std::pow(f.values[k], p_list[j]) * w[k];
            }
        } catch (const Error& e) {
          row.status = e.what();
        }
      }
      series.rows.push_back(std::move(row));
    }
  }
  return series;
}

// ------------------------------------------------------------------ flat parts

struct FlatPartReport {
  double max_diameter = 0;
  std::vector<double> diameters;  // one per nonempty gradient cell
  int cells = 0;
};

inline FlatPartReport flat_part_diameters(const PiecewiseAffineConvex& psi,
                                          const Polytope2& omega) {
  FlatPartReport rep;
  auto cells = power_cells(psi, omega);
  for (auto& cell : cells) {
    if (cell.vertices.size() < 2 || cell.vol <= 0) continue;
    double d = 0;
    for (size_t i = 0; i < cell.vertices.size(); ++i)
      for (size_t j = i + 1; j < cell.vertices.size(); ++j)
        d = std::max(d, dist(cell.vertices[i], cell.vertices[j]));
    rep.diameters.push_back(d);
    rep.max_diameter = std::max(rep.max_diameter, d);
    ++rep.cells;
  }
  return rep;
}

// ------------------------------------------------------------------- report

struct RegularityReport {
  double delta = 0, r = 0, rho = 0;
  double llogl_norm = 0;
  std::vector<std::pair<double, double>> lp_norms;  // (p, value)
  ModulusTable modulus;
  ChebyshevReport chebyshev;
  double flat_part_max_diameter = 0;
  double sup_bound_ratio = 0;
  double contact_c = 0;
  double fatten_area_c = 0;
  double fatten_pointwise_c = 0;
  SectionPropertyReport sections;
};

}  // namespace kantoreg
