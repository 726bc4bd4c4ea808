#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "measures.hpp"
#include "ot.hpp"
#include "polyunion.hpp"

namespace kantoreg {

struct Section {
  Vec2 x0{}, p0{};
  double t = 0;
  Polytope2 body;  // {x : psi(x) <= psi(x0) + p0.(x - x0) + t}
  const PiecewiseAffineConvex* psi_ref = nullptr;
};

inline double affine_excess(const PiecewiseAffineConvex& psi, const Vec2& x0, const Vec2& p0,
                            const Vec2& y) {
  return psi.value(y) - psi.value(x0) - dot(p0, y - x0);
}

namespace detail {

inline double dist_to_body(const Polytope2& K, const Vec2& p) {
  if (K.vertices.empty()) return 1e300;
  if (!K.halfspaces.empty() && contains_point(K, p)) return 0.0;
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

// sublevel body of the excess, clipped to a stated bound; truncated reports escape
inline Polytope2 section_body(const PiecewiseAffineConvex& psi, const Vec2& x0, const Vec2& p0,
                              double t, const Polytope2& bound, bool* truncated) {
  double rhs0 = t + psi.value(x0) - dot(p0, x0);
  Chain ch = bound.vertices;
  for (size_t j = 0; j < psi.slopes.size() && !ch.empty(); ++j) {
    Vec2 nrm = psi.slopes[j] - p0;
    double len = norm(nrm);
    if (len <= 1e-14 * (1 + norm(p0))) continue;  // piece parallel to the base plane
    ch = clip_chain(ch, (1.0 / len) * nrm, (rhs0 - psi.intercepts[j]) / len);
  }
  Polytope2 body = finalize_polytope2(std::move(ch), nullptr);
  if (truncated) {
    bool esc = body.vertices.empty();
    double sc = 1 + bound.diameter_hint();
    for (auto& v : body.vertices) {
      for (auto& h : bound.halfspaces)
        if (dot(h.normal, v) > h.offset - 1e-9 * sc) { esc = true; break; }
      if (esc) break;
    }
    *truncated = esc;
  }
  return body;
}

}  // namespace detail

inline bool is_subgradient(const PiecewiseAffineConvex& psi, const Vec2& x, const Vec2& p,
                           double tol = 1e-8) {
  auto sd = subdifferential(psi, x, 1e-9 * (1 + std::fabs(psi.value(x))));
  return detail::dist_to_body(sd.body, p) <= tol * (1 + norm(p));
}

// deterministic pick: vertex of the subdifferential nearest its vertex average
inline Vec2 pick_subgradient(const PiecewiseAffineConvex& psi, const Vec2& x) {
  auto sd = subdifferential(psi, x, 1e-10 * (1 + std::fabs(psi.value(x))));
  const auto& vs = sd.body.vertices;
  Vec2 c{0, 0};
  for (auto& v : vs) c = c + (1.0 / double(vs.size())) * v;
  Vec2 best = vs[0];
  double bd = 1e300;
  for (auto& v : vs) {
    double d = dist2(v, c);
    if (d < bd) { bd = d; best = v; }
  }
  return best;
}

inline Section section(const PiecewiseAffineConvex& psi, const Vec2& x0, const Vec2& p0, double t,
                       const Polytope2& bound) {
  if (t < 0) throw Error(Error::PreconditionsUnmet, "negative section height");
  if (!is_subgradient(psi, x0, p0, 1e-8))
    throw Error(Error::NotASubgradient, "base slope is not a subgradient at the center");
  Section S;
  S.x0 = x0;
  S.p0 = p0;
  S.t = t;
  S.psi_ref = &psi;
  bool trunc = false;
  S.body = detail::section_body(psi, x0, p0, t, bound, &trunc);
  if (trunc) throw Error(Error::UnboundedSection, "section escapes its bounding box");
  return S;
}

inline Section section(const PiecewiseAffineConvex& psi, const Vec2& x0, const Vec2& p0,
                       double t) {
  double w = 1e3 * (1 + norm(x0)) + t;
  return section(psi, x0, p0, t, make_box({x0[0] - w, x0[1] - w}, {x0[0] + w, x0[1] + w}));
}

// conv of slopes active somewhere on K
inline Polytope2 subgradient_image(const PiecewiseAffineConvex& psi, const Polytope2& K) {
  if (K.vertices.empty()) throw Error(Error::DegenerateBody, "image of an empty body");
  detail::Chain pts;
  if (K.vol <= 0 || K.halfspaces.empty()) {
    for (auto& v : K.vertices) {
      auto sd = subdifferential(psi, v, 1e-10 * (1 + std::fabs(psi.value(v))));
      for (auto& s : sd.body.vertices) pts.push_back(s);
    }
  } else {
    auto cells = power_cells(psi, K);
    for (size_t j = 0; j < cells.size(); ++j)
      if (!cells[j].vertices.empty()) pts.push_back(psi.slopes[j]);
  }
  return polytope_from_vertices(pts);
}

// ratios (ell(S) L(grad image of the domain) / t, ell(image of S) L(omega) / t); >= 1 when the
// inner-radius bounds hold
inline std::pair<double, double> inner_radius_lower_bounds(const Section& S,
                                                           const PiecewiseAffineConvex& psi,
                                                           const Polytope2& omega) {
  if (S.t <= 0)
    return {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  double Lgrad = detail::min_enclosing_ball<2>(psi.slopes).r;
  double Lomega = detail::min_enclosing_ball<2>(omega.vertices).r;
  double ell_S = radii(S.body).inner;
  Polytope2 img = subgradient_image(psi, S.body);
  double ell_img = img.vol > 0 ? radii(img).inner : 0.0;
  return {ell_S * Lgrad / S.t, ell_img * Lomega / S.t};
}

// max over probes of (t - excess(y))^2 / (c2 L(S) dist(y, boundary) |image|), c2 = 1/pi fixed by
// the cone equality case
inline double alexandrov_check(const Section& S, const PiecewiseAffineConvex& psi, int probes,
                               std::uint64_t seed = 0) {
  if (S.body.vol <= 0 || S.t <= 0) return 0.0;
  const double c2 = 1.0 / M_PI;
  double LS = radii(S.body).outer;
  double Aimg = subgradient_image(psi, S.body).vol;
  Rng rng(seed ^ 0xa1e7u);
  auto ratio_at = [&](const Vec2& y) {
    double ex = affine_excess(psi, S.x0, S.p0, y);
    double lhs = (S.t - ex) * (S.t - ex);
    double d = 1e300;
    for (auto& h : S.body.halfspaces) d = std::min(d, h.offset - dot(h.normal, y));
    d = std::max(d, 0.0);
    double rhs = c2 * LS * d * Aimg;
    return rhs > 0 ? lhs / rhs : (lhs > 0 ? 1e300 : 0.0);
  };
  double worst = ratio_at(S.x0);
  for (int i = 0; i < probes; ++i) worst = std::max(worst, ratio_at(sample_in_polytope(S.body, rng)));
  return worst;
}

// argmax of x.q - psi(x): the optimal face, clipped to a window; escaped reports truncation
inline Polytope2 conjugate_subdifferential(const PiecewiseAffineConvex& psi, const Vec2& q,
                                           const Polytope2& window, bool* escaped = nullptr) {
  std::vector<detail::LpCon> cons;
  cons.reserve(psi.slopes.size());
  double scale = 1;
  for (size_t j = 0; j < psi.slopes.size(); ++j) {
    Vec2 d = psi.slopes[j] - q;
    cons.push_back({{d[0], d[1], 1, 0}, -psi.intercepts[j]});
    scale = std::max({scale, std::fabs(psi.intercepts[j]), norm(d)});
  }
  auto res = detail::lp_solve(3, cons, {0, 0, 1, 0}, 1e7 * scale);
  double sstar = res.x[2];
  detail::Chain ch = window.vertices;
  for (size_t j = 0; j < psi.slopes.size() && !ch.empty(); ++j) {
    Vec2 nrm = psi.slopes[j] - q;
    double len = norm(nrm);
    if (len <= 1e-14 * (1 + norm(q))) continue;
    double off = (-psi.intercepts[j] - sstar) / len;
    ch = detail::clip_chain(ch, (1.0 / len) * nrm, off + 1e-9 * (1 + std::fabs(off)));
  }
  Polytope2 F = detail::finalize_polytope2(std::move(ch), nullptr);
  if (escaped) {
    bool esc = F.vertices.empty();
    double sc = 1 + window.diameter_hint();
    for (auto& v : F.vertices) {
      for (auto& h : window.halfspaces)
        if (dot(h.normal, v) > h.offset - 1e-7 * sc) { esc = true; break; }
      if (esc) break;
    }
    *escaped = esc;
  }
  return F;
}

struct PolarSectionReport {
  bool polar_in_image = false;        // p0 + t (S - x0)* inside the slope image of S
  bool conjugate_back_inside = false; // conjugate subdifferential over p0 + (t/2)(S - x0)* inside S
  bool midpoint_image_in_polar = false;
  bool volume_product_ok = false;
  double volume_product_ratio = 0;  // |image| |S| against (pi t)^2 / 16
  int failed_predicate = 0;         // 1..4, 0 when all hold
  Vec2 witness{};
  bool all() const {
    return polar_in_image && conjugate_back_inside && midpoint_image_in_polar && volume_product_ok;
  }
};

inline PolarSectionReport polar_section_inclusions(const Section& S,
                                                   const PiecewiseAffineConvex& psi,
                                                   std::uint64_t seed = 0) {
  if (S.t <= 0 || S.body.vol <= 0)
    throw Error(Error::PreconditionsUnmet, "polar predicates need a solid section");
  PolarSectionReport rep;
  double diam = 1 + S.body.diameter_hint();
  Polytope2 polar = polar_body(S.body, S.x0);
  Polytope2 image = subgradient_image(psi, S.body);
  double islack = 1e-8 * (1 + image.diameter_hint());

  rep.polar_in_image = image.vol > 0;
  for (auto& w : polar.vertices) {
    Vec2 pt = S.p0 + S.t * w;
    if (image.vol <= 0 || !contains_point(image, pt, islack)) {
      rep.polar_in_image = false;
      if (!rep.failed_predicate) { rep.failed_predicate = 1; rep.witness = pt; }
      break;
    }
  }

  Polytope2 window =
      make_box(S.x0 - Vec2{4 * diam, 4 * diam}, S.x0 + Vec2{4 * diam, 4 * diam});
  rep.conjugate_back_inside = true;
  std::vector<Vec2> qs{S.p0};
  for (auto& w : polar.vertices) qs.push_back(S.p0 + 0.5 * S.t * w);
  for (auto& q : qs) {
    bool esc = false;
    Polytope2 D = conjugate_subdifferential(psi, q, window, &esc);
    bool ok = !esc;
    if (ok)
      for (auto& v : D.vertices)
        if (!contains_point(S.body, v, 1e-8 * diam)) {
          ok = false;
          rep.witness = v;
          break;
        }
    if (!ok) {
      rep.conjugate_back_inside = false;
      if (!rep.failed_predicate) rep.failed_predicate = 2;
      break;
    }
  }

  rep.midpoint_image_in_polar = true;
  Rng rng(seed ^ 0x901a7u);
  std::vector<Vec2> y0s{S.x0, S.body.center_of_mass};
  for (int i = 0; i < 3; ++i) y0s.push_back(sample_in_polytope(S.body, rng));
  for (auto& y0 : y0s) {
    if (affine_excess(psi, S.x0, S.p0, y0) > S.t * (1 - 1e-9)) continue;
    Polytope2 pol2;
    try {
      pol2 = polar_body(S.body, y0);
    } catch (const Error&) {
      continue;
    }
    detail::Chain tv;
    for (auto& w : pol2.vertices) tv.push_back(S.p0 + 2 * S.t * w);
    Polytope2 target = polytope_from_vertices(tv);
    Polytope2 img2 = subgradient_image(psi, dilate(S.body, 0.5, y0));
    double ts = 1e-8 * (1 + target.diameter_hint());
    for (auto& v : img2.vertices)
      if (!contains_point(target, v, ts)) {
        rep.midpoint_image_in_polar = false;
        rep.witness = v;
        if (!rep.failed_predicate) rep.failed_predicate = 3;
        break;
      }
    if (!rep.midpoint_image_in_polar) break;
  }

  double bound = M_PI * M_PI * S.t * S.t / 16.0;
  rep.volume_product_ratio = image.vol * S.body.vol / bound;
  rep.volume_product_ok = rep.volume_product_ratio >= 1 - 1e-8;
  if (!rep.volume_product_ok && !rep.failed_predicate) rep.failed_predicate = 4;
  return rep;
}

struct RhoCertificate {
  double rho = 0;
  std::vector<Vec2> grid;       // probed base points
  std::vector<Vec2> witness_p;  // chosen slope per base point at the final height
  std::string diagnostics;      // set when rho == 0
};

inline RhoCertificate rho_feasibility(const PiecewiseAffineConvex& psi, const Polytope2& omega,
                                      const Polytope2& omega_prime) {
  double dscale = 1 + omega.diameter_hint();
  if (!contains(omega, omega_prime, 1e-12 * dscale))
    throw Error(Error::PreconditionsUnmet, "window not inside the domain");

  RhoCertificate cert;
  cert.grid = omega_prime.vertices;
  Vec2 lo = omega_prime.vertices[0], hi = lo;
  for (auto& v : omega_prime.vertices)
    for (int k = 0; k < 2; ++k) {
      lo[k] = std::min(lo[k], v[k]);
      hi[k] = std::max(hi[k], v[k]);
    }
  const int G = 7;
  for (int a = 0; a < G; ++a)
    for (int b = 0; b < G; ++b) {
      Vec2 x{lo[0] + (a + 0.5) * (hi[0] - lo[0]) / G, lo[1] + (b + 0.5) * (hi[1] - lo[1]) / G};
      if (contains_point(omega_prime, x)) cert.grid.push_back(x);
    }

  Polytope2 bound = dilate(omega, 2.0);
  auto best_fits = [&](const Vec2& x, double rho, Vec2* p_out) -> bool {
    auto sd = subdifferential(psi, x, 1e-10 * (1 + std::fabs(psi.value(x))));
    double bestL = 1e300;
    bool ok = false;
    for (auto& p : sd.body.vertices) {
      bool trunc = false;
      Polytope2 body = detail::section_body(psi, x, p, rho, bound, &trunc);
      double L = trunc || body.vertices.empty() ? 1e300
                                                : detail::min_enclosing_ball<2>(body.vertices).r;
      if (L < bestL) {
        bestL = L;
        ok = !trunc && !body.vertices.empty() && contains(omega, body, 0.0);
        if (p_out) *p_out = p;
      }
    }
    return ok;
  };
  auto all_feasible = [&](double rho, const Vec2** bad) -> bool {
    for (auto& x : cert.grid)
      if (!best_fits(x, rho, nullptr)) {
        if (bad) *bad = &x;
        return false;
      }
    return true;
  };

  const Vec2* bad = nullptr;
  double rho_eps = 1e-9 * dscale;
  if (!all_feasible(rho_eps, &bad)) {
    cert.rho = 0;
    cert.diagnostics = "sections escape at vanishing height near (" +
                       std::to_string((*bad)[0]) + ", " + std::to_string((*bad)[1]) + ")";
    for (auto& x : cert.grid) cert.witness_p.push_back(pick_subgradient(psi, x));
    return cert;
  }
  double lo_r = rho_eps, hi_r = (psi.lipschitz() + 1.0) * (4 * dscale + 1);
  if (all_feasible(hi_r, nullptr)) {
    lo_r = hi_r;
  } else {
    while (hi_r - lo_r > 1e-3 * hi_r) {
      double mid = 0.5 * (lo_r + hi_r);
      (all_feasible(mid, nullptr) ? lo_r : hi_r) = mid;
    }
  }
  cert.rho = lo_r;
  for (auto& x : cert.grid) {
    Vec2 p{};
    best_fits(x, lo_r, &p);
    cert.witness_p.push_back(p);
  }
  return cert;
}

struct SectionSample {
  double t = 0;
  Vec2 x{};
  double volume = 0, ell = 0, L = 0;
  double M_local = 0, theta_local = 0;
  bool escaped = false;
};

struct SectionPropertyReport {
  double C0_hat = 0, M_hat = 0, theta_hat = 0, beta_hat = 0, Cstar_hat = 0;
  std::pair<double, double> volume_ratio_range{1e300, 0};  // min, max of |S|^2 / t^2
  int samples = 0;                                         // rows that stayed inside the domain
  double delta = 0, rho = 0;
  std::vector<SectionSample> rows;          // main height grid
  std::vector<SectionSample> subgrid_rows;  // companion sweep on heights c * delta
  int escaped_count = 0;
  SectionSample witness_M{}, witness_theta{}, witness_vol_lo{}, witness_vol_hi{};
};

inline std::vector<int> vitali_select(const std::vector<Section>& sections, double Cstar,
                                      double* uncovered_area = nullptr) {
  std::vector<int> order(sections.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return sections[a].t > sections[b].t; });
  std::vector<int> kept;
  for (int idx : order) {
    const auto& B = sections[idx].body;
    if (B.vol <= 0) continue;
    bool clash = false;
    for (int k : kept)
      if (intersection_area(B, sections[k].body) >
          1e-12 * std::min(B.vol, sections[k].body.vol)) {
        clash = true;
        break;
      }
    if (!clash) kept.push_back(idx);
  }
  if (uncovered_area) {
    std::vector<Polytope2> all, dil;
    for (auto& s : sections) all.push_back(s.body);
    for (int k : kept) dil.push_back(dilate(sections[k].body, Cstar, sections[k].x0));
    *uncovered_area = union_difference_area(all, dil);
  }
  return kept;
}

// smallest dilation factor whose kept-section blowups cover the whole family
inline double vitali_cstar(const std::vector<Section>& sections) {
  if (sections.empty()) throw Error(Error::PreconditionsUnmet, "no sections to cover");
  std::vector<Polytope2> all;
  for (auto& s : sections) all.push_back(s.body);
  double total = union_area(all);
  double tol = 1e-9 * (1 + total);
  auto kept = vitali_select(sections, 1.0, nullptr);
  auto uncovered = [&](double C) {
    std::vector<Polytope2> dil;
    for (int k : kept) dil.push_back(dilate(sections[k].body, C, sections[k].x0));
    return union_difference_area(all, dil);
  };
  if (uncovered(1.0) <= tol) return 1.0;
  double lo = 1.0, hi = 2.0;
  while (uncovered(hi) > tol) {
    hi *= 2;
    if (hi > 4096) return hi;
  }
  while (hi - lo > 1e-2 * hi) {
    double mid = 0.5 * (lo + hi);
    (uncovered(mid) <= tol ? hi : lo) = mid;
  }
  return hi;
}

inline SectionPropertyReport property_scan(const PiecewiseAffineConvex& psi,
                                           const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                           const Polytope2& omega_prime, double rho,
                                           std::vector<double> t_grid, int sample_points,
                                           std::uint64_t seed = 0) {
  if (rho <= 0) throw Error(Error::RhoInfeasible, "window admits no interior sections");
  if (t_grid.empty() || sample_points <= 0)
    throw Error(Error::PreconditionsUnmet, "empty scan request");
  if (psi.slopes.size() > nu.points.size())
    throw Error(Error::PreconditionsUnmet, "potential does not match the target measure");
  std::sort(t_grid.begin(), t_grid.end());
  if (t_grid.front() <= 0 || t_grid.back() > rho * (1 + 1e-9))
    throw Error(Error::PreconditionsUnmet, "height grid outside (0, rho]");
  Polytope2 omega = mu.parent ? mu.parent->domain : polytope_from_vertices(mu.points);
  Polytope2 bound = dilate(omega, 4.0);
  double dscale = 1 + omega.diameter_hint();

  SectionPropertyReport rep;
  rep.delta = mu.delta;
  rep.rho = rho;

  Rng rng(seed ^ 0x5ec110u);
  std::vector<Vec2> xs{omega_prime.center_of_mass};
  for (int i = 1; i < sample_points; ++i) xs.push_back(sample_in_polytope(omega_prime, rng));

  auto measure_one = [&](const Vec2& x, const Vec2& p, double t, SectionSample& row) -> bool {
    row.t = t;
    row.x = x;
    bool trunc = false;
    Polytope2 body = detail::section_body(psi, x, p, t, bound, &trunc);
    row.escaped = trunc || body.vol <= 0 || !contains(omega, body, 1e-9 * dscale);
    if (row.escaped) return false;
    row.volume = body.vol;
    auto rp = radii(body);
    row.ell = rp.inner;
    row.L = rp.outer;
    double me = 0;
    Polytope2 two = dilate(body, 2.0, x);
    for (auto& v : two.vertices) me = std::max(me, affine_excess(psi, x, p, v));
    row.M_local = me / t;
    double th = 0;
    auto engulf_from = [&](const Vec2& y0) {
      Vec2 q0 = pick_subgradient(psi, y0);
      double w = 0;
      for (auto& v : body.vertices) w = std::max(w, affine_excess(psi, y0, q0, v));
      th = std::max(th, w / t);
    };
    engulf_from(x);
    engulf_from(body.center_of_mass);
    size_t nv = body.vertices.size(), stride = nv > 12 ? (nv + 11) / 12 : 1;
    for (size_t k = 0; k < nv; k += stride) engulf_from(body.vertices[k]);
    row.theta_local = th;
    return true;
  };

  for (double t : t_grid)
    for (auto& x : xs) {
      auto sd = subdifferential(psi, x, 1e-10 * (1 + std::fabs(psi.value(x))));
      for (auto& p : sd.body.vertices) {
        SectionSample row;
        if (!measure_one(x, p, t, row)) ++rep.escaped_count;
        rep.rows.push_back(row);
      }
    }

  std::vector<double> Ms, Ths;
  for (auto& r : rep.rows) {
    if (r.escaped) continue;
    double vr = r.volume * r.volume / (r.t * r.t);
    if (vr < rep.volume_ratio_range.first) {
      rep.volume_ratio_range.first = vr;
      rep.witness_vol_lo = r;
    }
    if (vr > rep.volume_ratio_range.second) {
      rep.volume_ratio_range.second = vr;
      rep.witness_vol_hi = r;
    }
    Ms.push_back(r.M_local);
    Ths.push_back(r.theta_local);
    ++rep.samples;
  }
  if (rep.samples == 0)
    throw Error(Error::PreconditionsUnmet, "no section stayed inside the domain");
  auto pct95 = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[size_t(std::floor(0.95 * double(v.size() - 1)))];
  };
  rep.M_hat = pct95(Ms);
  rep.theta_hat = pct95(Ths);
  rep.beta_hat = std::log(std::max(rep.M_hat, 1.0 + 1e-9)) / std::log(2.0);
  for (auto& r : rep.rows) {
    if (r.escaped) continue;
    if (r.M_local == rep.M_hat) rep.witness_M = r;
    if (r.theta_local == rep.theta_hat) rep.witness_theta = r;
  }

  double t_med = t_grid[t_grid.size() / 2];
  std::vector<Section> vit;
  for (auto& x : xs) {
    Vec2 p = pick_subgradient(psi, x);
    bool trunc = false;
    Polytope2 body = detail::section_body(psi, x, p, t_med, bound, &trunc);
    if (trunc || !contains(omega, body, 1e-9 * dscale)) continue;
    Section s;
    s.x0 = x;
    s.p0 = p;
    s.t = t_med;
    s.body = std::move(body);
    s.psi_ref = &psi;
    vit.push_back(std::move(s));
  }
  rep.Cstar_hat = vit.size() >= 2 ? vitali_cstar(vit) : 1.0;

  if (rep.delta > 0) {
    auto pass_rate = [&](double t, std::vector<SectionSample>* keep) -> double {
      int pass = 0, tot = 0;
      for (auto& x : xs) {
        Vec2 p = pick_subgradient(psi, x);
        SectionSample row;
        bool ok = measure_one(x, p, t, row);
        if (keep) keep->push_back(row);
        if (!ok) continue;
        ++tot;
        double vr = row.volume * row.volume / (row.t * row.t);
        if (row.M_local <= 2 * rep.M_hat && row.theta_local <= 2 * rep.theta_hat &&
            vr >= 0.5 * rep.volume_ratio_range.first && vr <= 2 * rep.volume_ratio_range.second)
          ++pass;
      }
      return tot ? double(pass) / tot : 0.0;
    };
    double rate_ref = pass_rate(t_grid.back(), nullptr);
    double c_hi = std::min(64.0, t_grid.back() / rep.delta);
    std::vector<double> cs;
    for (double c = 0.25; c <= c_hi; c *= 2) cs.push_back(c);
    double c_found = c_hi;
    for (int i = int(cs.size()) - 1; i >= 0; --i) {
      double r = pass_rate(cs[i] * rep.delta, &rep.subgrid_rows);
      if (r >= 0.95 * rate_ref - 1e-12)
        c_found = cs[i];
      else
        break;
    }
    rep.C0_hat = c_found;
    if (!cs.empty() && c_found > cs.front()) {
      double loC = 0.5 * c_found, hiC = c_found;
      for (int it = 0; it < 4; ++it) {
        double midC = 0.5 * (loC + hiC);
        (pass_rate(midC * rep.delta, nullptr) >= 0.95 * rate_ref - 1e-12 ? hiC : loC) = midC;
      }
      rep.C0_hat = hiC;
    }
  }
  return rep;
}

}  // namespace kantoreg
