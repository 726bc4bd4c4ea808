#pragma once

#include <functional>
#include <memory>

#include "geom.hpp"

namespace kantoreg {

// ------------------------------------------------------------- quadrature

namespace detail {

// degree-5 symmetric triangle rule, 7 points
template <class F>
inline double tri_quad5(const Vec2& a, const Vec2& b, const Vec2& c, F&& f) {
  static const double w0 = 9.0 / 40.0;
  static const double wa = (155.0 + std::sqrt(15.0)) / 1200.0;
  static const double wb = (155.0 - std::sqrt(15.0)) / 1200.0;
  static const double ga = (6.0 + std::sqrt(15.0)) / 21.0;
  static const double gb = (6.0 - std::sqrt(15.0)) / 21.0;
  double area = 0.5 * std::fabs(cross(b - a, c - a));
  auto at = [&](double l1, double l2) {
    double l3 = 1 - l1 - l2;
    return f(Vec2{l1 * a[0] + l2 * b[0] + l3 * c[0], l1 * a[1] + l2 * b[1] + l3 * c[1]});
  };
  double s = w0 * at(1.0 / 3, 1.0 / 3);
  s += wa * (at(ga, ga) + at(ga, 1 - 2 * ga) + at(1 - 2 * ga, ga));
  s += wb * (at(gb, gb) + at(gb, 1 - 2 * gb) + at(1 - 2 * gb, gb));
  return s * area;
}

template <class F>
inline double tri_adapt(const Vec2& a, const Vec2& b, const Vec2& c, F&& f, double tol,
                        int depth) {
  double coarse = tri_quad5(a, b, c, f);
  Vec2 ab = 0.5 * (a + b), bc = 0.5 * (b + c), ca = 0.5 * (c + a);
  double fine = tri_quad5(a, ab, ca, f) + tri_quad5(ab, b, bc, f) + tri_quad5(ca, bc, c, f) +
                tri_quad5(ab, bc, ca, f);
  if (depth >= 12 || std::fabs(fine - coarse) <= tol) return fine;
  return tri_adapt(a, ab, ca, f, tol / 4, depth + 1) + tri_adapt(ab, b, bc, f, tol / 4, depth + 1) +
         tri_adapt(ca, bc, c, f, tol / 4, depth + 1) + tri_adapt(ab, bc, ca, f, tol / 4, depth + 1);
}

}  // namespace detail

template <class F>
inline double integrate_polygon(const Polytope2& K, F&& f, double rel_tol = 1e-8) {
  if (K.vertices.size() < 3 || K.vol <= 0) return 0;
  Vec2 c = K.center_of_mass;
  double coarse = 0;
  size_t n = K.vertices.size();
  for (size_t i = 0; i < n; ++i)
    coarse += detail::tri_quad5(K.vertices[i], K.vertices[(i + 1) % n], c, f);
  double tol = rel_tol * (std::fabs(coarse) + 1e-300);
  double s = 0;
  for (size_t i = 0; i < n; ++i)
    s += detail::tri_adapt(K.vertices[i], K.vertices[(i + 1) % n], c, f, tol / double(n), 0);
  return s;
}

// ------------------------------------------------------------- densities

struct DensitySpec {
  enum Kind { Uniform, AffineTilt, BoundedOscillation };
  Polytope2 domain;
  Kind kind = Uniform;
  std::function<double(const Vec2&)> evaluator;  // normalized: integrates to 1
  double lambda = 0, Lambda = 0;                 // bounds on the normalized density
  Vec2 affine_a{};                               // evaluator = affine_b + affine_a.x when affine
  double affine_b = 0;
};

inline DensitySpec uniform_density(const Polytope2& domain) {
  DensitySpec d;
  d.domain = domain;
  d.kind = DensitySpec::Uniform;
  double inv = 1.0 / domain.vol;
  d.evaluator = [inv](const Vec2&) { return inv; };
  d.lambda = d.Lambda = inv;
  d.affine_b = inv;
  return d;
}

// f(x) proportional to 1 + a.(x - com); integral of the tilt vanishes, so the
// normalization is exact
inline DensitySpec affine_tilt_density(const Polytope2& domain, const Vec2& a) {
  double worst = 0;
  for (auto& v : domain.vertices) worst = std::max(worst, std::fabs(dot(a, v - domain.center_of_mass)));
  if (worst >= 1)
    throw Error(Error::ConfigError, "affine tilt makes the density nonpositive");
  DensitySpec d;
  d.domain = domain;
  d.kind = DensitySpec::AffineTilt;
  double inv = 1.0 / domain.vol;
  Vec2 com = domain.center_of_mass;
  d.affine_a = inv * a;
  d.affine_b = inv * (1 - dot(a, com));
  Vec2 aa = d.affine_a;
  double bb = d.affine_b;
  d.evaluator = [aa, bb](const Vec2& x) { return bb + dot(aa, x); };
  d.lambda = inv * (1 - worst);
  d.Lambda = inv * (1 + worst);
  return d;
}

inline DensitySpec oscillation_density(const Polytope2& domain, double amp, double freq) {
  if (!(amp > 0 && amp < 1)) throw Error(Error::ConfigError, "oscillation amplitude not in (0,1)");
  DensitySpec d;
  d.domain = domain;
  d.kind = DensitySpec::BoundedOscillation;
  auto raw = [amp, freq](const Vec2& x) {
    return 1 + amp * std::sin(2 * M_PI * freq * x[0]) * std::sin(2 * M_PI * freq * x[1]);
  };
  double Z = integrate_polygon(domain, raw, 1e-9);
  d.evaluator = [raw, Z](const Vec2& x) { return raw(x) / Z; };
  d.lambda = (1 - amp) / Z;
  d.Lambda = (1 + amp) / Z;
  return d;
}

// ------------------------------------------------------------- spatial bins

struct SpatialBins {
  Vec2 lo{}, hi{};
  double cell = 1;
  int nx = 1, ny = 1;
  std::vector<std::vector<int>> bins;
  const std::vector<Vec2>* pts = nullptr;

  SpatialBins() = default;
  SpatialBins(const std::vector<Vec2>& points, double cell_size) { build(points, cell_size); }

  void build(const std::vector<Vec2>& points, double cell_size) {
    pts = &points;
    lo = hi = points.at(0);
    for (auto& p : points) {
      lo = {std::min(lo[0], p[0]), std::min(lo[1], p[1])};
      hi = {std::max(hi[0], p[0]), std::max(hi[1], p[1])};
    }
    cell = std::max(cell_size, 1e-12);
    nx = std::max(1, int((hi[0] - lo[0]) / cell) + 1);
    ny = std::max(1, int((hi[1] - lo[1]) / cell) + 1);
    bins.assign(size_t(nx) * ny, {});
    for (size_t i = 0; i < points.size(); ++i) bins[index(points[i])].push_back(int(i));
  }
  size_t index(const Vec2& p) const {
    int ix = std::clamp(int((p[0] - lo[0]) / cell), 0, nx - 1);
    int iy = std::clamp(int((p[1] - lo[1]) / cell), 0, ny - 1);
    return size_t(iy) * nx + ix;
  }
  // indices of all points within bins overlapping the disk bbox
  void candidates(const Vec2& c, double R, std::vector<int>& out) const {
    out.clear();
    int x0 = std::clamp(int((c[0] - R - lo[0]) / cell), 0, nx - 1);
    int x1 = std::clamp(int((c[0] + R - lo[0]) / cell), 0, nx - 1);
    int y0 = std::clamp(int((c[1] - R - lo[1]) / cell), 0, ny - 1);
    int y1 = std::clamp(int((c[1] + R - lo[1]) / cell), 0, ny - 1);
    for (int iy = y0; iy <= y1; ++iy)
      for (int ix = x0; ix <= x1; ++ix)
        for (int id : bins[size_t(iy) * nx + ix]) out.push_back(id);
  }
  double mass_in_disk(const Vec2& c, double R, const std::vector<double>& w) const {
    std::vector<int> cand;
    candidates(c, R, cand);
    double s = 0;
    for (int id : cand)
      if (dist2((*pts)[size_t(id)], c) <= R * R) s += w[size_t(id)];
    return s;
  }
};

// ------------------------------------------------------------- voronoi

// clipped Voronoi cells; self-certifying neighbor radius (a cell accepted once
// it fits in half the candidate radius, so no farther site can cut it)
inline std::vector<Polytope2> voronoi_cells(const std::vector<Vec2>& sites,
                                            const Polytope2& domain) {
  size_t n = sites.size();
  std::vector<Polytope2> cells(n);
  double R0 = 2.0 * std::sqrt(domain.vol / double(std::max<size_t>(n, 1)));
  SpatialBins bins(sites, R0);
  double domain_diam = domain.diameter_hint() + 1;
  std::vector<int> cand;
  for (size_t i = 0; i < n; ++i) {
    for (double R = R0;; R *= 2) {
      detail::Chain ch = domain.vertices;
      bins.candidates(sites[i], R, cand);
      for (int j : cand) {
        if (size_t(j) == i) continue;
        Vec2 d = sites[size_t(j)] - sites[i];
        double dn = norm(d);
        if (dn < 1e-15 || dn > R) continue;
        Vec2 nn = (1.0 / dn) * d;
        double off = dot(nn, 0.5 * (sites[i] + sites[size_t(j)]));
        ch = detail::clip_chain(ch, nn, off);
        if (ch.empty()) break;
      }
      double reach = 0;
      for (auto& v : ch) reach = std::max(reach, dist(v, sites[i]));
      if (reach <= 0.5 * R || R > 2 * domain_diam) {
        cells[i] = detail::finalize_polytope2(ch, nullptr);
        break;
      }
    }
  }
  return cells;
}

// ------------------------------------------------------------- discretize

struct DiscreteMeasure {
  std::vector<Vec2> points;
  std::vector<double> weights;
  double delta = 0;
  std::shared_ptr<const DensitySpec> parent;
  std::vector<Polytope2> cells;  // clipped Voronoi cells, aligned with points

  double total_mass() const {
    double s = 0;
    for (double w : weights) s += w;
    return s;
  }
};

enum class Seeding { Grid, JitteredGrid, Poisson };

namespace detail {

inline std::vector<Vec2> seed_sites(const Polytope2& domain, double delta, Seeding seeding,
                                    Rng& rng) {
  Vec2 lo = domain.vertices[0], hi = domain.vertices[0];
  for (auto& v : domain.vertices) {
    lo = {std::min(lo[0], v[0]), std::min(lo[1], v[1])};
    hi = {std::max(hi[0], v[0]), std::max(hi[1], v[1])};
  }
  double step = (seeding == Seeding::Poisson) ? 1.4 * delta : delta;
  int nx = std::max(1, int(std::ceil((hi[0] - lo[0]) / step - 1e-12)));
  int ny = std::max(1, int(std::ceil((hi[1] - lo[1]) / step - 1e-12)));
  double jf = (seeding == Seeding::JitteredGrid) ? 0.2 : (seeding == Seeding::Poisson ? 0.35 : 0.0);
  std::vector<Vec2> sites;
  sites.reserve(size_t(nx) * ny);
  for (int iy = 0; iy < ny; ++iy)
    for (int ix = 0; ix < nx; ++ix) {
      Vec2 p = {lo[0] + (ix + 0.5) * step, lo[1] + (iy + 0.5) * step};
      if (jf > 0) {
        p[0] += rng.uniform(-jf * step, jf * step);
        p[1] += rng.uniform(-jf * step, jf * step);
      }
      if (!contains_point(domain, p)) {
        Vec2 q = closest_point(domain, p);
        if (dist(q, p) > 0.75 * step) continue;
        p = q;
      }
      sites.push_back(p);
    }
  // drop near-coincident boundary projections
  std::vector<Vec2> kept;
  for (auto& p : sites) {
    bool dup = false;
    for (auto it = kept.rbegin(); it != kept.rend() && !dup; ++it)
      if (dist2(*it, p) < 1e-20) dup = true;
    if (!dup) kept.push_back(p);
  }
  return kept;
}

}  // namespace detail

inline DiscreteMeasure discretize(const DensitySpec& density, double delta, Seeding seeding,
                                  std::uint64_t seed = 0) {
  const Polytope2& domain = density.domain;
  Rng rng(seed ^ 0xd15c7e7e);
  std::vector<Vec2> sites = detail::seed_sites(domain, delta, seeding, rng);
  if (sites.size() < 4) throw Error(Error::DeltaTooLarge, "fewer than 4 sites fit the domain");
  std::vector<Polytope2> cells = voronoi_cells(sites, domain);

  if (seeding == Seeding::Poisson) {
    // farthest-point refinement until the covering radius clears 0.95 delta
    for (int round = 0; round < 60; ++round) {
      struct Gap { double d; Vec2 at; };
      std::vector<Gap> gaps;
      for (size_t i = 0; i < sites.size(); ++i)
        for (auto& v : cells[i].vertices) {
          double d = dist(v, sites[i]);
          if (d > 0.95 * delta) gaps.push_back({d, v});
        }
      if (gaps.empty()) break;
      std::sort(gaps.begin(), gaps.end(), [](const Gap& a, const Gap& b) { return a.d > b.d; });
      std::vector<Vec2> accepted;
      for (auto& g : gaps) {
        bool ok = true;
        for (auto& a : accepted)
          if (dist(a, g.at) < 0.7 * delta) { ok = false; break; }
        if (ok) accepted.push_back(g.at);
      }
      for (auto& a : accepted) sites.push_back(a);
      cells = voronoi_cells(sites, domain);
    }
  }

  // prune sites owning nothing, then rebuild
  {
    std::vector<Vec2> kept;
    for (size_t i = 0; i < sites.size(); ++i)
      if (cells[i].vol > 1e-16 * domain.vol) kept.push_back(sites[i]);
    if (kept.size() != sites.size()) {
      sites = kept;
      cells = voronoi_cells(sites, domain);
    }
  }
  if (sites.size() < 4) throw Error(Error::DeltaTooLarge, "fewer than 4 sites own mass");

  for (size_t i = 0; i < sites.size(); ++i)
    for (auto& v : cells[i].vertices)
      if (dist(v, sites[i]) > delta * (1 + 1e-9))
        throw Error(Error::DeltaTooLarge, "covering radius exceeds delta");

  DiscreteMeasure m;
  m.points = sites;
  m.delta = delta;
  m.parent = std::make_shared<DensitySpec>(density);
  m.cells = std::move(cells);
  m.weights.resize(sites.size());
  for (size_t i = 0; i < sites.size(); ++i) {
    const Polytope2& V = m.cells[i];
    if (density.kind == DensitySpec::BoundedOscillation)
      m.weights[i] = integrate_polygon(V, density.evaluator, 1e-8);
    else
      m.weights[i] = integrate_affine(V, density.affine_a, density.affine_b);
  }
  double total = m.total_mass();
  if (total <= 0) throw Error(Error::DeltaTooLarge, "discretization lost all mass");
  for (auto& w : m.weights) w /= total;
  return m;
}

// squared-W2 cost of the coupling that maps each cell to its site; its square
// root upper-bounds W2(mu, mu_delta)
inline double w2_cell_coupling_bound(const DiscreteMeasure& m) {
  if (!m.parent || m.cells.empty())
    throw Error(Error::PreconditionsUnmet, "needs parent density and cells");
  const DensitySpec& d = *m.parent;
  double s = 0;
  for (size_t i = 0; i < m.points.size(); ++i) {
    Vec2 xi = m.points[i];
    s += integrate_polygon(
        m.cells[i], [&](const Vec2& x) { return d.evaluator(x) * dist2(x, xi); }, 1e-8);
  }
  return std::sqrt(std::max(0.0, s));
}

// ------------------------------------------------------------- certificates

struct AssumptionCertificate {
  enum Mode { Balls, ConvexSets };
  double lambda_hat = 0, Lambda_hat = 0;
  double delta = 0;
  int n_samples = 0;
  Vec2 worst_ball_center{};
  double worst_ball_radius = 0;
  Mode mode = Balls;
  bool restricted_to_interior = true;  // says nothing within delta of the boundary
  double ball_lambda_ratio = 1, ball_Lambda_ratio = 1;  // convex-sets mode vs balls mode
};

inline AssumptionCertificate verify_assumption1(const DiscreteMeasure& m, double delta,
                                                int n_samples, std::uint64_t rng_seed) {
  if (n_samples < 100) throw Error(Error::PreconditionsUnmet, "need at least 100 samples");
  const Polytope2& domain = m.parent ? m.parent->domain
                                     : polytope_from_vertices(m.points);
  double ell = radii(domain).inner;
  if (delta > 0.5 * ell) throw Error(Error::NoValidBalls, "delta exceeds half the inner radius");
  Rng rng(rng_seed ^ 0xa55e55);
  SpatialBins bins(m.points, std::max(delta, 1e-9));
  AssumptionCertificate cert;
  cert.delta = delta;
  cert.n_samples = n_samples;
  cert.mode = AssumptionCertificate::Balls;
  cert.lambda_hat = 1e300;
  cert.Lambda_hat = 0;
  int done = 0;
  while (done < n_samples) {
    double r = rng.log_uniform(delta, 0.5 * ell);
    auto shrunk = erode(domain, r);
    if (!shrunk) continue;
    Vec2 c = sample_in_polytope(*shrunk, rng);
    double mass = bins.mass_in_disk(c, r, m.weights);
    double ratio = mass / (M_PI * r * r);
    if (ratio < cert.lambda_hat) {
      cert.lambda_hat = ratio;
      cert.worst_ball_center = c;
      cert.worst_ball_radius = r;
    }
    cert.Lambda_hat = std::max(cert.Lambda_hat, ratio);
    ++done;
  }
  return cert;
}

// disk integral in polar form; composite Simpson radially, trapezoid in angle
template <class F>
inline double integrate_disk(const Vec2& c, double r, F&& f, int nr = 64, int na = 128) {
  if (nr % 2) ++nr;
  double s = 0;
  for (int i = 0; i <= nr; ++i) {
    double rho = r * i / nr;
    double wr = (i == 0 || i == nr) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    double ring = 0;
    for (int j = 0; j < na; ++j) {
      double th = 2 * M_PI * j / na;
      ring += f(Vec2{c[0] + rho * std::cos(th), c[1] + rho * std::sin(th)});
    }
    s += wr * rho * ring;
  }
  return s * (r / (3.0 * nr)) * (2 * M_PI / na);
}

// density-mode certificate: the continuum limit of the ball ratios
inline AssumptionCertificate verify_assumption1(const DensitySpec& density, double delta,
                                                int n_samples, std::uint64_t rng_seed) {
  if (n_samples < 100) throw Error(Error::PreconditionsUnmet, "need at least 100 samples");
  const Polytope2& domain = density.domain;
  double ell = radii(domain).inner;
  if (delta > 0.5 * ell) throw Error(Error::NoValidBalls, "delta exceeds half the inner radius");
  Rng rng(rng_seed ^ 0xa55e55);
  AssumptionCertificate cert;
  cert.delta = delta;
  cert.n_samples = n_samples;
  cert.mode = AssumptionCertificate::Balls;
  cert.lambda_hat = 1e300;
  cert.Lambda_hat = 0;
  int done = 0;
  while (done < n_samples) {
    double r = rng.log_uniform(delta, 0.5 * ell);
    auto shrunk = erode(domain, r);
    if (!shrunk) continue;
    Vec2 c = sample_in_polytope(*shrunk, rng);
    double ratio = integrate_disk(c, r, density.evaluator) / (M_PI * r * r);
    if (ratio < cert.lambda_hat) {
      cert.lambda_hat = ratio;
      cert.worst_ball_center = c;
      cert.worst_ball_radius = r;
    }
    cert.Lambda_hat = std::max(cert.Lambda_hat, ratio);
    ++done;
  }
  return cert;
}

namespace detail {

struct RandomEllipse {
  Vec2 c;
  double a1, a2, theta;  // semi-axes a1 >= a2, rotation
  double quad(const Vec2& x) const {
    Vec2 d = x - c;
    double u = std::cos(theta) * d[0] + std::sin(theta) * d[1];
    double v = -std::sin(theta) * d[0] + std::cos(theta) * d[1];
    return (u * u) / (a1 * a1) + (v * v) / (a2 * a2);
  }
  double support(const Vec2& n) const {  // max of n.x over the ellipse
    double u = std::cos(theta) * n[0] + std::sin(theta) * n[1];
    double v = -std::sin(theta) * n[0] + std::cos(theta) * n[1];
    return dot(n, c) + std::sqrt(a1 * a1 * u * u + a2 * a2 * v * v);
  }
  double area() const { return M_PI * a1 * a2; }
};

}  // namespace detail

inline AssumptionCertificate verify_convex_equivalence(const DiscreteMeasure& m, double delta,
                                                       int n_samples,
                                                       std::uint64_t rng_seed = 0,
                                                       double beta = 2.0,
                                                       double max_aspect = 8.0) {
  if (n_samples < 100) throw Error(Error::PreconditionsUnmet, "need at least 100 samples");
  const Polytope2& domain = m.parent ? m.parent->domain
                                     : polytope_from_vertices(m.points);
  double ell = radii(domain).inner;
  if (beta * delta > 0.5 * ell)
    throw Error(Error::NoValidBalls, "beta*delta exceeds half the inner radius");
  Rng rng(rng_seed ^ 0xc0e11);
  SpatialBins bins(m.points, std::max(delta, 1e-9));
  AssumptionCertificate cert;
  cert.delta = delta;
  cert.n_samples = n_samples;
  cert.mode = AssumptionCertificate::ConvexSets;
  cert.lambda_hat = 1e300;
  cert.Lambda_hat = 0;
  std::vector<int> cand;
  int done = 0;
  while (done < n_samples) {
    detail::RandomEllipse E;
    E.a2 = rng.log_uniform(beta * delta, 0.5 * ell);
    E.a1 = E.a2 * rng.log_uniform(1.0, max_aspect);
    E.theta = rng.uniform(0, M_PI);
    auto shrunk = erode(domain, E.a1);
    if (!shrunk) continue;
    E.c = sample_in_polytope(*shrunk, rng);
    bool inside = true;
    for (auto& h : domain.halfspaces)
      inside = inside && E.support(h.normal) <= h.offset + tol_geom(h.offset);
    if (!inside) continue;
    bins.candidates(E.c, E.a1, cand);
    double mass = 0;
    for (int id : cand)
      if (E.quad(m.points[size_t(id)]) <= 1.0) mass += m.weights[size_t(id)];
    double ratio = mass / E.area();
    if (ratio < cert.lambda_hat) {
      cert.lambda_hat = ratio;
      cert.worst_ball_center = E.c;
      cert.worst_ball_radius = E.a2;
    }
    cert.Lambda_hat = std::max(cert.Lambda_hat, ratio);
    ++done;
  }
  AssumptionCertificate ball = verify_assumption1(m, delta, n_samples, rng_seed);
  cert.ball_lambda_ratio = cert.lambda_hat / std::max(ball.lambda_hat, 1e-300);
  cert.ball_Lambda_ratio = cert.Lambda_hat / std::max(ball.Lambda_hat, 1e-300);
  return cert;
}

}  // namespace kantoreg
