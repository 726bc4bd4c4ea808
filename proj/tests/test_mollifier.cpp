#include <catch2/catch_amalgamated.hpp>
#include <kantoreg/mollifier.hpp>

#include <cmath>
#include <memory>
#include <numeric>
#include <sstream>

using namespace kantoreg;

namespace {

PiecewiseAffineConvex cross_norm() {
  PiecewiseAffineConvex psi;
  psi.slopes = {{1, 1}, {1, -1}, {-1, 1}, {-1, -1}};
  psi.intercepts = {0, 0, 0, 0};
  psi.origin = {0, 1, 2, 3};
  return psi;
}

PiecewiseAffineConvex cone(double L, int k) {
  PiecewiseAffineConvex psi;
  for (int j = 0; j < k; ++j) {
    double a = 2 * M_PI * j / k;
    psi.slopes.push_back({L * std::cos(a), L * std::sin(a)});
    psi.intercepts.push_back(0);
    psi.origin.push_back(j);
  }
  return psi;
}

PiecewiseAffineConvex random_pwac(Rng& rng, int inner) {
  PiecewiseAffineConvex psi;
  for (int j = 0; j < 12; ++j) {
    double a = 2 * M_PI * j / 12 + 0.13;
    psi.slopes.push_back({8 * std::cos(a), 8 * std::sin(a)});
    psi.intercepts.push_back(-6.0);
  }
  for (int j = 0; j < inner; ++j) {
    psi.slopes.push_back({rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5)});
    psi.intercepts.push_back(rng.uniform(-0.4, 0.0));
  }
  psi.origin.resize(psi.slopes.size());
  std::iota(psi.origin.begin(), psi.origin.end(), 0);
  return psi;
}

PiecewiseAffineConvex tilt_potential(double delta) {
  auto omega = make_box({0, 0}, {1, 1});
  auto src = std::make_shared<DensitySpec>(uniform_density(omega));
  auto tgt = std::make_shared<DensitySpec>(affine_tilt_density(omega, {0.2, 0.1}));
  auto mu = discretize(*src, delta, Seeding::Grid, 3);
  auto nu = discretize(*tgt, delta, Seeding::JitteredGrid, 9);
  auto sol = solve_exact(mu, nu);
  return build_potential(sol.phi, nu);
}

double cone_apex_ball(double L, int k, double r) {
  return 16 * L / (3 * r) * (k / M_PI) * std::sin(M_PI / k);
}

double cone_apex_sphere(double L, int k, double r) {
  return 4 * L / r * (k / M_PI) * std::sin(M_PI / k);
}

template <class F>
int thrown_kind(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind;
  }
  return -1;
}

}  // namespace

TEST_CASE("presets satisfy the moment normalization", "[mollifier]") {
  auto ks = kernel_presets(0.3);
  REQUIRE(ks.size() == 2);
  CHECK(ks[0].kind == KernelKind::BallIndicator);
  CHECK(ks[0].m0 == 8.0);
  CHECK(ks[1].kind == KernelKind::SphereSurface);
  CHECK(ks[1].m0 == 4.0);
  for (auto& k : ks) {
    CHECK(k.r == 0.3);
    CHECK_NOTHROW(validate_kernel(k));
  }

  auto flat = custom_radial_kernel([](double) { return 1.0; }, 0.3);
  CHECK(flat.m0 == Catch::Approx(8.0).margin(1e-10));
  CHECK_NOTHROW(validate_kernel(flat));

  KernelSpec bad = ball_kernel(0.3);
  bad.m0 = 7.5;
  CHECK(thrown_kind([&] { validate_kernel(bad); }) == Error::ConfigError);
  bad = ball_kernel(-1);
  CHECK(thrown_kind([&] { validate_kernel(bad); }) == Error::ConfigError);
}

TEST_CASE("quadratics reproduce twice the trace for every kernel", "[mollifier]") {
  double axx = 0.7, axy = 0.2, ayy = 0.4;
  auto quad = [&](const Vec2& y) {
    return axx * y[0] * y[0] + 2 * axy * y[0] * y[1] + ayy * y[1] * y[1] + 0.3 * y[0] - 1.1;
  };
  auto half_norm2 = [](const Vec2& y) { return 0.5 * (y[0] * y[0] + y[1] * y[1]); };
  Vec2 x{0.3, -0.2};
  auto flat = custom_radial_kernel([](double) { return 1.0; }, 1.0);
  for (double r : {0.01, 0.1, 0.5}) {
    for (auto k : {ball_kernel(r), sphere_kernel(r)}) {
      CHECK(delta_r(quad, x, k) == Catch::Approx(2 * (axx + ayy)).margin(1e-9));
      CHECK(delta_r(half_norm2, x, k) == Catch::Approx(2.0).margin(1e-9));
    }
    flat.r = r;
    CHECK(delta_r(quad, x, flat) == Catch::Approx(2 * (axx + ayy)).margin(1e-9));
  }
}

TEST_CASE("affine inputs have zero mollified laplacian", "[mollifier]") {
  PiecewiseAffineConvex aff;
  aff.slopes = {{0.3, -1.0}};
  aff.intercepts = {0.7};
  aff.origin = {0};
  for (auto& k : kernel_presets(0.25)) {
    CHECK(delta_r(aff, {0.4, 2.0}, k) == 0.0);
    CHECK(delta_r(aff, {0.4, 2.0}, k, Vec2{0.3, -1.0}) == 0.0);
  }
  auto affine_fn = [](const Vec2& y) { return 0.3 * y[0] - y[1] + 0.7; };
  CHECK(std::fabs(delta_r(affine_fn, {0.4, 2.0}, ball_kernel(0.25))) <= 1e-12);
}

TEST_CASE("a polyhedral cone apex calibrates both kernels", "[mollifier]") {
  auto psi = cone(1.0, 64);
  for (double r : {0.1, 0.5}) {
    double vb = delta_r(psi, {0, 0}, ball_kernel(r));
    CHECK(vb == Catch::Approx(cone_apex_ball(1.0, 64, r)).margin(1e-5 * (1 + vb)));
    double vs = delta_r(psi, {0, 0}, sphere_kernel(r));
    CHECK(vs == Catch::Approx(cone_apex_sphere(1.0, 64, r)).margin(1e-11 * (1 + vs)));
  }
  // smooth-limit check against the exact disk averages of |y|
  auto abs_fn = [](const Vec2& y) { return std::hypot(y[0], y[1]); };
  for (double r : {0.1, 0.5}) {
    double vb = delta_r(abs_fn, {0, 0}, ball_kernel(r));
    CHECK(vb == Catch::Approx(16 / (3 * r)).margin(1e-6 * (1 + vb)));
    double vs = delta_r(abs_fn, {0, 0}, sphere_kernel(r));
    CHECK(vs == Catch::Approx(4 / r).margin(1e-9 * (1 + vs)));
  }
}

TEST_CASE("crease lines carry the smeared jump", "[mollifier]") {
  auto psi = cross_norm();
  double r = 0.2;
  // one crease inside the ball: the mass 2 jump smears to 32/(3 pi r)
  double v1 = delta_r(psi, {0, 0.4}, ball_kernel(r));
  CHECK(v1 == Catch::Approx(32 / (3 * M_PI * r)).margin(1e-5 * (1 + v1)));
  double v1s = delta_r(psi, {0, 0.4}, sphere_kernel(r));
  CHECK(v1s == Catch::Approx(8 / (M_PI * r)).margin(1e-11 * (1 + v1s)));
  // both creases meet at the origin
  double v2 = delta_r(psi, {0, 0}, ball_kernel(r));
  CHECK(v2 == Catch::Approx(64 / (3 * M_PI * r)).margin(1e-5 * (1 + v2)));
  double v2s = delta_r(psi, {0, 0}, sphere_kernel(r));
  CHECK(v2s == Catch::Approx(16 / (M_PI * r)).margin(1e-11 * (1 + v2s)));
  // a custom profile mimicking the ball agrees on the crease
  auto flat = custom_radial_kernel([](double) { return 1.0; }, r);
  double vc = delta_r(psi, {0, 0.4}, flat);
  CHECK(vc == Catch::Approx(32 / (3 * M_PI * r)).margin(2e-5 * (1 + vc)));
}

TEST_CASE("subgradient shifts leave the value unchanged", "[mollifier]") {
  auto psi = cross_norm();
  for (auto& k : kernel_presets(0.15)) {
    double base = delta_r(psi, {0, 0}, k);
    for (Vec2 p : {Vec2{1, 1}, Vec2{-1, 1}, Vec2{1, -1}, Vec2{-1, -1}, Vec2{0, 0},
                   Vec2{0.3, -0.7}}) {
      CHECK(delta_r(psi, {0, 0}, k, p) == Catch::Approx(base).margin(1e-10 * (1 + base)));
    }
    double edge = delta_r(psi, {0, 0.4}, k);
    for (Vec2 p : {Vec2{1, 1}, Vec2{-1, 1}, Vec2{0.2, 1}}) {
      CHECK(delta_r(psi, {0, 0.4}, k, p) == Catch::Approx(edge).margin(1e-10 * (1 + edge)));
    }
    CHECK(thrown_kind([&] { delta_r(psi, {0, 0}, k, Vec2{2, 0}); }) == Error::NotASubgradient);
  }
}

TEST_CASE("random potentials have nonnegative mollified laplacian", "[mollifier]") {
  Rng rng(2026);
  for (int trial = 0; trial < 12; ++trial) {
    auto psi = random_pwac(rng, 30);
    for (int q = 0; q < 5; ++q) {
      Vec2 x{rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4)};
      for (auto& k : kernel_presets(0.15)) {
        double v = delta_r(psi, x, k);
        CHECK(v >= -1e-10);
        CHECK(delta_r(psi, x, k) == v);
      }
    }
  }
}

TEST_CASE("small radius consistency is second order", "[mollifier]") {
  auto f = [](const Vec2& y) {
    double n2 = y[0] * y[0] + y[1] * y[1];
    return 0.5 * n2 + n2 * n2;
  };
  Vec2 x{0.3, 0.1};
  double lap = 2 + 16 * (x[0] * x[0] + x[1] * x[1]);
  for (auto& k0 : kernel_presets(1.0)) {
    KernelSpec k = k0;
    k.r = 0.2;
    double e1 = delta_r(f, x, k) - lap;
    k.r = 0.1;
    double e2 = delta_r(f, x, k) - lap;
    CHECK(e1 > 0);
    CHECK(e1 / e2 == Catch::Approx(4.0).epsilon(1e-3));
  }
}

TEST_CASE("quadratic fields are constant with the exact mass", "[mollifier]") {
  auto f = [](const Vec2& y) { return 0.5 * (y[0] * y[0] + y[1] * y[1]); };
  auto region = make_box({0, 0}, {1, 1});
  auto field = laplacian_field(f, region, 0.1, ball_kernel(1), 1.0 / 8);
  CHECK(field.nx == 16);
  CHECK(field.ny == 16);
  CHECK(field.r == 0.1);
  for (double v : field.values) {
    REQUIRE(std::isfinite(v));
    CHECK(v == Catch::Approx(2.0).margin(1e-9));
  }
  CHECK(field.l1_norm == Catch::Approx(2.0).margin(2e-3));
  CHECK(field.certified_rel_err <= 0.01);
}

TEST_CASE("fields vanish away from the creases", "[mollifier]") {
  auto psi = cross_norm();
  auto region = make_box({0.3, 0.3}, {0.8, 0.8});
  auto field = laplacian_field(psi, region, 0.1, ball_kernel(1), 0.05);
  size_t inside = 0;
  for (double v : field.values)
    if (std::isfinite(v)) {
      ++inside;
      CHECK(v == 0.0);
    }
  CHECK(inside == field.nx * field.ny);
  CHECK(field.l1_norm == 0.0);
}

TEST_CASE("field mass matches the crease jump mass", "[mollifier]") {
  auto psi = cross_norm();
  auto region = make_box({-0.6, -0.6}, {0.6, 0.6});
  double jump = edge_jump_mass(psi, region);
  CHECK(jump == Catch::Approx(4 * 1.2 * 2 / 2).margin(1e-9));  // two creases, jump 2 each
  auto field = laplacian_field(psi, region, 0.2, ball_kernel(1), 0.05);
  CHECK(field.l1_norm == Catch::Approx(jump).epsilon(0.015));
}

TEST_CASE("transport potentials obey the smearing inequalities", "[mollifier]") {
  auto psi = tilt_potential(1.0 / 16);
  double r = 0.05;
  auto region = make_box({0.3, 0.3}, {0.7, 0.7});
  auto field = laplacian_field(psi, region, r, ball_kernel(1), 0.025);
  double upper = edge_jump_mass(psi, make_box({0.3 - r, 0.3 - r}, {0.7 + r, 0.7 + r}));
  double lower = edge_jump_mass(psi, make_box({0.3 + r, 0.3 + r}, {0.7 - r, 0.7 - r}));
  CHECK(lower > 0);
  CHECK(field.l1_norm <= 1.02 * upper);
  CHECK(field.l1_norm >= 0.98 * lower);
}

TEST_CASE("flat facets contribute the exact jump mass", "[mollifier]") {
  PiecewiseAffineConvex psi;
  psi.slopes = {{0, 0}, {1, 0}, {-1, 0}, {0, 1}, {0, -1}};
  psi.intercepts = {0.5, 0, 0, 0, 0};
  psi.origin = {0, 1, 2, 3, 4};
  // the flat cell is the square |x_i| <= 1/2: four unit edges with jump 1,
  // then diagonal creases with jump sqrt(2) out to the window
  CHECK(edge_jump_mass(psi, make_box({-2, -2}, {2, 2})) ==
        Catch::Approx(4 + 4 * 1.5 * std::sqrt(2.0) * std::sqrt(2.0)).margin(1e-9));
  CHECK(edge_jump_mass(psi, make_box({-3, -3}, {3, 3})) ==
        Catch::Approx(4 + 4 * 2.5 * 2).margin(1e-9));
}

TEST_CASE("binary grids round trip exactly", "[mollifier]") {
  auto psi = cross_norm();
  auto region = make_box({-0.5, -0.3}, {0.4, 0.6});
  auto field = laplacian_field(psi, region, 0.15, ball_kernel(1), 0.1);
  std::ostringstream out(std::ios::binary);
  field.write_grid(out);
  std::istringstream in(out.str(), std::ios::binary);
  auto back = LaplacianField::read_grid(in);
  CHECK(back.nx == field.nx);
  CHECK(back.ny == field.ny);
  CHECK(back.step == field.step);
  CHECK(back.r == field.r);
  CHECK(back.xmin == field.xmin);
  CHECK(back.ymax == field.ymax);
  REQUIRE(back.values.size() == field.values.size());
  CHECK(std::memcmp(back.values.data(), field.values.data(),
                    field.values.size() * sizeof(double)) == 0);
  CHECK(back.l1_norm == field.l1_norm);

  std::ostringstream csv;
  field.write_csv(csv);
  std::string text = csv.str();
  CHECK(text.rfind("x,y,value\n", 0) == 0);
  size_t lines = std::count(text.begin(), text.end(), '\n');
  size_t inside = 0;
  for (double v : field.values)
    if (std::isfinite(v)) ++inside;
  CHECK(lines == inside + 1);

  std::istringstream junk("not a grid at all, definitely");
  CHECK(thrown_kind([&] { LaplacianField::read_grid(junk); }) == Error::ConfigError);
}

TEST_CASE("rough custom profiles fail with a quadrature error", "[mollifier]") {
  auto rough = custom_radial_kernel(
      [](double rho) { return 1 + 0.9 * std::sin(1000 * rho); }, 0.3);
  CHECK_NOTHROW(validate_kernel(rough));
  auto psi = cross_norm();
  CHECK(thrown_kind([&] { delta_r(psi, {0.1, 0.07}, rough); }) == Error::QuadratureNotConverged);
}
