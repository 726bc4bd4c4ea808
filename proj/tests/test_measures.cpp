#include <catch2/catch_amalgamated.hpp>
#include <kantoreg/measures.hpp>

using namespace kantoreg;

namespace {
Polytope2 unit_square() { return make_box({0, 0}, {1, 1}); }
}  // namespace

TEST_CASE("polygon quadrature matches closed forms", "[measures]") {
  Polytope2 sq = unit_square();
  CHECK(integrate_polygon(sq, [](const Vec2&) { return 1.0; }) == Catch::Approx(1.0).margin(1e-12));
  CHECK(integrate_polygon(sq, [](const Vec2& x) { return x[0] * x[1]; }) ==
        Catch::Approx(0.25).margin(1e-10));
  // int_0^1 int_0^1 sin(pi x) sin(pi y) = 4/pi^2
  double osc = integrate_polygon(
      sq, [](const Vec2& x) { return std::sin(M_PI * x[0]) * std::sin(M_PI * x[1]); }, 1e-10);
  CHECK(osc == Catch::Approx(4.0 / (M_PI * M_PI)).epsilon(1e-8));
}

TEST_CASE("density constructors normalize and bound", "[measures]") {
  Polytope2 sq = unit_square();
  DensitySpec u = uniform_density(sq);
  CHECK(integrate_polygon(sq, u.evaluator) == Catch::Approx(1.0).margin(1e-6));

  DensitySpec a = affine_tilt_density(sq, {0.8, -0.3});
  CHECK(integrate_polygon(sq, a.evaluator) == Catch::Approx(1.0).margin(1e-6));
  for (int i = 0; i < 100; ++i) {
    Rng rng(i);
    Vec2 x = {rng.uniform(0, 1), rng.uniform(0, 1)};
    double f = a.evaluator(x);
    CHECK(f >= a.lambda - 1e-12);
    CHECK(f <= a.Lambda + 1e-12);
  }

  DensitySpec o = oscillation_density(sq, 0.5, 2.0);
  CHECK(integrate_polygon(o.domain, o.evaluator) == Catch::Approx(1.0).margin(1e-6));
  CHECK(o.lambda > 0);

  CHECK_THROWS_AS(affine_tilt_density(sq, {3.0, 0.0}), Error);
}

TEST_CASE("grid discretization of the unit square", "[measures]") {
  DensitySpec u = uniform_density(unit_square());
  double delta = 1.0 / 32;
  DiscreteMeasure m = discretize(u, delta, Seeding::Grid);
  CHECK(m.points.size() == 1024);
  CHECK(m.total_mass() == Catch::Approx(1.0).margin(1e-12));
  for (double w : m.weights) CHECK(w == Catch::Approx(delta * delta).margin(1e-12));
  double cell_total = 0;
  for (size_t i = 0; i < m.points.size(); ++i) {
    cell_total += m.cells[i].vol;
    for (auto& v : m.cells[i].vertices) CHECK(dist(v, m.points[i]) <= delta * (1 + 1e-9));
    CHECK(contains_point(u.domain, m.points[i], 1e-12));
  }
  CHECK(cell_total == Catch::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("cell coupling bounds the distance to the parent", "[measures]") {
  DensitySpec u = uniform_density(unit_square());
  double delta = 1.0 / 16;
  DiscreteMeasure g = discretize(u, delta, Seeding::Grid);
  // uniform grid: sqrt(sum over cells of h^4/6) = delta/sqrt(6)
  CHECK(w2_cell_coupling_bound(g) == Catch::Approx(delta / std::sqrt(6.0)).epsilon(1e-6));
  for (auto seeding : {Seeding::JitteredGrid, Seeding::Poisson}) {
    DiscreteMeasure m = discretize(u, delta, seeding, 7);
    CHECK(w2_cell_coupling_bound(m) <= delta);
  }
}

TEST_CASE("total mass one across seeds", "[measures]") {
  DensitySpec u = uniform_density(unit_square());
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    DiscreteMeasure m = discretize(u, 1.0 / 16, Seeding::JitteredGrid, seed);
    CHECK(std::fabs(m.total_mass() - 1.0) < 1e-12);
    for (double w : m.weights) CHECK(w > 0);
  }
}

TEST_CASE("non-square domains discretize cleanly", "[measures]") {
  Polytope2 tri = polytope_from_vertices({{0, 0}, {1, 0}, {0.4, 0.9}});
  DensitySpec u = uniform_density(tri);
  DiscreteMeasure m = discretize(u, 0.05, Seeding::Grid);
  CHECK(m.total_mass() == Catch::Approx(1.0).margin(1e-12));
  double cell_total = 0;
  for (size_t i = 0; i < m.points.size(); ++i) {
    cell_total += m.cells[i].vol;
    CHECK(contains_point(tri, m.points[i], 1e-12));
    for (auto& v : m.cells[i].vertices) CHECK(dist(v, m.points[i]) <= 0.05 * (1 + 1e-9));
  }
  CHECK(cell_total == Catch::Approx(tri.vol).epsilon(1e-7));
}

TEST_CASE("affine weights equal quadrature weights", "[measures]") {
  Polytope2 sq = unit_square();
  DensitySpec a = affine_tilt_density(sq, {0.6, 0.4});
  DiscreteMeasure m = discretize(a, 1.0 / 8, Seeding::Grid);
  CHECK(m.total_mass() == Catch::Approx(1.0).margin(1e-12));
  for (size_t i = 0; i < m.points.size(); ++i) {
    double q = integrate_polygon(m.cells[i], a.evaluator, 1e-10);
    CHECK(m.weights[i] == Catch::Approx(q).epsilon(1e-8));
  }
}

TEST_CASE("delta too large is rejected", "[measures]") {
  DensitySpec u = uniform_density(unit_square());
  CHECK_THROWS_MATCHES(discretize(u, 2.0, Seeding::Grid), Error,
                       Catch::Matchers::Predicate<Error>(
                           [](const Error& e) { return e.kind == Error::DeltaTooLarge; }));
}

TEST_CASE("poisson seeding covers at delta", "[measures]") {
  DensitySpec u = uniform_density(unit_square());
  DiscreteMeasure m = discretize(u, 1.0 / 12, Seeding::Poisson, 3);
  CHECK(m.points.size() >= 4);
  for (size_t i = 0; i < m.points.size(); ++i)
    for (auto& v : m.cells[i].vertices) CHECK(dist(v, m.points[i]) <= (1.0 / 12) * (1 + 1e-9));
}

TEST_CASE("ball certificate on the uniform grid", "[measures]") {
  DensitySpec u = uniform_density(unit_square());
  double delta = 1.0 / 32;
  DiscreteMeasure m = discretize(u, delta, Seeding::Grid);
  AssumptionCertificate cert = verify_assumption1(m, delta, 10000, 42);
  CHECK(cert.lambda_hat >= 0.5);
  CHECK(cert.Lambda_hat <= 2.0);
  CHECK(cert.lambda_hat <= cert.Lambda_hat);
  CHECK(cert.restricted_to_interior);
  CHECK(cert.worst_ball_radius >= delta);
}

TEST_CASE("certificates are monotone in the sample count", "[measures]") {
  DensitySpec u = uniform_density(unit_square());
  DiscreteMeasure m = discretize(u, 1.0 / 16, Seeding::JitteredGrid, 5);
  AssumptionCertificate small = verify_assumption1(m, 1.0 / 16, 500, 9);
  AssumptionCertificate big = verify_assumption1(m, 1.0 / 16, 2000, 9);
  CHECK(big.lambda_hat <= small.lambda_hat);
  CHECK(big.Lambda_hat >= small.Lambda_hat);
}

TEST_CASE("a lone atom fails the assumption", "[measures]") {
  DiscreteMeasure m;
  m.points = {{0.5, 0.5}};
  m.weights = {1.0};
  m.delta = 0.05;
  m.parent = std::make_shared<DensitySpec>(uniform_density(unit_square()));
  AssumptionCertificate cert = verify_assumption1(m, 0.05, 1000, 1);
  CHECK(cert.lambda_hat == 0.0);
  CHECK_THROWS_MATCHES(verify_assumption1(m, 0.3, 1000, 1), Error,
                       Catch::Matchers::Predicate<Error>(
                           [](const Error& e) { return e.kind == Error::NoValidBalls; }));
}

TEST_CASE("density-mode certificate is flat for uniform", "[measures]") {
  DensitySpec u = uniform_density(unit_square());
  AssumptionCertificate cert = verify_assumption1(u, 0.01, 200, 4);
  CHECK(cert.lambda_hat == Catch::Approx(1.0).margin(1e-6));
  CHECK(cert.Lambda_hat == Catch::Approx(1.0).margin(1e-6));
}

TEST_CASE("convex-set certificate stays within the covering constants", "[measures]") {
  DensitySpec u = uniform_density(unit_square());
  double delta = 1.0 / 32;
  DiscreteMeasure m = discretize(u, delta, Seeding::Grid);
  AssumptionCertificate ball = verify_assumption1(m, delta, 2000, 11);
  AssumptionCertificate conv = verify_convex_equivalence(m, delta, 2000, 11);
  double beta = 2.0;
  double factor = 9.0 * (1 + 1 / beta) * (1 + 1 / beta);  // 3^n (1+1/beta)^n, n = 2
  CHECK(conv.Lambda_hat / conv.lambda_hat <=
        factor * (ball.Lambda_hat / ball.lambda_hat) + 1e-9);
  CHECK(conv.mode == AssumptionCertificate::ConvexSets);
  CHECK(conv.ball_lambda_ratio > 0);
}

TEST_CASE("ellipse mass at aspect one matches the disk mass", "[measures]") {
  DensitySpec u = uniform_density(unit_square());
  DiscreteMeasure m = discretize(u, 1.0 / 16, Seeding::JitteredGrid, 2);
  SpatialBins bins(m.points, 1.0 / 16);
  Rng rng(77);
  std::vector<int> cand;
  for (int s = 0; s < 50; ++s) {
    detail::RandomEllipse E;
    E.a1 = E.a2 = rng.uniform(0.05, 0.2);
    E.theta = rng.uniform(0, M_PI);
    E.c = {rng.uniform(0.25, 0.75), rng.uniform(0.25, 0.75)};
    double disk = bins.mass_in_disk(E.c, E.a1, m.weights);
    bins.candidates(E.c, E.a1, cand);
    double ell = 0;
    for (int id : cand)
      if (E.quad(m.points[size_t(id)]) <= 1.0) ell += m.weights[size_t(id)];
    CHECK(std::fabs(disk - ell) < 1e-9);
  }
}

TEST_CASE("whole-domain mass ratio is exact", "[measures]") {
  Polytope2 sq = unit_square();
  DensitySpec u = uniform_density(sq);
  DiscreteMeasure m = discretize(u, 1.0 / 16, Seeding::Grid);
  CHECK(m.total_mass() / sq.vol == Catch::Approx(1.0 / sq.vol).margin(1e-12));
}
