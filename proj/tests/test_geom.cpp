#include <catch2/catch_amalgamated.hpp>
#include <kantoreg/geom.hpp>

using namespace kantoreg;

namespace {

Polytope2 random_body(Rng& rng, int npts) {
  for (;;) {
    detail::Chain pts;
    for (int i = 0; i < npts; ++i) pts.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1)});
    Polytope2 P = polytope_from_vertices(pts);
    if (P.vol > 0.05) return P;
  }
}

}  // namespace

TEST_CASE("low-dimensional LP maximizes within the feasible region", "[geom]") {
  std::vector<detail::LpCon> cons;
  detail::LpCon c1, c2, c3, c4;
  c1.a = {1, 0, 0, 0};  c1.b = 1;
  c2.a = {-1, 0, 0, 0}; c2.b = 0;
  c3.a = {0, 1, 0, 0};  c3.b = 1;
  c4.a = {0, -1, 0, 0}; c4.b = 0;
  cons = {c1, c2, c3, c4};
  auto r = detail::lp_solve(2, cons, {1, 1, 0, 0}, 1e6);
  REQUIRE(r.status == detail::LpResult::Optimal);
  CHECK(r.x[0] == Catch::Approx(1.0).margin(1e-9));
  CHECK(r.x[1] == Catch::Approx(1.0).margin(1e-9));

  detail::LpCon c5;
  c5.a = {1, 1, 0, 0};
  c5.b = 0.5;
  cons.push_back(c5);
  r = detail::lp_solve(2, cons, {1, 1, 0, 0}, 1e6);
  REQUIRE(r.status == detail::LpResult::Optimal);
  CHECK(r.x[0] + r.x[1] == Catch::Approx(0.5).margin(1e-9));

  detail::LpCon c6;  // x >= 2 contradicts x <= 1
  c6.a = {-1, 0, 0, 0};
  c6.b = -2;
  cons.push_back(c6);
  r = detail::lp_solve(2, cons, {1, 1, 0, 0}, 1e6);
  CHECK(r.status == detail::LpResult::Infeasible);
}

TEST_CASE("minimum enclosing ball oracles", "[geom]") {
  auto b = detail::min_enclosing_ball<2>({{0, 0}, {2, 0}});
  CHECK(b.r == Catch::Approx(1.0).margin(1e-12));
  CHECK(b.c[0] == Catch::Approx(1.0).margin(1e-12));

  b = detail::min_enclosing_ball<2>({{0, 0}, {1, 0}, {0.5, 0.1}, {0.5, -0.1}});
  CHECK(b.r == Catch::Approx(0.5).margin(1e-9));

  std::vector<Vec3> cube;
  for (int s = 0; s < 8; ++s)
    cube.push_back({s & 1 ? 1.0 : -1.0, s & 2 ? 1.0 : -1.0, s & 4 ? 1.0 : -1.0});
  auto b3 = detail::min_enclosing_ball<3>(cube);
  CHECK(b3.r == Catch::Approx(std::sqrt(3.0)).margin(1e-9));
  CHECK(norm(b3.c) < 1e-9);
}

TEST_CASE("square and cross-polytope radii", "[geom]") {
  Polytope2 sq = make_box({-1, -1}, {1, 1});
  CHECK(sq.vol == Catch::Approx(4.0).margin(1e-12));
  CHECK(norm(sq.center_of_mass) < 1e-12);
  auto r = radii(sq);
  CHECK(r.inner == Catch::Approx(1.0).margin(1e-9));
  CHECK(r.outer == Catch::Approx(std::sqrt(2.0)).margin(1e-9));

  Polytope2 diamond = polytope_from_vertices({{1, 0}, {0, 1}, {-1, 0}, {0, -1}});
  CHECK(diamond.vol == Catch::Approx(2.0).margin(1e-12));
  auto rd = radii(diamond);
  CHECK(rd.inner == Catch::Approx(1.0 / std::sqrt(2.0)).margin(1e-9));
  CHECK(rd.outer == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("right triangle inradius", "[geom]") {
  Polytope2 T = polytope_from_vertices({{0, 0}, {1, 0}, {0, 1}});
  CHECK(T.vol == Catch::Approx(0.5).margin(1e-12));
  auto r = radii(T);
  CHECK(r.inner == Catch::Approx((2.0 - std::sqrt(2.0)) / 2.0).margin(1e-9));
  CHECK(r.outer == Catch::Approx(std::sqrt(2.0) / 2.0).margin(1e-9));
}

TEST_CASE("H and V representations agree", "[geom]") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Polytope2 K = random_body(rng, 3 + int(rng.uniform_index(10)));
    Polytope2 K2 = polytope_from_halfspaces(K.halfspaces);
    CHECK(std::fabs(K2.vol - K.vol) <= 1e-7 * (1 + K.vol));
    for (auto& v : K.vertices)
      for (auto& h : K.halfspaces) CHECK(dot(h.normal, v) <= h.offset + tol_geom(h.offset));
    CHECK(dist(K2.center_of_mass, K.center_of_mass) < 1e-7);
  }
}

TEST_CASE("polar duality on the square pair", "[geom]") {
  Polytope2 sq = make_box({-1, -1}, {1, 1});
  Polytope2 pol = polar_body(sq, {0, 0});
  CHECK(pol.vol == Catch::Approx(2.0).margin(1e-9));  // cross-polytope
  Polytope2 bidual = polar_body(pol, {0, 0});
  CHECK(bidual.vol == Catch::Approx(4.0).margin(1e-9));
  for (auto& v : sq.vertices) {
    double best = 1e300;
    for (auto& w : bidual.vertices) best = std::min(best, dist(v, w));
    CHECK(best < 1e-9);
  }
}

TEST_CASE("polar of a regular polygon pinches the dual ball", "[geom]") {
  double r = 0.7;
  Polytope2 K = regular_ngon({0, 0}, r, 64);
  Polytope2 P = polar_body(K, {0, 0});
  auto rp = radii(P);
  CHECK(rp.inner >= 1.0 / r - 1e-9);
  CHECK(rp.outer <= 1.0 / (r * std::cos(M_PI / 64)) + 1e-9);
}

TEST_CASE("volume product bounds", "[geom]") {
  Rng rng(12);
  const double lower = M_PI * M_PI / 16.0;   // omega_2^2 / (2n)^n
  const double upper = 4.0 * M_PI * M_PI;    // n^n omega_2^2
  for (int trial = 0; trial < 12; ++trial) {
    Polytope2 K = random_body(rng, 3 + int(rng.uniform_index(9)));
    Polytope2 P = polar_body(K, K.center_of_mass);
    double prod = K.vol * P.vol;
    CHECK(prod >= lower - 1e-9);
    Ellipsoid<2> E = john_ellipsoid(K);
    Polytope2 Pj = polar_body(K, E.center);
    double best = std::min(prod, K.vol * Pj.vol);
    CHECK(K.vol * Pj.vol >= M_PI * M_PI / 4.0 - 1e-9);  // n^-n omega_n^2 at the john center
    CHECK(best <= upper + 1e-9);
  }
}

TEST_CASE("inner radius and polar outer radius are dual", "[geom]") {
  Rng rng(13);
  for (int trial = 0; trial < 12; ++trial) {
    Polytope2 K = random_body(rng, 3 + int(rng.uniform_index(9)));
    Polytope2 P = polar_body(K, K.center_of_mass);
    double prod = radii(K).inner * radii(P).outer;
    CHECK(prod >= 0.25 - 1e-9);  // 1/(2n)
  }
  // chebyshev-centered polar makes the product exactly one
  Polytope2 T = polytope_from_vertices({{0, 0}, {2, 0}, {0.3, 1.4}});
  auto rT = radii(T);
  Polytope2 P = polar_body(T, rT.inner_center);
  CHECK(rT.inner * radii(P).outer == Catch::Approx(1.0).margin(1e-6));
}

TEST_CASE("john ellipsoid of boxes", "[geom]") {
  Polytope2 sq = make_box({-1, -1}, {1, 1});
  Ellipse E = john_ellipsoid(sq);
  CHECK(norm(E.center) < 1e-8);
  CHECK(E.shape[0][0] == Catch::Approx(1.0).epsilon(1e-6));
  CHECK(E.shape[1][1] == Catch::Approx(1.0).epsilon(1e-6));
  CHECK(std::fabs(E.shape[0][1]) < 1e-8);

  Polytope2 rect = make_box({-2, -1}, {2, 1});
  E = john_ellipsoid(rect);
  CHECK(E.shape[0][0] == Catch::Approx(0.25).epsilon(1e-6));
  CHECK(E.shape[1][1] == Catch::Approx(1.0).epsilon(1e-6));
  CHECK(E.volume() == Catch::Approx(2.0 * M_PI).epsilon(1e-6));
}

TEST_CASE("john ellipsoid of a triangle has the tight area ratio", "[geom]") {
  Polytope2 T = polytope_from_vertices({{0, 0}, {1, 0}, {0, 1}});
  Ellipse E = john_ellipsoid(T);
  CHECK(E.volume() / T.vol == Catch::Approx(M_PI / (3.0 * std::sqrt(3.0))).epsilon(1e-6));
  // touching: the ellipse fits inside
  Polytope2 ep = ellipse_to_polytope(E, 1.0, 256);
  CHECK(contains(T, ep, 1e-6));
}

TEST_CASE("john sandwich and trace bounds", "[geom]") {
  Rng rng(14);
  for (int trial = 0; trial < 10; ++trial) {
    Polytope2 K = random_body(rng, 3 + int(rng.uniform_index(9)));
    Ellipse E = john_ellipsoid(K);
    Polytope2 inner = ellipse_to_polytope(E, 1.0, 128);
    CHECK(contains(K, inner, 1e-5));
    for (auto& v : K.vertices) CHECK(E.quad(v) <= 4.0 + 1e-6);  // K inside 2E
    double ell = radii(K).inner;
    double tr = E.trace();
    CHECK(tr >= 1.0 / (ell * ell) - 1e-6);
    CHECK(tr <= 8.0 / (ell * ell) + 1e-6);  // n^3 = 8
  }
}

TEST_CASE("regular polygon area approximations", "[geom]") {
  double r = 0.83;
  Polytope2 K = regular_ngon({0.2, -0.1}, r, 128);
  double exact = 0.5 * 128 * std::sin(2 * M_PI / 128) * r * r;
  CHECK(K.vol == Catch::Approx(exact).epsilon(1e-12));
  CHECK(std::fabs(K.vol - M_PI * r * r) / (M_PI * r * r) < 2e-3);
}

TEST_CASE("dilation scales area and fixes the anchor", "[geom]") {
  Polytope2 T = polytope_from_vertices({{0, 0}, {2, 0}, {0.5, 1.5}});
  Vec2 about = {0.1, 0.2};
  Polytope2 D = dilate(T, 2.5, about);
  CHECK(D.vol == Catch::Approx(2.5 * 2.5 * T.vol).epsilon(1e-12));
  CHECK(dist(D.center_of_mass, about + 2.5 * (T.center_of_mass - about)) < 1e-12);
  Polytope2 rebuilt = polytope_from_halfspaces(D.halfspaces);
  CHECK(rebuilt.vol == Catch::Approx(D.vol).epsilon(1e-9));
  Polytope2 S = dilate(T, 0.5);
  CHECK(contains(T, S, 0));
}

TEST_CASE("polar reverses inclusion", "[geom]") {
  Rng rng(15);
  for (int trial = 0; trial < 10; ++trial) {
    Polytope2 A = random_body(rng, 5);
    Polytope2 B = polytope_from_vertices([&] {
      detail::Chain pts = A.vertices;
      for (int i = 0; i < 4; ++i) pts.push_back({rng.uniform(-1.4, 1.4), rng.uniform(-1.4, 1.4)});
      return pts;
    }());
    REQUIRE(contains(B, A, 1e-12));
    Vec2 x0 = A.center_of_mass;
    Polytope2 Ap = polar_body(A, x0);
    Polytope2 Bp = polar_body(B, x0);
    CHECK(contains(Ap, Bp, 1e-9));
  }
}

TEST_CASE("intersections of boxes", "[geom]") {
  Polytope2 A = make_box({0, 0}, {2, 2});
  Polytope2 B = make_box({1, 1}, {3, 3});
  auto I = intersect(A, B);
  REQUIRE(I.has_value());
  CHECK(I->vol == Catch::Approx(1.0).margin(1e-12));
  CHECK(intersection_area(A, make_box({5, 5}, {6, 6})) == 0.0);
  CHECK(intersects(A, B));
}

TEST_CASE("empty and unbounded intersections are reported", "[geom]") {
  std::vector<Halfspace2> empty_hs = {{{1, 0}, -1.0}, {{-1, 0}, -1.0}};
  CHECK_THROWS_MATCHES(polytope_from_halfspaces(empty_hs), Error,
                       Catch::Matchers::Predicate<Error>(
                           [](const Error& e) { return e.kind == Error::EmptyIntersection; }));
  std::vector<Halfspace2> open_hs = {{{1, 0}, 1.0}, {{0, 1}, 1.0}, {{0, -1}, 1.0}};
  CHECK_THROWS_MATCHES(polytope_from_halfspaces(open_hs), Error,
                       Catch::Matchers::Predicate<Error>(
                           [](const Error& e) { return e.kind == Error::Unbounded; }));
  Polytope2 sq = make_box({-1, -1}, {1, 1});
  CHECK_THROWS_MATCHES(polar_body(sq, {1.0, 0.0}), Error,
                       Catch::Matchers::Predicate<Error>(
                           [](const Error& e) { return e.kind == Error::PolarUnbounded; }));
}

TEST_CASE("cube, octahedron, and their duality", "[geom]") {
  std::vector<Halfspace3> cube_hs;
  for (int j = 0; j < 3; ++j)
    for (int s : {+1, -1}) {
      Vec3 n{0, 0, 0};
      n[j] = s;
      cube_hs.push_back({n, 1.0});
    }
  Polytope3 cube = polytope_from_halfspaces(cube_hs);
  CHECK(cube.vertices.size() == 8);
  CHECK(cube.vol == Catch::Approx(8.0).margin(1e-9));
  CHECK(norm(cube.center_of_mass) < 1e-9);
  auto r = radii(cube);
  CHECK(r.inner == Catch::Approx(1.0).margin(1e-9));
  CHECK(r.outer == Catch::Approx(std::sqrt(3.0)).margin(1e-9));

  Polytope3 octa = polar_body(cube, {0, 0, 0});
  CHECK(octa.vertices.size() == 6);
  CHECK(octa.vol == Catch::Approx(4.0 / 3.0).margin(1e-9));
  auto ro = radii(octa);
  CHECK(ro.inner == Catch::Approx(1.0 / std::sqrt(3.0)).margin(1e-9));
  CHECK(ro.outer == Catch::Approx(1.0).margin(1e-9));
  CHECK(cube.vol * octa.vol >= std::pow(M_PI, 2) * 16.0 / 9.0 / 216.0);  // omega_3^2/6^3

  Ellipsoid<3> E = john_ellipsoid(cube);
  CHECK(norm(E.center) < 1e-5);
  for (int i = 0; i < 3; ++i) CHECK(E.shape[i][i] == Catch::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("affine integrals over polygons are exact", "[geom]") {
  Polytope2 sq = make_box({0, 0}, {1, 1});
  CHECK(integrate_affine(sq, {2, 3}, 1.0) == Catch::Approx(3.5).margin(1e-12));
  Polytope2 T = polytope_from_vertices({{0, 0}, {1, 0}, {0, 1}});
  // int_T x dA = 1/6
  CHECK(integrate_affine(T, {1, 0}, 0.0) == Catch::Approx(1.0 / 6.0).margin(1e-12));
}

TEST_CASE("ellipse polygonization areas", "[geom]") {
  Ellipse E;
  E.center = {0.3, -0.4};
  E.shape = {{{1, 0}, {0, 1}}};
  Polytope2 circle = ellipse_to_polytope(E, 1.0, 256);
  CHECK(std::fabs(circle.vol - M_PI) / M_PI < 1e-3);
  E.shape = {{{4, 0}, {0, 1}}};  // semi-axes 1/2 and 1
  Polytope2 ell = ellipse_to_polytope(E, 1.0, 256);
  CHECK(std::fabs(ell.vol - M_PI / 2) / (M_PI / 2) < 1e-3);
  Polytope2 doubled = ellipse_to_polytope(E, 2.0, 256);
  CHECK(doubled.vol == Catch::Approx(4.0 * ell.vol).epsilon(1e-9));
}

TEST_CASE("point sampling lands inside", "[geom]") {
  Rng rng(16);
  Polytope2 T = polytope_from_vertices({{0, 0}, {1, 0}, {0.2, 0.9}});
  for (int i = 0; i < 200; ++i) CHECK(contains_point(T, sample_in_polytope(T, rng)));
}
