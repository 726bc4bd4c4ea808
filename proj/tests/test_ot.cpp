#include <catch2/catch_amalgamated.hpp>
#include <kantoreg/ot.hpp>

#include <algorithm>
#include <numeric>

using namespace kantoreg;

namespace {

DiscreteMeasure atoms(std::vector<Vec2> pts, std::vector<double> w) {
  DiscreteMeasure m;
  m.points = std::move(pts);
  m.weights = std::move(w);
  return m;
}

DiscreteMeasure uniform_atoms(std::vector<Vec2> pts) {
  size_t n = pts.size();
  return atoms(std::move(pts), std::vector<double>(n, 1.0 / double(n)));
}

std::vector<Vec2> random_cloud(Rng& rng, size_t n, double lo = 0, double hi = 1) {
  std::vector<Vec2> pts(n);
  for (auto& p : pts) p = {rng.uniform(lo, hi), rng.uniform(lo, hi)};
  return pts;
}

double permutation_cost(const std::vector<Vec2>& xs, const std::vector<Vec2>& ys) {
  size_t n = xs.size();
  std::vector<size_t> perm(n);
  std::iota(perm.begin(), perm.end(), size_t(0));
  double best = 1e300;
  do {
    double c = 0;
    for (size_t i = 0; i < n; ++i) c += dist2(xs[i], ys[perm[i]]);
    best = std::min(best, c / double(n));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

void check_marginals(const OtSolution& sol, const DiscreteMeasure& mu,
                     const DiscreteMeasure& nu, double tol) {
  std::vector<double> row(mu.points.size(), 0), col(nu.points.size(), 0);
  for (auto& e : sol.plan.entries) {
    CHECK(e.gamma > 0);
    row[size_t(e.i)] += e.gamma;
    col[size_t(e.j)] += e.gamma;
  }
  for (size_t i = 0; i < row.size(); ++i) CHECK(std::fabs(row[i] - mu.weights[i]) <= tol);
  for (size_t j = 0; j < col.size(); ++j) CHECK(std::fabs(col[j] - nu.weights[j]) <= tol);
}

PiecewiseAffineConvex cross_norm() {
  PiecewiseAffineConvex psi;
  psi.slopes = {{1, 1}, {1, -1}, {-1, 1}, {-1, -1}};
  psi.intercepts = {0, 0, 0, 0};
  return psi;
}

}  // namespace

TEST_CASE("transport between two unit atoms", "[ot]") {
  auto mu = atoms({{0, 0}}, {1.0});
  auto nu = atoms({{1, 0}}, {1.0});
  auto sol = solve_exact(mu, nu);
  REQUIRE(sol.plan.entries.size() == 1);
  CHECK(sol.plan.entries[0].gamma == Catch::Approx(1.0).margin(1e-14));
  CHECK(sol.plan.cost == Catch::Approx(1.0).margin(1e-12));
  CHECK(sol.plan.duality_gap <= 1e-9 * 2);
}

TEST_CASE("small instances match permutation search", "[ot]") {
  Rng rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    size_t n = 2 + size_t(trial) % 6;
    auto mu = uniform_atoms(random_cloud(rng, n));
    auto nu = uniform_atoms(random_cloud(rng, n));
    auto sol = solve_exact(mu, nu);
    double oracle = permutation_cost(mu.points, nu.points);
    INFO("trial " << trial << " n " << n);
    CHECK(std::fabs(sol.plan.cost - oracle) <= 1e-10);
    CHECK(sol.plan.duality_gap <= 1e-9 * (1 + sol.plan.cost));
    check_marginals(sol, mu, nu, 1e-12);
  }
}

TEST_CASE("collinear points transport monotonically", "[ot]") {
  Rng rng(7);
  size_t n = 20;
  std::vector<double> xs(n), ys(n);
  for (auto& v : xs) v = rng.uniform(0, 1);
  for (auto& v : ys) v = rng.uniform(2, 3);
  std::vector<Vec2> xp(n), yp(n);
  for (size_t i = 0; i < n; ++i) xp[i] = {xs[i], 0.0};
  for (size_t i = 0; i < n; ++i) yp[i] = {ys[i], 0.0};
  auto sol = solve_exact(uniform_atoms(xp), uniform_atoms(yp));

  std::vector<size_t> xo(n), yo(n);
  std::iota(xo.begin(), xo.end(), size_t(0));
  std::iota(yo.begin(), yo.end(), size_t(0));
  std::sort(xo.begin(), xo.end(), [&](size_t a, size_t b) { return xs[a] < xs[b]; });
  std::sort(yo.begin(), yo.end(), [&](size_t a, size_t b) { return ys[a] < ys[b]; });
  double oracle = 0;
  std::vector<int> match(n);
  for (size_t r = 0; r < n; ++r) {
    oracle += (xs[xo[r]] - ys[yo[r]]) * (xs[xo[r]] - ys[yo[r]]) / double(n);
    match[xo[r]] = int(yo[r]);
  }
  CHECK(std::fabs(sol.plan.cost - oracle) <= 1e-10);
  REQUIRE(sol.plan.entries.size() == n);
  for (auto& e : sol.plan.entries) CHECK(e.j == match[size_t(e.i)]);
}

TEST_CASE("mass mismatch is infeasible", "[ot]") {
  auto mu = atoms({{0, 0}, {1, 0}}, {0.5, 0.5});
  auto nu = atoms({{0, 1}, {1, 1}}, {0.5, 0.5 + 1e-6});
  CHECK_THROWS_MATCHES(solve_exact(mu, nu), Error,
                       Catch::Matchers::Predicate<Error>(
                           [](const Error& e) { return e.kind == Error::Infeasible; }));
}

TEST_CASE("arc budget is enforced", "[ot]") {
  size_t n = 10001;
  std::vector<Vec2> pts(n, Vec2{0, 0});
  std::vector<double> w(n, 1.0 / double(n));
  auto mu = atoms(pts, w);
  auto nu = atoms(pts, w);
  CHECK_THROWS_MATCHES(solve_exact(mu, nu), Error,
                       Catch::Matchers::Predicate<Error>(
                           [](const Error& e) { return e.kind == Error::BudgetExceeded; }));
}

TEST_CASE("duals are feasible, tight on support, normalized", "[ot]") {
  Rng rng(11);
  auto mu = atoms(random_cloud(rng, 60), {});
  auto nu = atoms(random_cloud(rng, 50), {});
  mu.weights.resize(60);
  nu.weights.resize(50);
  double sm = 0, sn = 0;
  for (auto& w : mu.weights) sm += (w = rng.uniform(0.5, 2));
  for (auto& w : nu.weights) sn += (w = rng.uniform(0.5, 2));
  for (auto& w : mu.weights) w /= sm;
  for (auto& w : nu.weights) w /= sn;
  // close the rounding residue exactly
  double resid = 0;
  for (auto& w : mu.weights) resid += w;
  mu.weights[0] += 1 - resid;
  resid = 0;
  for (auto& w : nu.weights) resid += w;
  nu.weights[0] += 1 - resid;

  auto sol = solve_exact(mu, nu);
  for (size_t i = 0; i < mu.points.size(); ++i)
    for (size_t j = 0; j < nu.points.size(); ++j)
      CHECK(sol.u[i] + sol.phi[j] <= dist2(mu.points[i], nu.points[j]) + 1e-9);
  for (auto& e : sol.plan.entries) {
    double c = dist2(mu.points[size_t(e.i)], nu.points[size_t(e.j)]);
    CHECK(std::fabs(sol.u[size_t(e.i)] + sol.phi[size_t(e.j)] - c) <= 1e-9);
  }
  size_t jstar = 0;
  for (size_t j = 1; j < nu.weights.size(); ++j)
    if (nu.weights[j] > nu.weights[jstar]) jstar = j;
  CHECK(sol.phi[jstar] == 0.0);
  check_marginals(sol, mu, nu, 1e-12);
}

TEST_CASE("gap certificate at five hundred atoms", "[ot]") {
  Rng rng(23);
  auto mu = uniform_atoms(random_cloud(rng, 500));
  auto nu = uniform_atoms(random_cloud(rng, 500, 0.2, 1.4));
  auto sol = solve_exact(mu, nu);
  CHECK(sol.plan.duality_gap <= 1e-9 * (1 + sol.plan.cost));
  check_marginals(sol, mu, nu, 1e-10);
}

TEST_CASE("potential reproduces support tightness", "[ot]") {
  Rng rng(5);
  auto mu = uniform_atoms(random_cloud(rng, 40));
  auto nu = uniform_atoms(random_cloud(rng, 40, -0.2, 0.9));
  auto sol = solve_exact(mu, nu);
  auto psi = build_potential(sol.phi, nu);
  auto omega = polytope_from_vertices(mu.points);
  auto star = legendre(psi, omega);
  std::vector<int> piece_of(nu.points.size(), -1);
  for (size_t p = 0; p < psi.origin.size(); ++p) piece_of[size_t(psi.origin[p])] = int(p);
  for (auto& e : sol.plan.entries) {
    REQUIRE(piece_of[size_t(e.j)] >= 0);  // mass-bearing targets are never pruned
    double lhs = psi.value(mu.points[size_t(e.i)]) + star.value(nu.points[size_t(e.j)]);
    CHECK(std::fabs(lhs - dot(mu.points[size_t(e.i)], nu.points[size_t(e.j)])) <= 1e-8);
  }
}

TEST_CASE("max affine pieces evaluate exactly", "[ot]") {
  auto psi = cross_norm();
  Rng rng(3);
  for (int k = 0; k < 50; ++k) {
    Vec2 x = {rng.uniform(-2, 2), rng.uniform(-2, 2)};
    CHECK(psi.value(x) == Catch::Approx(std::fabs(x[0]) + std::fabs(x[1])).margin(1e-14));
  }
  CHECK(psi.lipschitz() == Catch::Approx(std::sqrt(2.0)));
  Vec2 g = psi.gradient({0.7, 0.4});
  CHECK(g[0] == 1.0);
  CHECK(g[1] == 1.0);

  PiecewiseAffineConvex aff;
  aff.slopes = {{0.3, -0.7}};
  aff.intercepts = {1.25};
  for (int k = 0; k < 10; ++k) {
    Vec2 x = {rng.uniform(-2, 2), rng.uniform(-2, 2)};
    CHECK(aff.value(x) == Catch::Approx(0.3 * x[0] - 0.7 * x[1] + 1.25).margin(1e-14));
  }
}

TEST_CASE("legendre of the cross norm vanishes on the unit box", "[ot]") {
  auto psi = cross_norm();
  auto box = make_box({-1, -1}, {1, 1});
  auto star = legendre(psi, box);
  for (int a = 0; a <= 10; ++a)
    for (int b = 0; b <= 10; ++b) {
      Vec2 z = {-1 + 0.2 * a, -1 + 0.2 * b};
      CHECK(std::fabs(star.value(z)) <= 1e-9);
    }
  CHECK(star.value({2, 0}) == Catch::Approx(1.0).margin(1e-9));
  CHECK(star.value({0, -3}) == Catch::Approx(2.0).margin(1e-9));
}

TEST_CASE("legendre of an affine map collapses to its slope", "[ot]") {
  PiecewiseAffineConvex aff;
  aff.slopes = {{0.4, -0.3}};
  aff.intercepts = {0.9};
  auto star = legendre(aff, make_box({-1, -1}, {1, 1}));
  CHECK(star.value({0.4, -0.3}) == Catch::Approx(-0.9).margin(1e-12));
}

TEST_CASE("biduality round trip", "[ot]") {
  Rng rng(17);
  auto mu = uniform_atoms(random_cloud(rng, 30));
  auto nu = uniform_atoms(random_cloud(rng, 30, 0.1, 1.3));
  auto sol = solve_exact(mu, nu);
  auto psi = build_potential(sol.phi, nu);
  auto omega = make_box({-0.2, -0.2}, {1.2, 1.2});
  auto star = legendre(psi, omega);
  auto dual_box = make_box({-0.3, -0.3}, {1.5, 1.5});  // covers every slope of psi
  auto back = legendre(star, dual_box);
  for (int k = 0; k < 100; ++k) {
    Vec2 x = {rng.uniform(-0.2, 1.2), rng.uniform(-0.2, 1.2)};
    double v = psi.value(x);
    CHECK(std::fabs(back.value(x) - v) <= 1e-9 * (1 + std::fabs(v)));
  }
}

TEST_CASE("subdifferential of the cross norm", "[ot]") {
  auto psi = cross_norm();
  auto at_origin = subdifferential(psi, {0, 0}, 1e-10);
  CHECK(at_origin.body.vol == Catch::Approx(4.0).margin(1e-12));

  auto interior = subdifferential(psi, {0.5, 0.5}, 1e-10);
  REQUIRE(interior.body.vertices.size() == 1);
  CHECK(interior.body.vertices[0][0] == 1.0);
  CHECK(interior.body.vertices[0][1] == 1.0);

  auto edge = subdifferential(psi, {0.5, 0.0}, 1e-10);
  REQUIRE(edge.body.vertices.size() == 2);
  for (auto& v : edge.body.vertices) CHECK(v[0] == 1.0);

  Rng rng(29);
  for (int k = 0; k < 100; ++k) {
    Vec2 x = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    Vec2 y = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    auto sub = subdifferential(psi, x, 1e-10);
    for (auto& g : sub.body.vertices)
      CHECK(psi.value(y) >= psi.value(x) + dot(g, y - x) - 1e-12);
  }
}

TEST_CASE("plan support lands in the subdifferential", "[ot]") {
  Rng rng(31);
  auto mu = uniform_atoms(random_cloud(rng, 50));
  auto nu = uniform_atoms(random_cloud(rng, 50, -0.5, 0.8));
  auto sol = solve_exact(mu, nu);
  auto psi = build_potential(sol.phi, nu);
  for (auto& e : sol.plan.entries) {
    // tightness of the affine piece carried by y_j, whether or not it was
    // retained: the envelope still passes through it at the matched source
    const Vec2& x = mu.points[size_t(e.i)];
    const Vec2& y = nu.points[size_t(e.j)];
    double b = 0.5 * (sol.phi[size_t(e.j)] - norm2(y));
    CHECK(std::fabs(psi.value(x) - (dot(x, y) + b)) <= 1e-8);
  }
}

TEST_CASE("power cells tile the domain", "[ot]") {
  Rng rng(37);
  auto mu = uniform_atoms(random_cloud(rng, 64));
  auto nu = uniform_atoms(random_cloud(rng, 64, 0.1, 0.9));
  auto sol = solve_exact(mu, nu);
  auto psi = build_potential(sol.phi, nu);
  auto box = make_box({0, 0}, {1, 1});
  auto cells = power_cells(psi, box);
  double total = 0;
  for (auto& c : cells) total += c.vol;
  CHECK(total == Catch::Approx(box.vol).margin(1e-7));
  for (int k = 0; k < 200; ++k) {
    Vec2 x = {rng.uniform(0, 1), rng.uniform(0, 1)};
    int j = psi.argmax(x);
    CHECK(contains_point(cells[size_t(j)], x, 1e-9));
  }
}

namespace {

// generic weights keep the basis nondegenerate, so duals are unique
void randomize_weights(DiscreteMeasure& m, Rng& rng) {
  double s = 0;
  for (auto& w : m.weights) s += (w = rng.uniform(0.5, 2));
  for (auto& w : m.weights) w /= s;
  double resid = 0;
  for (auto& w : m.weights) resid += w;
  m.weights[0] += 1 - resid;
}

}  // namespace

TEST_CASE("translating the targets tilts the potential", "[ot]") {
  Rng rng(43);
  auto mu = uniform_atoms(random_cloud(rng, 40));
  auto nu = uniform_atoms(random_cloud(rng, 40, 0.2, 1.1));
  randomize_weights(mu, rng);
  randomize_weights(nu, rng);
  Vec2 v = {0.3, -0.2};
  auto nu2 = nu;
  for (auto& y : nu2.points) y = y + v;
  auto sol = solve_exact(mu, nu);
  auto sol2 = solve_exact(mu, nu2);

  auto key = [](const TransportPlan& p) {
    std::vector<std::pair<int, int>> k;
    for (auto& e : p.entries) k.push_back({e.i, e.j});
    return k;
  };
  CHECK(key(sol.plan) == key(sol2.plan));

  auto psi = build_potential(sol.phi, nu);
  auto psi2 = build_potential(sol2.phi, nu2);
  double c0 = 0;
  double worst = 0;
  for (int k = 0; k < 20; ++k) {
    Vec2 x = {rng.uniform(0, 1), rng.uniform(0, 1)};
    double d = psi2.value(x) - psi.value(x) - dot(v, x);
    if (k == 0) c0 = d;
    worst = std::max(worst, std::fabs(d - c0));
  }
  CHECK(worst <= 1e-8);
}

TEST_CASE("relabeling the targets relabels the plan", "[ot]") {
  Rng rng(47);
  size_t n = 35;
  auto mu = uniform_atoms(random_cloud(rng, n));
  auto nu = uniform_atoms(random_cloud(rng, n, -0.3, 0.6));
  randomize_weights(mu, rng);
  randomize_weights(nu, rng);
  std::vector<size_t> perm(n);
  std::iota(perm.begin(), perm.end(), size_t(0));
  for (size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.uniform_index(i)]);
  auto nu2 = nu;
  for (size_t j = 0; j < n; ++j) {
    nu2.points[perm[j]] = nu.points[j];
    nu2.weights[perm[j]] = nu.weights[j];
  }

  auto sol = solve_exact(mu, nu);
  auto sol2 = solve_exact(mu, nu2);
  CHECK(std::fabs(sol.plan.cost - sol2.plan.cost) <= 1e-12 * (1 + sol.plan.cost));

  auto psi = build_potential(sol.phi, nu);
  auto psi2 = build_potential(sol2.phi, nu2);
  for (int k = 0; k < 50; ++k) {
    Vec2 x = {rng.uniform(0, 1), rng.uniform(0, 1)};
    double a = psi.value(x), b = psi2.value(x);
    CHECK(std::fabs(a - b) <= 1e-9 * (1 + std::fabs(a)));
  }
}

TEST_CASE("mass never escapes convex windows", "[ot]") {
  auto dom = make_box({0, 0}, {1, 1});
  auto rho = uniform_density(dom);
  auto sig = affine_tilt_density(dom, {0.25, 0.1});
  auto mu = discretize(rho, 1.0 / 8, Seeding::Grid, 1);
  auto nu = discretize(sig, 1.0 / 8, Seeding::JitteredGrid, 2);
  auto sol = solve_exact(mu, nu);
  auto psi = build_potential(sol.phi, nu);
  auto rep = check_mass_inequalities(psi, mu, nu, 200, 9);
  CHECK(rep.max_violation_forward <= 1e-10);
  CHECK(rep.max_violation_backward <= 1e-10);
  CHECK(rep.pass);
}

TEST_CASE("coupling cost between refinements stays within scale", "[ot]") {
  auto dom = make_box({0, 0}, {1, 1});
  auto rho = uniform_density(dom);
  double d = 1.0 / 8;
  auto coarse = discretize(rho, d, Seeding::Grid, 0);
  auto fine = discretize(rho, d / 2, Seeding::Grid, 0);
  CHECK(w2_distance(coarse, fine) <= 1.5 * d);
}

TEST_CASE("identical inputs reproduce the solution bit for bit", "[ot]") {
  Rng rng(53);
  auto mu = uniform_atoms(random_cloud(rng, 45));
  auto nu = uniform_atoms(random_cloud(rng, 45, 0.3, 1.2));
  auto a = solve_exact(mu, nu);
  auto b = solve_exact(mu, nu);
  CHECK(a.plan.cost == b.plan.cost);
  REQUIRE(a.plan.entries.size() == b.plan.entries.size());
  for (size_t k = 0; k < a.plan.entries.size(); ++k) {
    CHECK(a.plan.entries[k].i == b.plan.entries[k].i);
    CHECK(a.plan.entries[k].j == b.plan.entries[k].j);
    CHECK(a.plan.entries[k].gamma == b.plan.entries[k].gamma);
  }
  for (size_t i = 0; i < a.u.size(); ++i) CHECK(a.u[i] == b.u[i]);
  for (size_t j = 0; j < a.phi.size(); ++j) CHECK(a.phi[j] == b.phi[j]);
}

TEST_CASE("potential is lipschitz with the target spread", "[ot]") {
  Rng rng(59);
  auto mu = uniform_atoms(random_cloud(rng, 30));
  auto nu = uniform_atoms(random_cloud(rng, 30, -1, 1));
  auto sol = solve_exact(mu, nu);
  auto psi = build_potential(sol.phi, nu);
  double L = psi.lipschitz();
  for (int k = 0; k < 100; ++k) {
    Vec2 x = {rng.uniform(-1, 2), rng.uniform(-1, 2)};
    Vec2 y = {rng.uniform(-1, 2), rng.uniform(-1, 2)};
    CHECK(std::fabs(psi.value(x) - psi.value(y)) <= L * dist(x, y) + 1e-12);
  }
}

TEST_CASE("nowhere active pieces are dropped", "[ot]") {
  auto nu = atoms({{0, 0}, {1, 0}, {0.5, 0}}, {0.4, 0.4, 0.2});
  // duals chosen so the middle slope sits strictly under the envelope
  auto pruned = build_potential({0, 0, -0.6}, nu);
  REQUIRE(pruned.slopes.size() == 2);
  CHECK(pruned.origin == std::vector<int>{0, 1});
  auto kept = build_potential({0, 0, 0}, nu);
  CHECK(kept.slopes.size() == 3);
}
