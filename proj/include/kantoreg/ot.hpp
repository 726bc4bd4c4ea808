#pragma once

#include "measures.hpp"

namespace kantoreg {

// ------------------------------------------------------------- plan types

struct TransportEntry {
  int i, j;
  double gamma;
};

struct TransportPlan {
  std::vector<TransportEntry> entries;
  double cost = 0;
  double duality_gap = 0;
};

struct OtSolution {
  TransportPlan plan;
  std::vector<double> u;    // source duals
  std::vector<double> phi;  // target duals, u_i + phi_j <= |x_i - y_j|^2
};

// ------------------------------------------------------------- solver

// primal network simplex on the streamed bipartite graph; star basis through
// an artificial root carrying BIG-cost arcs, block pricing over virtual arcs
inline OtSolution solve_exact(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  const long N = long(mu.points.size()), M = long(nu.points.size());
  if (N == 0 || M == 0) throw Error(Error::Infeasible, "empty measure");
  if (N * M > 100'000'000L) throw Error(Error::BudgetExceeded, "instance exceeds 1e8 arcs");
  {
    double sf = 0, sg = 0;
    for (double w : mu.weights) sf += w;
    for (double w : nu.weights) sg += w;
    if (std::fabs(sf - sg) > 1e-10) throw Error(Error::Infeasible, "mass mismatch beyond 1e-10");
  }
  const long n_nodes = N + M + 1;  // sources, sinks, root
  const long root = N + M;
  const long n_real = N * M;
  const long n_arcs = n_real + N + M;  // artificial arc per non-root node
  double cmax = 0;
  for (auto& x : mu.points)
    for (auto& y : nu.points) cmax = std::max(cmax, dist2(x, y));  // bound only; O(NM) once
  const double BIG = 1 + 4 * cmax;
  const double eps_opt = 1e-13 * (1 + cmax);

  auto arc_cost = [&](long a) -> double {
    if (a < n_real) return dist2(mu.points[size_t(a / M)], nu.points[size_t(a % M)]);
    return BIG;
  };
  auto arc_tail = [&](long a) -> long {
    if (a < n_real) return a / M;
    long k = a - n_real;
    return k < N ? k : root;  // source->root, root->sink
  };
  auto arc_head = [&](long a) -> long {
    if (a < n_real) return N + a % M;
    long k = a - n_real;
    return k < N ? root : k;
  };

  // tree state: arc to parent + its flow live at the child node
  std::vector<long> parent(n_nodes, root), parent_arc(n_nodes);
  std::vector<double> flow(n_nodes, 0), pot(n_nodes, 0);
  std::vector<int> depth(n_nodes, 1);
  std::vector<long> first_child(n_nodes, -1), next_sib(n_nodes, -1), prev_sib(n_nodes, -1);
  auto attach = [&](long x, long p) {
    parent[x] = p;
    next_sib[x] = first_child[p];
    prev_sib[x] = -1;
    if (first_child[p] >= 0) prev_sib[first_child[p]] = x;
    first_child[p] = x;
  };
  auto detach = [&](long x) {
    long p = parent[x];
    if (prev_sib[x] >= 0) next_sib[prev_sib[x]] = next_sib[x];
    else first_child[p] = next_sib[x];
    if (next_sib[x] >= 0) prev_sib[next_sib[x]] = prev_sib[x];
  };
  parent[root] = -1;
  depth[root] = 0;
  for (long k = 0; k < N + M; ++k) {
    attach(k, root);
    parent_arc[k] = n_real + k;
    flow[k] = (k < N) ? mu.weights[size_t(k)] : nu.weights[size_t(k - N)];
    pot[k] = (k < N) ? BIG : -BIG;  // makes artificial arcs tight
  }

  auto reduced = [&](long a) { return arc_cost(a) - pot[arc_tail(a)] + pot[arc_head(a)]; };

  const long block = std::max<long>(256, std::min<long>(n_arcs, 8192));
  long scan = 0;
  long max_pivots = 200 * (N + M) + 4'000'000;
  int stall = 0;
  bool bland = false;

  for (long pivot_count = 0;; ++pivot_count) {
    if (pivot_count > max_pivots) throw Error(Error::BudgetExceeded, "pivot budget exhausted");
    // pricing
    long enter = -1;
    double best = -eps_opt;
    if (bland) {
      for (long a = 0; a < n_arcs; ++a)
        if (reduced(a) < -eps_opt) { enter = a; break; }
    } else {
      long looked = 0;
      while (looked < n_arcs) {
        long stop = std::min(block, n_arcs - looked);
        for (long s = 0; s < stop; ++s) {
          long a = scan;
          if (++scan == n_arcs) scan = 0;
          double r = reduced(a);
          if (r < best) { best = r; enter = a; }
        }
        looked += stop;
        if (enter >= 0) break;
      }
    }
    if (enter < 0) break;  // optimal

    long te = arc_tail(enter), he = arc_head(enter);
    // climb to the common ancestor, tracking the bottleneck on backward arcs
    double delta = 1e300;
    long leave_node = -1;
    {
      long x = he, y = te;
      while (depth[x] > depth[y]) x = parent[x];
      while (depth[y] > depth[x]) y = parent[y];
      while (x != y) { x = parent[x]; y = parent[y]; }
      long lca = x;
      for (long w = he; w != lca; w = parent[w]) {
        long q = parent_arc[w];
        bool with_dir = (arc_tail(q) == w);  // cycle moves w -> parent
        if (!with_dir && flow[w] < delta) { delta = flow[w]; leave_node = w; }
      }
      for (long w = te; w != lca; w = parent[w]) {
        long q = parent_arc[w];
        bool with_dir = (arc_head(q) == w);  // cycle moves parent -> w
        if (!with_dir && flow[w] < delta) { delta = flow[w]; leave_node = w; }
      }
      if (leave_node < 0) throw Error(Error::Infeasible, "degenerate tree cycle");
      for (long w = he; w != lca; w = parent[w])
        flow[w] += (arc_tail(parent_arc[w]) == w) ? delta : -delta;
      for (long w = te; w != lca; w = parent[w])
        flow[w] += (arc_head(parent_arc[w]) == w) ? delta : -delta;
    }
    if (delta <= 0) {
      if (++stall > 2 * (N + M)) bland = true;
    } else {
      stall = 0;
      bland = false;
    }

    // the subtree under leave_node re-hangs from the entering arc
    double r_enter = reduced(enter);
    long inside = -1;  // endpoint of enter inside the cut subtree
    for (long w = te; w >= 0; w = parent[w])
      if (w == leave_node) { inside = te; break; }
    if (inside < 0) inside = he;
    long outside = (inside == te) ? he : te;

    detach(leave_node);
    // reverse the parent chain from `inside` up to leave_node
    {
      long carry_parent = outside, x = inside;
      long carry_arc = enter;
      double carry_flow = delta;
      while (true) {
        long nxt = parent[x], old_arc = parent_arc[x];
        double old_flow = flow[x];
        bool at_end = (x == leave_node);
        if (x != leave_node) detach(x);  // leave_node is already off the tree
        attach(x, carry_parent);
        parent_arc[x] = carry_arc;
        flow[x] = carry_flow;
        if (at_end) break;
        carry_parent = x;
        carry_arc = old_arc;
        carry_flow = old_flow;
        x = nxt;
      }
    }
    // fix potentials and depths across the re-hung subtree
    double dpot = (inside == te) ? r_enter : -r_enter;
    depth[inside] = depth[outside] + 1;
    pot[inside] += dpot;
    if (first_child[inside] >= 0) {
      std::vector<long> stack = {first_child[inside]};
      while (!stack.empty()) {
        long v = stack.back();
        stack.pop_back();
        for (long w = v; w >= 0; w = next_sib[w]) {
          depth[w] = depth[parent[w]] + 1;
          pot[w] += dpot;
          if (first_child[w] >= 0) stack.push_back(first_child[w]);
        }
      }
    }
  }

  // collect the plan off the tree
  OtSolution sol;
  long double cost = 0;
  for (long x = 0; x < N + M; ++x) {
    long a = parent_arc[x];
    if (a >= n_real) {
      if (flow[x] > 1e-9) throw Error(Error::Infeasible, "artificial flow persisted");
      continue;
    }
    if (flow[x] > 0) {
      int i = int(a / M), j = int(a % M);
      sol.plan.entries.push_back({i, j, flow[x]});
      cost += (long double)flow[x] * arc_cost(a);
    }
  }
  std::sort(sol.plan.entries.begin(), sol.plan.entries.end(),
            [](const TransportEntry& a, const TransportEntry& b) {
              return a.i < b.i || (a.i == b.i && a.j < b.j);
            });
  sol.u.resize(size_t(N));
  sol.phi.resize(size_t(M));
  for (long i = 0; i < N; ++i) sol.u[size_t(i)] = pot[i];
  for (long j = 0; j < M; ++j) sol.phi[size_t(j)] = -pot[N + j];
  // normalize: zero dual at the heaviest target
  {
    size_t jstar = 0;
    for (size_t j = 1; j < size_t(M); ++j)
      if (nu.weights[j] > nu.weights[jstar]) jstar = j;
    double shift = sol.phi[jstar];
    for (auto& p : sol.phi) p -= shift;
    for (auto& w : sol.u) w += shift;
  }
  long double dual = 0;
  for (long i = 0; i < N; ++i) dual += (long double)mu.weights[size_t(i)] * sol.u[size_t(i)];
  for (long j = 0; j < M; ++j) dual += (long double)nu.weights[size_t(j)] * sol.phi[size_t(j)];
  sol.plan.cost = double(cost);
  sol.plan.duality_gap = std::fabs(double(cost - dual));
  return sol;
}

inline double w2_distance(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  return std::sqrt(std::max(0.0, solve_exact(mu, nu).plan.cost));
}

// ------------------------------------------------------------- potential

struct PiecewiseAffineConvex {
  std::vector<Vec2> slopes;        // y_j
  std::vector<double> intercepts;  // b_j; value = max_j (x . y_j + b_j)
  std::vector<int> origin;         // index into the dual vector each piece came from

  double value(const Vec2& x) const {
    double best = -1e300;
    for (size_t j = 0; j < slopes.size(); ++j)
      best = std::max(best, dot(x, slopes[j]) + intercepts[j]);
    return best;
  }
  int argmax(const Vec2& x) const {
    double best = -1e300;
    int arg = 0;
    for (size_t j = 0; j < slopes.size(); ++j) {
      double v = dot(x, slopes[j]) + intercepts[j];
      if (v > best) { best = v; arg = int(j); }
    }
    return arg;
  }
  Vec2 gradient(const Vec2& x) const { return slopes[size_t(argmax(x))]; }
  double lipschitz() const {
    double L = 0;
    for (auto& s : slopes) L = std::max(L, norm(s));
    return L;
  }
};

// quadratic-cost duals to max-affine form: piece j is x.y_j - (|y_j|^2 - phi_j)/2
inline PiecewiseAffineConvex build_potential(const std::vector<double>& phi,
                                             const DiscreteMeasure& nu) {
  if (phi.size() != nu.points.size())
    throw Error(Error::PreconditionsUnmet, "dual length mismatch");
  PiecewiseAffineConvex psi;
  size_t J = phi.size();
  psi.slopes.reserve(J);
  psi.intercepts.reserve(J);
  double scale = 0;
  for (size_t j = 0; j < J; ++j) scale = std::max(scale, std::fabs(phi[j]) + norm2(nu.points[j]));
  // drop pieces that are nowhere active (max slack LP per piece)
  std::vector<double> b(J);
  for (size_t j = 0; j < J; ++j) b[j] = 0.5 * (phi[j] - norm2(nu.points[j]));
  for (size_t j = 0; j < J; ++j) {
    std::vector<detail::LpCon> cons;
    cons.reserve(J);
    for (size_t k = 0; k < J; ++k) {
      if (k == j) continue;
      detail::LpCon c;
      c.a[0] = nu.points[k][0] - nu.points[j][0];
      c.a[1] = nu.points[k][1] - nu.points[j][1];
      c.a[2] = 1.0;
      c.b = b[j] - b[k];
      cons.push_back(c);
    }
    detail::LpCon cap;
    cap.a[2] = 1.0;
    cap.b = 1.0;
    cons.push_back(cap);
    auto r = detail::lp_solve(3, cons, {0, 0, 1, 0}, 1e7 * (1 + scale));
    if (r.status == detail::LpResult::Optimal && r.x[2] > 1e-12 * (1 + scale)) {
      psi.slopes.push_back(nu.points[j]);
      psi.intercepts.push_back(b[j]);
      psi.origin.push_back(int(j));
    }
  }
  if (psi.slopes.empty()) throw Error(Error::DegenerateBody, "no active pieces");
  return psi;
}

// ------------------------------------------------------------- power cells

// cell_j = {x in domain : piece j attains the max}; clipped by near bisectors
// first, then certified at the cell vertices (affine differences attain their
// minimum over a polytope at a vertex)
inline std::vector<Polytope2> power_cells(const PiecewiseAffineConvex& psi,
                                          const Polytope2& domain) {
  size_t J = psi.slopes.size();
  std::vector<Polytope2> cells(J);
  if (J == 1) {
    cells[0] = domain;
    return cells;
  }
  SpatialBins bins(psi.slopes, std::max(1e-9, std::sqrt(domain.vol / double(J))));
  std::vector<int> cand;
  std::vector<char> used(J, 0);
  for (size_t j = 0; j < J; ++j) {
    detail::Chain ch = domain.vertices;
    std::fill(used.begin(), used.end(), 0);
    used[j] = 1;
    auto clip_by = [&](size_t k) {
      if (used[k]) return;
      used[k] = 1;
      Vec2 d = psi.slopes[k] - psi.slopes[j];
      double dn = norm(d);
      if (dn < 1e-15) {  // duplicate slope: higher intercept wins, ties keep the lower index
        if (psi.intercepts[k] > psi.intercepts[j] ||
            (psi.intercepts[k] == psi.intercepts[j] && k < j))
          ch.clear();
        return;
      }
      ch = detail::clip_chain(ch, (1.0 / dn) * d, (psi.intercepts[j] - psi.intercepts[k]) / dn);
    };
    double R0 = 2 * std::sqrt(domain.vol / double(J));
    bins.candidates(psi.slopes[j], R0, cand);
    for (int k : cand) clip_by(size_t(k));
    bool certified = false;
    for (int round = 0; round < 64 && !ch.empty(); ++round) {
      size_t worst = j;
      double worst_gap = 1e-12;
      for (auto& v : ch) {
        double vj = dot(v, psi.slopes[j]) + psi.intercepts[j];
        for (size_t k = 0; k < J; ++k) {
          if (used[k]) continue;
          double g = dot(v, psi.slopes[k]) + psi.intercepts[k] - vj;
          if (g > worst_gap) { worst_gap = g; worst = k; }
        }
      }
      if (worst == j) { certified = true; break; }
      clip_by(worst);
    }
    if (!certified)  // give up on locality, clip against everything
      for (size_t k = 0; k < J && !ch.empty(); ++k) clip_by(k);
    cells[j] = ch.empty() ? Polytope2{} : detail::finalize_polytope2(ch, nullptr);
  }
  return cells;
}

// ------------------------------------------------------------- legendre

inline PiecewiseAffineConvex legendre(const PiecewiseAffineConvex& psi, const Polytope2& domain) {
  auto cells = power_cells(psi, domain);
  detail::Chain pts;
  for (auto& c : cells)
    for (auto& v : c.vertices) pts.push_back(v);
  std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
    return a[0] < b[0] || (a[0] == b[0] && a[1] < b[1]);
  });
  PiecewiseAffineConvex star;
  for (auto& v : pts) {
    if (!star.slopes.empty() && dist(star.slopes.back(), v) < 1e-12) continue;
    star.slopes.push_back(v);
    star.intercepts.push_back(-psi.value(v));
    star.origin.push_back(-1);
  }
  if (star.slopes.empty()) {  // degenerate domain: fall back to its vertices
    for (auto& v : domain.vertices) {
      star.slopes.push_back(v);
      star.intercepts.push_back(-psi.value(v));
      star.origin.push_back(-1);
    }
  }
  return star;
}

// ------------------------------------------------------------- subdifferential

struct SubdifferentialSet {
  Vec2 at{};
  Polytope2 body;
};

inline SubdifferentialSet subdifferential(const PiecewiseAffineConvex& psi, const Vec2& x,
                                          double tol) {
  if (tol < 0) throw Error(Error::PreconditionsUnmet, "negative tolerance");
  double v = psi.value(x);
  detail::Chain active;
  for (size_t j = 0; j < psi.slopes.size(); ++j)
    if (v - (dot(x, psi.slopes[j]) + psi.intercepts[j]) <= tol) active.push_back(psi.slopes[j]);
  SubdifferentialSet s;
  s.at = x;
  s.body = polytope_from_vertices(active);
  return s;
}

// ------------------------------------------------------------- inequalities

namespace detail {

// closed-set intersection test: clip A's chain by B's halfspaces with slack
inline bool touches(const Chain& a_chain, const std::vector<Halfspace2>& b_hs, double slack) {
  Chain ch = a_chain;
  for (auto& h : b_hs) {
    ch = clip_chain(ch, h.normal, h.offset + slack);
    if (ch.empty()) return false;
  }
  return true;
}

}  // namespace detail

struct MassInequalityReport {
  double max_violation_forward = 0;   // mu(A) vs nu(subdiff psi (A))
  double max_violation_backward = 0;  // nu(B) vs mu(subdiff psi* (B))
  int samples = 0;
  bool pass = false;
};

inline MassInequalityReport check_mass_inequalities(const PiecewiseAffineConvex& psi,
                                                    const DiscreteMeasure& mu,
                                                    const DiscreteMeasure& nu, int n_samples,
                                                    std::uint64_t seed = 0) {
  Polytope2 omega = mu.parent ? mu.parent->domain : polytope_from_vertices(mu.points);
  Polytope2 target_hull = nu.parent ? nu.parent->domain : polytope_from_vertices(nu.points);
  // y_j lands in the image of A exactly when the reverse contact set meets A,
  // which stays correct even for targets whose piece touches only at a point
  auto star = legendre(psi, omega);
  std::vector<SubdifferentialSet> fwd(nu.points.size()), bwd(mu.points.size());
  for (size_t j = 0; j < nu.points.size(); ++j)
    fwd[j] = subdifferential(star, nu.points[j], 1e-10);
  for (size_t i = 0; i < mu.points.size(); ++i) bwd[i] = subdifferential(psi, mu.points[i], 1e-10);

  Rng rng(seed ^ 0x0eb11u);
  MassInequalityReport rep;
  rep.samples = n_samples;
  double slack = 1e-9 * (1 + omega.diameter_hint());
  double ell_src = radii(omega).inner, ell_tgt = radii(target_hull).inner;
  // random ellipse-polygon intersected with the domain
  auto sample_body = [&](const Polytope2& dom, double ell) -> std::optional<Polytope2> {
    double a2 = rng.log_uniform(0.02 * ell, 0.9 * ell);
    double a1 = a2 * rng.log_uniform(1.0, 4.0);
    double th = rng.uniform(0, M_PI);
    Vec2 c = sample_in_polytope(dom, rng);
    detail::Chain ch;
    for (int k = 0; k < 24; ++k) {
      double a = 2 * M_PI * k / 24;
      Vec2 u = {a1 * std::cos(a), a2 * std::sin(a)};
      ch.push_back({c[0] + std::cos(th) * u[0] - std::sin(th) * u[1],
                    c[1] + std::sin(th) * u[0] + std::cos(th) * u[1]});
    }
    return intersect(polytope_from_vertices(ch), dom);
  };
  for (int s = 0; s < n_samples; ++s) {
    if (auto A = sample_body(omega, ell_src)) {
      double muA = 0;
      for (size_t i = 0; i < mu.points.size(); ++i)
        if (contains_point(*A, mu.points[i], 0)) muA += mu.weights[i];
      double nu_dA = 0;
      for (size_t j = 0; j < nu.points.size(); ++j)
        if (detail::touches(fwd[j].body.vertices, A->halfspaces, slack)) nu_dA += nu.weights[j];
      rep.max_violation_forward = std::max(rep.max_violation_forward, muA - nu_dA);
    }
    if (auto B = sample_body(target_hull, ell_tgt)) {
      double nuB = 0;
      for (size_t j = 0; j < nu.points.size(); ++j)
        if (contains_point(*B, nu.points[j], 0)) nuB += nu.weights[j];
      double mu_dB = 0;
      for (size_t i = 0; i < mu.points.size(); ++i)
        if (detail::touches(bwd[i].body.vertices, B->halfspaces, slack)) mu_dB += mu.weights[i];
      rep.max_violation_backward = std::max(rep.max_violation_backward, nuB - mu_dB);
    }
  }
  rep.pass = rep.max_violation_forward <= 1e-10 && rep.max_violation_backward <= 1e-10;
  return rep;
}

}  // namespace kantoreg
