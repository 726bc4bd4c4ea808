#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <optional>
#include <vector>

#include "core.hpp"
#include "rng.hpp"

namespace kantoreg {

template <int N>
struct Halfspace {
  Vec<N> normal;   // unit length after normalization
  double offset;   // normal . x <= offset
};
using Halfspace2 = Halfspace<2>;
using Halfspace3 = Halfspace<3>;

template <int N>
struct ConvexPolytope {
  std::vector<Halfspace<N>> halfspaces;
  std::vector<Vec<N>> vertices;            // N==2: CCW order
  std::vector<std::vector<int>> faces;     // N==3 only, outward CCW
  Vec<N> center_of_mass{};
  double vol = 0;
  int dim = N;

  double diameter_hint() const {
    double d = 0;
    for (auto& v : vertices) d = std::max(d, norm(v - center_of_mass));
    return 2 * d;
  }
};
using Polytope2 = ConvexPolytope<2>;
using Polytope3 = ConvexPolytope<3>;

template <int N>
struct Ellipsoid {
  Vec<N> center{};
  std::array<std::array<double, N>, N> shape{};  // {x : (x-c)^T A (x-c) <= 1}

  double quad(const Vec<N>& x) const {
    Vec<N> d = x - center;
    double s = 0;
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j) s += d[i] * shape[i][j] * d[j];
    return s;
  }
  double norm_A(const Vec<N>& x) const { return std::sqrt(std::max(0.0, quad(x))); }
  bool contains(const Vec<N>& x, double slack = 0) const { return quad(x) <= 1 + slack; }
  double trace() const {
    double s = 0;
    for (int i = 0; i < N; ++i) s += shape[i][i];
    return s;
  }
  double det() const {
    Eigen::Matrix<double, N, N> m;
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j) m(i, j) = shape[i][j];
    return m.determinant();
  }
  double volume() const {
    double unit = (N == 2) ? M_PI : 4.0 * M_PI / 3.0;
    return unit / std::sqrt(det());
  }
};
using Ellipse = Ellipsoid<2>;

template <int N>
struct RadiusPair {
  double inner = 0, outer = 0;
  Vec<N> inner_center{}, outer_center{};
};

// ---------------------------------------------------------------- low-dim LP

namespace detail {

struct LpResult {
  enum Status { Optimal, Infeasible } status = Optimal;
  std::array<double, 4> x{};
};

struct LpCon {
  std::array<double, 4> a{};
  double b = 0;
};

// Seidel's algorithm, maximize c.x over a_i.x <= b_i within |x_j| <= R.
// Small fixed dimension (d <= 4); deterministic shuffled order.
inline LpResult lp_rec(int d, const std::vector<LpCon>& cons, const std::array<double, 4>& c,
                       double R) {
  LpResult res;
  if (d == 1) {
    double lo = -R, hi = R;
    for (auto& cn : cons) {
      double a = cn.a[0], b = cn.b;
      double eps = 1e-13 * (1 + std::fabs(b));
      if (a > 1e-14) hi = std::min(hi, b / a);
      else if (a < -1e-14) lo = std::max(lo, b / a);
      else if (b < -eps) { res.status = LpResult::Infeasible; return res; }
    }
    if (lo > hi + 1e-11 * (1 + std::fabs(lo) + std::fabs(hi))) {
      res.status = LpResult::Infeasible;
      return res;
    }
    hi = std::max(hi, lo);
    res.x[0] = (c[0] > 0) ? hi : (c[0] < 0 ? lo : std::clamp(0.0, lo, hi));
    return res;
  }
  for (int j = 0; j < d; ++j) res.x[j] = (c[j] > 0) ? R : (c[j] < 0 ? -R : 0.0);
  for (size_t i = 0; i < cons.size(); ++i) {
    const LpCon& cn = cons[i];
    double ax = 0;
    for (int j = 0; j < d; ++j) ax += cn.a[j] * res.x[j];
    if (ax <= cn.b + 1e-11 * (1 + std::fabs(cn.b))) continue;
    int k = 0;
    for (int j = 1; j < d; ++j)
      if (std::fabs(cn.a[j]) > std::fabs(cn.a[k])) k = j;
    if (std::fabs(cn.a[k]) < 1e-14) {
      if (cn.b < -1e-13) { res.status = LpResult::Infeasible; return res; }
      continue;
    }
    std::vector<LpCon> sub;
    sub.reserve(i + 2);
    auto project = [&](const LpCon& pc) {
      LpCon nc;
      double alpha = pc.a[k] / cn.a[k];
      int jj = 0;
      for (int j = 0; j < d; ++j) {
        if (j == k) continue;
        nc.a[jj++] = pc.a[j] - alpha * cn.a[j];
      }
      nc.b = pc.b - alpha * cn.b;
      sub.push_back(nc);
    };
    {  // box bounds on the eliminated variable
      LpCon bp{}, bm{};
      bp.a[k] = 1;  bp.b = R;
      bm.a[k] = -1; bm.b = R;
      project(bp);
      project(bm);
    }
    for (size_t t = 0; t < i; ++t) project(cons[t]);
    std::array<double, 4> cc{};
    {
      double alpha = c[k] / cn.a[k];
      int jj = 0;
      for (int j = 0; j < d; ++j) {
        if (j == k) continue;
        cc[jj++] = c[j] - alpha * cn.a[j];
      }
    }
    LpResult s = lp_rec(d - 1, sub, cc, R);
    if (s.status == LpResult::Infeasible) return s;
    int jj = 0;
    double acc = 0;
    for (int j = 0; j < d; ++j) {
      if (j == k) continue;
      res.x[j] = s.x[jj++];
      acc += cn.a[j] * res.x[j];
    }
    res.x[k] = (cn.b - acc) / cn.a[k];
  }
  return res;
}

inline LpResult lp_solve(int d, std::vector<LpCon> cons, const std::array<double, 4>& c,
                         double R) {
  Rng rng(0x5e1de1u ^ (std::uint64_t(cons.size()) << 20));
  for (size_t i = cons.size(); i > 1; --i)
    std::swap(cons[i - 1], cons[rng.uniform_index(i)]);
  return lp_rec(d, cons, c, R);
}

// ------------------------------------------------------------- min ball

template <int N>
struct Ball {
  Vec<N> c{};
  double r = -1;
  bool contains(const Vec<N>& p, double eps) const { return r >= 0 && dist(p, c) <= r + eps; }
};

inline Ball<2> circumball(const std::vector<Vec2>& s) {
  Ball<2> b;
  if (s.empty()) return b;
  if (s.size() == 1) { b.c = s[0]; b.r = 0; return b; }
  if (s.size() == 2) { b.c = 0.5 * (s[0] + s[1]); b.r = 0.5 * dist(s[0], s[1]); return b; }
  Vec2 A = s[0], B = s[1], C = s[2];
  double d = 2 * (A[0] * (B[1] - C[1]) + B[0] * (C[1] - A[1]) + C[0] * (A[1] - B[1]));
  if (std::fabs(d) < 1e-14 * (1 + norm2(A) + norm2(B) + norm2(C))) {
    Ball<2> best;
    for (int i = 0; i < 3; ++i)
      for (int j = i + 1; j < 3; ++j) {
        Ball<2> t = circumball({s[i], s[j]});
        bool ok = true;
        for (auto& p : s) ok = ok && t.contains(p, 1e-12 * (1 + t.r));
        if (ok && (best.r < 0 || t.r < best.r)) best = t;
      }
    return best;
  }
  double a2 = norm2(A), b2 = norm2(B), c2 = norm2(C);
  b.c = {(a2 * (B[1] - C[1]) + b2 * (C[1] - A[1]) + c2 * (A[1] - B[1])) / d,
         (a2 * (C[0] - B[0]) + b2 * (A[0] - C[0]) + c2 * (B[0] - A[0])) / d};
  b.r = dist(b.c, A);
  return b;
}

inline Ball<3> circumball(const std::vector<Vec3>& s) {
  Ball<3> b;
  size_t n = s.size();
  if (n == 0) return b;
  if (n == 1) { b.c = s[0]; b.r = 0; return b; }
  if (n == 2) { b.c = 0.5 * (s[0] + s[1]); b.r = 0.5 * dist(s[0], s[1]); return b; }
  // center = s0 + x (b-a)... solve 2 (s_i - s_0) . c' = |s_i|^2 - |s_0|^2
  Eigen::Matrix3d M = Eigen::Matrix3d::Zero();
  Eigen::Vector3d rhs = Eigen::Vector3d::Zero();
  for (size_t i = 1; i < n; ++i) {
    Vec3 d = s[i] - s[0];
    for (int j = 0; j < 3; ++j) M(int(i - 1), j) = 2 * d[j];
    rhs(int(i - 1)) = norm2(s[i]) - norm2(s[0]);
  }
  if (n == 3) {
    // third equation: center lies in the plane of the three points
    Vec3 nrm = cross(s[1] - s[0], s[2] - s[0]);
    if (norm(nrm) < 1e-14) {
      Ball<3> best;
      for (size_t i = 0; i < 3; ++i)
        for (size_t j = i + 1; j < 3; ++j) {
          Ball<3> t = circumball(std::vector<Vec3>{s[i], s[j]});
          bool ok = true;
          for (auto& p : s) ok = ok && t.contains(p, 1e-12 * (1 + t.r));
          if (ok && (best.r < 0 || t.r < best.r)) best = t;
        }
      return best;
    }
    for (int j = 0; j < 3; ++j) M(2, j) = nrm[j];
    rhs(2) = dot(nrm, s[0]);
  }
  Eigen::FullPivLU<Eigen::Matrix3d> lu(M);
  if (!lu.isInvertible()) {
    Ball<3> best;
    for (size_t i = 0; i < n; ++i) {
      std::vector<Vec3> sub;
      for (size_t j = 0; j < n; ++j)
        if (j != i) sub.push_back(s[j]);
      Ball<3> t = circumball(sub);
      bool ok = t.r >= 0;
      for (auto& p : s) ok = ok && t.contains(p, 1e-10 * (1 + t.r));
      if (ok && (best.r < 0 || t.r < best.r)) best = t;
    }
    return best;
  }
  Eigen::Vector3d ctr = lu.solve(rhs);
  b.c = {ctr(0), ctr(1), ctr(2)};
  b.r = dist(b.c, s[0]);
  return b;
}

template <int N>
inline Ball<N> welzl(std::vector<Vec<N>>& pts, std::vector<Vec<N>>& support, size_t n) {
  if (n == 0 || support.size() == N + 1) return circumball(support);
  Ball<N> b = welzl<N>(pts, support, n - 1);
  const Vec<N>& p = pts[n - 1];
  if (b.contains(p, 1e-12 * (1 + b.r))) return b;
  support.push_back(p);
  b = welzl<N>(pts, support, n - 1);
  support.pop_back();
  return b;
}

template <int N>
inline Ball<N> min_enclosing_ball(std::vector<Vec<N>> pts) {
  Rng rng(0xba11u ^ (std::uint64_t(pts.size()) << 16));
  for (size_t i = pts.size(); i > 1; --i) std::swap(pts[i - 1], pts[rng.uniform_index(i)]);
  std::vector<Vec<N>> support;
  return welzl<N>(pts, support, pts.size());
}

// ------------------------------------------------------------- 2D chains

using Chain = std::vector<Vec2>;  // CCW polygon

inline double chain_area(const Chain& ch) {
  double a = 0;
  for (size_t i = 0, n = ch.size(); i < n; ++i) a += cross(ch[i], ch[(i + 1) % n]);
  return 0.5 * a;
}

inline Vec2 chain_centroid(const Chain& ch) {
  double a = 0;
  Vec2 c{0, 0};
  for (size_t i = 0, n = ch.size(); i < n; ++i) {
    double w = cross(ch[i], ch[(i + 1) % n]);
    a += w;
    c = c + w * (ch[i] + ch[(i + 1) % n]);
  }
  if (std::fabs(a) < 1e-300) {
    Vec2 m{0, 0};
    for (auto& v : ch) m = m + (1.0 / ch.size()) * v;
    return m;
  }
  return (1.0 / (3.0 * a)) * c;
}

inline Chain clip_chain(const Chain& ch, const Vec2& n, double b) {
  Chain out;
  size_t m = ch.size();
  if (m == 0) return out;
  out.reserve(m + 2);
  double eps = 1e-12 * (1 + std::fabs(b));
  for (size_t i = 0; i < m; ++i) {
    const Vec2& cur = ch[i];
    const Vec2& nxt = ch[(i + 1) % m];
    double sc = dot(n, cur) - b, sn = dot(n, nxt) - b;
    bool ic = sc <= eps, in = sn <= eps;
    if (ic) out.push_back(cur);
    if (ic != in) {
      double t = sc / (sc - sn);
      out.push_back(cur + t * (nxt - cur));
    }
  }
  return out;
}

inline Chain dedupe_chain(const Chain& ch, double eps) {
  Chain out;
  for (auto& v : ch) {
    if (out.empty() || dist(out.back(), v) > eps) out.push_back(v);
  }
  while (out.size() > 1 && dist(out.front(), out.back()) <= eps) out.pop_back();
  return out;
}

inline Chain convex_hull(Chain pts) {
  std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
    return a[0] < b[0] || (a[0] == b[0] && a[1] < b[1]);
  });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  size_t n = pts.size();
  if (n <= 2) return pts;
  Chain h(2 * n);
  size_t k = 0;
  for (size_t i = 0; i < n; ++i) {
    while (k >= 2 && cross(h[k - 1] - h[k - 2], pts[i] - h[k - 2]) <= 0) --k;
    h[k++] = pts[i];
  }
  for (size_t i = n - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(h[k - 1] - h[k - 2], pts[i] - h[k - 2]) <= 0) --k;
    h[k++] = pts[i];
  }
  h.resize(k - 1);
  return h;
}

}  // namespace detail

// ---------------------------------------------------------------- 2D build

namespace detail {

// minimal H-rep from polygon edges, merging collinear runs
inline std::vector<Halfspace2> hrep_from_chain(const Chain& ch) {
  std::vector<Halfspace2> hs;
  size_t n = ch.size();
  for (size_t i = 0; i < n; ++i) {
    Vec2 e = ch[(i + 1) % n] - ch[i];
    double len = norm(e);
    if (len < 1e-300) continue;
    Vec2 nn = {e[1] / len, -e[0] / len};  // outward for CCW
    double b = dot(nn, ch[i]);
    if (!hs.empty() && dist(hs.back().normal, nn) < 1e-10 &&
        std::fabs(hs.back().offset - b) < 1e-10 * (1 + std::fabs(b)))
      continue;
    hs.push_back({nn, b});
  }
  if (hs.size() > 1 && dist(hs.front().normal, hs.back().normal) < 1e-10 &&
      std::fabs(hs.front().offset - hs.back().offset) < 1e-10 * (1 + std::fabs(hs.front().offset)))
    hs.pop_back();
  return hs;
}

inline Polytope2 finalize_polytope2(Chain ch, const std::vector<Halfspace2>* fallback_hs) {
  Polytope2 P;
  double scale = 0;
  for (auto& v : ch) scale = std::max(scale, norm(v));
  ch = dedupe_chain(ch, 1e-12 * (1 + scale));
  double a = chain_area(ch);
  if (a < 0) {  // enforce CCW
    std::reverse(ch.begin(), ch.end());
    a = -a;
  }
  P.vertices = ch;
  P.vol = a;
  P.center_of_mass = chain_centroid(ch);
  if (ch.size() >= 3 && a > 1e-14 * (1 + scale * scale)) {
    P.halfspaces = hrep_from_chain(ch);
  } else if (fallback_hs) {
    P.halfspaces = *fallback_hs;
    P.vol = 0;
  }
  return P;
}

}  // namespace detail

template <int N>
inline std::vector<Halfspace<N>> normalize_halfspaces(const std::vector<Halfspace<N>>& hs) {
  std::vector<Halfspace<N>> out;
  out.reserve(hs.size());
  for (auto& h : hs) {
    double len = norm(h.normal);
    if (len < 1e-300) {
      if (h.offset < 0) throw Error(Error::EmptyIntersection, "null normal with negative offset");
      continue;
    }
    out.push_back({(1.0 / len) * h.normal, h.offset / len});
  }
  return out;
}

inline Polytope2 polytope_from_halfspaces(const std::vector<Halfspace2>& hs_in) {
  auto hs = normalize_halfspaces(hs_in);
  if (hs.empty()) throw Error(Error::EmptyIntersection, "no halfspaces");
  double bscale = 0;
  for (auto& h : hs) bscale = std::max(bscale, std::fabs(h.offset));
  double R = 1e7 * (1 + bscale);

  std::vector<detail::LpCon> cons(hs.size());
  for (size_t i = 0; i < hs.size(); ++i) {
    cons[i].a[0] = hs[i].normal[0];
    cons[i].a[1] = hs[i].normal[1];
    cons[i].b = hs[i].offset;
  }
  double lo[2], hi[2];
  for (int j = 0; j < 2; ++j) {
    for (int sgn : {+1, -1}) {
      std::array<double, 4> c{};
      c[j] = sgn;
      auto r = detail::lp_solve(2, cons, c, R);
      if (r.status == detail::LpResult::Infeasible)
        throw Error(Error::EmptyIntersection, "halfspace intersection is empty");
      if (std::fabs(r.x[j]) >= 0.999 * R)
        throw Error(Error::Unbounded, "halfspace intersection is unbounded");
      (sgn > 0 ? hi[j] : lo[j]) = r.x[j];
    }
  }
  double margin = 1e-6 * (1 + std::max(hi[0] - lo[0], hi[1] - lo[1])) + 1e-9;
  detail::Chain ch = {{lo[0] - margin, lo[1] - margin},
                      {hi[0] + margin, lo[1] - margin},
                      {hi[0] + margin, hi[1] + margin},
                      {lo[0] - margin, hi[1] + margin}};
  for (auto& h : hs) ch = detail::clip_chain(ch, h.normal, h.offset);
  if (ch.empty())
    throw Error(Error::EmptyIntersection, "halfspace intersection is empty");
  return detail::finalize_polytope2(ch, &hs);
}

inline Polytope2 polytope_from_vertices(const detail::Chain& pts) {
  if (pts.empty()) throw Error(Error::EmptyIntersection, "no vertices");
  detail::Chain h = detail::convex_hull(pts);
  return detail::finalize_polytope2(h, nullptr);
}

// ---------------------------------------------------------------- 3D build

inline Polytope3 polytope_from_halfspaces(const std::vector<Halfspace3>& hs_in) {
  auto hs = normalize_halfspaces(hs_in);
  if (hs.size() < 4) throw Error(Error::Unbounded, "too few halfspaces to bound a 3D body");
  double bscale = 0;
  for (auto& h : hs) bscale = std::max(bscale, std::fabs(h.offset));
  double R = 1e7 * (1 + bscale);
  std::vector<detail::LpCon> cons(hs.size());
  for (size_t i = 0; i < hs.size(); ++i) {
    for (int j = 0; j < 3; ++j) cons[i].a[j] = hs[i].normal[j];
    cons[i].b = hs[i].offset;
  }
  for (int j = 0; j < 3; ++j) {
    for (int sgn : {+1, -1}) {
      std::array<double, 4> c{};
      c[j] = sgn;
      auto r = detail::lp_solve(3, cons, c, R);
      if (r.status == detail::LpResult::Infeasible)
        throw Error(Error::EmptyIntersection, "halfspace intersection is empty");
      if (std::fabs(r.x[j]) >= 0.999 * R)
        throw Error(Error::Unbounded, "halfspace intersection is unbounded");
    }
  }
  size_t m = hs.size();
  std::vector<Vec3> verts;
  double vscale = 1;
  for (size_t i = 0; i < m; ++i)
    for (size_t j = i + 1; j < m; ++j)
      for (size_t k = j + 1; k < m; ++k) {
        Eigen::Matrix3d M;
        Eigen::Vector3d b;
        for (int t = 0; t < 3; ++t) {
          M(0, t) = hs[i].normal[t];
          M(1, t) = hs[j].normal[t];
          M(2, t) = hs[k].normal[t];
        }
        b << hs[i].offset, hs[j].offset, hs[k].offset;
        double det = M.determinant();
        if (std::fabs(det) < 1e-10) continue;
        Eigen::Vector3d x = M.fullPivLu().solve(b);
        Vec3 v = {x(0), x(1), x(2)};
        bool ok = true;
        for (size_t t = 0; t < m && ok; ++t)
          ok = dot(hs[t].normal, v) <= hs[t].offset + 1e-9 * (1 + std::fabs(hs[t].offset));
        if (!ok) continue;
        bool dup = false;
        for (auto& w : verts)
          if (dist2(w, v) < 1e-16 * vscale) { dup = true; break; }
        if (!dup) {
          verts.push_back(v);
          vscale = std::max(vscale, norm2(v));
        }
      }
  if (verts.empty()) throw Error(Error::EmptyIntersection, "no vertices found");

  Polytope3 P;
  P.vertices = verts;
  Vec3 mean{0, 0, 0};
  for (auto& v : verts) mean = mean + (1.0 / verts.size()) * v;

  for (size_t i = 0; i < m; ++i) {
    std::vector<int> on;
    for (size_t v = 0; v < verts.size(); ++v)
      if (std::fabs(dot(hs[i].normal, verts[v]) - hs[i].offset) <
          1e-8 * (1 + std::fabs(hs[i].offset)))
        on.push_back(int(v));
    if (on.size() < 3) continue;
    Vec3 n = hs[i].normal;
    Vec3 ref = (std::fabs(n[0]) < 0.9) ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
    Vec3 u = cross(n, ref);
    u = (1.0 / norm(u)) * u;
    Vec3 w = cross(n, u);
    Vec3 fc{0, 0, 0};
    for (int id : on) fc = fc + (1.0 / on.size()) * verts[id];
    std::sort(on.begin(), on.end(), [&](int a2, int b2) {
      Vec3 da = verts[a2] - fc, db = verts[b2] - fc;
      return std::atan2(dot(w, da), dot(u, da)) < std::atan2(dot(w, db), dot(u, db));
    });
    bool dup = false;
    for (auto& f : P.faces)
      if (f.size() == on.size()) {
        auto s1 = f, s2 = on;
        std::sort(s1.begin(), s1.end());
        std::sort(s2.begin(), s2.end());
        if (s1 == s2) { dup = true; break; }
      }
    if (dup) continue;
    P.faces.push_back(on);
    P.halfspaces.push_back(hs[i]);
  }
  if (P.faces.size() < 4) throw Error(Error::DegenerateBody, "3D body has empty interior");

  double vol = 0;
  Vec3 com{0, 0, 0};
  for (size_t f = 0; f < P.faces.size(); ++f) {
    const auto& fv = P.faces[f];
    // orientation already CCW from outside? ensure with the stored normal
    for (size_t t = 1; t + 1 < fv.size(); ++t) {
      Vec3 a = P.vertices[fv[0]] - mean, b = P.vertices[fv[t]] - mean,
           c = P.vertices[fv[t + 1]] - mean;
      double sv = dot(a, cross(b, c)) / 6.0;
      Vec3 tc = mean + 0.25 * (a + b + c);
      if (dot(cross(P.vertices[fv[t]] - P.vertices[fv[0]],
                    P.vertices[fv[t + 1]] - P.vertices[fv[0]]),
              P.halfspaces[f].normal) < 0)
        sv = -sv;
      vol += std::fabs(sv);
      com = com + std::fabs(sv) * tc;
    }
  }
  P.vol = vol;
  P.center_of_mass = (vol > 0) ? (1.0 / vol) * com : mean;
  return P;
}

// ---------------------------------------------------------------- shared ops

template <int N>
inline double volume(const ConvexPolytope<N>& K) { return K.vol; }

template <int N>
inline bool contains_point(const ConvexPolytope<N>& K, const Vec<N>& x, double slack = 0) {
  for (auto& h : K.halfspaces)
    if (dot(h.normal, x) > h.offset + slack + tol_geom(h.offset)) return false;
  return true;
}

template <int N>
inline bool contains(const ConvexPolytope<N>& outer, const ConvexPolytope<N>& inner,
                     double slack = 0) {
  for (auto& v : inner.vertices)
    if (!contains_point(outer, v, slack)) return false;
  return true;
}

template <int N>
inline ConvexPolytope<N> dilate(const ConvexPolytope<N>& K, double gamma, const Vec<N>& about) {
  ConvexPolytope<N> P = K;
  for (auto& v : P.vertices) v = about + gamma * (v - about);
  for (auto& h : P.halfspaces) h.offset = gamma * h.offset + (1 - gamma) * dot(h.normal, about);
  P.center_of_mass = about + gamma * (K.center_of_mass - about);
  double s = 1;
  for (int i = 0; i < N; ++i) s *= gamma;
  P.vol = K.vol * std::fabs(s);
  return P;
}

template <int N>
inline ConvexPolytope<N> dilate(const ConvexPolytope<N>& K, double gamma) {
  return dilate(K, gamma, K.center_of_mass);
}

template <int N>
inline ConvexPolytope<N> translate(const ConvexPolytope<N>& K, const Vec<N>& v) {
  ConvexPolytope<N> P = K;
  for (auto& w : P.vertices) w = w + v;
  for (auto& h : P.halfspaces) h.offset += dot(h.normal, v);
  P.center_of_mass = P.center_of_mass + v;
  return P;
}

template <int N>
inline RadiusPair<N> radii(const ConvexPolytope<N>& K) {
  RadiusPair<N> rp;
  if (K.halfspaces.empty() || K.vertices.empty())
    throw Error(Error::DegenerateBody, "radii needs both representations");
  double bscale = 0;
  for (auto& h : K.halfspaces) bscale = std::max(bscale, std::fabs(h.offset));
  double R = 1e7 * (1 + bscale);
  std::vector<detail::LpCon> cons(K.halfspaces.size() + 1);
  for (size_t i = 0; i < K.halfspaces.size(); ++i) {
    for (int j = 0; j < N; ++j) cons[i].a[j] = K.halfspaces[i].normal[j];
    cons[i].a[N] = 1.0;
    cons[i].b = K.halfspaces[i].offset;
  }
  cons.back().a[N] = -1.0;  // r >= 0
  cons.back().b = 0.0;
  std::array<double, 4> c{};
  c[N] = 1.0;
  auto r = detail::lp_solve(N + 1, cons, c, R);
  if (r.status != detail::LpResult::Optimal)
    throw Error(Error::DegenerateBody, "inner radius LP failed");
  for (int j = 0; j < N; ++j) rp.inner_center[j] = r.x[j];
  rp.inner = std::max(0.0, r.x[N]);
  auto b = detail::min_enclosing_ball<N>(K.vertices);
  rp.outer = b.r;
  rp.outer_center = b.c;
  return rp;
}

template <int N>
inline ConvexPolytope<N> polar_body(const ConvexPolytope<N>& K, const Vec<N>& x0) {
  if (K.vertices.empty()) throw Error(Error::DegenerateBody, "polar of empty body");
  for (auto& h : K.halfspaces)
    if (dot(h.normal, x0) > h.offset - 1e-10 * (1 + std::fabs(h.offset)))
      throw Error(Error::PolarUnbounded, "polar center not strictly interior");
  std::vector<Halfspace<N>> hs;
  hs.reserve(K.vertices.size());
  for (auto& v : K.vertices) hs.push_back({v - x0, 1.0});
  return polytope_from_halfspaces(hs);
}

// ------------------------------------------------------------ intersections

inline std::optional<Polytope2> intersect(const Polytope2& A, const Polytope2& B) {
  detail::Chain ch = A.vertices;
  for (auto& h : B.halfspaces) ch = detail::clip_chain(ch, h.normal, h.offset);
  if (ch.size() < 3) return std::nullopt;
  Polytope2 P = detail::finalize_polytope2(ch, nullptr);
  if (P.vol <= 0) return std::nullopt;
  return P;
}

inline double intersection_area(const Polytope2& A, const Polytope2& B) {
  auto P = intersect(A, B);
  return P ? P->vol : 0.0;
}

inline bool intersects(const Polytope2& A, const Polytope2& B, double min_area = 0) {
  return intersection_area(A, B) > min_area;
}

// ---------------------------------------------------------------- john

template <int N>
inline Ellipsoid<N> john_ellipsoid(const ConvexPolytope<N>& K) {
  auto rp = radii(K);
  if (rp.inner < 1e-12 * (1 + rp.outer))
    throw Error(Error::DegenerateBody, "john ellipsoid of a degenerate body");
  const int NL = N * (N + 1) / 2;
  const int DIM = N + NL;
  const size_t m = K.halfspaces.size();

  // z = (c, L packed row-wise lower-tri); E = {c + L u : |u| <= 1}
  auto unpack = [&](const Eigen::VectorXd& z, Vec<N>& c, Eigen::Matrix<double, N, N>& L) {
    for (int i = 0; i < N; ++i) c[i] = z(i);
    L.setZero();
    int t = N;
    for (int i = 0; i < N; ++i)
      for (int j = 0; j <= i; ++j) L(i, j) = z(t++);
  };
  auto slacks = [&](const Eigen::VectorXd& z, Eigen::VectorXd& s) {
    Vec<N> c;
    Eigen::Matrix<double, N, N> L;
    unpack(z, c, L);
    for (size_t i = 0; i < m; ++i) {
      Eigen::Matrix<double, N, 1> a;
      for (int j = 0; j < N; ++j) a(j) = K.halfspaces[i].normal[j];
      s(int(i)) = K.halfspaces[i].offset - dot(K.halfspaces[i].normal, c) - (L.transpose() * a).norm();
    }
  };
  auto fval = [&](const Eigen::VectorXd& z, double t) -> double {
    Eigen::VectorXd s(m);
    slacks(z, s);
    Vec<N> c;
    Eigen::Matrix<double, N, N> L;
    unpack(z, c, L);
    double f = 0;
    for (int i = 0; i < N; ++i) {
      if (L(i, i) <= 0) return 1e300;
      f -= t * std::log(L(i, i));
    }
    for (size_t i = 0; i < m; ++i) {
      if (s(int(i)) <= 0) return 1e300;
      f -= std::log(s(int(i)));
    }
    return f;
  };
  // lower-tri index of L_pq within z
  auto lidx = [&](int p, int q) { return N + p * (p + 1) / 2 + q; };
  auto grad_hess = [&](const Eigen::VectorXd& z, double t, Eigen::VectorXd& g,
                       Eigen::MatrixXd& H) {
    Vec<N> c;
    Eigen::Matrix<double, N, N> L;
    unpack(z, c, L);
    g.setZero(DIM);
    H.setZero(DIM, DIM);
    for (int i = 0; i < N; ++i) {
      g(lidx(i, i)) -= t / L(i, i);
      H(lidx(i, i), lidx(i, i)) += t / (L(i, i) * L(i, i));
    }
    Eigen::VectorXd w(DIM);
    for (size_t i = 0; i < m; ++i) {
      Eigen::Matrix<double, N, 1> a;
      for (int j = 0; j < N; ++j) a(j) = K.halfspaces[i].normal[j];
      Eigen::Matrix<double, N, 1> v = L.transpose() * a;
      double nv = v.norm();
      double s = K.halfspaces[i].offset - dot(K.halfspaces[i].normal, c) - nv;
      if (s <= 0) s = 1e-300;
      if (nv <= 1e-300) nv = 1e-300;
      Eigen::Matrix<double, N, 1> vh = v / nv;
      // w = grad of slack deficit (-grad s): phi = -log s, grad phi = w/s
      w.setZero();
      for (int j = 0; j < N; ++j) w(j) = a(j);
      for (int p = 0; p < N; ++p)
        for (int q = 0; q <= p; ++q) w(lidx(p, q)) = a(p) * vh(q);
      g += w / s;
      H += (w * w.transpose()) / (s * s);
      // curvature of |v| in the L block: a_p a_p' (delta_qq' - vh_q vh_q')/|v|
      for (int p = 0; p < N; ++p)
        for (int q = 0; q <= p; ++q)
          for (int p2 = 0; p2 < N; ++p2)
            for (int q2 = 0; q2 <= p2; ++q2)
              H(lidx(p, q), lidx(p2, q2)) +=
                  a(p) * a(p2) * ((q == q2 ? 1.0 : 0.0) - vh(q) * vh(q2)) / (nv * s);
    }
  };

  Eigen::VectorXd z = Eigen::VectorXd::Zero(DIM);
  for (int i = 0; i < N; ++i) z(i) = rp.inner_center[i];
  {
    int t = N;
    for (int i = 0; i < N; ++i)
      for (int j = 0; j <= i; ++j) z(t++) = (i == j) ? 0.9 * rp.inner : 0.0;
  }
  double t = 1.0;
  const double t_end = double(m) * 1e9;
  Eigen::VectorXd g(DIM);
  Eigen::MatrixXd H(DIM, DIM);
  while (true) {
    for (int it = 0; it < 80; ++it) {
      grad_hess(z, t, g, H);
      double lam = 0.0;
      Eigen::VectorXd dz;
      while (true) {
        Eigen::LDLT<Eigen::MatrixXd> ldlt(H + lam * Eigen::MatrixXd::Identity(DIM, DIM));
        dz = ldlt.solve(-g);
        if (ldlt.info() == Eigen::Success && dz.dot(-g) >= 0) break;
        lam = (lam == 0) ? 1e-12 : lam * 100;
        if (lam > 1e12) { dz = -g; break; }
      }
      if (dz.dot(-g) <= 1e-12 * (1 + t)) break;  // newton decrement
      double f0 = fval(z, t), step = 1.0;
      while (step > 1e-14 && fval(z + step * dz, t) > f0 - 1e-4 * step * g.dot(-dz))
        step *= 0.5;
      if (step <= 1e-14) break;
      z += step * dz;
    }
    if (t >= t_end) break;
    t = std::min(t * 20.0, t_end);
  }

  Vec<N> c;
  Eigen::Matrix<double, N, N> L;
  unpack(z, c, L);
  Eigen::Matrix<double, N, N> B = L * L.transpose();
  Eigen::Matrix<double, N, N> A = B.inverse();
  Ellipsoid<N> E;
  E.center = c;
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) E.shape[i][j] = 0.5 * (A(i, j) + A(j, i));
  return E;
}

// ellipsoid level set {x : (x-c)^T A (x-c) <= s^2} as a polygon
inline Polytope2 ellipse_to_polytope(const Ellipse& E, double s = 1.0, int k = 128) {
  Eigen::Matrix2d A;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) A(i, j) = E.shape[i][j];
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(A);
  Eigen::Vector2d ev = es.eigenvalues();
  Eigen::Matrix2d U = es.eigenvectors();
  detail::Chain ch;
  ch.reserve(k);
  for (int i = 0; i < k; ++i) {
    double th = 2 * M_PI * i / k;
    Eigen::Vector2d u(std::cos(th) / std::sqrt(ev(0)), std::sin(th) / std::sqrt(ev(1)));
    Eigen::Vector2d x = U * u;
    ch.push_back({E.center[0] + s * x(0), E.center[1] + s * x(1)});
  }
  return polytope_from_vertices(ch);
}

// ---------------------------------------------------------------- factories

inline Polytope2 make_box(const Vec2& lo, const Vec2& hi) {
  return polytope_from_vertices({{lo[0], lo[1]}, {hi[0], lo[1]}, {hi[0], hi[1]}, {lo[0], hi[1]}});
}

inline Polytope2 regular_ngon(const Vec2& c, double r, int k) {
  detail::Chain ch;
  ch.reserve(k);
  for (int i = 0; i < k; ++i) {
    double th = 2 * M_PI * i / k;
    ch.push_back({c[0] + r * std::cos(th), c[1] + r * std::sin(th)});
  }
  return polytope_from_vertices(ch);
}

template <int N>
inline Vec<N> sample_in_polytope(const ConvexPolytope<N>& K, Rng& rng) {
  Vec<N> lo = K.vertices[0], hi = K.vertices[0];
  for (auto& v : K.vertices)
    for (int j = 0; j < N; ++j) {
      lo[j] = std::min(lo[j], v[j]);
      hi[j] = std::max(hi[j], v[j]);
    }
  for (int tries = 0; tries < 100000; ++tries) {
    Vec<N> x;
    for (int j = 0; j < N; ++j) x[j] = rng.uniform(lo[j], hi[j]);
    if (contains_point(K, x)) return x;
  }
  return K.center_of_mass;
}

// exact integral over the polygon of an affine function a.x + b
inline double integrate_affine(const Polytope2& K, const Vec2& a, double b) {
  return K.vol * (dot(a, K.center_of_mass) + b);
}

// inward offset by r (empty if r exceeds the inner radius)
template <int N>
inline std::optional<ConvexPolytope<N>> erode(const ConvexPolytope<N>& K, double r) {
  std::vector<Halfspace<N>> hs = K.halfspaces;
  for (auto& h : hs) h.offset -= r;
  try {
    return polytope_from_halfspaces(hs);
  } catch (const Error&) {
    return std::nullopt;
  }
}

template <int N>
inline Vec<N> closest_point(const ConvexPolytope<N>& K, const Vec<N>& x)
  requires(N == 2)
{
  if (contains_point(K, x)) return x;
  double best = 1e300;
  Vec<N> arg = K.vertices[0];
  size_t n = K.vertices.size();
  for (size_t i = 0; i < n; ++i) {
    Vec2 a = K.vertices[i], b = K.vertices[(i + 1) % n];
    Vec2 ab = b - a;
    double t = std::clamp(dot(x - a, ab) / std::max(norm2(ab), 1e-300), 0.0, 1.0);
    Vec2 p = a + t * ab;
    double d = dist2(p, x);
    if (d < best) { best = d; arg = p; }
  }
  return arg;
}

}  // namespace kantoreg
