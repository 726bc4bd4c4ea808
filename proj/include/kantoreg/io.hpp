#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "regularity.hpp"

namespace kantoreg {

using Json = nlohmann::ordered_json;

// ----------------------------------------------------------------- files

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Error::ConfigError, "cannot open for writing: " + path);
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw Error(Error::ConfigError, "short write: " + path);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Error::MissingReport, "cannot open: " + path);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline bool file_exists(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return bool(in);
}

// --------------------------------------------------------------- formatting

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// ------------------------------------------------------------- json builders

inline Json json_of(const Vec2& v) { return Json::array({v[0], v[1]}); }

inline Json json_of(const DiscreteMeasure& m) {
  Json pts = Json::array(), ws = Json::array();
  for (auto& p : m.points) pts.push_back(json_of(p));
  for (double w : m.weights) ws.push_back(w);
  return Json{{"points", std::move(pts)}, {"weights", std::move(ws)}};
}

inline DiscreteMeasure measure_from_json(const Json& j) {
  DiscreteMeasure m;
  for (auto& p : j.at("points")) m.points.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  for (auto& w : j.at("weights")) m.weights.push_back(w.get<double>());
  if (m.points.size() != m.weights.size())
    throw Error(Error::ConfigError, "measure points/weights length mismatch");
  return m;
}

inline Json json_of(const PiecewiseAffineConvex& psi) {
  Json slopes = Json::array(), bs = Json::array();
  for (auto& s : psi.slopes) slopes.push_back(json_of(s));
  for (double b : psi.intercepts) bs.push_back(b);
  return Json{{"slopes", std::move(slopes)}, {"intercepts", std::move(bs)}};
}

inline PiecewiseAffineConvex potential_from_json(const Json& j) {
  PiecewiseAffineConvex psi;
  for (auto& s : j.at("slopes")) psi.slopes.push_back({s.at(0).get<double>(), s.at(1).get<double>()});
  for (auto& b : j.at("intercepts")) psi.intercepts.push_back(b.get<double>());
  if (psi.slopes.size() != psi.intercepts.size() || psi.slopes.empty())
    throw Error(Error::ConfigError, "potential slopes/intercepts malformed");
  return psi;
}

inline Json json_of(const AssumptionCertificate& c) {
  return Json{{"lambda_hat", c.lambda_hat},
              {"Lambda_hat", c.Lambda_hat},
              {"delta", c.delta},
              {"n_samples", c.n_samples},
              {"worst_ball_center", json_of(c.worst_ball_center)},
              {"worst_ball_radius", c.worst_ball_radius},
              {"mode", c.mode == AssumptionCertificate::Balls ? "balls" : "convex-sets"},
              {"interior_only", c.restricted_to_interior},
              {"ball_lambda_ratio", c.ball_lambda_ratio},
              {"ball_Lambda_ratio", c.ball_Lambda_ratio}};
}

inline Json json_of(const RhoCertificate& c) {
  Json grid = Json::array(), wit = Json::array();
  for (auto& g : c.grid) grid.push_back(json_of(g));
  for (auto& p : c.witness_p) wit.push_back(json_of(p));
  return Json{{"rho", c.rho},
              {"grid", std::move(grid)},
              {"witness_p", std::move(wit)},
              {"diagnostics", c.diagnostics}};
}

inline Json json_of(const SectionSample& s) {
  return Json{{"t", s.t},         {"x", json_of(s.x)},
              {"volume", s.volume}, {"ell", s.ell},
              {"L", s.L},         {"M_local", s.M_local},
              {"theta_local", s.theta_local}, {"escaped", s.escaped}};
}

inline Json json_of(const SectionPropertyReport& r) {
  Json rows = Json::array(), sub = Json::array();
  for (auto& s : r.rows) rows.push_back(json_of(s));
  for (auto& s : r.subgrid_rows) sub.push_back(json_of(s));
  return Json{{"C0_hat", r.C0_hat},
              {"M_hat", r.M_hat},
              {"theta_hat", r.theta_hat},
              {"beta_hat", r.beta_hat},
              {"Cstar_hat", r.Cstar_hat},
              {"volume_ratio_min", r.volume_ratio_range.first},
              {"volume_ratio_max", r.volume_ratio_range.second},
              {"samples", r.samples},
              {"escaped_count", r.escaped_count},
              {"delta", r.delta},
              {"rho", r.rho},
              {"rows", std::move(rows)},
              {"subgrid_rows", std::move(sub)}};
}

inline Json json_of(const ContactConstruction& c) {
  return Json{{"contacts", c.contacts.size()},
              {"v_area", c.v_area},
              {"c_lower", c.c_lower},
              {"hull_spread", c.hull_spread},
              {"minorant_margin", c.minorant_margin}};
}

inline Json json_of(const FattenedSets& f) {
  return Json{{"h", f.h},
              {"h0", f.h0},
              {"engulf_C", f.engulf_C},
              {"sigma_area", f.sigma_area},
              {"v_area", f.v_area},
              {"sigma_ratio", f.sigma_ratio},
              {"t_over_ell2", f.t_over_ell2},
              {"pairing_max", f.pairing_max},
              {"conj_slack", f.conj_slack},
              {"spread_factor", f.spread_factor},
              {"drpsi_min", f.drpsi_min},
              {"drpsi_bound", f.drpsi_bound},
              {"c_pointwise", f.c_pointwise},
              {"samples_used", f.samples_used}};
}

inline Json json_of(const ChebyshevThresholds& t) {
  return Json{{"C1", t.C1},     {"Css", t.Css}, {"eps1", t.eps1}, {"eps2", t.eps2},
              {"eps", t.eps},   {"alpha0", t.alpha0}, {"r0", t.r0}};
}

inline Json json_of(const ChebyshevReport& r) {
  Json pairs = Json::array();
  for (auto& p : r.pairs)
    pairs.push_back(Json{{"alpha", p.alpha},
                         {"lhs", p.lhs},
                         {"rhs_measure", p.rhs_measure},
                         {"rhs", p.rhs},
                         {"enlargement", p.enlargement}});
  return Json{{"pairs", std::move(pairs)},
              {"c_hat", r.c_hat},
              {"C_hat", r.C_hat},
              {"thresholds", json_of(r.thresholds)},
              {"local", r.local},
              {"center", json_of(r.center)},
              {"R", r.R}};
}

inline Json json_of(const CriticalHeightField& f) {
  Json entries = Json::array();
  for (auto& e : f.entries)
    entries.push_back(Json{{"x", json_of(e.x)},
                           {"q", json_of(e.q)},
                           {"drpsi", e.drpsi},
                           {"t", e.t},
                           {"ell", e.ell},
                           {"L", e.L},
                           {"ratio1", e.ratio1},
                           {"ratio2", e.ratio2},
                           {"branch", e.branch}});
  return Json{{"alpha", f.alpha},
              {"r", f.r},
              {"rho", f.rho},
              {"thresholds", json_of(f.thresholds)},
              {"c_tx", f.c_tx},
              {"C_int", f.C_int},
              {"capped", f.capped},
              {"entries", std::move(entries)}};
}

inline Json json_of(const ModulusTable& m) {
  Json bins = Json::array(), worst = Json::array();
  for (auto& b : m.bins)
    bins.push_back(Json{{"lo", b.lo}, {"hi", b.hi}, {"max_ratio", b.max_ratio}, {"count", b.count}});
  for (auto& w : m.worst)
    worst.push_back(Json{{"x", json_of(w.x)},
                         {"y", json_of(w.y)},
                         {"q", json_of(w.q)},
                         {"dist", w.dist},
                         {"excess", w.excess},
                         {"ratio", w.ratio}});
  return Json{{"cutoff", m.cutoff},
              {"upper", m.upper},
              {"theta", m.theta},
              {"beta", m.beta},
              {"delta", m.delta},
              {"modulus", m.modulus},
              {"below_cutoff_max", m.below_cutoff_max},
              {"count", m.count},
              {"below_count", m.below_count},
              {"engulf_margin", m.engulf_margin},
              {"engulf_checked", m.engulf_checked},
              {"bins", std::move(bins)},
              {"worst", std::move(worst)}};
}

inline Json json_of(const SobolevRow& r) {
  Json lp = Json::array();
  for (double v : r.lp) lp.push_back(v);
  return Json{{"delta", r.delta}, {"exponent", r.exponent}, {"r", r.r},
              {"l1", r.l1},       {"llogl", r.llogl},       {"lp", std::move(lp)},
              {"cert", r.cert},   {"nx", r.nx},             {"ny", r.ny},
              {"status", r.status}};
}

inline Json json_of(const SobolevSeries& s) {
  Json rows = Json::array(), ps = Json::array(), es = Json::array();
  for (auto& r : s.rows) rows.push_back(json_of(r));
  for (double p : s.p_list) ps.push_back(p);
  for (double e : s.exponents) es.push_back(e);
  return Json{{"p_list", std::move(ps)}, {"exponents", std::move(es)}, {"rows", std::move(rows)}};
}

inline Json json_of(const FlatPartReport& f) {
  Json ds = Json::array();
  for (double d : f.diameters) ds.push_back(d);
  return Json{{"max_diameter", f.max_diameter}, {"cells", f.cells}, {"diameters", std::move(ds)}};
}

inline Json json_of(const RegularityReport& r) {
  Json lp = Json::array();
  for (auto& pv : r.lp_norms) lp.push_back(Json{{"p", pv.first}, {"value", pv.second}});
  return Json{{"delta", r.delta},
              {"r", r.r},
              {"rho", r.rho},
              {"llogl_norm", r.llogl_norm},
              {"lp_norms", std::move(lp)},
              {"modulus", json_of(r.modulus)},
              {"chebyshev", json_of(r.chebyshev)},
              {"flat_part_max_diameter", r.flat_part_max_diameter},
              {"sup_bound_ratio", r.sup_bound_ratio},
              {"contact_c", r.contact_c},
              {"fatten_area_c", r.fatten_area_c},
              {"fatten_pointwise_c", r.fatten_pointwise_c},
              {"sections", json_of(r.sections)}};
}

// --------------------------------------------------------------------- csv

// one row per (delta, exponent); stable column order, %.17g values
inline std::string sobolev_csv(const SobolevSeries& s) {
  std::string out = "delta,exponent,r,l1,llogl";
  for (double p : s.p_list) out += ",lp_" + fmt6(p);
  out += ",cert,status\n";
  for (auto& r : s.rows) {
    out += fmt17(r.delta) + "," + fmt17(r.exponent) + "," + fmt17(r.r) + "," + fmt17(r.l1) + "," +
           fmt17(r.llogl);
    for (size_t k = 0; k < s.p_list.size(); ++k)
      out += "," + (k < r.lp.size() ? fmt17(r.lp[k]) : std::string("nan"));
    std::string st = r.status;
    for (auto& ch : st)
      if (ch == ',' || ch == '\n') ch = ';';
    out += "," + fmt17(r.cert) + "," + st + "\n";
  }
  return out;
}

// per-delta summary of full reports
inline std::string summary_csv(const std::vector<RegularityReport>& reports) {
  std::string out =
      "delta,r,rho,llogl,modulus,chebyshev_C,flat_max_diameter,sup_bound,contact_c,"
      "fatten_area_c,fatten_pointwise_c,M_hat,theta_hat,beta_hat\n";
  for (auto& r : reports) {
    out += fmt17(r.delta) + "," + fmt17(r.r) + "," + fmt17(r.rho) + "," + fmt17(r.llogl_norm) +
           "," + fmt17(r.modulus.modulus) + "," + fmt17(r.chebyshev.C_hat) + "," +
           fmt17(r.flat_part_max_diameter) + "," + fmt17(r.sup_bound_ratio) + "," +
           fmt17(r.contact_c) + "," + fmt17(r.fatten_area_c) + "," +
           fmt17(r.fatten_pointwise_c) + "," + fmt17(r.sections.M_hat) + "," +
           fmt17(r.sections.theta_hat) + "," + fmt17(r.sections.beta_hat) + "\n";
  }
  return out;
}

// --------------------------------------------------------------------- svg

struct PlotSeries {
  std::string label;
  std::vector<Vec2> pts;
};

namespace detail {

inline std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else out += c;
  }
  return out;
}

inline double loglog_slope(const std::vector<Vec2>& pts) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (auto& p : pts) {
    if (!(p[0] > 0) || !(p[1] > 0)) continue;
    double lx = std::log10(p[0]), ly = std::log10(p[1]);
    sx += lx, sy += ly, sxx += lx * lx, sxy += lx * ly;
    ++n;
  }
  if (n < 2) return 0;
  double den = n * sxx - sx * sx;
  return den == 0 ? 0 : (n * sxy - sx * sy) / den;
}

}  // namespace detail

// log-log scatter/line plot; byte-deterministic for fixed inputs
inline std::string svg_loglog(const std::string& title, const std::string& xlabel,
                              const std::string& ylabel, const std::vector<PlotSeries>& series,
                              bool annotate_slope = false) {
  const double W = 640, H = 480, L = 70, R = 20, T = 40, B = 50;
  double xlo = 1e300, xhi = -1e300, ylo = 1e300, yhi = -1e300;
  for (auto& s : series)
    for (auto& p : s.pts) {
      if (!(p[0] > 0) || !(p[1] > 0) || !std::isfinite(p[0]) || !std::isfinite(p[1])) continue;
      xlo = std::min(xlo, std::log10(p[0])), xhi = std::max(xhi, std::log10(p[0]));
      ylo = std::min(ylo, std::log10(p[1])), yhi = std::max(yhi, std::log10(p[1]));
    }
  bool empty = xlo > xhi;
  if (empty) xlo = 0, xhi = 1, ylo = 0, yhi = 1;
  if (xhi - xlo < 1e-12) xlo -= 0.5, xhi += 0.5;
  if (yhi - ylo < 1e-12) ylo -= 0.5, yhi += 0.5;
  double mx = 0.06 * (xhi - xlo), my = 0.06 * (yhi - ylo);
  xlo -= mx, xhi += mx, ylo -= my, yhi += my;
  auto X = [&](double lx) { return L + (lx - xlo) / (xhi - xlo) * (W - L - R); };
  auto Y = [&](double ly) { return H - B - (ly - ylo) / (yhi - ylo) * (H - T - B); };

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt6(W) +
                    "\" height=\"" + fmt6(H) + "\" viewBox=\"0 0 " + fmt6(W) + " " + fmt6(H) +
                    "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + fmt6(W / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\" "
         "font-family=\"sans-serif\">" + detail::svg_escape(title) + "</text>\n";

  for (int d = int(std::ceil(xlo)); d <= int(std::floor(xhi)); ++d) {
    svg += "<line x1=\"" + fmt6(X(d)) + "\" y1=\"" + fmt6(T) + "\" x2=\"" + fmt6(X(d)) +
           "\" y2=\"" + fmt6(H - B) + "\" stroke=\"#ddd\"/>\n";
    svg += "<text x=\"" + fmt6(X(d)) + "\" y=\"" + fmt6(H - B + 16) +
           "\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\">1e" +
           std::to_string(d) + "</text>\n";
  }
  for (int d = int(std::ceil(ylo)); d <= int(std::floor(yhi)); ++d) {
    svg += "<line x1=\"" + fmt6(L) + "\" y1=\"" + fmt6(Y(d)) + "\" x2=\"" + fmt6(W - R) +
           "\" y2=\"" + fmt6(Y(d)) + "\" stroke=\"#ddd\"/>\n";
    svg += "<text x=\"" + fmt6(L - 6) + "\" y=\"" + fmt6(Y(d) + 4) +
           "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">1e" +
           std::to_string(d) + "</text>\n";
  }
  svg += "<rect x=\"" + fmt6(L) + "\" y=\"" + fmt6(T) + "\" width=\"" + fmt6(W - L - R) +
         "\" height=\"" + fmt6(H - T - B) + "\" fill=\"none\" stroke=\"black\"/>\n";
  svg += "<text x=\"" + fmt6(W / 2) + "\" y=\"" + fmt6(H - 12) +
         "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\">" +
         detail::svg_escape(xlabel) + "</text>\n";
  svg += "<text x=\"18\" y=\"" + fmt6(H / 2) + "\" text-anchor=\"middle\" font-size=\"13\" "
         "font-family=\"sans-serif\" transform=\"rotate(-90 18 " + fmt6(H / 2) + ")\">" +
         detail::svg_escape(ylabel) + "</text>\n";

  const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  for (size_t si = 0; si < series.size(); ++si) {
    const char* color = palette[si % 6];
    std::string pl;
    for (auto& p : series[si].pts) {
      if (!(p[0] > 0) || !(p[1] > 0)) continue;
      pl += (pl.empty() ? "" : " ") + fmt6(X(std::log10(p[0]))) + "," + fmt6(Y(std::log10(p[1])));
    }
    if (!pl.empty() && series[si].pts.size() > 1)
      svg += "<polyline points=\"" + pl + "\" fill=\"none\" stroke=\"" + color + "\"/>\n";
    for (auto& p : series[si].pts) {
      if (!(p[0] > 0) || !(p[1] > 0)) continue;
      svg += "<circle cx=\"" + fmt6(X(std::log10(p[0]))) + "\" cy=\"" +
             fmt6(Y(std::log10(p[1]))) + "\" r=\"3.5\" fill=\"" + color + "\"/>\n";
    }
    svg += "<text x=\"" + fmt6(W - R - 8) + "\" y=\"" + fmt6(T + 18 + 16 * double(si)) +
           "\" text-anchor=\"end\" font-size=\"12\" font-family=\"sans-serif\" fill=\"" + color +
           "\">" + detail::svg_escape(series[si].label) + "</text>\n";
  }
  if (empty)
    svg += "<text x=\"" + fmt6(W / 2) + "\" y=\"" + fmt6(H / 2) +
           "\" text-anchor=\"middle\" font-size=\"14\" font-family=\"sans-serif\" "
           "fill=\"#888\">no data</text>\n";
  if (annotate_slope && !series.empty()) {
    double slope = detail::loglog_slope(series[0].pts);
    svg += "<text x=\"" + fmt6(L + 10) + "\" y=\"" + fmt6(T + 18) +
           "\" font-size=\"12\" font-family=\"sans-serif\">slope " + fmt6(slope) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace kantoreg
