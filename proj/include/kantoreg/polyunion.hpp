#pragma once

#include <boost/geometry.hpp>
#include <boost/geometry/geometries/point_xy.hpp>
#include <boost/geometry/geometries/polygon.hpp>
#include <vector>

#include "geom.hpp"

namespace kantoreg {
namespace detail {

namespace bg = boost::geometry;
using BgPoint = bg::model::d2::point_xy<double>;
using BgPoly = bg::model::polygon<BgPoint>;
using BgMulti = bg::model::multi_polygon<BgPoly>;

inline BgPoly to_bg(const Polytope2& P) {
  BgPoly poly;
  auto& ring = poly.outer();
  ring.reserve(P.vertices.size() + 1);
  for (auto& v : P.vertices) ring.emplace_back(v[0], v[1]);
  bg::correct(poly);
  return poly;
}

inline BgMulti accumulate_union(const std::vector<Polytope2>& parts) {
  BgMulti acc;
  for (auto& P : parts) {
    if (P.vol <= 0 || P.vertices.size() < 3) continue;
    BgMulti out;
    bg::union_(acc, to_bg(P), out);
    acc = std::move(out);
  }
  return acc;
}

}  // namespace detail

inline double union_area(const std::vector<Polytope2>& parts) {
  return boost::geometry::area(detail::accumulate_union(parts));
}

inline double union_difference_area(const std::vector<Polytope2>& a,
                                    const std::vector<Polytope2>& b) {
  auto ua = detail::accumulate_union(a);
  auto ub = detail::accumulate_union(b);
  detail::BgMulti out;
  boost::geometry::difference(ua, ub, out);
  return boost::geometry::area(out);
}

}  // namespace kantoreg
