#pragma once

#include <cmath>
#include <numbers>
#include <random>

#include "meshforge/geometry.hpp"
#include "meshforge/mesh.hpp"

namespace testing {

inline meshforge::Polygon square(double side = 1.0) {
  meshforge::Polygon p;
  p.vertices = {{0, 0}, {side, 0}, {side, side}, {0, side}};
  p.edge_count = 4;
  return p;
}

inline meshforge::Polygon regular_polygon(int n, double radius = 1.0) {
  meshforge::Polygon p;
  for (int i = 0; i < n; ++i) {
    const double a = 2 * std::numbers::pi * i / n;
    p.vertices.push_back({radius * std::cos(a), radius * std::sin(a)});
  }
  p.edge_count = n;
  return p;
}

/// Rejection sample strictly inside the polygon, away from the boundary.
inline meshforge::Point2 interior_point(const meshforge::Polygon& poly, std::mt19937_64& rng, double margin_frac = 1e-6) {
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (auto v : poly.vertices) {
    x0 = std::min(x0, v.x), x1 = std::max(x1, v.x);
    y0 = std::min(y0, v.y), y1 = std::max(y1, v.y);
  }
  std::uniform_real_distribution<double> ux(x0, x1), uy(y0, y1);
  const double margin = margin_frac * meshforge::polygon_diameter(poly);
  for (;;) {
    meshforge::Point2 p{ux(rng), uy(rng)};
    if (meshforge::point_in_polygon(poly, p) && meshforge::distance_to_boundary(poly, p) > margin) return p;
  }
}

}  // namespace testing
