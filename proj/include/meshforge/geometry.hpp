#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

namespace meshforge {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Point2 operator*(double s, Point2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(const Point2&, const Point2&) = default;
};

inline double dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Point2 a, Point2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Point2 a) { return std::hypot(a.x, a.y); }
inline double distance(Point2 a, Point2 b) { return norm(a - b); }
inline Point2 midpoint(Point2 a, Point2 b) { return {0.5 * (a.x + b.x), 0.5 * (a.y + b.y)}; }

/// Number of vertices every generated polygon is stored with. Six- and
/// seven-edge domains are padded with collinear midpoints to this width.
inline constexpr int kPaddedVertices = 8;

/// Ordered vertex loop. `edge_count` is the nominal number of edges of the
/// shape (it differs from vertices.size() for padded polygons); edge i runs
/// from vertices[i] to vertices[(i + 1) % n].
struct Polygon {
  std::vector<Point2> vertices;
  int edge_count = 0;
  std::uint64_t seed = 0;

  std::size_t size() const { return vertices.size(); }
  Point2 vertex(std::size_t i) const { return vertices[i % vertices.size()]; }
};

Polygon generate_random_polygon(std::uint64_t seed, int edge_count);

/// Signed shoelace area, positive for counter-clockwise loops.
double polygon_area(const Polygon& poly);
double polygon_diameter(const Polygon& poly);
Point2 polygon_centroid(const Polygon& poly);

/// Winding-number test; points on the boundary count as inside.
bool point_in_polygon(const Polygon& poly, Point2 p);

double distance_to_boundary(const Polygon& poly, Point2 p);
bool is_simple(const Polygon& poly);
bool is_ccw(const Polygon& poly);

/// Floater mean value coordinates of an interior point, one weight per
/// stored vertex. Throws PointOnBoundary when p is within 1e-9 * diameter
/// of the boundary.
std::vector<double> mean_value_coordinates(const Polygon& poly, Point2 p);

/// Allocation-free variant used by the feature builder; `out` must have
/// poly.size() entries.
void mean_value_coordinates(const Polygon& poly, Point2 p, std::span<double> out);

void to_json(nlohmann::json& j, const Polygon& poly);
void from_json(const nlohmann::json& j, Polygon& poly);

}  // namespace meshforge
