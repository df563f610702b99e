#include "meshforge/geometry.hpp"

#include <algorithm>
#include <numbers>
#include <random>

#include "meshforge/error.hpp"

namespace meshforge {

namespace {

constexpr double kMinRadius = 100.0;
constexpr double kMaxRadius = 200.0;
constexpr double kMinGap = 0.2;
constexpr double kMaxGap = 1.6;
constexpr int kMaxAttempts = 1000;

double segment_distance(Point2 p, Point2 a, Point2 b) {
  const Point2 ab = b - a;
  const double len2 = dot(ab, ab);
  double t = len2 > 0.0 ? dot(p - a, ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return distance(p, a + t * ab);
}

bool segments_intersect(Point2 a, Point2 b, Point2 c, Point2 d) {
  auto orient = [](Point2 p, Point2 q, Point2 r) { return cross(q - p, r - p); };
  const double d1 = orient(c, d, a);
  const double d2 = orient(c, d, b);
  const double d3 = orient(a, b, c);
  const double d4 = orient(a, b, d);
  return ((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0));
}

}  // namespace

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::GenerationFailure: return "GenerationFailure";
    case ErrorCode::PointOnBoundary: return "PointOnBoundary";
    case ErrorCode::MeshingFailure: return "MeshingFailure";
    case ErrorCode::OutsideDomain: return "OutsideDomain";
    case ErrorCode::SolverFailure: return "SolverFailure";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::DegenerateSolution: return "DegenerateSolution";
    case ErrorCode::CalibrationFailure: return "CalibrationFailure";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

Polygon generate_random_polygon(std::uint64_t seed, int edge_count) {
  if (edge_count < 6 || edge_count > 8) {
    throw Error(ErrorCode::InvalidArgument, "edge_count must be 6, 7 or 8");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle_dist(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> radius_dist(kMinRadius, kMaxRadius);

  const auto n = static_cast<std::size_t>(edge_count);
  std::vector<double> angles(n);
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    // The first vertex sits on the positive x-axis; the others are sorted draws.
    angles[0] = 0.0;
    for (std::size_t i = 1; i < n; ++i) angles[i] = angle_dist(rng);
    std::sort(angles.begin() + 1, angles.end());

    bool ok = true;
    for (std::size_t i = 0; i < n && ok; ++i) {
      const double next = i + 1 < n ? angles[i + 1] : 2.0 * std::numbers::pi;
      const double gap = next - angles[i];
      ok = gap >= kMinGap && gap <= kMaxGap;
    }
    if (!ok) continue;

    Polygon poly;
    poly.seed = seed;
    poly.edge_count = edge_count;
    poly.vertices.reserve(kPaddedVertices);
    for (std::size_t i = 0; i < n; ++i) {
      const double r = radius_dist(rng);
      poly.vertices.push_back(i == 0 ? Point2{r, 0.0} : Point2{r * std::cos(angles[i]), r * std::sin(angles[i])});
    }
    // Pad by bisecting the closing edge until eight vertices are stored.
    while (poly.vertices.size() < static_cast<std::size_t>(kPaddedVertices)) {
      poly.vertices.push_back(midpoint(poly.vertices.back(), poly.vertices.front()));
    }
    if (is_simple(poly) && is_ccw(poly)) return poly;
  }
  throw Error(ErrorCode::GenerationFailure,
              "no admissible polygon after " + std::to_string(kMaxAttempts) + " attempts");
}

double polygon_area(const Polygon& poly) {
  const std::size_t n = poly.size();
  double twice = 0.0;
  for (std::size_t i = 0; i < n; ++i) twice += cross(poly.vertices[i], poly.vertex(i + 1));
  return 0.5 * twice;
}

double polygon_diameter(const Polygon& poly) {
  double d = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i)
    for (std::size_t j = i + 1; j < poly.size(); ++j) d = std::max(d, distance(poly.vertices[i], poly.vertices[j]));
  return d;
}

Point2 polygon_centroid(const Polygon& poly) {
  const std::size_t n = poly.size();
  double cx = 0.0, cy = 0.0, twice = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 a = poly.vertices[i];
    const Point2 b = poly.vertex(i + 1);
    const double c = cross(a, b);
    twice += c;
    cx += (a.x + b.x) * c;
    cy += (a.y + b.y) * c;
  }
  return {cx / (3.0 * twice), cy / (3.0 * twice)};
}

double distance_to_boundary(const Polygon& poly, Point2 p) {
  double d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < poly.size(); ++i) d = std::min(d, segment_distance(p, poly.vertices[i], poly.vertex(i + 1)));
  return d;
}

bool point_in_polygon(const Polygon& poly, Point2 p) {
  const double tol = 1e-12 * polygon_diameter(poly);
  if (distance_to_boundary(poly, p) <= tol) return true;
  int winding = 0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Point2 a = poly.vertices[i];
    const Point2 b = poly.vertex(i + 1);
    const double side = cross(b - a, p - a);
    if (a.y <= p.y) {
      if (b.y > p.y && side > 0) ++winding;
    } else if (b.y <= p.y && side < 0) {
      --winding;
    }
  }
  return winding != 0;
}

bool is_simple(const Polygon& poly) {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (j == i + 1 || (i == 0 && j == n - 1)) continue;
      if (segments_intersect(poly.vertices[i], poly.vertex(i + 1), poly.vertices[j], poly.vertex(j + 1))) return false;
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (poly.vertices[i] == poly.vertices[j]) return false;
  return true;
}

bool is_ccw(const Polygon& poly) { return polygon_area(poly) > 0.0; }

void mean_value_coordinates(const Polygon& poly, Point2 p, std::span<double> out) {
  const std::size_t n = poly.size();
  if (out.size() != n) throw Error(ErrorCode::ShapeMismatch, "MVC output width differs from vertex count");
  const double diam = polygon_diameter(poly);
  if (distance_to_boundary(poly, p) <= 1e-9 * diam) {
    throw Error(ErrorCode::PointOnBoundary, "mean value coordinates are singular on the boundary");
  }

  std::array<Point2, kPaddedVertices> d_small{};
  std::array<double, kPaddedVertices> r_small{};
  std::array<double, kPaddedVertices> t_small{};
  std::vector<Point2> d_big;
  std::vector<double> r_big, t_big;
  std::span<Point2> d;
  std::span<double> r, t;
  if (n <= static_cast<std::size_t>(kPaddedVertices)) {
    d = std::span(d_small).first(n);
    r = std::span(r_small).first(n);
    t = std::span(t_small).first(n);
  } else {
    d_big.resize(n);
    r_big.resize(n);
    t_big.resize(n);
    d = d_big;
    r = r_big;
    t = t_big;
  }

  for (std::size_t i = 0; i < n; ++i) {
    d[i] = poly.vertices[i] - p;
    r[i] = norm(d[i]);
  }
  // t[i] = tan(alpha_i / 2) for the signed angle subtended by edge (v_i, v_i+1).
  // Pick the algebraic form that stays away from its own cancellation.
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = (i + 1) % n;
    const double s = cross(d[i], d[j]);
    const double c = dot(d[i], d[j]);
    const double rr = r[i] * r[j];
    t[i] = c >= 0.0 ? s / (rr + c) : (rr - c) / s;
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t prev = (i + n - 1) % n;
    out[i] = (t[prev] + t[i]) / r[i];
    sum += out[i];
  }
  for (std::size_t i = 0; i < n; ++i) out[i] /= sum;
}

std::vector<double> mean_value_coordinates(const Polygon& poly, Point2 p) {
  std::vector<double> w(poly.size());
  mean_value_coordinates(poly, p, w);
  return w;
}

void to_json(nlohmann::json& j, const Polygon& poly) {
  nlohmann::json verts = nlohmann::json::array();
  for (const auto& v : poly.vertices) verts.push_back({v.x, v.y});
  j = nlohmann::json{{"vertices", verts}, {"edge_count", poly.edge_count}, {"seed", poly.seed}};
}

void from_json(const nlohmann::json& j, Polygon& poly) {
  poly.vertices.clear();
  for (const auto& v : j.at("vertices")) poly.vertices.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
  poly.edge_count = j.value("edge_count", static_cast<int>(poly.vertices.size()));
  poly.seed = j.value("seed", std::uint64_t{0});
  if (poly.vertices.size() < 3) throw Error(ErrorCode::FormatError, "polygon needs at least 3 vertices");
}

}  // namespace meshforge
