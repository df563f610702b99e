#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "helpers.hpp"
#include "meshforge/error.hpp"
#include "meshforge/geometry.hpp"

using namespace meshforge;

namespace {

// Independent Floater evaluation via explicit angles (atan2), no shortcuts.
std::vector<double> floater_by_angles(const Polygon& poly, Point2 p) {
  const std::size_t n = poly.size();
  std::vector<double> alpha(n), w(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 a = poly.vertex(i) - p, b = poly.vertex(i + 1) - p;
    alpha[i] = std::atan2(a.x * b.y - a.y * b.x, a.x * b.x + a.y * b.y);
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double prev = alpha[(i + n - 1) % n];
    w[i] = (std::tan(prev / 2) + std::tan(alpha[i] / 2)) / distance(poly.vertex(i), p);
    sum += w[i];
  }
  for (auto& x : w) x /= sum;
  return w;
}

// Crossing-number oracle.
bool ray_cast(const Polygon& poly, Point2 p) {
  bool inside = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Point2 a = poly.vertices[i], b = poly.vertices[j];
    if ((a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x) inside = !inside;
  }
  return inside;
}

double polar(Point2 v) {
  double a = std::atan2(v.y, v.x);
  return a < 0 ? a + 2 * std::numbers::pi : a;
}

}  // namespace

TEST_CASE("generated polygons are deterministic per seed") {
  const Polygon a = generate_random_polygon(42, 8), b = generate_random_polygon(42, 8);
  CHECK(a.vertices == b.vertices);
  CHECK(a.edge_count == 8);
  CHECK(a.seed == 42);
  CHECK(generate_random_polygon(43, 8).vertices != a.vertices);
}

TEST_CASE("generated polygons satisfy the domain invariants") {
  for (int edges : {6, 7, 8}) {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      const Polygon p = generate_random_polygon(seed * 7919 + edges, edges);
      REQUIRE(p.size() == 8);
      CHECK(is_simple(p));
      CHECK(is_ccw(p));
      CHECK(polygon_area(p) > 0);
      CHECK(p.vertices[0].y == 0.0);
      CHECK(p.vertices[0].x > 0.0);
      // nominal corners: radius in [100, 200], strictly increasing polar angle
      for (int i = 0; i < edges; ++i) {
        const double r = norm(p.vertices[static_cast<std::size_t>(i)]);
        CHECK(r >= 100.0);
        CHECK(r <= 200.0);
        if (i > 0) CHECK(polar(p.vertices[static_cast<std::size_t>(i)]) > polar(p.vertices[static_cast<std::size_t>(i - 1)]));
      }
    }
  }
}

TEST_CASE("heptagon padding puts the eighth stored vertex at the centre of edge 7") {
  for (std::uint64_t seed : {1u, 2u, 99u, 12345u}) {
    const Polygon p = generate_random_polygon(seed, 7);
    const Point2 m = midpoint(p.vertices[6], p.vertices[0]);
    CHECK(p.vertices[7].x == doctest::Approx(m.x).epsilon(1e-15));
    CHECK(p.vertices[7].y == doctest::Approx(m.y).epsilon(1e-15));
  }
}

TEST_CASE("hexagon padding bisects the closing edge twice") {
  const Polygon p = generate_random_polygon(5, 6);
  const Point2 m6 = midpoint(p.vertices[5], p.vertices[0]);
  const Point2 m7 = midpoint(m6, p.vertices[0]);
  CHECK(p.vertices[6] == m6);
  CHECK(p.vertices[7] == m7);
}

TEST_CASE("generation rejects unsupported edge counts") {
  CHECK_THROWS_AS(generate_random_polygon(1, 5), Error);
  CHECK_THROWS_AS(generate_random_polygon(1, 9), Error);
}

TEST_CASE("polygon area") {
  CHECK(polygon_area(testing::square()) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(polygon_area(testing::regular_polygon(8)) == doctest::Approx(2.0 * std::sqrt(2.0)).epsilon(1e-14));
  CHECK(polygon_area(testing::regular_polygon(8)) == doctest::Approx(2.8284271247).epsilon(1e-10));
  Polygon rev = generate_random_polygon(3, 8);
  const double a = polygon_area(rev);
  std::reverse(rev.vertices.begin(), rev.vertices.end());
  CHECK(polygon_area(rev) == doctest::Approx(-a).epsilon(1e-14));
}

TEST_CASE("point in polygon") {
  const Polygon sq = testing::square();
  CHECK(point_in_polygon(sq, polygon_centroid(sq)));
  CHECK(point_in_polygon(sq, {1.0, 0.5}));  // boundary counts as inside
  const Polygon p = generate_random_polygon(11, 8);
  for (int k = 0; k < 16; ++k) {
    const double a = 2 * std::numbers::pi * k / 16;
    CHECK_FALSE(point_in_polygon(p, {300 * std::cos(a), 300 * std::sin(a)}));
  }
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-210, 210);
  int compared = 0;
  for (int i = 0; i < 10000; ++i) {
    const Point2 q{u(rng), u(rng)};
    if (distance_to_boundary(p, q) < 1e-6) continue;
    CHECK(point_in_polygon(p, q) == ray_cast(p, q));
    ++compared;
  }
  CHECK(compared > 9900);
}

TEST_CASE("mean value coordinates: regular octagon centroid gives equal weights") {
  const auto w = mean_value_coordinates(testing::regular_polygon(8, 150), {0, 0});
  REQUIRE(w.size() == 8);
  for (double x : w) CHECK(x == doctest::Approx(1.0 / 8).epsilon(1e-14));
}

TEST_CASE("mean value coordinates: partition of unity, linear precision, independent formula") {
  std::mt19937_64 rng(2024);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Polygon p = generate_random_polygon(s + 100, 6 + static_cast<int>(s % 3));
    const double diam = polygon_diameter(p);
    for (int k = 0; k < 50; ++k) {
      const Point2 q = testing::interior_point(p, rng);
      const auto w = mean_value_coordinates(p, q);
      double sum = 0;
      Point2 rec{0, 0};
      for (std::size_t i = 0; i < w.size(); ++i) {
        sum += w[i];
        rec = rec + w[i] * p.vertices[i];
      }
      CHECK(std::abs(sum - 1.0) < 1e-12);
      CHECK(distance(rec, q) < 1e-9 * diam);
      const auto oracle = floater_by_angles(p, q);
      for (std::size_t i = 0; i < w.size(); ++i) CHECK(w[i] == doctest::Approx(oracle[i]).epsilon(1e-9).scale(1.0));
    }
  }
}

TEST_CASE("mean value coordinates reject boundary points") {
  const Polygon sq = testing::square();
  CHECK_THROWS_AS(mean_value_coordinates(sq, {0.5, 0.0}), Error);
  CHECK_THROWS_AS(mean_value_coordinates(sq, {0.0, 0.0}), Error);
  try {
    mean_value_coordinates(sq, {1.0, 0.3});
    FAIL("expected PointOnBoundary");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::PointOnBoundary);
  }
}

TEST_CASE("mean value coordinates are invariant under rigid motions") {
  std::mt19937_64 rng(5);
  const Polygon p = generate_random_polygon(77, 8);
  Polygon moved = p;
  const double th = 0.7, c = std::cos(th), s = std::sin(th);
  auto move = [&](Point2 v) { return Point2{c * v.x - s * v.y + 31.0, s * v.x + c * v.y - 12.5}; };
  for (auto& v : moved.vertices) v = move(v);
  for (int k = 0; k < 100; ++k) {
    const Point2 q = testing::interior_point(p, rng);
    const auto a = mean_value_coordinates(p, q), b = mean_value_coordinates(moved, move(q));
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-10);
  }
}

TEST_CASE("polygon JSON round trip is exact") {
  const Polygon p = generate_random_polygon(9, 7);
  nlohmann::json j = p;
  CHECK(j.at("edge_count") == 7);
  const Polygon q = nlohmann::json::parse(j.dump()).get<Polygon>();
  CHECK(q.vertices == p.vertices);
  CHECK(q.edge_count == p.edge_count);
  CHECK(q.seed == p.seed);
}
