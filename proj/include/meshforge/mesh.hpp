#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "meshforge/geometry.hpp"

namespace meshforge {

/// Boundary edge (a, b) oriented counter-clockwise around the domain,
/// tagged with the polygon edge it lies on.
struct BoundaryEdge {
  int a = 0;
  int b = 0;
  int edge_id = 0;

  friend bool operator==(const BoundaryEdge&, const BoundaryEdge&) = default;
};

struct TriMesh {
  std::vector<Point2> vertices;
  std::vector<std::array<int, 3>> elements;  // counter-clockwise
  std::vector<BoundaryEdge> boundary_edges;

  std::size_t element_count() const { return elements.size(); }
  std::size_t vertex_count() const { return vertices.size(); }

  double element_area(std::size_t e) const;
  Point2 element_centroid(std::size_t e) const;
  std::array<Point2, 3> element_points(std::size_t e) const;
  double total_area() const;
  double diameter() const;
};

/// Per-coarse-element upper bounds on element area. The coarse mesh is held
/// by value; a ~1000-element mesh is cheap to copy.
struct AreaBoundField {
  TriMesh coarse_mesh;
  std::vector<double> bounds;
};

struct MeshOptions {
  double min_angle_deg = 20.0;
  std::size_t max_elements = 1'000'000;
};

TriMesh triangulate_uniform(const Polygon& poly, double max_area, const MeshOptions& opts = {});
TriMesh refine_nonuniform(const Polygon& poly, const AreaBoundField& field, const MeshOptions& opts = {});

/// Quality mesh with an arbitrary area-bound function evaluated at the
/// centroid of each candidate element. Both operations above reduce to this.
TriMesh triangulate_with_bound(const Polygon& poly, const std::function<double(Point2)>& bound,
                               const MeshOptions& opts = {});

struct CountedMesh {
  TriMesh mesh;
  double max_area = 0.0;
};

/// Uniform mesh whose element count is within `rel_tol` of `target`,
/// found by iterating on the area bound (count scales like 1/max_area).
CountedMesh triangulate_uniform_to_count(const Polygon& poly, std::size_t target, double rel_tol,
                                         const MeshOptions& opts = {});

/// Splits every element into four through its edge midpoints.
TriMesh split_uniform(const TriMesh& mesh);

std::vector<Point2> element_centroids(const TriMesh& mesh);

/// Lowest-index element containing p (within 1e-9 * diameter). Exhaustive
/// scan; use ElementLocator for batches.
int locate_element(const TriMesh& mesh, Point2 p);

/// Bucketed point location with the same answer as locate_element.
class ElementLocator {
 public:
  explicit ElementLocator(const TriMesh& mesh);

  std::optional<int> try_locate(Point2 p) const;
  int locate(Point2 p) const;
  double tolerance() const { return tol_; }

 private:
  bool contains(int e, Point2 p) const;

  const TriMesh* mesh_;
  double tol_ = 0.0;
  double x0_ = 0.0, y0_ = 0.0, cell_ = 1.0;
  int nx_ = 1, ny_ = 1;
  std::vector<int> cell_start_;
  std::vector<int> cell_items_;
};

/// Barycentric coordinates of p with respect to element e.
std::array<double, 3> barycentric(const TriMesh& mesh, std::size_t e, Point2 p);

struct MeshAudit {
  bool ok = true;
  double min_angle_deg = 180.0;
  double area_sum = 0.0;
  std::vector<std::string> problems;
};

/// Positive orientation, conformity (interior edges shared twice, boundary
/// edges once and tagged), coverage of the polygon area, and minimum angle.
MeshAudit audit_mesh(const TriMesh& mesh, const Polygon& poly, double min_angle_deg = 20.0);

double min_angle_deg(const TriMesh& mesh, std::size_t e);

// .node / .ele text serialization (1-based indices, 17 significant digits).
// The vertex marker is 0 for interior vertices and (polygon edge id + 1) for
// boundary vertices, taking the edge that starts at a polygon corner.
void write_node(std::ostream& os, const TriMesh& mesh);
void write_ele(std::ostream& os, const TriMesh& mesh);
TriMesh read_node_ele(std::istream& node, std::istream& ele);
void save_mesh(const std::string& stem, const TriMesh& mesh);
TriMesh load_mesh(const std::string& stem);

}  // namespace meshforge
