#include "meshforge/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>

#include "meshforge/error.hpp"

namespace meshforge {

double TriMesh::element_area(std::size_t e) const {
  const auto& v = elements[e];
  return 0.5 * cross(vertices[v[1]] - vertices[v[0]], vertices[v[2]] - vertices[v[0]]);
}

Point2 TriMesh::element_centroid(std::size_t e) const {
  const auto& v = elements[e];
  const Point2 a = vertices[v[0]], b = vertices[v[1]], c = vertices[v[2]];
  return {(a.x + b.x + c.x) / 3.0, (a.y + b.y + c.y) / 3.0};
}

std::array<Point2, 3> TriMesh::element_points(std::size_t e) const {
  const auto& v = elements[e];
  return {vertices[v[0]], vertices[v[1]], vertices[v[2]]};
}

double TriMesh::total_area() const {
  double s = 0.0;
  for (std::size_t e = 0; e < elements.size(); ++e) s += element_area(e);
  return s;
}

double TriMesh::diameter() const {
  if (vertices.empty()) return 0.0;
  double x0 = vertices[0].x, x1 = x0, y0 = vertices[0].y, y1 = y0;
  for (const auto& p : vertices) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  }
  return std::hypot(x1 - x0, y1 - y0);
}

TriMesh triangulate_uniform(const Polygon& poly, double max_area, const MeshOptions& opts) {
  if (!(max_area > 0.0) || !std::isfinite(max_area)) throw Error(ErrorCode::InvalidArgument, "max_area must be > 0");
  return triangulate_with_bound(poly, [max_area](Point2) { return max_area; }, opts);
}

TriMesh refine_nonuniform(const Polygon& poly, const AreaBoundField& field, const MeshOptions& opts) {
  const TriMesh& coarse = field.coarse_mesh;
  if (field.bounds.size() != coarse.element_count()) {
    throw Error(ErrorCode::ShapeMismatch, "area bound count differs from coarse element count");
  }
  for (double b : field.bounds) {
    if (!(b > 0.0) || !std::isfinite(b)) throw Error(ErrorCode::InvalidArgument, "area bounds must be positive and finite");
  }
  const ElementLocator locator(coarse);
  return triangulate_with_bound(
      poly, [&](Point2 c) { return field.bounds[static_cast<std::size_t>(locator.locate(c))]; }, opts);
}

CountedMesh triangulate_uniform_to_count(const Polygon& poly, std::size_t target, double rel_tol,
                                         const MeshOptions& opts) {
  if (target == 0) throw Error(ErrorCode::InvalidArgument, "target element count must be positive");
  const double area = polygon_area(poly);
  // Quality meshes average about two thirds of the bound per element.
  double a = 1.5 * area / static_cast<double>(target);
  double lo = 0.0, hi = 0.0;  // bracketing area bounds (count above / below target)
  CountedMesh best;
  double best_err = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < 30; ++iter) {
    TriMesh m = triangulate_uniform(poly, a, opts);
    const double count = static_cast<double>(m.element_count());
    const double err = std::fabs(count - static_cast<double>(target)) / static_cast<double>(target);
    if (err < best_err) {
      best_err = err;
      best = {std::move(m), a};
    }
    if (err <= rel_tol) break;
    if (count > static_cast<double>(target)) lo = a; else hi = a;
    double next_a = a * count / static_cast<double>(target);
    if (lo > 0.0 && hi > 0.0 && (next_a <= lo || next_a >= hi)) next_a = std::sqrt(lo * hi);
    a = next_a;
  }
  return best;
}

TriMesh split_uniform(const TriMesh& mesh) {
  TriMesh out;
  out.vertices = mesh.vertices;
  std::map<std::pair<int, int>, int> mid;
  auto midpoint_of = [&](int a, int b) {
    const auto key = std::minmax(a, b);
    auto it = mid.find(key);
    if (it != mid.end()) return it->second;
    const int id = static_cast<int>(out.vertices.size());
    out.vertices.push_back(midpoint(mesh.vertices[a], mesh.vertices[b]));
    mid.emplace(key, id);
    return id;
  };
  out.elements.reserve(4 * mesh.element_count());
  for (const auto& v : mesh.elements) {
    const int m01 = midpoint_of(v[0], v[1]);
    const int m12 = midpoint_of(v[1], v[2]);
    const int m20 = midpoint_of(v[2], v[0]);
    out.elements.push_back({v[0], m01, m20});
    out.elements.push_back({m01, v[1], m12});
    out.elements.push_back({m20, m12, v[2]});
    out.elements.push_back({m01, m12, m20});
  }
  for (const auto& be : mesh.boundary_edges) {
    const int m = midpoint_of(be.a, be.b);
    out.boundary_edges.push_back({be.a, m, be.edge_id});
    out.boundary_edges.push_back({m, be.b, be.edge_id});
  }
  return out;
}

std::vector<Point2> element_centroids(const TriMesh& mesh) {
  std::vector<Point2> c(mesh.element_count());
  for (std::size_t e = 0; e < c.size(); ++e) c[e] = mesh.element_centroid(e);
  return c;
}

namespace {

bool contains_within(const TriMesh& mesh, std::size_t e, Point2 p, double tol) {
  const auto pts = mesh.element_points(e);
  for (int i = 0; i < 3; ++i) {
    const Point2 a = pts[i], b = pts[(i + 1) % 3];
    const Point2 ab = b - a;
    const double len = norm(ab);
    if (cross(ab, p - a) < -tol * len) return false;
  }
  return true;
}

}  // namespace

int locate_element(const TriMesh& mesh, Point2 p) {
  const double tol = 1e-9 * mesh.diameter();
  for (std::size_t e = 0; e < mesh.element_count(); ++e) {
    if (contains_within(mesh, e, p, tol)) return static_cast<int>(e);
  }
  throw Error(ErrorCode::OutsideDomain, "no element contains the query point");
}

ElementLocator::ElementLocator(const TriMesh& mesh) : mesh_(&mesh) {
  tol_ = 1e-9 * mesh.diameter();
  const std::size_t ne = mesh.element_count();
  if (ne == 0) return;
  double x1 = mesh.vertices[0].x, y1 = mesh.vertices[0].y;
  x0_ = x1;
  y0_ = y1;
  for (const auto& p : mesh.vertices) {
    x0_ = std::min(x0_, p.x);
    y0_ = std::min(y0_, p.y);
    x1 = std::max(x1, p.x);
    y1 = std::max(y1, p.y);
  }
  x0_ -= 2 * tol_;
  y0_ -= 2 * tol_;
  const double w = x1 - x0_ + 4 * tol_, h = y1 - y0_ + 4 * tol_;
  cell_ = std::max(std::sqrt(w * h / static_cast<double>(ne)), 1e-300);
  nx_ = std::max(1, static_cast<int>(std::ceil(w / cell_)));
  ny_ = std::max(1, static_cast<int>(std::ceil(h / cell_)));

  auto cell_range = [&](std::size_t e, int& i0, int& i1, int& j0, int& j1) {
    const auto pts = mesh.element_points(e);
    double bx0 = pts[0].x, bx1 = bx0, by0 = pts[0].y, by1 = by0;
    for (const auto& q : pts) {
      bx0 = std::min(bx0, q.x);
      bx1 = std::max(bx1, q.x);
      by0 = std::min(by0, q.y);
      by1 = std::max(by1, q.y);
    }
    i0 = std::clamp(static_cast<int>((bx0 - tol_ - x0_) / cell_), 0, nx_ - 1);
    i1 = std::clamp(static_cast<int>((bx1 + tol_ - x0_) / cell_), 0, nx_ - 1);
    j0 = std::clamp(static_cast<int>((by0 - tol_ - y0_) / cell_), 0, ny_ - 1);
    j1 = std::clamp(static_cast<int>((by1 + tol_ - y0_) / cell_), 0, ny_ - 1);
  };
  std::vector<int> counts(static_cast<std::size_t>(nx_) * ny_ + 1, 0);
  for (std::size_t e = 0; e < ne; ++e) {
    int i0, i1, j0, j1;
    cell_range(e, i0, i1, j0, j1);
    for (int j = j0; j <= j1; ++j)
      for (int i = i0; i <= i1; ++i) ++counts[static_cast<std::size_t>(j) * nx_ + i + 1];
  }
  for (std::size_t k = 1; k < counts.size(); ++k) counts[k] += counts[k - 1];
  cell_start_ = counts;
  cell_items_.resize(static_cast<std::size_t>(counts.back()));
  std::vector<int> fill(counts.begin(), counts.end() - 1);
  for (std::size_t e = 0; e < ne; ++e) {
    int i0, i1, j0, j1;
    cell_range(e, i0, i1, j0, j1);
    for (int j = j0; j <= j1; ++j)
      for (int i = i0; i <= i1; ++i) cell_items_[static_cast<std::size_t>(fill[static_cast<std::size_t>(j) * nx_ + i]++)] = static_cast<int>(e);
  }
}

bool ElementLocator::contains(int e, Point2 p) const {
  return contains_within(*mesh_, static_cast<std::size_t>(e), p, tol_);
}

std::optional<int> ElementLocator::try_locate(Point2 p) const {
  if (cell_start_.empty()) return std::nullopt;
  const int i = static_cast<int>(std::floor((p.x - x0_) / cell_));
  const int j = static_cast<int>(std::floor((p.y - y0_) / cell_));
  if (i < 0 || j < 0 || i >= nx_ || j >= ny_) return std::nullopt;
  const std::size_t c = static_cast<std::size_t>(j) * nx_ + i;
  // Items are stored in ascending element order within a cell.
  for (int k = cell_start_[c]; k < cell_start_[c + 1]; ++k) {
    if (contains(cell_items_[static_cast<std::size_t>(k)], p)) return cell_items_[static_cast<std::size_t>(k)];
  }
  return std::nullopt;
}

int ElementLocator::locate(Point2 p) const {
  if (auto e = try_locate(p)) return *e;
  throw Error(ErrorCode::OutsideDomain, "no element contains the query point");
}

std::array<double, 3> barycentric(const TriMesh& mesh, std::size_t e, Point2 p) {
  const auto pts = mesh.element_points(e);
  const double twice = cross(pts[1] - pts[0], pts[2] - pts[0]);
  const double l0 = cross(pts[1] - p, pts[2] - p) / twice;
  const double l1 = cross(pts[2] - p, pts[0] - p) / twice;
  return {l0, l1, 1.0 - l0 - l1};
}

double min_angle_deg(const TriMesh& mesh, std::size_t e) {
  const auto p = mesh.element_points(e);
  double best = 180.0;
  for (int i = 0; i < 3; ++i) {
    const Point2 u = p[(i + 1) % 3] - p[i];
    const Point2 v = p[(i + 2) % 3] - p[i];
    const double ang = std::atan2(std::fabs(cross(u, v)), dot(u, v)) * 180.0 / std::numbers::pi;
    best = std::min(best, ang);
  }
  return best;
}

MeshAudit audit_mesh(const TriMesh& mesh, const Polygon& poly, double min_angle) {
  MeshAudit audit;
  auto fail = [&](std::string msg) {
    audit.ok = false;
    if (audit.problems.size() < 20) audit.problems.push_back(std::move(msg));
  };
  const int nv = static_cast<int>(mesh.vertex_count());
  std::map<std::pair<int, int>, int> directed;
  for (std::size_t e = 0; e < mesh.element_count(); ++e) {
    const auto& v = mesh.elements[e];
    for (int k = 0; k < 3; ++k) {
      if (v[k] < 0 || v[k] >= nv) fail("element " + std::to_string(e) + " has an out-of-range vertex");
    }
    const double a = mesh.element_area(e);
    if (!(a > 0.0)) fail("element " + std::to_string(e) + " has non-positive area");
    audit.area_sum += a;
    const double ang = min_angle_deg(mesh, e);
    audit.min_angle_deg = std::min(audit.min_angle_deg, ang);
    if (ang < min_angle) fail("element " + std::to_string(e) + " has min angle " + std::to_string(ang));
    for (int k = 0; k < 3; ++k) {
      if (++directed[{v[k], v[(k + 1) % 3]}] > 1) fail("directed edge used twice");
    }
  }
  std::map<std::pair<int, int>, int> tagged;
  for (const auto& be : mesh.boundary_edges) tagged[{be.a, be.b}] = be.edge_id;
  std::size_t boundary_found = 0;
  for (const auto& [edge, count] : directed) {
    const bool has_twin = directed.count({edge.second, edge.first}) > 0;
    if (has_twin) continue;
    ++boundary_found;
    auto it = tagged.find(edge);
    if (it == tagged.end()) {
      fail("boundary edge without a polygon tag");
      continue;
    }
    const int id = it->second;
    if (id < 0 || id >= static_cast<int>(poly.size())) {
      fail("boundary tag out of range");
      continue;
    }
    const Point2 a = poly.vertices[static_cast<std::size_t>(id)], b = poly.vertex(static_cast<std::size_t>(id) + 1);
    const double scale = distance(a, b);
    for (int end : {edge.first, edge.second}) {
      const Point2 p = mesh.vertices[static_cast<std::size_t>(end)];
      if (std::fabs(cross(b - a, p - a)) / scale > 1e-8 * scale) fail("boundary vertex off its polygon edge");
    }
  }
  if (boundary_found != mesh.boundary_edges.size()) fail("boundary edge list does not match mesh boundary");
  const double pa = polygon_area(poly);
  if (std::fabs(audit.area_sum - pa) > 1e-8 * pa) fail("element areas do not sum to the polygon area");
  return audit;
}

void write_node(std::ostream& os, const TriMesh& mesh) {
  std::vector<int> marker(mesh.vertex_count(), 0);
  for (const auto& be : mesh.boundary_edges) marker[static_cast<std::size_t>(be.a)] = be.edge_id + 1;
  os << mesh.vertex_count() << " 2 0 1\n";
  char buf[128];
  for (std::size_t i = 0; i < mesh.vertex_count(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu %.17g %.17g %d\n", i + 1, mesh.vertices[i].x, mesh.vertices[i].y, marker[i]);
    os << buf;
  }
}

void write_ele(std::ostream& os, const TriMesh& mesh) {
  os << mesh.element_count() << " 3 0\n";
  for (std::size_t e = 0; e < mesh.element_count(); ++e) {
    const auto& v = mesh.elements[e];
    os << e + 1 << ' ' << v[0] + 1 << ' ' << v[1] + 1 << ' ' << v[2] + 1 << '\n';
  }
}

TriMesh read_node_ele(std::istream& node, std::istream& ele) {
  TriMesh mesh;
  std::size_t nv = 0, nele = 0;
  int dim = 0, nattr = 0, nmark = 0, per = 0;
  if (!(node >> nv >> dim >> nattr >> nmark) || dim != 2) throw Error(ErrorCode::FormatError, "bad .node header");
  mesh.vertices.resize(nv);
  std::vector<int> marker(nv, 0);
  for (std::size_t i = 0; i < nv; ++i) {
    std::size_t idx = 0;
    if (!(node >> idx >> mesh.vertices[i].x >> mesh.vertices[i].y)) throw Error(ErrorCode::FormatError, "truncated .node");
    double attr = 0.0;
    for (int a = 0; a < nattr; ++a) node >> attr;
    if (nmark > 0 && !(node >> marker[i])) throw Error(ErrorCode::FormatError, "missing .node marker");
    if (idx != i + 1) throw Error(ErrorCode::FormatError, ".node indices must be 1-based and consecutive");
  }
  if (!(ele >> nele >> per >> nattr) || per != 3) throw Error(ErrorCode::FormatError, "bad .ele header");
  mesh.elements.resize(nele);
  for (std::size_t e = 0; e < nele; ++e) {
    std::size_t idx = 0;
    int a = 0, b = 0, c = 0;
    if (!(ele >> idx >> a >> b >> c)) throw Error(ErrorCode::FormatError, "truncated .ele");
    if (idx != e + 1 || a < 1 || b < 1 || c < 1 || static_cast<std::size_t>(std::max({a, b, c})) > nv) {
      throw Error(ErrorCode::FormatError, "bad .ele record");
    }
    mesh.elements[e] = {a - 1, b - 1, c - 1};
  }
  // Boundary edges are the directed element edges without a twin; a CCW
  // boundary edge inherits the marker of its start vertex.
  std::map<std::pair<int, int>, bool> directed;
  for (const auto& v : mesh.elements)
    for (int k = 0; k < 3; ++k) directed[{v[k], v[(k + 1) % 3]}] = true;
  for (const auto& v : mesh.elements) {
    for (int k = 0; k < 3; ++k) {
      const int a = v[k], b = v[(k + 1) % 3];
      if (directed.count({b, a})) continue;
      mesh.boundary_edges.push_back({a, b, marker[static_cast<std::size_t>(a)] - 1});
    }
  }
  return mesh;
}

void save_mesh(const std::string& stem, const TriMesh& mesh) {
  std::ofstream node(stem + ".node"), ele(stem + ".ele");
  if (!node || !ele) throw Error(ErrorCode::InvalidArgument, "cannot write mesh files at " + stem);
  write_node(node, mesh);
  write_ele(ele, mesh);
}

TriMesh load_mesh(const std::string& stem) {
  std::ifstream node(stem + ".node"), ele(stem + ".ele");
  if (!node || !ele) throw Error(ErrorCode::FormatError, "cannot open mesh files at " + stem);
  return read_node_ele(node, ele);
}

}  // namespace meshforge
