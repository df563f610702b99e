// Constrained Delaunay triangulation of a simple polygon followed by
// Ruppert-style refinement: encroached subsegments are split first
// (concentric shells around polygon corners), then bad elements are split
// at their circumcenters, worst area-to-bound ratio first.

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <numbers>
#include <queue>

#include "meshforge/error.hpp"
#include "meshforge/mesh.hpp"
#include "meshforge/predicates.hpp"

namespace meshforge {

namespace {

using predicates::incircle;
using predicates::orient2d;

enum class VertexKind : std::uint8_t { Corner, Segment, Interior };

struct Tri {
  std::array<int, 3> v{};
  std::array<int, 3> nb{-1, -1, -1};   // neighbor across the edge opposite v[i]
  std::array<int, 3> seg{-1, -1, -1};  // polygon edge id when that edge is constrained
  std::uint32_t stamp = 0;
  bool alive = true;
};

struct Location {
  enum Kind { InTriangle, OnEdge, OnVertex, Blocked } kind = InTriangle;
  int tri = -1;
  int edge = -1;
};

class Refiner {
 public:
  Refiner(const Polygon& poly, std::function<double(Point2)> bound, const MeshOptions& opts)
      : bound_(std::move(bound)), opts_(opts) {
    const double s = std::sin(opts.min_angle_deg * std::numbers::pi / 180.0);
    skinny_limit_ = 4.0 * s * s;
    triangulate_polygon(poly);
  }

  void refine();
  TriMesh extract() const;

 private:
  static int next(int i) { return (i + 1) % 3; }
  static int prev(int i) { return (i + 2) % 3; }

  void triangulate_polygon(const Polygon& poly);
  int new_tri(std::array<int, 3> v, std::array<int, 3> nb, std::array<int, 3> seg);
  void touch(int t);
  void relink(int n, int old_t, int new_t);
  void flip(int t1, int i1);
  void legalize(int t, int i);
  void drain_legalize();
  int insert_in_triangle(int t, Point2 p, VertexKind kind, int seg);
  int insert_on_edge(int t, int i, Point2 p, VertexKind kind, int seg);
  Location walk(int start, Point2 p) const;
  void split_segment(int t, int i);
  bool encroaches(int t, int i, Point2 p) const;
  void collect_encroached_by(const Location& loc, Point2 p, std::vector<std::pair<int, int>>& out) const;
  void process_touched();
  void drain_encroached();
  bool is_bad(int t, double* key) const;
  Point2 circumcenter(int t) const;
  double area(int t) const;
  void check_cap() const;

  std::function<double(Point2)> bound_;
  MeshOptions opts_;
  double skinny_limit_ = 0.0;

  std::vector<Point2> pts_;
  std::vector<VertexKind> kind_;
  std::vector<Tri> tris_;
  std::size_t alive_count_ = 0;
  std::vector<std::pair<int, int>> flip_stack_;
  std::vector<int> touched_;

  struct BadEntry {
    double key;
    int tri;
    std::uint32_t stamp;
    bool operator<(const BadEntry& o) const {
      if (key != o.key) return key < o.key;
      return tri > o.tri;  // lowest index first among ties
    }
  };
  std::priority_queue<BadEntry> bad_;
  struct EncEntry {
    int tri;
    int edge;
    std::uint32_t stamp;
    bool forced = false;  // encroached by a rejected circumcenter, not by the apex
  };
  std::deque<EncEntry> enc_;
};

int Refiner::new_tri(std::array<int, 3> v, std::array<int, 3> nb, std::array<int, 3> seg) {
  Tri t;
  t.v = v;
  t.nb = nb;
  t.seg = seg;
  tris_.push_back(t);
  ++alive_count_;
  const int id = static_cast<int>(tris_.size()) - 1;
  touched_.push_back(id);
  return id;
}

void Refiner::touch(int t) {
  ++tris_[t].stamp;
  touched_.push_back(t);
}

void Refiner::relink(int n, int old_t, int new_t) {
  if (n < 0) return;
  for (int j = 0; j < 3; ++j) {
    if (tris_[n].nb[j] == old_t) {
      tris_[n].nb[j] = new_t;
      return;
    }
  }
}

double Refiner::area(int t) const {
  const auto& v = tris_[t].v;
  return 0.5 * cross(pts_[v[1]] - pts_[v[0]], pts_[v[2]] - pts_[v[0]]);
}

void Refiner::triangulate_polygon(const Polygon& poly) {
  const int n = static_cast<int>(poly.size());
  pts_ = poly.vertices;
  kind_.assign(n, VertexKind::Corner);

  // Ear clipping on the vertex loop.
  std::vector<int> loop(n);
  for (int i = 0; i < n; ++i) loop[i] = i;
  std::vector<std::array<int, 3>> ears;
  while (loop.size() > 3) {
    const int m = static_cast<int>(loop.size());
    bool clipped = false;
    for (int k = 0; k < m && !clipped; ++k) {
      const int a = loop[(k + m - 1) % m], b = loop[k], c = loop[(k + 1) % m];
      if (orient2d(pts_[a], pts_[b], pts_[c]) <= 0) continue;
      bool empty = true;
      for (int q : loop) {
        if (q == a || q == b || q == c) continue;
        if (orient2d(pts_[a], pts_[b], pts_[q]) >= 0 && orient2d(pts_[b], pts_[c], pts_[q]) >= 0 &&
            orient2d(pts_[c], pts_[a], pts_[q]) >= 0) {
          empty = false;
          break;
        }
      }
      if (!empty) continue;
      ears.push_back({a, b, c});
      loop.erase(loop.begin() + k);
      clipped = true;
    }
    if (!clipped) throw Error(ErrorCode::MeshingFailure, "polygon has no ear; is it simple and counter-clockwise?");
  }
  if (orient2d(pts_[loop[0]], pts_[loop[1]], pts_[loop[2]]) <= 0) {
    throw Error(ErrorCode::MeshingFailure, "degenerate final ear");
  }
  ears.push_back({loop[0], loop[1], loop[2]});

  std::map<std::pair<int, int>, std::pair<int, int>> edge_owner;
  for (const auto& e : ears) {
    const int t = new_tri(e, {-1, -1, -1}, {-1, -1, -1});
    for (int i = 0; i < 3; ++i) edge_owner[{e[next(i)], e[prev(i)]}] = {t, i};
  }
  for (auto& [key, owner] : edge_owner) {
    auto it = edge_owner.find({key.second, key.first});
    if (it != edge_owner.end()) {
      tris_[owner.first].nb[owner.second] = it->second.first;
    } else {
      // Boundary edge a -> b with b = a + 1 (mod n): polygon edge id a.
      const int a = key.first, b = key.second;
      if ((a + 1) % n != b) throw Error(ErrorCode::MeshingFailure, "ear clipping produced a non-polygon boundary edge");
      tris_[owner.first].seg[owner.second] = a;
    }
  }
  for (int t = 0; t < static_cast<int>(tris_.size()); ++t)
    for (int i = 0; i < 3; ++i) flip_stack_.push_back({t, i});
  drain_legalize();
  touched_.clear();
}

void Refiner::flip(int t1, int i1) {
  const int t2 = tris_[t1].nb[i1];
  Tri& A = tris_[t1];
  Tri& B = tris_[t2];
  int i2 = 0;
  while (B.nb[i2] != t1) ++i2;
  const int a = A.v[i1], b = A.v[next(i1)], c = A.v[prev(i1)];
  const int d = B.v[i2];
  const int nb_ca = A.nb[next(i1)], seg_ca = A.seg[next(i1)];
  const int nb_ab = A.nb[prev(i1)], seg_ab = A.seg[prev(i1)];
  const int nb_bd = B.nb[next(i2)], seg_bd = B.seg[next(i2)];
  const int nb_dc = B.nb[prev(i2)], seg_dc = B.seg[prev(i2)];

  A.v = {a, b, d};
  A.nb = {nb_bd, t2, nb_ab};
  A.seg = {seg_bd, -1, seg_ab};
  B.v = {a, d, c};
  B.nb = {nb_dc, nb_ca, t1};
  B.seg = {seg_dc, seg_ca, -1};
  relink(nb_bd, t2, t1);
  relink(nb_ca, t1, t2);
  touch(t1);
  touch(t2);
}

void Refiner::legalize(int t, int i) { flip_stack_.push_back({t, i}); }

void Refiner::drain_legalize() {
  while (!flip_stack_.empty()) {
    const auto [t, i] = flip_stack_.back();
    flip_stack_.pop_back();
    const Tri& T = tris_[t];
    if (!T.alive || T.seg[i] >= 0 || T.nb[i] < 0) continue;
    const Tri& U = tris_[T.nb[i]];
    int j = 0;
    while (U.nb[j] != t) ++j;
    const int d = U.v[j];
    if (incircle(pts_[T.v[0]], pts_[T.v[1]], pts_[T.v[2]], pts_[d]) <= 0) continue;
    const int u = T.nb[i];
    flip(t, i);
    // After the flip t = (a, b, d) and u = (a, d, c); re-examine the outer edges.
    flip_stack_.push_back({t, 0});
    flip_stack_.push_back({t, 2});
    flip_stack_.push_back({u, 0});
    flip_stack_.push_back({u, 1});
  }
}

int Refiner::insert_in_triangle(int t, Point2 p, VertexKind kind, int /*seg*/) {
  const int q = static_cast<int>(pts_.size());
  pts_.push_back(p);
  kind_.push_back(kind);
  const Tri old = tris_[t];
  const int a = old.v[0], b = old.v[1], c = old.v[2];
  const int tb = new_tri({q, c, a}, {old.nb[1], -1, t}, {old.seg[1], -1, -1});
  const int tc = new_tri({q, a, b}, {old.nb[2], t, tb}, {old.seg[2], -1, -1});
  tris_[tb].nb[1] = tc;
  Tri& ta = tris_[t];
  ta.v = {q, b, c};
  ta.nb = {old.nb[0], tb, tc};
  ta.seg = {old.seg[0], -1, -1};
  touch(t);
  relink(old.nb[1], t, tb);
  relink(old.nb[2], t, tc);
  legalize(t, 0);
  legalize(tb, 0);
  legalize(tc, 0);
  drain_legalize();
  return q;
}

int Refiner::insert_on_edge(int t, int i, Point2 p, VertexKind kind, int /*seg*/) {
  const int q = static_cast<int>(pts_.size());
  pts_.push_back(p);
  kind_.push_back(kind);
  const Tri old_t = tris_[t];
  const int a = old_t.v[i], b = old_t.v[next(i)], c = old_t.v[prev(i)];
  const int seg_bc = old_t.seg[i];
  const int u = old_t.nb[i];
  const int nb_ab = old_t.nb[prev(i)], seg_ab = old_t.seg[prev(i)];
  const int nb_ca = old_t.nb[next(i)], seg_ca = old_t.seg[next(i)];

  // t -> T1 = (a, b, q), new T2 = (a, q, c)
  const int t2 = new_tri({a, q, c}, {-1, nb_ca, t}, {seg_bc, seg_ca, -1});
  {
    Tri& t1 = tris_[t];
    t1.v = {a, b, q};
    t1.nb = {-1, t2, nb_ab};
    t1.seg = {seg_bc, -1, seg_ab};
    touch(t);
  }
  relink(nb_ca, t, t2);

  if (u >= 0) {
    const Tri old_u = tris_[u];
    int j = 0;
    while (old_u.nb[j] != t) ++j;
    const int d = old_u.v[j];
    const int nb_dc = old_u.nb[prev(j)], seg_dc = old_u.seg[prev(j)];
    const int nb_bd = old_u.nb[next(j)], seg_bd = old_u.seg[next(j)];
    // u -> U1 = (d, c, q), new U2 = (d, q, b)
    const int u2 = new_tri({d, q, b}, {t, nb_bd, u}, {seg_bc, seg_bd, -1});
    Tri& u1 = tris_[u];
    u1.v = {d, c, q};
    u1.nb = {t2, u2, nb_dc};
    u1.seg = {seg_bc, -1, seg_dc};
    touch(u);
    relink(nb_bd, u, u2);
    tris_[t].nb[0] = u2;
    tris_[t2].nb[0] = u;
    legalize(u, 2);
    legalize(u2, 1);
  }
  legalize(t, 2);
  legalize(t2, 1);
  drain_legalize();
  return q;
}

Location Refiner::walk(int start, Point2 p) const {
  const auto& s = tris_[start].v;
  const Point2 origin{(pts_[s[0]].x + pts_[s[1]].x + pts_[s[2]].x) / 3.0,
                      (pts_[s[0]].y + pts_[s[1]].y + pts_[s[2]].y) / 3.0};
  int t = start;
  const std::size_t cap = tris_.size() + 16;
  for (std::size_t step = 0; step < cap; ++step) {
    const Tri& T = tris_[t];
    std::array<int, 3> o{};
    for (int i = 0; i < 3; ++i) o[i] = orient2d(pts_[T.v[next(i)]], pts_[T.v[prev(i)]], p);
    if (o[0] >= 0 && o[1] >= 0 && o[2] >= 0) {
      const int zeros = (o[0] == 0) + (o[1] == 0) + (o[2] == 0);
      if (zeros >= 2) return {Location::OnVertex, t, -1};
      if (zeros == 1) return {Location::OnEdge, t, o[0] == 0 ? 0 : (o[1] == 0 ? 1 : 2)};
      return {Location::InTriangle, t, -1};
    }
    int exit = -1;
    for (int i = 0; i < 3 && exit < 0; ++i) {
      if (o[i] >= 0) continue;
      const int sa = orient2d(origin, p, pts_[T.v[next(i)]]);
      const int sb = orient2d(origin, p, pts_[T.v[prev(i)]]);
      if (sa * sb <= 0) exit = i;
    }
    if (exit < 0) {
      for (int i = 0; i < 3; ++i)
        if (o[i] < 0) {
          exit = i;
          break;
        }
    }
    if (T.seg[exit] >= 0 || T.nb[exit] < 0) return {Location::Blocked, t, exit};
    t = T.nb[exit];
  }
  throw Error(ErrorCode::MeshingFailure, "point location walk did not terminate");
}

bool Refiner::encroaches(int t, int i, Point2 p) const {
  const Tri& T = tris_[t];
  const Point2 a = pts_[T.v[next(i)]], b = pts_[T.v[prev(i)]];
  return dot(a - p, b - p) < 0.0;
}

void Refiner::split_segment(int t, int i) {
  const Tri& T = tris_[t];
  const int ia = T.v[next(i)], ib = T.v[prev(i)];
  const Point2 a = pts_[ia], b = pts_[ib];
  const double len = distance(a, b);
  Point2 m = midpoint(a, b);
  const bool a_corner = kind_[ia] == VertexKind::Corner;
  const bool b_corner = kind_[ib] == VertexKind::Corner;
  if (a_corner != b_corner) {
    // Concentric shells: split at a power-of-two distance from the corner.
    const double d = std::exp2(std::round(std::log2(0.5 * len)));
    const double s = d / len;
    m = a_corner ? a + s * (b - a) : b + s * (a - b);
  }
  insert_on_edge(t, i, m, VertexKind::Segment, T.seg[i]);
}

void Refiner::collect_encroached_by(const Location& loc, Point2 p, std::vector<std::pair<int, int>>& out) const {
  // Flood the cavity of p (elements whose circumcircle contains p, connected
  // across unconstrained edges) and test every constrained edge on it.
  std::vector<int> stack{loc.tri};
  std::vector<int> seen{loc.tri};
  while (!stack.empty()) {
    const int t = stack.back();
    stack.pop_back();
    const Tri& T = tris_[t];
    for (int i = 0; i < 3; ++i) {
      if (T.seg[i] >= 0) {
        if (encroaches(t, i, p)) out.push_back({t, i});
        continue;
      }
      const int n = T.nb[i];
      if (n < 0 || std::find(seen.begin(), seen.end(), n) != seen.end()) continue;
      const Tri& N = tris_[n];
      if (incircle(pts_[N.v[0]], pts_[N.v[1]], pts_[N.v[2]], p) > 0) {
        seen.push_back(n);
        stack.push_back(n);
      }
    }
  }
}

Point2 Refiner::circumcenter(int t) const {
  const auto& v = tris_[t].v;
  const Point2 a = pts_[v[0]];
  const Point2 b = pts_[v[1]] - a;
  const Point2 c = pts_[v[2]] - a;
  const double d = 2.0 * cross(b, c);
  const double bb = dot(b, b), cc = dot(c, c);
  return {a.x + (c.y * bb - b.y * cc) / d, a.y + (b.x * cc - c.x * bb) / d};
}

bool Refiner::is_bad(int t, double* key) const {
  const auto& v = tris_[t].v;
  const Point2 p0 = pts_[v[0]], p1 = pts_[v[1]], p2 = pts_[v[2]];
  const double A = area(t);
  const Point2 centroid{(p0.x + p1.x + p2.x) / 3.0, (p0.y + p1.y + p2.y) / 3.0};
  const double bound = bound_(centroid);
  *key = A / bound;
  if (A > bound) return true;
  const Point2 e0 = p2 - p1, e1 = p0 - p2, e2 = p1 - p0;
  const double l0 = dot(e0, e0), l1 = dot(e1, e1), l2 = dot(e2, e2);
  const double lmin = std::min({l0, l1, l2});
  // sin^2(min angle) = lmin / (4 R^2), R^2 = l0 l1 l2 / (16 A^2)
  const double sin2_times4 = lmin * 16.0 * A * A / (l0 * l1 * l2);
  return sin2_times4 < skinny_limit_;
}

void Refiner::process_touched() {
  std::vector<int> touched;
  touched.swap(touched_);
  std::sort(touched.begin(), touched.end());
  touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
  for (int t : touched) {
    const Tri& T = tris_[t];
    if (!T.alive) continue;
    for (int i = 0; i < 3; ++i) {
      if (T.seg[i] >= 0 && encroaches(t, i, pts_[T.v[i]])) enc_.push_back({t, i, T.stamp});
    }
    double key = 0.0;
    if (is_bad(t, &key)) bad_.push({key, t, T.stamp});
  }
}

void Refiner::drain_encroached() {
  process_touched();
  while (!enc_.empty()) {
    const EncEntry e = enc_.front();
    enc_.pop_front();
    const Tri& T = tris_[e.tri];
    if (!T.alive || T.stamp != e.stamp || T.seg[e.edge] < 0) continue;
    if (!e.forced && !encroaches(e.tri, e.edge, pts_[T.v[e.edge]])) continue;
    split_segment(e.tri, e.edge);
    check_cap();
    process_touched();
  }
}

void Refiner::check_cap() const {
  if (alive_count_ > opts_.max_elements) {
    throw Error(ErrorCode::MeshingFailure,
                "refinement exceeded the " + std::to_string(opts_.max_elements) + "-element safety cap");
  }
}

void Refiner::refine() {
  for (int t = 0; t < static_cast<int>(tris_.size()); ++t) touched_.push_back(t);
  drain_encroached();

  std::vector<std::pair<int, int>> encroached;
  while (!bad_.empty()) {
    const BadEntry e = bad_.top();
    bad_.pop();
    const Tri& T = tris_[e.tri];
    if (!T.alive || T.stamp != e.stamp) continue;
    double key = 0.0;
    if (!is_bad(e.tri, &key)) continue;

    const Point2 c = circumcenter(e.tri);
    const Location loc = walk(e.tri, c);
    if (loc.kind == Location::Blocked) {
      split_segment(loc.tri, loc.edge);
      touched_.push_back(e.tri);
      drain_encroached();
      check_cap();
      continue;
    }
    if (loc.kind == Location::OnVertex) continue;  // cannot improve without a duplicate vertex

    encroached.clear();
    collect_encroached_by(loc, c, encroached);
    if (!encroached.empty()) {
      for (const auto& [t, i] : encroached) enc_.push_back({t, i, tris_[t].stamp, true});
      touched_.push_back(e.tri);
      drain_encroached();
      check_cap();
      continue;
    }
    if (loc.kind == Location::OnEdge) {
      const Tri& L = tris_[loc.tri];
      const bool constrained = L.seg[loc.edge] >= 0;
      insert_on_edge(loc.tri, loc.edge, c, constrained ? VertexKind::Segment : VertexKind::Interior, L.seg[loc.edge]);
    } else {
      insert_in_triangle(loc.tri, c, VertexKind::Interior, -1);
    }
    drain_encroached();
    check_cap();
  }
}

TriMesh Refiner::extract() const {
  TriMesh mesh;
  mesh.vertices = pts_;
  mesh.elements.reserve(alive_count_);
  for (const Tri& T : tris_) {
    if (!T.alive) continue;
    mesh.elements.push_back(T.v);
  }
  for (const Tri& T : tris_) {
    if (!T.alive) continue;
    for (int k = 0; k < 3; ++k) {
      const int i = prev(k);  // edge (v[k], v[k+1]) is opposite v[k+2]
      if (T.seg[i] >= 0) mesh.boundary_edges.push_back({T.v[k], T.v[next(k)], T.seg[i]});
    }
  }
  return mesh;
}

}  // namespace

TriMesh triangulate_with_bound(const Polygon& poly, const std::function<double(Point2)>& bound,
                               const MeshOptions& opts) {
  if (poly.size() < 3 || !is_ccw(poly)) {
    throw Error(ErrorCode::InvalidArgument, "polygon must have >= 3 counter-clockwise vertices");
  }
  Refiner refiner(poly, bound, opts);
  refiner.refine();
  return refiner.extract();
}

}  // namespace meshforge
