#include "meshforge/errest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace meshforge {

namespace {

std::size_t idx(int i) { return static_cast<std::size_t>(i); }

void require_same_mesh(const FemSolution& a, const FemSolution& b) {
  if (a.mesh.get() != b.mesh.get() &&
      (a.mesh->vertex_count() != b.mesh->vertex_count() || a.mesh->element_count() != b.mesh->element_count()))
    throw Error(ErrorCode::ShapeMismatch, "solutions live on different meshes");
  if (a.dof_per_node != b.dof_per_node || a.values.size() != b.values.size())
    throw Error(ErrorCode::ShapeMismatch, "solution shapes differ");
}

double energy_density(const ElementStrainStress& s) {
  return 0.5 * (s.strain[0] * s.stress[0] + s.strain[1] * s.stress[1] + s.strain[2] * s.stress[2]);
}

ElementErrorField recover(const MeshPtr& mesh, const std::vector<double>& density) {
  const TriMesh& m = *mesh;
  std::vector<double> sum(m.vertex_count(), 0.0);
  std::vector<int> count(m.vertex_count(), 0);
  for (std::size_t e = 0; e < m.element_count(); ++e)
    for (int v : m.elements[e]) {
      sum[idx(v)] += density[e];
      ++count[idx(v)];
    }
  ElementErrorField out{mesh, std::vector<double>(m.element_count())};
  for (std::size_t e = 0; e < m.element_count(); ++e) {
    double r = 0.0;
    for (int v : m.elements[e]) r += sum[idx(v)] / count[idx(v)];
    out.values[e] = std::abs(r / 3.0 - density[e]) * m.element_area(e);
  }
  return out;
}

std::vector<std::vector<int>> element_neighbours(const TriMesh& mesh) {
  std::map<std::pair<int, int>, int> edge_owner;
  std::vector<std::vector<int>> nb(mesh.element_count());
  for (std::size_t e = 0; e < mesh.element_count(); ++e)
    for (int k = 0; k < 3; ++k) {
      int a = mesh.elements[e][idx(k)], b = mesh.elements[e][idx((k + 1) % 3)];
      if (a > b) std::swap(a, b);
      auto [it, fresh] = edge_owner.emplace(std::make_pair(a, b), static_cast<int>(e));
      if (!fresh) {
        nb[e].push_back(it->second);
        nb[idx(it->second)].push_back(static_cast<int>(e));
      }
    }
  for (auto& n : nb) std::sort(n.begin(), n.end());
  return nb;
}

}  // namespace

FemSolution interpolate_solution(const FemSolution& sol, const MeshPtr& target) {
  const TriMesh& src = *sol.mesh;
  const ElementLocator locator(src);
  const int d = sol.dof_per_node;
  FemSolution out;
  out.mesh = target;
  out.dof_per_node = d;
  out.values.assign(target->vertex_count() * idx(d), 0.0);
  const std::size_t nv = target->vertex_count();
  bool outside = false;
#pragma omp parallel for schedule(static)
  for (std::size_t v = 0; v < nv; ++v) {
    const Point2 p = target->vertices[v];
    const auto e = locator.try_locate(p);
    if (!e) {
#pragma omp atomic write
      outside = true;
      continue;
    }
    const auto lam = barycentric(src, idx(*e), p);
    const auto& tri = src.elements[idx(*e)];
    for (int c = 0; c < d; ++c) {
      double s = 0.0;
      for (std::size_t k = 0; k < 3; ++k) s += lam[k] * sol.value(idx(tri[k]), c);
      out.values[v * idx(d) + idx(c)] = s;
    }
  }
  if (outside) throw Error(ErrorCode::OutsideDomain, "target vertex outside the source mesh");
  return out;
}

ElementErrorField l1_relative_error(const FemSolution& las_star, const FemSolution& has) {
  require_same_mesh(las_star, has);
  if (has.dof_per_node != 1) throw Error(ErrorCode::ShapeMismatch, "relative L1 error needs scalar fields");
  double umax = 0.0;
  for (double u : has.values) umax = std::max(umax, std::abs(u));
  if (umax == 0.0) throw Error(ErrorCode::DegenerateSolution, "reference solution is identically zero");
  const double guard = 1e-8 * umax;
  const TriMesh& m = *has.mesh;
  ElementErrorField out{has.mesh, std::vector<double>(m.element_count())};
  for (std::size_t e = 0; e < m.element_count(); ++e) {
    double s = 0.0;
    for (int v : m.elements[e]) {
      const double uh = has.values[idx(v)];
      s += std::abs(las_star.values[idx(v)] - uh) / (std::abs(uh) + guard);
    }
    out.values[e] = s / 3.0;
  }
  return out;
}

ElementErrorField energy_error(const FemSolution& las_star, const FemSolution& has, const ElasticityProblem& problem) {
  require_same_mesh(las_star, has);
  // Strain is linear in u, so work on the nodal difference: subtracting the
  // two strain fields instead cancels badly where the difference is small.
  FemSolution diff = las_star;
  for (std::size_t i = 0; i < diff.values.size(); ++i) diff.values[i] -= has.values[i];
  const auto d = element_strain_stress(diff, problem);
  const TriMesh& m = *has.mesh;
  ElementErrorField out{has.mesh, std::vector<double>(m.element_count())};
  for (std::size_t e = 0; e < m.element_count(); ++e) {
    double s = 0.0;
    for (std::size_t k = 0; k < 3; ++k) s += d[e].strain[k] * d[e].stress[k];
    out.values[e] = std::max(0.0, s) * m.element_area(e);
  }
  return out;
}

double area_weighted_mean(const ElementErrorField& field) {
  double num = 0.0, den = 0.0;
  for (std::size_t e = 0; e < field.values.size(); ++e) {
    const double a = field.mesh->element_area(e);
    num += field.values[e] * a;
    den += a;
  }
  return den > 0.0 ? num / den : 0.0;
}

ElementErrorField project_error_to_coarse(const ElementErrorField& fine, const MeshPtr& coarse) {
  const TriMesh& f = *fine.mesh;
  const TriMesh& c = *coarse;
  const ElementLocator locator(c);
  std::vector<int> owner(f.element_count());
#pragma omp parallel for schedule(static)
  for (std::size_t e = 0; e < f.element_count(); ++e) owner[e] = locator.locate(f.element_centroid(e));

  std::vector<double> num(c.element_count(), 0.0), den(c.element_count(), 0.0);
  for (std::size_t e = 0; e < f.element_count(); ++e) {
    const double a = f.element_area(e);
    num[idx(owner[e])] += fine.values[e] * a;
    den[idx(owner[e])] += a;
  }
  ElementErrorField out{coarse, std::vector<double>(c.element_count(), 0.0)};
  std::vector<char> known(c.element_count(), 0);
  std::size_t missing = 0;
  for (std::size_t i = 0; i < c.element_count(); ++i) {
    if (den[i] > 0.0) {
      out.values[i] = num[i] / den[i];
      known[i] = 1;
    } else {
      ++missing;
    }
  }
  if (missing == 0) return out;
  const auto nb = element_neighbours(c);
  while (missing > 0) {
    std::vector<std::size_t> filled;
    for (std::size_t i = 0; i < c.element_count(); ++i) {
      if (known[i]) continue;
      double s = 0.0;
      int n = 0;
      for (int j : nb[i])
        if (known[idx(j)]) {
          s += out.values[idx(j)];
          ++n;
        }
      if (n > 0) {
        out.values[i] = s / n;
        filled.push_back(i);
      }
    }
    if (filled.empty()) break;  // disconnected: leave zero
    for (std::size_t i : filled) known[i] = 1;
    missing -= filled.size();
  }
  return out;
}

ElementErrorField zz_error(const FemSolution& sol, const ElasticityProblem& problem) {
  const auto ss = element_strain_stress(sol, problem);
  std::vector<double> density(ss.size());
  for (std::size_t e = 0; e < ss.size(); ++e) density[e] = energy_density(ss[e]);
  return recover(sol.mesh, density);
}

ElementErrorField zz_error(const FemSolution& sol) {
  if (sol.dof_per_node != 1) throw Error(ErrorCode::ShapeMismatch, "scalar recovery needs a scalar field");
  const TriMesh& m = *sol.mesh;
  std::vector<double> density(m.element_count());
  for (std::size_t e = 0; e < m.element_count(); ++e) {
    const auto p = m.element_points(e);
    const auto& t = m.elements[e];
    const double twice = cross(p[1] - p[0], p[2] - p[0]);
    double gx = 0.0, gy = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
      const Point2& pj = p[(i + 1) % 3];
      const Point2& pk = p[(i + 2) % 3];
      const double u = sol.values[idx(t[i])];
      gx += u * (pj.y - pk.y);
      gy += u * (pk.x - pj.x);
    }
    gx /= twice;
    gy /= twice;
    density[e] = 0.5 * (gx * gx + gy * gy);
  }
  return recover(sol.mesh, density);
}

AreaBoundField target_area_field(const ElementErrorField& error, double K, double alpha) {
  if (!(K > 0.0)) throw Error(ErrorCode::InvalidArgument, "K must be positive");
  const TriMesh& m = *error.mesh;
  const double floor = 1e-4 * area_weighted_mean(error);
  AreaBoundField field{m, std::vector<double>(m.element_count())};
  for (std::size_t i = 0; i < m.element_count(); ++i) {
    const double e = std::max(error.values[i], floor);
    const double cap = 4.0 * m.element_area(i);
    field.bounds[i] = e > 0.0 ? std::min(K / std::pow(e, alpha), cap) : cap;
  }
  return field;
}

Calibration calibrate_scale(const Polygon& poly, const std::function<AreaBoundField(double)>& bounds_for, double K0,
                            std::size_t target, const CalibrationOptions& opts) {
  if (!(K0 > 0.0) || !std::isfinite(K0)) throw Error(ErrorCode::CalibrationFailure, "initial scale is not positive");
  const double t = static_cast<double>(target);
  auto rel = [t](std::size_t n) { return std::abs(static_cast<double>(n) - t) / t; };

  Calibration best;
  double best_rel = INFINITY;
  int meshings = 0;
  auto trial = [&](double K) {
    AreaBoundField field = bounds_for(K);
    TriMesh mesh = refine_nonuniform(poly, field, opts.mesh);
    ++meshings;
    const std::size_t n = mesh.element_count();
    const double r = rel(n);
    if (r < best_rel) {
      best_rel = r;
      best.K = K;
      best.mesh = std::move(mesh);
      best.field = std::move(field);
    }
    return n;
  };

  // Element count falls as K grows. Bracket by doubling/halving, then bisect log K.
  double lo = K0, hi = K0;  // count(lo) > target > count(hi) once bracketed
  std::size_t n = trial(K0);
  bool bracketed = false;
  if (rel(n) > opts.rel_tol) {
    const bool too_many = n > target;
    double K = K0;
    for (int step = 0; step < 30; ++step) {
      K = too_many ? K * 2.0 : K / 2.0;
      const std::size_t m = trial(K);
      if (rel(m) <= opts.rel_tol) break;
      if ((m > target) != too_many) {
        lo = too_many ? K / 2.0 : K;
        hi = too_many ? K : K * 2.0;
        bracketed = true;
        break;
      }
    }
  }
  if (bracketed) {
    for (int step = 0; step < opts.max_bisections && best_rel > opts.rel_tol; ++step) {
      const double mid = std::sqrt(lo * hi);
      const std::size_t m = trial(mid);
      if (m > target)
        lo = mid;
      else
        hi = mid;
    }
  }
  best.meshings = meshings;
  best.within_tolerance = best_rel <= opts.rel_tol;
  if (best_rel > opts.hard_tol) {
    std::ostringstream msg;
    msg << "could not reach " << target << " elements: closest was " << best.mesh.element_count();
    throw Error(ErrorCode::CalibrationFailure, msg.str());
  }
  return best;
}

Calibration calibrate_K(const Polygon& poly, const ElementErrorField& error, std::size_t target_elements, double alpha,
                        const CalibrationOptions& opts) {
  double weighted = 0.0;
  for (std::size_t i = 0; i < error.values.size(); ++i) weighted += error.values[i] * error.mesh->element_area(i);
  if (!(weighted > 0.0)) throw Error(ErrorCode::CalibrationFailure, "error field is identically zero");
  const double K0 = weighted / static_cast<double>(target_elements);
  return calibrate_scale(
      poly, [&](double K) { return target_area_field(error, K, alpha); }, K0, target_elements, opts);
}

void write_error(std::ostream& os, const ElementErrorField& field) {
  os << field.values.size() << '\n';
  char buf[32];
  for (double v : field.values) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << buf << '\n';
  }
}

ElementErrorField read_error(std::istream& is, const MeshPtr& mesh) {
  std::size_t n = 0;
  if (!(is >> n)) throw Error(ErrorCode::FormatError, "bad .err header");
  if (mesh && n != mesh->element_count())
    throw Error(ErrorCode::FormatError, "error field length does not match the mesh");
  ElementErrorField f{mesh, std::vector<double>(n)};
  for (double& v : f.values)
    if (!(is >> v)) throw Error(ErrorCode::FormatError, "truncated .err file");
  return f;
}

}  // namespace meshforge
