#include "meshforge/fem.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace meshforge {

namespace {

using kernels::CsrMatrix;

std::size_t idx(int i) { return static_cast<std::size_t>(i); }

// Per-element dense contributions; ndof = 3 * dof_per_node, node-major.
struct LocalSystems {
  int dof_per_node = 1;
  std::vector<double> k;  // element_count * ndof * ndof
  std::vector<double> f;  // element_count * ndof
};

struct P1Gradients {
  double area;
  std::array<double, 3> b;  // d(phi_i)/dx * 2A
  std::array<double, 3> c;  // d(phi_i)/dy * 2A
};

P1Gradients gradients(const TriMesh& mesh, std::size_t e) {
  const auto p = mesh.element_points(e);
  P1Gradients g{};
  for (int i = 0; i < 3; ++i) {
    const Point2& pj = p[static_cast<std::size_t>((i + 1) % 3)];
    const Point2& pk = p[static_cast<std::size_t>((i + 2) % 3)];
    g.b[static_cast<std::size_t>(i)] = pj.y - pk.y;
    g.c[static_cast<std::size_t>(i)] = pk.x - pj.x;
  }
  g.area = 0.5 * cross(p[1] - p[0], p[2] - p[0]);
  return g;
}

// Strain-displacement matrix B (3 x 6), row-major, for plane problems.
std::array<double, 18> strain_matrix(const P1Gradients& g) {
  std::array<double, 18> bm{};
  const double inv = 1.0 / (2.0 * g.area);
  for (std::size_t i = 0; i < 3; ++i) {
    bm[0 * 6 + 2 * i] = g.b[i] * inv;
    bm[1 * 6 + 2 * i + 1] = g.c[i] * inv;
    bm[2 * 6 + 2 * i] = g.c[i] * inv;
    bm[2 * 6 + 2 * i + 1] = g.b[i] * inv;
  }
  return bm;
}

std::vector<std::vector<int>> node_elements(const TriMesh& mesh) {
  std::vector<std::vector<int>> adj(mesh.vertex_count());
  for (std::size_t e = 0; e < mesh.element_count(); ++e)
    for (int v : mesh.elements[e]) adj[idx(v)].push_back(static_cast<int>(e));
  return adj;
}

// Row-gather assembly with Dirichlet elimination. Each row sums its element
// contributions in increasing element order, the same order a sequential
// element scatter would use, so the result is independent of threading.
LinearSystem gather(const TriMesh& mesh, const LocalSystems& loc, std::span<const double> nodal_load,
                    const std::vector<char>& fixed, std::span<const double> prescribed) {
  const int d = loc.dof_per_node;
  const int ndof = 3 * d;
  const std::size_t total = mesh.vertex_count() * static_cast<std::size_t>(d);
  const auto adj = node_elements(mesh);

  LinearSystem sys;
  std::vector<int> reduced(total, -1);
  for (std::size_t g = 0; g < total; ++g)
    if (!fixed[g]) {
      reduced[g] = static_cast<int>(sys.free_dofs.size());
      sys.free_dofs.push_back(static_cast<int>(g));
    }
  const int n = static_cast<int>(sys.free_dofs.size());

  std::vector<std::vector<std::pair<int, double>>> rows(idx(n));
  sys.rhs.assign(idx(n), 0.0);

#pragma omp parallel for schedule(dynamic, 64)
  for (int r = 0; r < n; ++r) {
    const int g = sys.free_dofs[idx(r)];
    const int node = g / d;
    const int comp = g % d;
    std::vector<std::pair<int, double>> entries;  // (global col, value), kept sorted
    double f = nodal_load.empty() ? 0.0 : nodal_load[idx(g)];
    for (int e : adj[idx(node)]) {
      const auto& tri = mesh.elements[idx(e)];
      int li = 0;
      while (tri[idx(li)] != node) ++li;
      const int lr = li * d + comp;
      const double* ke = loc.k.data() + idx(e) * idx(ndof * ndof) + idx(lr * ndof);
      f += loc.f[idx(e) * idx(ndof) + idx(lr)];
      for (int lj = 0; lj < 3; ++lj)
        for (int cc = 0; cc < d; ++cc) {
          const int col = tri[idx(lj)] * d + cc;
          const double v = ke[lj * d + cc];
          auto it = std::lower_bound(entries.begin(), entries.end(), col,
                                     [](const auto& a, int c) { return a.first < c; });
          if (it != entries.end() && it->first == col)
            it->second += v;
          else
            entries.insert(it, {col, v});
        }
    }
    auto& row = rows[idx(r)];
    row.reserve(entries.size());
    for (const auto& [col, v] : entries) {
      if (fixed[idx(col)])
        f -= v * prescribed[idx(col)];
      else
        row.emplace_back(reduced[idx(col)], v);
    }
    sys.rhs[idx(r)] = f;
  }

  CsrMatrix& m = sys.matrix;
  m.rows = m.cols = n;
  m.row_ptr.assign(idx(n) + 1, 0);
  for (int r = 0; r < n; ++r) m.row_ptr[idx(r) + 1] = m.row_ptr[idx(r)] + static_cast<int>(rows[idx(r)].size());
  m.col.resize(idx(m.row_ptr.back()));
  m.val.resize(idx(m.row_ptr.back()));
  for (int r = 0; r < n; ++r) {
    std::size_t k = idx(m.row_ptr[idx(r)]);
    for (const auto& [c, v] : rows[idx(r)]) {
      m.col[k] = c;
      m.val[k] = v;
      ++k;
    }
  }
  return sys;
}

LocalSystems poisson_locals(const TriMesh& mesh, double source) {
  LocalSystems loc;
  loc.dof_per_node = 1;
  const std::size_t ne = mesh.element_count();
  loc.k.resize(ne * 9);
  loc.f.resize(ne * 3);
#pragma omp parallel for schedule(static)
  for (std::size_t e = 0; e < ne; ++e) {
    const P1Gradients g = gradients(mesh, e);
    const double s = 1.0 / (4.0 * g.area);
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 3; ++j) loc.k[e * 9 + i * 3 + j] = (g.b[i] * g.b[j] + g.c[i] * g.c[j]) * s;
      loc.f[e * 3 + i] = source * g.area / 3.0;
    }
  }
  return loc;
}

std::vector<char> boundary_vertex_mask(const TriMesh& mesh) {
  std::vector<char> mask(mesh.vertex_count(), 0);
  for (const auto& be : mesh.boundary_edges) mask[idx(be.a)] = mask[idx(be.b)] = 1;
  return mask;
}

void check_elasticity(const ElasticityProblem& problem) {
  const std::size_t edges = problem.polygon.vertices.size();
  if (problem.bc_per_edge.size() != edges)
    throw Error(ErrorCode::InvalidArgument, "boundary condition list must cover every polygon edge");
  if (std::none_of(problem.bc_per_edge.begin(), problem.bc_per_edge.end(),
                   [](BoundaryCondition b) { return b == BoundaryCondition::Fixed; }))
    throw Error(ErrorCode::SingularSystem, "no fixed edge: rigid-body modes are unconstrained");
}

BoundaryCondition edge_condition(const ElasticityProblem& problem, int edge_id) {
  if (edge_id < 0 || idx(edge_id) >= problem.bc_per_edge.size()) return BoundaryCondition::Free;
  return problem.bc_per_edge[idx(edge_id)];
}

// Pressure p on a CCW boundary edge a->b: t = -p n with outward n = (dy, -dx) / L.
Point2 pressure_traction_times_length(const Point2& a, const Point2& b, double p) {
  const Point2 d = b - a;
  return {-p * d.y, p * d.x};
}

std::vector<double> elasticity_loads(const ElasticityProblem& problem, const TriMesh& mesh) {
  std::vector<double> load(2 * mesh.vertex_count(), 0.0);
  for (const auto& be : mesh.boundary_edges) {
    if (edge_condition(problem, be.edge_id) != BoundaryCondition::Loaded) continue;
    const Point2 tl =
        pressure_traction_times_length(mesh.vertices[idx(be.a)], mesh.vertices[idx(be.b)], problem.traction_amplitude);
    for (int v : {be.a, be.b}) {
      load[2 * idx(v)] += 0.5 * tl.x;
      load[2 * idx(v) + 1] += 0.5 * tl.y;
    }
  }
  return load;
}

std::vector<char> elasticity_fixed(const ElasticityProblem& problem, const TriMesh& mesh) {
  std::vector<char> fixed(2 * mesh.vertex_count(), 0);
  for (const auto& be : mesh.boundary_edges) {
    if (edge_condition(problem, be.edge_id) != BoundaryCondition::Fixed) continue;
    for (int v : {be.a, be.b}) fixed[2 * idx(v)] = fixed[2 * idx(v) + 1] = 1;
  }
  return fixed;
}

FemSolution expand(const MeshPtr& mesh, int d, const LinearSystem& sys, std::span<const double> reduced,
                   std::span<const double> prescribed) {
  FemSolution sol;
  sol.mesh = mesh;
  sol.dof_per_node = d;
  sol.values.assign(prescribed.begin(), prescribed.end());
  for (std::size_t r = 0; r < sys.free_dofs.size(); ++r) sol.values[idx(sys.free_dofs[r])] = reduced[r];
  return sol;
}

double residual_norm(const CsrMatrix& k, std::span<const double> x, std::span<const double> b) {
  std::vector<double> r(b.size());
  kernels::spmv(k, x, r);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = b[i] - r[i];
  return std::sqrt(kernels::dot(r, r));
}

std::vector<double> cholesky(const CsrMatrix& k, std::span<const double> b) {
  using SpMat = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
  // Symmetric input, so the CSR arrays read as CSC describe the same matrix.
  Eigen::Map<const SpMat> a(k.rows, k.cols, static_cast<int>(k.nnz()), k.row_ptr.data(), k.col.data(),
                            k.val.data());
  Eigen::SimplicialLDLT<SpMat, Eigen::Lower> ldlt;
  ldlt.compute(a);
  if (ldlt.info() != Eigen::Success) throw Error(ErrorCode::SolverFailure, "sparse LDLT factorization failed");
  if ((ldlt.vectorD().array() <= 0.0).any())
    throw Error(ErrorCode::SolverFailure, "stiffness matrix is not positive definite");
  Eigen::Map<const Eigen::VectorXd> rhs(b.data(), static_cast<Eigen::Index>(b.size()));
  Eigen::VectorXd x = ldlt.solve(rhs);
  return {x.data(), x.data() + x.size()};
}

}  // namespace

std::vector<double> pcg(const CsrMatrix& k, std::span<const double> b, double rel_tol, int max_iter,
                        SolveReport* report) {
  const std::size_t n = b.size();
  std::vector<double> x(n, 0.0), r(b.begin(), b.end()), z(n), p(n), q(n), inv_diag(n, 1.0);
  for (int i = 0; i < k.rows; ++i)
    for (int j = k.row_ptr[idx(i)]; j < k.row_ptr[idx(i) + 1]; ++j)
      if (k.col[idx(j)] == i) {
        if (!(k.val[idx(j)] > 0.0)) throw Error(ErrorCode::SolverFailure, "non-positive diagonal entry");
        inv_diag[idx(i)] = 1.0 / k.val[idx(j)];
      }
  const double bnorm = std::sqrt(kernels::dot(b, b));
  if (report) *report = SolveReport{0, 0.0, n};
  if (bnorm == 0.0) return x;
  const double target = 0.5 * rel_tol * bnorm;

  for (std::size_t i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
  p = z;
  double rz = kernels::dot(r, z);
  int it = 0;
  double res = 1.0;
  while (true) {
    if (std::sqrt(kernels::dot(r, r)) <= target) {
      // The recursive residual drifts from b - Kx; restart from the true one.
      kernels::spmv(k, x, q);
      for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - q[i];
      res = std::sqrt(kernels::dot(r, r)) / bnorm;
      if (res <= rel_tol || it >= max_iter) break;
      for (std::size_t i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
      p = z;
      rz = kernels::dot(r, z);
    }
    if (it >= max_iter) {
      res = residual_norm(k, x, b) / bnorm;
      break;
    }
    kernels::spmv(k, p, q);
    const double pq = kernels::dot(p, q);
    if (!(pq > 0.0)) throw Error(ErrorCode::SolverFailure, "conjugate gradients broke down (matrix not SPD)");
    const double alpha = rz / pq;
    kernels::axpy(alpha, p, x);
    kernels::axpy(-alpha, q, r);
    for (std::size_t i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
    const double rz_new = kernels::dot(r, z);
    kernels::xpby(z, rz_new / rz, p);
    rz = rz_new;
    ++it;
  }
  if (report) *report = SolveReport{it, res, n};
  if (!(res <= rel_tol)) {
    std::ostringstream msg;
    msg << "conjugate gradients stalled after " << it << " iterations, relative residual " << res;
    throw Error(ErrorCode::SolverFailure, msg.str());
  }
  return x;
}

std::vector<double> solve_spd(const CsrMatrix& k, std::span<const double> b, const SolverOptions& opts,
                              SolveReport* report) {
  const std::size_t n = b.size();
  if (n == 0) {
    if (report) *report = SolveReport{};
    return {};
  }
  const int max_iter = static_cast<int>(std::min<std::size_t>(20 * n, 1u << 30));
  if (opts.kind == LinearSolver::Pcg) return pcg(k, b, opts.rel_tol, max_iter, report);

  const double bnorm = std::sqrt(kernels::dot(b, b));
  if (bnorm == 0.0) {
    if (report) *report = SolveReport{0, 0.0, n};
    return std::vector<double>(n, 0.0);
  }
  std::vector<double> x;
  try {
    x = cholesky(k, b);
  } catch (const Error&) {
    if (opts.kind == LinearSolver::Cholesky) throw;
    return pcg(k, b, opts.rel_tol, max_iter, report);
  }
  double res = residual_norm(k, x, b) / bnorm;
  if (!(res <= opts.rel_tol)) {
    // One step of iterative refinement with PCG on the residual equation.
    std::vector<double> r(n);
    kernels::spmv(k, x, r);
    for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - r[i];
    const double rn = std::sqrt(kernels::dot(r, r));
    const auto dx = pcg(k, r, std::max(1e-14, 0.5 * opts.rel_tol * bnorm / rn), max_iter, nullptr);
    kernels::axpy(1.0, dx, x);
    res = residual_norm(k, x, b) / bnorm;
    if (!(res <= opts.rel_tol)) throw Error(ErrorCode::SolverFailure, "direct solve missed the residual tolerance");
  }
  if (report) *report = SolveReport{1, res, n};
  return x;
}

LinearSystem assemble_poisson(const TriMesh& mesh, double source, const std::function<double(Point2)>& dirichlet) {
  const auto fixed = boundary_vertex_mask(mesh);
  std::vector<double> g(mesh.vertex_count(), 0.0);
  for (std::size_t v = 0; v < g.size(); ++v)
    if (fixed[v]) g[v] = dirichlet(mesh.vertices[v]);
  return gather(mesh, poisson_locals(mesh, source), {}, fixed, g);
}

FemSolution solve_poisson_dirichlet(const MeshPtr& mesh, double source, const std::function<double(Point2)>& dirichlet,
                                    const SolverOptions& opts, SolveReport* report) {
  if (mesh->boundary_edges.empty()) throw Error(ErrorCode::SingularSystem, "mesh has no boundary vertices");
  const auto fixed = boundary_vertex_mask(*mesh);
  std::vector<double> g(mesh->vertex_count(), 0.0);
  for (std::size_t v = 0; v < g.size(); ++v)
    if (fixed[v]) g[v] = dirichlet(mesh->vertices[v]);
  const LinearSystem sys = gather(*mesh, poisson_locals(*mesh, source), {}, fixed, g);
  const auto x = solve_spd(sys.matrix, sys.rhs, opts, report);
  return expand(mesh, 1, sys, x, g);
}

FemSolution solve_poisson(const PoissonProblem& problem, const MeshPtr& mesh, const SolverOptions& opts,
                          SolveReport* report) {
  const double value = problem.dirichlet_value;
  return solve_poisson_dirichlet(
      mesh, problem.source, [value](Point2) { return value; }, opts, report);
}

std::array<double, 9> plane_stress_matrix(double youngs_modulus, double poisson_ratio) {
  const double s = youngs_modulus / (1.0 - poisson_ratio * poisson_ratio);
  return {s, s * poisson_ratio, 0.0, s * poisson_ratio, s, 0.0, 0.0, 0.0, s * 0.5 * (1.0 - poisson_ratio)};
}

namespace {

LocalSystems elasticity_locals(const ElasticityProblem& problem, const TriMesh& mesh) {
  LocalSystems loc;
  loc.dof_per_node = 2;
  const std::size_t ne = mesh.element_count();
  loc.k.assign(ne * 36, 0.0);
  loc.f.assign(ne * 6, 0.0);
  const auto dm = plane_stress_matrix(problem.youngs_modulus, problem.poisson_ratio);
  const double fy = -problem.density * problem.gravity;
#pragma omp parallel for schedule(static)
  for (std::size_t e = 0; e < ne; ++e) {
    const P1Gradients g = gradients(mesh, e);
    const auto bm = strain_matrix(g);
    std::array<double, 18> db{};  // D * B
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 6; ++j) {
        double s = 0.0;
        for (std::size_t m = 0; m < 3; ++m) s += dm[i * 3 + m] * bm[m * 6 + j];
        db[i * 6 + j] = s;
      }
    double* ke = loc.k.data() + e * 36;
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 6; ++j) {
        double s = 0.0;
        for (std::size_t m = 0; m < 3; ++m) s += bm[m * 6 + i] * db[m * 6 + j];
        ke[i * 6 + j] = g.area * s;
      }
    // Symmetrize exactly; the two triple products can differ in the last bit.
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = i + 1; j < 6; ++j) ke[j * 6 + i] = ke[i * 6 + j];
    for (std::size_t i = 0; i < 3; ++i) loc.f[e * 6 + 2 * i + 1] = fy * g.area / 3.0;
  }
  return loc;
}

}  // namespace

LinearSystem assemble_elasticity(const ElasticityProblem& problem, const TriMesh& mesh) {
  check_elasticity(problem);
  const auto fixed = elasticity_fixed(problem, mesh);
  const std::vector<double> zero(fixed.size(), 0.0);
  return gather(mesh, elasticity_locals(problem, mesh), elasticity_loads(problem, mesh), fixed, zero);
}

FemSolution solve_elasticity(const ElasticityProblem& problem, const MeshPtr& mesh, const SolverOptions& opts,
                             SolveReport* report) {
  const LinearSystem sys = assemble_elasticity(problem, *mesh);
  if (sys.free_dofs.size() == 2 * mesh->vertex_count())
    throw Error(ErrorCode::SingularSystem, "fixed edges carry no mesh boundary edge");
  const auto x = solve_spd(sys.matrix, sys.rhs, opts, report);
  const std::vector<double> zero(2 * mesh->vertex_count(), 0.0);
  return expand(mesh, 2, sys, x, zero);
}

std::vector<ElementStrainStress> element_strain_stress(const FemSolution& sol, const ElasticityProblem& problem) {
  if (sol.dof_per_node != 2) throw Error(ErrorCode::ShapeMismatch, "strain needs a displacement field");
  const TriMesh& mesh = *sol.mesh;
  const auto dm = plane_stress_matrix(problem.youngs_modulus, problem.poisson_ratio);
  std::vector<ElementStrainStress> out(mesh.element_count());
#pragma omp parallel for schedule(static)
  for (std::size_t e = 0; e < mesh.element_count(); ++e) {
    const auto bm = strain_matrix(gradients(mesh, e));
    std::array<double, 6> ue{};
    for (std::size_t i = 0; i < 3; ++i) {
      ue[2 * i] = sol.value(idx(mesh.elements[e][i]), 0);
      ue[2 * i + 1] = sol.value(idx(mesh.elements[e][i]), 1);
    }
    auto& es = out[e];
    for (std::size_t r = 0; r < 3; ++r) {
      double s = 0.0;
      for (std::size_t j = 0; j < 6; ++j) s += bm[r * 6 + j] * ue[j];
      es.strain[r] = s;
    }
    for (std::size_t r = 0; r < 3; ++r)
      es.stress[r] = dm[r * 3] * es.strain[0] + dm[r * 3 + 1] * es.strain[1] + dm[r * 3 + 2] * es.strain[2];
  }
  return out;
}

double potential_energy(const FemSolution& sol, const ElasticityProblem& problem) {
  const TriMesh& mesh = *sol.mesh;
  const auto ss = element_strain_stress(sol, problem);
  const double fy = -problem.density * problem.gravity;
  double energy = 0.0;
  for (std::size_t e = 0; e < mesh.element_count(); ++e) {
    const double area = mesh.element_area(e);
    const auto& s = ss[e];
    double w = 0.5 * (s.strain[0] * s.stress[0] + s.strain[1] * s.stress[1] + s.strain[2] * s.stress[2]);
    double uy = 0.0;
    for (int v : mesh.elements[e]) uy += sol.value(idx(v), 1);
    w *= area;
    w -= fy * uy * area / 3.0;
    energy += w;
  }
  for (const auto& be : mesh.boundary_edges) {
    if (edge_condition(problem, be.edge_id) != BoundaryCondition::Loaded) continue;
    const Point2 tl =
        pressure_traction_times_length(mesh.vertices[idx(be.a)], mesh.vertices[idx(be.b)], problem.traction_amplitude);
    double work = 0.0;
    for (int v : {be.a, be.b}) work += 0.5 * (tl.x * sol.value(idx(v), 0) + tl.y * sol.value(idx(v), 1));
    energy -= work;
  }
  return energy;
}

FemSolution nodal_field(const MeshPtr& mesh, const std::function<double(Point2)>& f) {
  FemSolution sol;
  sol.mesh = mesh;
  sol.dof_per_node = 1;
  sol.values.resize(mesh->vertex_count());
  for (std::size_t v = 0; v < sol.values.size(); ++v) sol.values[v] = f(mesh->vertices[v]);
  return sol;
}

void write_solution(std::ostream& os, const FemSolution& sol) {
  const std::size_t nodes = sol.values.size() / idx(sol.dof_per_node);
  os << nodes << ' ' << sol.dof_per_node << '\n';
  char buf[32];
  for (std::size_t v = 0; v < nodes; ++v) {
    for (int c = 0; c < sol.dof_per_node; ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", sol.value(v, c));
      if (c) os << ' ';
      os << buf;
    }
    os << '\n';
  }
}

FemSolution read_solution(std::istream& is, const MeshPtr& mesh) {
  std::size_t nodes = 0;
  int d = 0;
  if (!(is >> nodes >> d) || (d != 1 && d != 2)) throw Error(ErrorCode::FormatError, "bad .sol header");
  if (mesh && nodes != mesh->vertex_count())
    throw Error(ErrorCode::FormatError, "solution node count does not match the mesh");
  FemSolution sol;
  sol.mesh = mesh;
  sol.dof_per_node = d;
  sol.values.resize(nodes * idx(d));
  for (double& v : sol.values)
    if (!(is >> v)) throw Error(ErrorCode::FormatError, "truncated .sol file");
  return sol;
}

namespace reference {

LinearSystem assemble_poisson(const TriMesh& mesh, double source, const std::function<double(Point2)>& dirichlet) {
  const std::size_t nv = mesh.vertex_count();
  const auto fixed = boundary_vertex_mask(mesh);
  std::vector<std::map<int, double>> k(nv);
  std::vector<double> f(nv, 0.0);
  for (std::size_t e = 0; e < mesh.element_count(); ++e) {
    const P1Gradients g = gradients(mesh, e);
    const double s = 1.0 / (4.0 * g.area);
    for (std::size_t i = 0; i < 3; ++i) {
      const int vi = mesh.elements[e][i];
      for (std::size_t j = 0; j < 3; ++j)
        k[idx(vi)][mesh.elements[e][j]] += (g.b[i] * g.b[j] + g.c[i] * g.c[j]) * s;
      f[idx(vi)] += source * g.area / 3.0;
    }
  }
  LinearSystem sys;
  std::vector<int> reduced(nv, -1);
  for (std::size_t v = 0; v < nv; ++v)
    if (!fixed[v]) {
      reduced[v] = static_cast<int>(sys.free_dofs.size());
      sys.free_dofs.push_back(static_cast<int>(v));
    }
  auto& m = sys.matrix;
  m.rows = m.cols = static_cast<int>(sys.free_dofs.size());
  for (int v : sys.free_dofs) {
    double rhs = f[idx(v)];
    for (const auto& [c, val] : k[idx(v)]) {
      if (fixed[idx(c)]) {
        rhs -= val * dirichlet(mesh.vertices[idx(c)]);
      } else {
        m.col.push_back(reduced[idx(c)]);
        m.val.push_back(val);
      }
    }
    m.row_ptr.push_back(static_cast<int>(m.val.size()));
    sys.rhs.push_back(rhs);
  }
  return sys;
}

}  // namespace reference

}  // namespace meshforge
