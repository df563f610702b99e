#pragma once

#include <array>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "meshforge/geometry.hpp"
#include "meshforge/error.hpp"
#include "meshforge/kernels.hpp"
#include "meshforge/mesh.hpp"

namespace meshforge {

using MeshPtr = std::shared_ptr<const TriMesh>;

inline MeshPtr share(TriMesh mesh) { return std::make_shared<const TriMesh>(std::move(mesh)); }

/// -lap(u) = source in the polygon, u = dirichlet_value on its boundary.
struct PoissonProblem {
  Polygon polygon;
  double source = 1.0;
  double dirichlet_value = 0.0;
};

enum class BoundaryCondition : int {
  Fixed = 1,   // zero displacement
  Loaded = 2,  // uniform normal pressure, positive pushes inward
  Free = 3,    // traction free
};

inline constexpr double kYoungsModulus = 1000.0;
inline constexpr double kGravity = 1.0;

/// Plane-stress linear elasticity with a gravity-like body force (0, -density * g).
struct ElasticityProblem {
  Polygon polygon;
  std::vector<BoundaryCondition> bc_per_edge;  // one entry per stored polygon edge
  double traction_amplitude = 0.0;
  double density = 0.0;
  double poisson_ratio = 0.0;
  double youngs_modulus = kYoungsModulus;
  double gravity = kGravity;
};

struct FemSolution {
  MeshPtr mesh;
  int dof_per_node = 1;
  std::vector<double> values;  // node-major: values[node * dof_per_node + component]

  double value(std::size_t node, int component = 0) const {
    return values[node * static_cast<std::size_t>(dof_per_node) + static_cast<std::size_t>(component)];
  }
};

/// Voigt components: (xx, yy, xy) with engineering shear strain.
struct ElementStrainStress {
  std::array<double, 3> strain{};
  std::array<double, 3> stress{};
};

enum class LinearSolver {
  Auto,      // direct sparse Cholesky, falling back to PCG
  Pcg,       // Jacobi-preconditioned conjugate gradients
  Cholesky,  // sparse LDL^T, residual-checked
};

struct SolverOptions {
  LinearSolver kind = LinearSolver::Auto;
  double rel_tol = 1e-10;
};

struct SolveReport {
  int iterations = 0;
  double relative_residual = 0.0;
  std::size_t unknowns = 0;
};

/// Reduced (Dirichlet-eliminated) linear system K u_free = b.
struct LinearSystem {
  kernels::CsrMatrix matrix;
  std::vector<double> rhs;
  std::vector<int> free_dofs;  // reduced index -> global dof
};

/// Solves a symmetric positive definite system to ||b - K x|| <= rel_tol ||b||.
std::vector<double> solve_spd(const kernels::CsrMatrix& k, std::span<const double> b, const SolverOptions& opts,
                              SolveReport* report = nullptr);

std::vector<double> pcg(const kernels::CsrMatrix& k, std::span<const double> b, double rel_tol, int max_iter,
                        SolveReport* report = nullptr);

FemSolution solve_poisson(const PoissonProblem& problem, const MeshPtr& mesh, const SolverOptions& opts = {},
                          SolveReport* report = nullptr);

/// General P1 Poisson: -lap(u) = source with u = dirichlet(x) on every boundary vertex.
FemSolution solve_poisson_dirichlet(const MeshPtr& mesh, double source, const std::function<double(Point2)>& dirichlet,
                                    const SolverOptions& opts = {}, SolveReport* report = nullptr);

LinearSystem assemble_poisson(const TriMesh& mesh, double source, const std::function<double(Point2)>& dirichlet);

FemSolution solve_elasticity(const ElasticityProblem& problem, const MeshPtr& mesh, const SolverOptions& opts = {},
                             SolveReport* report = nullptr);

LinearSystem assemble_elasticity(const ElasticityProblem& problem, const TriMesh& mesh);

/// Plane-stress constitutive matrix D(E, nu), row-major 3x3.
std::array<double, 9> plane_stress_matrix(double youngs_modulus, double poisson_ratio);

std::vector<ElementStrainStress> element_strain_stress(const FemSolution& sol, const ElasticityProblem& problem);

/// Strain energy minus the work of body force and boundary pressure.
double potential_energy(const FemSolution& sol, const ElasticityProblem& problem);

/// Scalar field evaluated at every node (dof_per_node = 1).
FemSolution nodal_field(const MeshPtr& mesh, const std::function<double(Point2)>& f);

// .sol text format: "<#nodes> <dof_per_node>" then one line of values per node.
void write_solution(std::ostream& os, const FemSolution& sol);
FemSolution read_solution(std::istream& is, const MeshPtr& mesh);

namespace reference {

/// Element-by-element scatter assembly of the Poisson system, kept to
/// cross-check the row-parallel assembly.
LinearSystem assemble_poisson(const TriMesh& mesh, double source, const std::function<double(Point2)>& dirichlet);

}  // namespace reference

}  // namespace meshforge
