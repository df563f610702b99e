#pragma once

#include <functional>
#include <iosfwd>
#include <vector>

#include "meshforge/fem.hpp"
#include "meshforge/mesh.hpp"

namespace meshforge {

/// Nonnegative error density per element.
struct ElementErrorField {
  MeshPtr mesh;
  std::vector<double> values;
};

/// Linear interpolation of `sol` at every vertex of `target`.
FemSolution interpolate_solution(const FemSolution& sol, const MeshPtr& target);

/// Per element: mean over its vertices of |u_las - u_has| / (|u_has| + guard),
/// guard = 1e-8 * max|u_has|.
ElementErrorField l1_relative_error(const FemSolution& las_star, const FemSolution& has);

/// Per element: (eps_l - eps_h) . (sig_l - sig_h) * area.
ElementErrorField energy_error(const FemSolution& las_star, const FemSolution& has, const ElasticityProblem& problem);

/// Area-weighted mean of a field over its mesh.
double area_weighted_mean(const ElementErrorField& field);

/// Area-weighted mean of fine values grouped by the coarse element holding
/// each fine centroid; empty coarse elements inherit their neighbours' mean.
ElementErrorField project_error_to_coarse(const ElementErrorField& fine, const MeshPtr& coarse);

/// Recovery estimator on the strain energy density 0.5 * eps . sig.
ElementErrorField zz_error(const FemSolution& sol, const ElasticityProblem& problem);

/// Same recovery applied to the scalar density 0.5 * |grad u|^2.
ElementErrorField zz_error(const FemSolution& sol);

/// bounds[i] = min(K / max(E_i, E_floor)^alpha, 4 * area_i),
/// E_floor = 1e-4 * area-weighted mean of E.
AreaBoundField target_area_field(const ElementErrorField& error, double K, double alpha = 1.0);

struct Calibration {
  double K = 0.0;
  TriMesh mesh;
  AreaBoundField field;
  int meshings = 0;
  bool within_tolerance = true;  // false: accepted inside the hard tolerance only
};

struct CalibrationOptions {
  double rel_tol = 0.05;   // stop once the count is this close to the target
  double hard_tol = 0.20;  // closest count still further off than this is a failure
  int max_bisections = 12;
  MeshOptions mesh;
};

/// Scales a bound field family until the refined mesh has `target` elements.
/// `bounds_for(K)` must grow monotonically with K; K0 is the first guess.
Calibration calibrate_scale(const Polygon& poly, const std::function<AreaBoundField(double)>& bounds_for, double K0,
                            std::size_t target, const CalibrationOptions& opts = {});

Calibration calibrate_K(const Polygon& poly, const ElementErrorField& error, std::size_t target_elements,
                        double alpha = 1.0, const CalibrationOptions& opts = {});

// .err text format: "<#elements>" then one value per line.
void write_error(std::ostream& os, const ElementErrorField& field);
ElementErrorField read_error(std::istream& is, const MeshPtr& mesh);

}  // namespace meshforge
