#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "meshforge/errest.hpp"
#include "meshforge/fem.hpp"
#include "meshforge/geometry.hpp"
#include "meshforge/mesh.hpp"
#include "meshforge/neural.hpp"

namespace meshforge {

enum class ProblemKind { Poisson, Elasticity };

std::string to_string(ProblemKind kind);
ProblemKind kind_from_string(const std::string& s);

struct ProblemSpec {
  int id = 0;
  ProblemKind kind = ProblemKind::Poisson;
  Polygon polygon;
  std::vector<BoundaryCondition> bcs;  // per stored polygon edge (elasticity)
  double traction = 0.0;
  double density = 0.0;
  double poisson_ratio = 0.0;
  std::uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const ProblemSpec& s);
void from_json(const nlohmann::json& j, ProblemSpec& s);

/// Fixed on edge 0, loaded on edges 3 and 4, free elsewhere.
std::vector<BoundaryCondition> default_bc_layout(std::size_t edges);

ProblemSpec sample_problem(ProblemKind kind, std::uint64_t seed);
/// Problem i uses a seed derived from (master_seed, i).
std::vector<ProblemSpec> sample_problems(ProblemKind kind, std::size_t count, std::uint64_t master_seed);
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

/// JSONL, one ProblemSpec per line.
void write_problems(const std::string& path, const std::vector<ProblemSpec>& problems);
std::vector<ProblemSpec> read_problems(const std::string& path);

PoissonProblem poisson_problem(const ProblemSpec& spec);
ElasticityProblem elasticity_problem(const ProblemSpec& spec);

int feature_width(ProblemKind kind);
/// [16 polygon coordinates | 8 mean value coordinates of p | parameters]
std::vector<double> build_features(const ProblemSpec& spec, Point2 p);
void append_features(const ProblemSpec& spec, Point2 p, std::vector<double>& out);

struct PipelineOptions {
  std::size_t ldum_elements = 1000;
  double ldum_tolerance = 0.05;
  double hdum_refinement = 16.0;  // HDUM area bound = LDUM bound / this
  std::size_t target_elements = 4000;
};

/// Everything derived from one problem before any strategy is applied.
struct ProblemContext {
  ProblemSpec spec;
  double ldum_max_area = 0.0;
  MeshPtr ldum;
  MeshPtr hdum;
  FemSolution las;
  FemSolution has;
  ElementErrorField fine_error;    // on the HDUM
  ElementErrorField coarse_error;  // projected to the LDUM
};

MeshPtr build_ldum(const Polygon& poly, const PipelineOptions& opts, double* max_area = nullptr);
FemSolution solve_problem(const ProblemSpec& spec, const MeshPtr& mesh);
ProblemContext prepare_problem(const ProblemSpec& spec, const PipelineOptions& opts);

// ---------------------------------------------------------------- datasets

struct ProblemRecord {
  int id = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::size_t ldum_elements = 0;
  std::size_t hdum_elements = 0;
  std::size_t refined_elements = 0;
  double K = 0.0;
  std::size_t samples = 0;
  double seconds = 0.0;
};

struct Dataset {
  ProblemKind kind = ProblemKind::Poisson;
  int feature_width = 0;
  Normalization norm;
  std::vector<float> rows;  // sample_count x (feature_width + 1): raw features then log(area bound)
  nlohmann::json manifest;

  std::size_t sample_count() const { return rows.size() / static_cast<std::size_t>(feature_width + 1); }
};

struct GenerateOptions {
  PipelineOptions pipeline;
  int threads = 1;
  std::string parts_dir;  // per-problem results for resuming; empty disables
  std::function<void(const ProblemRecord&)> progress;
};

/// Samples for one problem: one row per LDUM element centroid.
std::vector<float> problem_samples(const ProblemSpec& spec, const PipelineOptions& opts, ProblemRecord& record);

Dataset generate_training_data(const std::vector<ProblemSpec>& problems, const GenerateOptions& opts);

/// Per-column mean and standard deviation (scale 1 for constant columns).
Normalization compute_normalization(const std::vector<float>& rows, int feature_width);

void write_dataset(const std::string& path, const Dataset& data);
Dataset read_dataset(const std::string& path);

/// FNV-1a of a whole file.
std::uint64_t file_checksum(const std::string& path);

struct TrainedModel {
  Model model;
  std::vector<double> loss_history;
};

TrainedModel train_model(const Dataset& data, const std::string& arch_name, const TrainConfig& config);

// -------------------------------------------------------------- prediction

struct Prediction {
  TriMesh mesh;
  double K = 0.0;
  double predict_ms = 0.0;  // model evaluation over all LDUM centroids
  std::vector<double> bounds;
};

/// Predicted area bounds at the LDUM centroids.
std::vector<double> predict_bounds(const ProblemSpec& spec, const Model& model, const TriMesh& ldum,
                                   double* predict_ms = nullptr);

Prediction predict_mesh(const ProblemSpec& spec, const Model& model, std::size_t target_elements,
                        const PipelineOptions& opts = {}, const CalibrationOptions& cal = {});

/// Same scaling as predict_mesh for an arbitrary per-LDUM-element relative bound.
Calibration calibrate_relative_bounds(const Polygon& poly, const TriMesh& ldum, const std::vector<double>& shape,
                                      std::size_t target_elements, const CalibrationOptions& cal = {});

// -------------------------------------------------------------- evaluation

inline const std::vector<std::string> kStrategies{"uniform", "meshingnet", "zz", "oracle"};

struct EvaluationRecord {
  int problem_id = 0;
  std::string strategy;
  std::size_t elements = 0;
  double score = 0.0;       // poisson: area-weighted relative L1 error; elasticity: Ep - Ep(HAS)
  double predict_ms = 0.0;
  double energy = 0.0;      // elasticity only
  double has_energy = 0.0;  // elasticity only
};

struct EvaluateOptions {
  PipelineOptions pipeline;
  std::vector<std::string> strategies = kStrategies;
  // Tight count tolerance so every strategy is compared at (nearly) the same element count.
  CalibrationOptions calibration{0.005, 0.05, 20, {}};
  int threads = 1;
  std::function<void(int problem_id, const std::string& message)> progress;
};

struct EvaluationResult {
  std::vector<EvaluationRecord> records;  // problem order, then strategy order
  std::vector<std::pair<int, std::string>> failures;
};

/// Mesh a problem with one strategy. `model` is required for "meshingnet".
TriMesh strategy_mesh(const ProblemContext& ctx, const std::string& strategy, const Model* model,
                      const EvaluateOptions& opts, double* predict_ms = nullptr);

std::vector<EvaluationRecord> evaluate_problem(const ProblemContext& ctx, const Model* model,
                                               const EvaluateOptions& opts);

EvaluationResult evaluate(const std::vector<ProblemSpec>& problems, const Model* model, const EvaluateOptions& opts);

}  // namespace meshforge
