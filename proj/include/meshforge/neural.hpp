#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace meshforge {

enum class SkipSpec {
  None,
  FirstToLast,    // hidden 1 (projected if widths differ) added to the last hidden output
  FirstToFront3,  // hidden 1 added to the outputs of hidden layers 2, 3 and 4
};

std::string to_string(SkipSpec s);
SkipSpec skip_from_string(const std::string& s);

/// Dense ReLU network with a single linear output.
struct Architecture {
  std::string name;
  int input_dim = 0;
  std::vector<int> hidden;
  SkipSpec skip = SkipSpec::None;

  bool needs_projection() const {
    return skip == SkipSpec::FirstToLast && !hidden.empty() && hidden.front() != hidden.back();
  }
  std::vector<int> layer_dims() const;  // input, hidden..., 1
};

Architecture fcn_architecture(int input_dim);
Architecture resnet1_architecture(int input_dim);
Architecture resnet2_architecture(int input_dim);
/// "fcn" | "resnet1" | "resnet2"; `toy` swaps in narrow widths of the same shape.
Architecture architecture_preset(const std::string& name, int input_dim, bool toy = false);

struct LayerSlice {
  std::size_t w = 0;  // offset of the fan_in x fan_out weight block
  std::size_t b = 0;  // offset of the bias
  int fan_in = 0;
  int fan_out = 0;
};

/// Flat parameter vector: for each dense layer its weights (row-major, fan_in x
/// fan_out) then its bias, followed by the skip projection when present.
struct ModelParams {
  std::vector<double> values;
  std::vector<LayerSlice> layers;
  std::size_t projection = 0;  // offset of hidden.front() x hidden.back() block
  int projection_rows = 0;
  int projection_cols = 0;

  std::size_t size() const { return values.size(); }
};

ModelParams layout_params(const Architecture& arch);
std::size_t parameter_count(const Architecture& arch);

/// He-normal weights (std sqrt(2 / fan_in)), zero biases.
ModelParams init_params(const Architecture& arch, std::uint64_t seed);

double forward(const ModelParams& params, const Architecture& arch, std::span<const double> input);
/// Batched forward pass; inputs are rows x input_dim, row-major.
std::vector<double> forward_batch(const ModelParams& params, const Architecture& arch, std::span<const double> inputs,
                                  std::size_t rows);

/// Gradient of mean((f(x) - y)^2) over the batch. Returns the loss.
double backward(const ModelParams& params, const Architecture& arch, std::span<const double> inputs,
                std::span<const double> targets, std::vector<double>& grad);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grad);

struct TrainConfig {
  std::size_t batch_size = 128;
  int epochs = 50;
  std::uint64_t seed = 0;
  double lr = 1e-3;
};

struct TrainResult {
  ModelParams params;
  std::vector<double> loss_history;  // epoch-mean training MSE
};

/// Mini-batch Adam on standardized inputs/targets (rows x input_dim).
TrainResult train(const Architecture& arch, std::span<const double> inputs, std::span<const double> targets,
                  const TrainConfig& config);

/// Per-feature affine scaling plus target standardization.
struct Normalization {
  std::vector<double> feature_mean;
  std::vector<double> feature_scale;
  double target_mean = 0.0;
  double target_scale = 1.0;

  void apply_features(std::span<double> rows) const;
};

struct Model {
  Architecture arch;
  ModelParams params;
  Normalization norm;
  std::uint64_t seed = 0;
  std::string kind;  // problem kind the model was trained on
  int epochs = 0;
};

/// Raw features (rows x input_dim) -> predicted log area.
std::vector<double> predict_log_area(const Model& model, std::span<const double> raw_features, std::size_t rows);

inline constexpr int kModelVersion = 1;

void save_model(std::ostream& os, const Model& model);
Model load_model(std::istream& is);
void save_model(const std::string& path, const Model& model);
Model load_model(const std::string& path);

std::uint64_t fnv1a64(std::span<const unsigned char> bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace meshforge
