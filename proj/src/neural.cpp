#include "meshforge/neural.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <iterator>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "meshforge/error.hpp"
#include "meshforge/kernels.hpp"

namespace meshforge {

namespace {

std::size_t sz(int i) { return static_cast<std::size_t>(i); }

constexpr char kMagic[] = "MSHNET1";
constexpr std::size_t kMagicLen = 7;

// Activations and gradients for one batch.
struct Workspace {
  std::vector<std::vector<double>> acts;  // acts[0] = input, acts[h + 1] = hidden h output (post skip)
  std::vector<std::vector<char>> mask;    // ReLU active flags per hidden layer, indexed like acts
  std::vector<double> output;
};

bool skip_target(const Architecture& arch, std::size_t h) {
  const std::size_t n = arch.hidden.size();
  switch (arch.skip) {
    case SkipSpec::FirstToFront3:
      return h >= 1 && h <= 3 && h < n;
    case SkipSpec::FirstToLast:
      return n >= 2 && h == n - 1;
    case SkipSpec::None:
      break;
  }
  return false;
}

void validate(const Architecture& arch, const ModelParams& params) {
  if (arch.input_dim <= 0) throw Error(ErrorCode::ShapeMismatch, "empty architecture");
  // no hidden layers is a plain linear model
  if (arch.hidden.empty() && arch.skip != SkipSpec::None) throw Error(ErrorCode::ShapeMismatch, "skips need hidden layers");
  if (params.layers.size() != arch.hidden.size() + 1 || params.size() != parameter_count(arch))
    throw Error(ErrorCode::ShapeMismatch, "parameters do not match the architecture");
  if (arch.skip == SkipSpec::FirstToFront3) {
    if (arch.hidden.size() < 4) throw Error(ErrorCode::ShapeMismatch, "front-3 skips need at least 4 hidden layers");
    for (std::size_t h = 1; h <= 3; ++h)
      if (arch.hidden[h] != arch.hidden[0])
        throw Error(ErrorCode::ShapeMismatch, "front-3 skips need equal hidden widths");
  }
}

void run_forward(const ModelParams& p, const Architecture& arch, std::span<const double> inputs, std::size_t rows,
                 Workspace& ws) {
  validate(arch, p);
  if (inputs.size() != rows * sz(arch.input_dim)) throw Error(ErrorCode::ShapeMismatch, "input width mismatch");
  const std::size_t nh = arch.hidden.size();
  const int r = static_cast<int>(rows);
  ws.acts.resize(nh + 1);
  ws.mask.resize(nh + 1);
  ws.acts[0].assign(inputs.begin(), inputs.end());
  const std::span<const double> v(p.values);
  for (std::size_t l = 0; l <= nh; ++l) {
    const LayerSlice& L = p.layers[l];
    std::vector<double>& out = l < nh ? ws.acts[l + 1] : ws.output;
    out.resize(rows * sz(L.fan_out));
    kernels::dense_forward(ws.acts[l], v.subspan(L.w, sz(L.fan_in * L.fan_out)), v.subspan(L.b, sz(L.fan_out)), r,
                           L.fan_in, L.fan_out, out);
    if (l == nh) break;
    auto& m = ws.mask[l + 1];
    m.resize(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      m[i] = out[i] > 0.0;
      if (!m[i]) out[i] = 0.0;
    }
    if (!skip_target(arch, l)) continue;
    const std::vector<double>& h1 = ws.acts[1];
    if (arch.needs_projection()) {
      std::vector<double> proj(out.size());
      const std::vector<double> zero(sz(p.projection_cols), 0.0);
      kernels::dense_forward(h1, v.subspan(p.projection, sz(p.projection_rows * p.projection_cols)), zero, r,
                             p.projection_rows, p.projection_cols, proj);
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += proj[i];
    } else {
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += h1[i];
    }
  }
}

std::string read_all(std::istream& is) {
  return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

void put_u64(std::string& out, std::uint64_t x) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((x >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const std::string& in, std::size_t& pos) {
  if (in.size() < pos + 8) throw Error(ErrorCode::FormatError, "model file is truncated");
  std::uint64_t x = 0;
  for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + sz(i)])) << (8 * i);
  pos += 8;
  return x;
}

}  // namespace

std::string to_string(SkipSpec s) {
  switch (s) {
    case SkipSpec::None:
      return "none";
    case SkipSpec::FirstToLast:
      return "first_to_last";
    case SkipSpec::FirstToFront3:
      return "first_to_front3";
  }
  return "none";
}

SkipSpec skip_from_string(const std::string& s) {
  if (s == "none") return SkipSpec::None;
  if (s == "first_to_last") return SkipSpec::FirstToLast;
  if (s == "first_to_front3") return SkipSpec::FirstToFront3;
  throw Error(ErrorCode::FormatError, "unknown skip spec '" + s + "'");
}

std::vector<int> Architecture::layer_dims() const {
  std::vector<int> d{input_dim};
  d.insert(d.end(), hidden.begin(), hidden.end());
  d.push_back(1);
  return d;
}

Architecture fcn_architecture(int input_dim) { return {"fcn", input_dim, {32, 64, 128, 128, 64, 32, 8}, SkipSpec::None}; }

Architecture resnet1_architecture(int input_dim) {
  return {"resnet1", input_dim, {32, 64, 128, 128, 64, 32, 8}, SkipSpec::FirstToLast};
}

Architecture resnet2_architecture(int input_dim) {
  return {"resnet2", input_dim, std::vector<int>(7, 128), SkipSpec::FirstToFront3};
}

Architecture architecture_preset(const std::string& name, int input_dim, bool toy) {
  Architecture a;
  if (name == "fcn")
    a = fcn_architecture(input_dim);
  else if (name == "resnet1")
    a = resnet1_architecture(input_dim);
  else if (name == "resnet2")
    a = resnet2_architecture(input_dim);
  else
    throw Error(ErrorCode::InvalidArgument, "unknown architecture '" + name + "'");
  if (toy) a.hidden = name == "resnet2" ? std::vector<int>(7, 4) : std::vector<int>{3, 4, 5, 5, 4, 3, 2};
  return a;
}

ModelParams layout_params(const Architecture& arch) {
  ModelParams p;
  const auto dims = arch.layer_dims();
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    LayerSlice s;
    s.fan_in = dims[l];
    s.fan_out = dims[l + 1];
    s.w = off;
    off += sz(s.fan_in * s.fan_out);
    s.b = off;
    off += sz(s.fan_out);
    p.layers.push_back(s);
  }
  if (arch.needs_projection()) {
    p.projection = off;
    p.projection_rows = arch.hidden.front();
    p.projection_cols = arch.hidden.back();
    off += sz(p.projection_rows * p.projection_cols);
  }
  p.values.assign(off, 0.0);
  return p;
}

std::size_t parameter_count(const Architecture& arch) {
  const auto dims = arch.layer_dims();
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) n += sz(dims[l] * dims[l + 1] + dims[l + 1]);
  if (arch.needs_projection()) n += sz(arch.hidden.front() * arch.hidden.back());
  return n;
}

ModelParams init_params(const Architecture& arch, std::uint64_t seed) {
  ModelParams p = layout_params(arch);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const LayerSlice& L : p.layers) {
    const double sd = std::sqrt(2.0 / L.fan_in);
    for (std::size_t i = 0; i < sz(L.fan_in * L.fan_out); ++i) p.values[L.w + i] = sd * normal(rng);
  }
  if (p.projection_rows > 0) {
    const double sd = std::sqrt(2.0 / p.projection_rows);
    for (std::size_t i = 0; i < sz(p.projection_rows * p.projection_cols); ++i)
      p.values[p.projection + i] = sd * normal(rng);
  }
  return p;
}

std::vector<double> forward_batch(const ModelParams& params, const Architecture& arch, std::span<const double> inputs,
                                  std::size_t rows) {
  Workspace ws;
  run_forward(params, arch, inputs, rows, ws);
  return ws.output;
}

double forward(const ModelParams& params, const Architecture& arch, std::span<const double> input) {
  return forward_batch(params, arch, input, 1).front();
}

double backward(const ModelParams& params, const Architecture& arch, std::span<const double> inputs,
                std::span<const double> targets, std::vector<double>& grad) {
  const std::size_t rows = targets.size();
  if (rows == 0) throw Error(ErrorCode::ShapeMismatch, "empty batch");
  Workspace ws;
  run_forward(params, arch, inputs, rows, ws);
  grad.assign(params.size(), 0.0);

  const int r = static_cast<int>(rows);
  const std::size_t nh = arch.hidden.size();
  const std::span<const double> v(params.values);
  const std::span<double> g(grad);

  double loss = 0.0;
  std::vector<double> gz(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const double d = ws.output[i] - targets[i];
    loss += d * d;
    gz[i] = 2.0 * d / static_cast<double>(rows);
  }
  loss /= static_cast<double>(rows);

  // ga[k]: gradient with respect to acts[k].
  std::vector<std::vector<double>> ga(nh + 1);
  for (std::size_t k = 1; k <= nh; ++k) ga[k].assign(ws.acts[k].size(), 0.0);
  std::vector<double> tmp;
  for (std::size_t l = nh + 1; l-- > 0;) {
    const LayerSlice& L = params.layers[l];
    if (l < nh) {
      // Layer l produces acts[l + 1]; its skip input (if any) gets the same gradient.
      const std::vector<double>& up = ga[l + 1];
      if (skip_target(arch, l)) {
        if (arch.needs_projection()) {
          std::vector<double> scratch(sz(params.projection_cols), 0.0);
          kernels::dense_backward_weights(up, ws.acts[1], r, params.projection_rows, params.projection_cols,
                                          g.subspan(params.projection, sz(params.projection_rows * params.projection_cols)),
                                          scratch);
          tmp.resize(ws.acts[1].size());
          kernels::dense_backward_input(up, v.subspan(params.projection, sz(params.projection_rows * params.projection_cols)),
                                        r, params.projection_rows, params.projection_cols, tmp);
          for (std::size_t i = 0; i < tmp.size(); ++i) ga[1][i] += tmp[i];
        } else {
          for (std::size_t i = 0; i < up.size(); ++i) ga[1][i] += up[i];
        }
      }
      gz.resize(up.size());
      const auto& m = ws.mask[l + 1];
      for (std::size_t i = 0; i < up.size(); ++i) gz[i] = m[i] ? up[i] : 0.0;
    }
    kernels::dense_backward_weights(gz, ws.acts[l], r, L.fan_in, L.fan_out, g.subspan(L.w, sz(L.fan_in * L.fan_out)),
                                    g.subspan(L.b, sz(L.fan_out)));
    if (l == 0) break;
    tmp.resize(ws.acts[l].size());
    kernels::dense_backward_input(gz, v.subspan(L.w, sz(L.fan_in * L.fan_out)), r, L.fan_in, L.fan_out, tmp);
    for (std::size_t i = 0; i < tmp.size(); ++i) ga[l][i] += tmp[i];
  }
  return loss;
}

void adam_step(AdamState& s, std::span<double> params, std::span<const double> grad) {
  if (s.m.size() != params.size() || s.v.size() != params.size() || grad.size() != params.size())
    throw Error(ErrorCode::ShapeMismatch, "Adam state does not match the parameters");
  ++s.t;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * grad[i];
    s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * grad[i] * grad[i];
    const double mh = s.m[i] / c1;
    const double vh = s.v[i] / c2;
    params[i] -= s.lr * mh / (std::sqrt(vh) + s.eps);
  }
}

TrainResult train(const Architecture& arch, std::span<const double> inputs, std::span<const double> targets,
                  const TrainConfig& config) {
  const std::size_t n = targets.size();
  const std::size_t x = sz(arch.input_dim);
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "empty training set");
  if (inputs.size() != n * x) throw Error(ErrorCode::ShapeMismatch, "feature width does not match the network");
  if (config.batch_size == 0) throw Error(ErrorCode::InvalidArgument, "batch size must be positive");

  TrainResult res;
  res.params = init_params(arch, config.seed);
  AdamState adam(res.params.size());
  adam.lr = config.lr;
  std::mt19937_64 shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(n);
  std::vector<double> bx, by, grad;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double total = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(n, start + config.batch_size);
      const std::size_t rows = end - start;
      bx.resize(rows * x);
      by.resize(rows);
      for (std::size_t i = 0; i < rows; ++i) {
        const std::size_t s = order[start + i];
        std::copy_n(inputs.begin() + static_cast<std::ptrdiff_t>(s * x), x, bx.begin() + static_cast<std::ptrdiff_t>(i * x));
        by[i] = targets[s];
      }
      const double loss = backward(res.params, arch, bx, by, grad);
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << ", batch " << batch_index;
        throw Error(ErrorCode::NonFiniteLoss, msg.str());
      }
      total += loss * static_cast<double>(rows);
      adam_step(adam, res.params.values, grad);
    }
    res.loss_history.push_back(total / static_cast<double>(n));
  }
  return res;
}

void Normalization::apply_features(std::span<double> rows) const {
  const std::size_t w = feature_mean.size();
  if (w == 0) return;
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = (rows[i] - feature_mean[i % w]) / feature_scale[i % w];
}

std::vector<double> predict_log_area(const Model& model, std::span<const double> raw_features, std::size_t rows) {
  std::vector<double> x(raw_features.begin(), raw_features.end());
  model.norm.apply_features(x);
  auto y = forward_batch(model.params, model.arch, x, rows);
  for (double& v : y) v = v * model.norm.target_scale + model.norm.target_mean;
  return y;
}

std::uint64_t fnv1a64(std::span<const unsigned char> bytes, std::uint64_t h) {
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void save_model(std::ostream& os, const Model& model) {
  nlohmann::json meta;
  meta["version"] = kModelVersion;
  meta["arch"] = {{"name", model.arch.name},
                  {"input_dim", model.arch.input_dim},
                  {"hidden", model.arch.hidden},
                  {"skip", to_string(model.arch.skip)}};
  meta["normalization"] = {{"feature_mean", model.norm.feature_mean},
                           {"feature_scale", model.norm.feature_scale},
                           {"target_mean", model.norm.target_mean},
                           {"target_scale", model.norm.target_scale}};
  meta["seed"] = model.seed;
  meta["kind"] = model.kind;
  meta["epochs"] = model.epochs;
  const std::string text = meta.dump();

  std::string payload;
  put_u64(payload, text.size());
  payload += text;
  put_u64(payload, model.params.size());
  for (double d : model.params.values) put_u64(payload, std::bit_cast<std::uint64_t>(d));
  const auto* bytes = reinterpret_cast<const unsigned char*>(payload.data());
  const std::uint64_t sum = fnv1a64({bytes, payload.size()});

  std::string out(kMagic, kMagicLen);
  out += payload;
  put_u64(out, sum);
  os.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!os) throw Error(ErrorCode::FormatError, "failed to write model");
}

Model load_model(std::istream& is) {
  const std::string data = read_all(is);
  if (data.size() < kMagicLen || data.compare(0, kMagicLen, kMagic) != 0)
    throw Error(ErrorCode::FormatError, "not a model file (bad magic)");
  std::size_t pos = kMagicLen;
  const std::uint64_t meta_len = get_u64(data, pos);
  if (data.size() < pos + meta_len) throw Error(ErrorCode::FormatError, "model file is truncated");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(data.substr(pos, meta_len));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("model metadata is not valid JSON: ") + e.what());
  }
  pos += meta_len;

  Model m;
  try {
    const int version = meta.at("version").get<int>();
    if (version != kModelVersion) {
      std::ostringstream msg;
      msg << "unsupported model version " << version << " (expected " << kModelVersion << ")";
      throw Error(ErrorCode::FormatError, msg.str());
    }
    const auto& a = meta.at("arch");
    m.arch.name = a.at("name").get<std::string>();
    m.arch.input_dim = a.at("input_dim").get<int>();
    m.arch.hidden = a.at("hidden").get<std::vector<int>>();
    m.arch.skip = skip_from_string(a.at("skip").get<std::string>());
    const auto& nm = meta.at("normalization");
    m.norm.feature_mean = nm.at("feature_mean").get<std::vector<double>>();
    m.norm.feature_scale = nm.at("feature_scale").get<std::vector<double>>();
    m.norm.target_mean = nm.at("target_mean").get<double>();
    m.norm.target_scale = nm.at("target_scale").get<double>();
    m.seed = meta.at("seed").get<std::uint64_t>();
    m.kind = meta.at("kind").get<std::string>();
    m.epochs = meta.at("epochs").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("model metadata is incomplete: ") + e.what());
  }

  const std::uint64_t count = get_u64(data, pos);
  m.params = layout_params(m.arch);
  if (count != m.params.size()) throw Error(ErrorCode::FormatError, "parameter count does not match the architecture");
  if (data.size() < pos + count * 8 + 8) throw Error(ErrorCode::FormatError, "model file is truncated");
  for (std::size_t i = 0; i < count; ++i) m.params.values[i] = std::bit_cast<double>(get_u64(data, pos));
  const auto* bytes = reinterpret_cast<const unsigned char*>(data.data()) + kMagicLen;
  const std::uint64_t expect = fnv1a64({bytes, pos - kMagicLen});
  if (get_u64(data, pos) != expect) throw Error(ErrorCode::FormatError, "model checksum mismatch");
  if (pos != data.size()) throw Error(ErrorCode::FormatError, "trailing bytes after model checksum");
  return m;
}

void save_model(const std::string& path, const Model& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::FormatError, "cannot open " + path + " for writing");
  save_model(os, model);
}

Model load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::FormatError, "cannot open " + path);
  return load_model(is);
}

}  // namespace meshforge
