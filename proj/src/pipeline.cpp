#include "meshforge/pipeline.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>

#include <omp.h>

namespace meshforge {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

constexpr char kDataMagic[] = "MSHDATA1";
constexpr char kPartMagic[] = "MSHPART1";
constexpr std::size_t kMagicLen = 8;
constexpr int kDatasetVersion = 1;

void put_u64(std::string& out, std::uint64_t x) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((x >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float f) {
  const auto x = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((x >> (8 * i)) & 0xff));
}

struct Reader {
  const std::string& data;
  std::size_t pos = 0;
  const char* what;

  void need(std::size_t n) const {
    if (data.size() < pos + n) throw Error(ErrorCode::FormatError, std::string(what) + " is truncated");
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t x = 0;
    for (std::size_t i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(static_cast<unsigned char>(data[pos + i])) << (8 * i);
    pos += 8;
    return x;
  }
  float f32() {
    need(4);
    std::uint32_t x = 0;
    for (std::size_t i = 0; i < 4; ++i) x |= static_cast<std::uint32_t>(static_cast<unsigned char>(data[pos + i])) << (8 * i);
    pos += 4;
    return std::bit_cast<float>(x);
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data.substr(pos, n);
    pos += n;
    return s;
  }
};

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::FormatError, "cannot open " + path);
  return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

void spit(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw Error(ErrorCode::FormatError, "cannot open " + tmp + " for writing");
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw Error(ErrorCode::FormatError, "failed writing " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::uint64_t checksum(const std::string& s) {
  return fnv1a64({reinterpret_cast<const unsigned char*>(s.data()), s.size()});
}

nlohmann::json record_json(const ProblemRecord& r) {
  nlohmann::json j{{"id", r.id}, {"seed", r.seed}, {"ok", r.ok}};
  if (r.ok) {
    j["ldum_elements"] = r.ldum_elements;
    j["hdum_elements"] = r.hdum_elements;
    j["refined_elements"] = r.refined_elements;
    j["K"] = r.K;
    j["samples"] = r.samples;
  } else {
    j["error"] = r.error;
  }
  return j;
}

ProblemRecord record_from_json(const nlohmann::json& j) {
  ProblemRecord r;
  r.id = j.at("id").get<int>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.ok = j.at("ok").get<bool>();
  if (r.ok) {
    r.ldum_elements = j.at("ldum_elements").get<std::size_t>();
    r.hdum_elements = j.at("hdum_elements").get<std::size_t>();
    r.refined_elements = j.at("refined_elements").get<std::size_t>();
    r.K = j.at("K").get<double>();
    r.samples = j.at("samples").get<std::size_t>();
  } else {
    r.error = j.value("error", "");
  }
  r.seconds = j.value("seconds", 0.0);
  return r;
}

std::string part_path(const std::string& dir, int id) {
  char name[32];
  std::snprintf(name, sizeof name, "problem_%06d.part", id);
  return (std::filesystem::path(dir) / name).string();
}

void save_part(const std::string& path, const ProblemRecord& rec, const std::vector<float>& rows) {
  nlohmann::json j = record_json(rec);
  j["seconds"] = rec.seconds;
  const std::string text = j.dump();
  std::string out(kPartMagic, kMagicLen);
  put_u64(out, text.size());
  out += text;
  put_u64(out, rows.size());
  for (float f : rows) put_f32(out, f);
  put_u64(out, checksum(out));
  spit(path, out);
}

// Returns false when the part is missing, stale or damaged.
bool load_part(const std::string& path, const ProblemSpec& spec, ProblemRecord& rec, std::vector<float>& rows) {
  if (!std::filesystem::exists(path)) return false;
  try {
    const std::string data = slurp(path);
    if (data.size() < kMagicLen + 8 || data.compare(0, kMagicLen, kPartMagic) != 0) return false;
    Reader rd{data, kMagicLen, "part file"};
    const std::string text = rd.bytes(rd.u64());
    ProblemRecord r = record_from_json(nlohmann::json::parse(text));
    if (r.id != spec.id || r.seed != spec.seed) return false;
    const std::uint64_t n = rd.u64();
    std::vector<float> v(n);
    for (auto& f : v) f = rd.f32();
    const std::size_t body = rd.pos;
    if (rd.u64() != checksum(data.substr(0, body))) return false;
    rec = r;
    rows = std::move(v);
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

const ElasticityProblem& as_elasticity(const ProblemSpec& spec, ElasticityProblem& storage) {
  storage = elasticity_problem(spec);
  return storage;
}

}  // namespace

std::string to_string(ProblemKind kind) { return kind == ProblemKind::Poisson ? "poisson" : "elasticity"; }

ProblemKind kind_from_string(const std::string& s) {
  if (s == "poisson") return ProblemKind::Poisson;
  if (s == "elasticity") return ProblemKind::Elasticity;
  throw Error(ErrorCode::InvalidArgument, "unknown problem kind '" + s + "'");
}

void to_json(nlohmann::json& j, const ProblemSpec& s) {
  j = nlohmann::json{{"id", s.id}, {"kind", to_string(s.kind)}, {"seed", s.seed}, {"polygon", s.polygon}};
  if (s.kind == ProblemKind::Elasticity) {
    std::vector<int> bc;
    for (auto b : s.bcs) bc.push_back(static_cast<int>(b));
    j["bc"] = bc;
    j["traction"] = s.traction;
    j["density"] = s.density;
    j["poisson_ratio"] = s.poisson_ratio;
  }
}

void from_json(const nlohmann::json& j, ProblemSpec& s) {
  s.id = j.value("id", 0);
  s.kind = kind_from_string(j.at("kind").get<std::string>());
  s.seed = j.value("seed", std::uint64_t{0});
  s.polygon = j.at("polygon").get<Polygon>();
  s.bcs.clear();
  if (s.kind == ProblemKind::Elasticity) {
    for (int b : j.at("bc").get<std::vector<int>>()) {
      if (b < 1 || b > 3) throw Error(ErrorCode::FormatError, "boundary condition ids are 1, 2 or 3");
      s.bcs.push_back(static_cast<BoundaryCondition>(b));
    }
    s.traction = j.at("traction").get<double>();
    s.density = j.at("density").get<double>();
    s.poisson_ratio = j.at("poisson_ratio").get<double>();
  }
}

std::vector<BoundaryCondition> default_bc_layout(std::size_t edges) {
  std::vector<BoundaryCondition> bc(edges, BoundaryCondition::Free);
  if (edges > 0) bc[0] = BoundaryCondition::Fixed;
  if (edges > 4) bc[3] = bc[4] = BoundaryCondition::Loaded;
  return bc;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  // splitmix64 finalizer over a golden-ratio stride
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

ProblemSpec sample_problem(ProblemKind kind, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ProblemSpec s;
  s.kind = kind;
  s.seed = seed;
  int edges = 8;
  if (kind == ProblemKind::Elasticity) edges = std::uniform_int_distribution<int>(6, 8)(rng);
  s.polygon = generate_random_polygon(rng(), edges);
  if (kind == ProblemKind::Elasticity) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    s.traction = 1000.0 * (1.0 - u(rng));
    s.density = 1.0 - u(rng);
    s.poisson_ratio = 0.48 * u(rng);
    s.bcs = default_bc_layout(s.polygon.size());
  }
  return s;
}

std::vector<ProblemSpec> sample_problems(ProblemKind kind, std::size_t count, std::uint64_t master_seed) {
  std::vector<ProblemSpec> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(sample_problem(kind, derive_seed(master_seed, i)));
    out.back().id = static_cast<int>(i);
  }
  return out;
}

void write_problems(const std::string& path, const std::vector<ProblemSpec>& problems) {
  std::string out;
  for (const auto& p : problems) {
    out += nlohmann::json(p).dump();
    out += '\n';
  }
  spit(path, out);
}

std::vector<ProblemSpec> read_problems(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::FormatError, "cannot open " + path);
  std::vector<ProblemSpec> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(nlohmann::json::parse(line).get<ProblemSpec>());
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::FormatError, path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    const ProblemSpec& s = out.back();
    if (s.kind == ProblemKind::Elasticity && s.bcs.size() != s.polygon.size())
      throw Error(ErrorCode::FormatError, path + ":" + std::to_string(lineno) + ": one boundary condition per edge");
  }
  return out;
}

PoissonProblem poisson_problem(const ProblemSpec& spec) { return PoissonProblem{spec.polygon, 1.0, 0.0}; }

ElasticityProblem elasticity_problem(const ProblemSpec& spec) {
  ElasticityProblem p;
  p.polygon = spec.polygon;
  p.bc_per_edge = spec.bcs;
  p.traction_amplitude = spec.traction;
  p.density = spec.density;
  p.poisson_ratio = spec.poisson_ratio;
  return p;
}

int feature_width(ProblemKind kind) { return 2 * kPaddedVertices + kPaddedVertices + (kind == ProblemKind::Elasticity ? 3 : 0); }

void append_features(const ProblemSpec& spec, Point2 p, std::vector<double>& out) {
  if (spec.polygon.size() != static_cast<std::size_t>(kPaddedVertices))
    throw Error(ErrorCode::ShapeMismatch, "features need an 8-vertex (padded) polygon");
  for (const Point2& v : spec.polygon.vertices) {
    out.push_back(v.x);
    out.push_back(v.y);
  }
  const std::size_t at = out.size();
  out.resize(at + kPaddedVertices);
  mean_value_coordinates(spec.polygon, p, std::span<double>(out).subspan(at, kPaddedVertices));
  if (spec.kind == ProblemKind::Elasticity) {
    out.push_back(spec.traction);
    out.push_back(spec.density);
    out.push_back(spec.poisson_ratio);
  }
}

std::vector<double> build_features(const ProblemSpec& spec, Point2 p) {
  std::vector<double> f;
  f.reserve(static_cast<std::size_t>(feature_width(spec.kind)));
  append_features(spec, p, f);
  return f;
}

MeshPtr build_ldum(const Polygon& poly, const PipelineOptions& opts, double* max_area) {
  CountedMesh c = triangulate_uniform_to_count(poly, opts.ldum_elements, opts.ldum_tolerance);
  if (max_area) *max_area = c.max_area;
  return share(std::move(c.mesh));
}

FemSolution solve_problem(const ProblemSpec& spec, const MeshPtr& mesh) {
  if (spec.kind == ProblemKind::Poisson) return solve_poisson(poisson_problem(spec), mesh);
  return solve_elasticity(elasticity_problem(spec), mesh);
}

ProblemContext prepare_problem(const ProblemSpec& spec, const PipelineOptions& opts) {
  ProblemContext ctx;
  ctx.spec = spec;
  ctx.ldum = build_ldum(spec.polygon, opts, &ctx.ldum_max_area);
  ctx.hdum = share(triangulate_uniform(spec.polygon, ctx.ldum_max_area / opts.hdum_refinement));
  ctx.las = solve_problem(spec, ctx.ldum);
  ctx.has = solve_problem(spec, ctx.hdum);
  const FemSolution las_star = interpolate_solution(ctx.las, ctx.hdum);
  if (spec.kind == ProblemKind::Poisson) {
    ctx.fine_error = l1_relative_error(las_star, ctx.has);
  } else {
    ElasticityProblem ep;
    ctx.fine_error = energy_error(las_star, ctx.has, as_elasticity(spec, ep));
  }
  ctx.coarse_error = project_error_to_coarse(ctx.fine_error, ctx.ldum);
  return ctx;
}

std::vector<float> problem_samples(const ProblemSpec& spec, const PipelineOptions& opts, ProblemRecord& record) {
  const ProblemContext ctx = prepare_problem(spec, opts);
  const Calibration cal = calibrate_K(spec.polygon, ctx.coarse_error, opts.target_elements);
  const TriMesh& ldum = *ctx.ldum;
  const int width = feature_width(spec.kind);
  std::vector<float> rows;
  rows.reserve(ldum.element_count() * static_cast<std::size_t>(width + 1));
  std::vector<double> f;
  for (std::size_t e = 0; e < ldum.element_count(); ++e) {
    f.clear();
    append_features(spec, ldum.element_centroid(e), f);
    f.push_back(std::log(cal.field.bounds[e]));
    for (double v : f) {
      if (!std::isfinite(v)) throw Error(ErrorCode::DegenerateSolution, "non-finite feature or target");
      rows.push_back(static_cast<float>(v));
    }
  }
  record.ldum_elements = ldum.element_count();
  record.hdum_elements = ctx.hdum->element_count();
  record.refined_elements = cal.mesh.element_count();
  record.K = cal.K;
  record.samples = ldum.element_count();
  return rows;
}

Normalization compute_normalization(const std::vector<float>& rows, int feature_width) {
  const std::size_t w = static_cast<std::size_t>(feature_width) + 1;
  const std::size_t n = rows.size() / w;
  std::vector<double> mean(w, 0.0), sq(w, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < w; ++c) mean[c] += rows[r * w + c];
  for (auto& m : mean) m /= std::max<std::size_t>(n, 1);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      const double d = rows[r * w + c] - mean[c];
      sq[c] += d * d;
    }
  Normalization norm;
  for (std::size_t c = 0; c < w; ++c) {
    double sd = n > 1 ? std::sqrt(sq[c] / static_cast<double>(n)) : 0.0;
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean[c])))) sd = 1.0;
    if (c + 1 < w) {
      norm.feature_mean.push_back(mean[c]);
      norm.feature_scale.push_back(sd);
    } else {
      norm.target_mean = mean[c];
      norm.target_scale = sd;
    }
  }
  return norm;
}

Dataset generate_training_data(const std::vector<ProblemSpec>& problems, const GenerateOptions& opts) {
  if (problems.empty()) throw Error(ErrorCode::InvalidArgument, "no problems to generate");
  const ProblemKind kind = problems.front().kind;
  for (const auto& p : problems)
    if (p.kind != kind) throw Error(ErrorCode::InvalidArgument, "problems of mixed kinds");
  if (!opts.parts_dir.empty()) std::filesystem::create_directories(opts.parts_dir);

  const int n = static_cast<int>(problems.size());
  std::vector<ProblemRecord> records(problems.size());
  std::vector<std::vector<float>> rows(problems.size());

#pragma omp parallel for schedule(dynamic, 1) num_threads(std::max(1, opts.threads))
  for (int i = 0; i < n; ++i) {
    const ProblemSpec& spec = problems[static_cast<std::size_t>(i)];
    ProblemRecord& rec = records[static_cast<std::size_t>(i)];
    auto& out = rows[static_cast<std::size_t>(i)];
    const std::string part = opts.parts_dir.empty() ? std::string() : part_path(opts.parts_dir, spec.id);
    if (part.empty() || !load_part(part, spec, rec, out)) {
      const auto t0 = Clock::now();
      rec = ProblemRecord{};
      rec.id = spec.id;
      rec.seed = spec.seed;
      try {
        out = problem_samples(spec, opts.pipeline, rec);
        rec.ok = true;
      } catch (const std::exception& e) {
        out.clear();
        rec.ok = false;
        rec.error = e.what();
      }
      rec.seconds = elapsed_ms(t0) / 1000.0;
      if (!part.empty()) save_part(part, rec, out);
    }
    if (opts.progress) {
#pragma omp critical(meshforge_progress)
      opts.progress(rec);
    }
  }

  Dataset data;
  data.kind = kind;
  data.feature_width = feature_width(kind);
  nlohmann::json recs = nlohmann::json::array();
  std::size_t failed = 0;
  for (std::size_t i = 0; i < problems.size(); ++i) {
    recs.push_back(record_json(records[i]));
    if (!records[i].ok) {
      ++failed;
      continue;
    }
    data.rows.insert(data.rows.end(), rows[i].begin(), rows[i].end());
  }
  data.norm = compute_normalization(data.rows, data.feature_width);
  data.manifest = {{"kind", to_string(kind)},
                   {"problems", recs},
                   {"problem_count", problems.size()},
                   {"failed", failed},
                   {"sample_count", data.sample_count()},
                   {"ldum_elements", opts.pipeline.ldum_elements},
                   {"hdum_refinement", opts.pipeline.hdum_refinement},
                   {"target_elements", opts.pipeline.target_elements}};
  return data;
}

void write_dataset(const std::string& path, const Dataset& data) {
  nlohmann::json header{{"version", kDatasetVersion},
                        {"kind", to_string(data.kind)},
                        {"feature_width", data.feature_width},
                        {"sample_count", data.sample_count()},
                        {"normalization",
                         {{"feature_mean", data.norm.feature_mean},
                          {"feature_scale", data.norm.feature_scale},
                          {"target_mean", data.norm.target_mean},
                          {"target_scale", data.norm.target_scale}}}};
  const std::string h = header.dump();
  std::string out(kDataMagic, kMagicLen);
  put_u64(out, h.size());
  out += h;
  out.reserve(out.size() + data.rows.size() * 4 + 4096);
  for (float f : data.rows) put_f32(out, f);
  const std::uint64_t manifest_offset = out.size();
  out += data.manifest.dump();
  put_u64(out, manifest_offset);
  spit(path, out);
}

Dataset read_dataset(const std::string& path) {
  const std::string bytes = slurp(path);
  if (bytes.size() < kMagicLen + 16 || bytes.compare(0, kMagicLen, kDataMagic) != 0)
    throw Error(ErrorCode::FormatError, path + " is not a dataset file");
  Reader rd{bytes, kMagicLen, "dataset"};
  Dataset d;
  std::size_t count = 0;
  try {
    const auto header = nlohmann::json::parse(rd.bytes(rd.u64()));
    if (header.at("version").get<int>() != kDatasetVersion)
      throw Error(ErrorCode::FormatError, "unsupported dataset version " + header.at("version").dump());
    d.kind = kind_from_string(header.at("kind").get<std::string>());
    d.feature_width = header.at("feature_width").get<int>();
    count = header.at("sample_count").get<std::size_t>();
    const auto& nm = header.at("normalization");
    d.norm.feature_mean = nm.at("feature_mean").get<std::vector<double>>();
    d.norm.feature_scale = nm.at("feature_scale").get<std::vector<double>>();
    d.norm.target_mean = nm.at("target_mean").get<double>();
    d.norm.target_scale = nm.at("target_scale").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("bad dataset header: ") + e.what());
  }
  if (d.feature_width != feature_width(d.kind)) throw Error(ErrorCode::FormatError, "feature width does not match kind");
  const std::size_t n = count * static_cast<std::size_t>(d.feature_width + 1);
  rd.need(n * 4 + 8);
  d.rows.resize(n);
  for (auto& f : d.rows) f = rd.f32();
  const std::size_t manifest_offset = rd.pos;
  Reader tail{bytes, bytes.size() - 8, "dataset"};
  if (tail.u64() != manifest_offset) throw Error(ErrorCode::FormatError, "dataset manifest offset mismatch");
  try {
    d.manifest = nlohmann::json::parse(bytes.substr(manifest_offset, bytes.size() - 8 - manifest_offset));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("bad dataset manifest: ") + e.what());
  }
  return d;
}

std::uint64_t file_checksum(const std::string& path) { return checksum(slurp(path)); }

TrainedModel train_model(const Dataset& data, const std::string& arch_name, const TrainConfig& config) {
  const std::size_t w = static_cast<std::size_t>(data.feature_width);
  const std::size_t n = data.sample_count();
  std::vector<double> x(n * w), y(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < w; ++c) x[r * w + c] = data.rows[r * (w + 1) + c];
    y[r] = (data.rows[r * (w + 1) + w] - data.norm.target_mean) / data.norm.target_scale;
  }
  data.norm.apply_features(x);
  TrainedModel out;
  out.model.arch = architecture_preset(arch_name, data.feature_width);
  TrainResult res = train(out.model.arch, x, y, config);
  out.model.params = std::move(res.params);
  out.model.norm = data.norm;
  out.model.seed = config.seed;
  out.model.kind = to_string(data.kind);
  out.model.epochs = config.epochs;
  out.loss_history = std::move(res.loss_history);
  return out;
}

std::vector<double> predict_bounds(const ProblemSpec& spec, const Model& model, const TriMesh& ldum,
                                   double* predict_ms) {
  if (model.kind != to_string(spec.kind))
    throw Error(ErrorCode::InvalidArgument, "model was trained for " + model.kind + " problems");
  if (model.arch.input_dim != feature_width(spec.kind)) throw Error(ErrorCode::ShapeMismatch, "model input width");
  const auto t0 = Clock::now();
  std::vector<double> x;
  x.reserve(ldum.element_count() * static_cast<std::size_t>(model.arch.input_dim));
  for (std::size_t e = 0; e < ldum.element_count(); ++e) append_features(spec, ldum.element_centroid(e), x);
  auto y = predict_log_area(model, x, ldum.element_count());
  for (double& v : y) v = std::exp(v);
  if (predict_ms) *predict_ms = elapsed_ms(t0);
  return y;
}

Calibration calibrate_relative_bounds(const Polygon& poly, const TriMesh& ldum, const std::vector<double>& shape,
                                      std::size_t target_elements, const CalibrationOptions& cal) {
  if (shape.size() != ldum.element_count()) throw Error(ErrorCode::ShapeMismatch, "one bound per LDUM element");
  double density = 0.0;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (!(shape[i] > 0.0) || !std::isfinite(shape[i]))
      throw Error(ErrorCode::CalibrationFailure, "predicted area bounds must be positive and finite");
    density += ldum.element_area(i) / shape[i];
  }
  // Refined elements average about two thirds of their bound.
  const double K0 = 1.5 * density / static_cast<double>(target_elements);
  auto bounds_for = [&](double K) {
    AreaBoundField f{ldum, std::vector<double>(shape.size())};
    for (std::size_t i = 0; i < shape.size(); ++i) f.bounds[i] = std::min(K * shape[i], 4.0 * ldum.element_area(i));
    return f;
  };
  return calibrate_scale(poly, bounds_for, K0, target_elements, cal);
}

Prediction predict_mesh(const ProblemSpec& spec, const Model& model, std::size_t target_elements,
                        const PipelineOptions& opts, const CalibrationOptions& cal) {
  const MeshPtr ldum = build_ldum(spec.polygon, opts);
  Prediction p;
  p.bounds = predict_bounds(spec, model, *ldum, &p.predict_ms);
  Calibration c = calibrate_relative_bounds(spec.polygon, *ldum, p.bounds, target_elements, cal);
  p.K = c.K;
  p.mesh = std::move(c.mesh);
  return p;
}

TriMesh strategy_mesh(const ProblemContext& ctx, const std::string& strategy, const Model* model,
                      const EvaluateOptions& opts, double* predict_ms) {
  const std::size_t target = opts.pipeline.target_elements;
  const Polygon& poly = ctx.spec.polygon;
  if (predict_ms) *predict_ms = 0.0;
  if (strategy == "uniform") {
    CountedMesh c = triangulate_uniform_to_count(poly, target, opts.calibration.rel_tol, opts.calibration.mesh);
    const double rel = std::abs(static_cast<double>(c.mesh.element_count()) - static_cast<double>(target)) /
                       static_cast<double>(target);
    if (rel > opts.calibration.hard_tol)
      throw Error(ErrorCode::CalibrationFailure, "uniform mesh missed the element target");
    return std::move(c.mesh);
  }
  if (strategy == "meshingnet" || strategy == "model") {
    if (!model) throw Error(ErrorCode::InvalidArgument, "the meshingnet strategy needs a model");
    const auto shape = predict_bounds(ctx.spec, *model, *ctx.ldum, predict_ms);
    return calibrate_relative_bounds(poly, *ctx.ldum, shape, target, opts.calibration).mesh;
  }
  if (strategy == "zz") {
    const auto t0 = Clock::now();
    ElementErrorField zz;
    if (ctx.spec.kind == ProblemKind::Poisson) {
      zz = zz_error(ctx.las);
    } else {
      ElasticityProblem ep;
      zz = zz_error(ctx.las, as_elasticity(ctx.spec, ep));
    }
    if (predict_ms) *predict_ms = elapsed_ms(t0);
    return calibrate_K(poly, zz, target, 1.0, opts.calibration).mesh;
  }
  if (strategy == "oracle") return calibrate_K(poly, ctx.coarse_error, target, 1.0, opts.calibration).mesh;
  throw Error(ErrorCode::InvalidArgument, "unknown strategy '" + strategy + "'");
}

std::vector<EvaluationRecord> evaluate_problem(const ProblemContext& ctx, const Model* model,
                                               const EvaluateOptions& opts) {
  std::vector<EvaluationRecord> out;
  ElasticityProblem ep;
  double has_energy = 0.0;
  if (ctx.spec.kind == ProblemKind::Elasticity) has_energy = potential_energy(ctx.has, as_elasticity(ctx.spec, ep));
  for (const std::string& s : opts.strategies) {
    EvaluationRecord r;
    r.problem_id = ctx.spec.id;
    r.strategy = s;
    const MeshPtr mesh = share(strategy_mesh(ctx, s, model, opts, &r.predict_ms));
    r.elements = mesh->element_count();
    const FemSolution sol = solve_problem(ctx.spec, mesh);
    if (ctx.spec.kind == ProblemKind::Poisson) {
      r.score = area_weighted_mean(l1_relative_error(interpolate_solution(sol, ctx.hdum), ctx.has));
    } else {
      r.energy = potential_energy(sol, ep);
      r.has_energy = has_energy;
      r.score = r.energy - has_energy;
    }
    out.push_back(r);
  }
  return out;
}

EvaluationResult evaluate(const std::vector<ProblemSpec>& problems, const Model* model, const EvaluateOptions& opts) {
  const int n = static_cast<int>(problems.size());
  std::vector<std::vector<EvaluationRecord>> per(problems.size());
  std::vector<std::string> errors(problems.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(std::max(1, opts.threads))
  for (int i = 0; i < n; ++i) {
    const ProblemSpec& spec = problems[static_cast<std::size_t>(i)];
    std::string msg;
    try {
      const ProblemContext ctx = prepare_problem(spec, opts.pipeline);
      per[static_cast<std::size_t>(i)] = evaluate_problem(ctx, model, opts);
      std::ostringstream os;
      for (const auto& r : per[static_cast<std::size_t>(i)]) os << r.strategy << '=' << r.score << ' ';
      msg = os.str();
    } catch (const std::exception& e) {
      per[static_cast<std::size_t>(i)].clear();
      errors[static_cast<std::size_t>(i)] = e.what();
      msg = std::string("failed: ") + e.what();
    }
    if (opts.progress) {
#pragma omp critical(meshforge_progress)
      opts.progress(spec.id, msg);
    }
  }
  EvaluationResult res;
  for (std::size_t i = 0; i < problems.size(); ++i) {
    if (!errors[i].empty()) {
      res.failures.emplace_back(problems[i].id, errors[i]);
      continue;
    }
    res.records.insert(res.records.end(), per[i].begin(), per[i].end());
  }
  return res;
}

}  // namespace meshforge
