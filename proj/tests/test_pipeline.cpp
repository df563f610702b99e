#include <doctest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "meshforge/error.hpp"
#include "meshforge/pipeline.hpp"

using namespace meshforge;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("meshforge_test_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& f) const { return (path / f).string(); }
};

std::string read_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

void write_bytes(const std::string& path, const std::string& s) {
  std::ofstream os(path, std::ios::binary);
  os << s;
}

PipelineOptions small_options() {
  PipelineOptions o;
  o.ldum_elements = 250;
  o.hdum_refinement = 8.0;
  o.target_elements = 1000;
  return o;
}

// A model whose output ignores its input: every bound is exp(log_area).
Model constant_model(ProblemKind kind, double log_area) {
  Model m;
  m.arch = fcn_architecture(feature_width(kind));
  m.params = layout_params(m.arch);
  m.norm.feature_mean.assign(static_cast<std::size_t>(feature_width(kind)), 0.0);
  m.norm.feature_scale.assign(static_cast<std::size_t>(feature_width(kind)), 1.0);
  m.norm.target_mean = log_area;
  m.kind = to_string(kind);
  return m;
}

double area_cv(const TriMesh& m) {
  double s = 0, s2 = 0;
  const double n = static_cast<double>(m.element_count());
  for (std::size_t e = 0; e < m.element_count(); ++e) {
    s += m.element_area(e);
    s2 += m.element_area(e) * m.element_area(e);
  }
  const double mean = s / n;
  return std::sqrt(s2 / n - mean * mean) / mean;
}

}  // namespace

TEST_CASE("problem sampling") {
  const auto a = sample_problems(ProblemKind::Elasticity, 300, 9);
  const auto b = sample_problems(ProblemKind::Elasticity, 300, 9);
  std::set<int> edge_counts;
  std::set<std::uint64_t> seeds;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const ProblemSpec& s = a[i];
    CHECK(s.id == static_cast<int>(i));
    CHECK(s.polygon.vertices == b[i].polygon.vertices);
    CHECK(s.traction == b[i].traction);
    edge_counts.insert(s.polygon.edge_count);
    seeds.insert(s.seed);
    CHECK(s.traction > 0.0);
    CHECK(s.traction <= 1000.0);
    CHECK(s.density > 0.0);
    CHECK(s.density <= 1.0);
    CHECK(s.poisson_ratio >= 0.0);
    CHECK(s.poisson_ratio < 0.48);
    REQUIRE(s.bcs.size() == s.polygon.size());
    CHECK(s.bcs[0] == BoundaryCondition::Fixed);
    CHECK(s.bcs[3] == BoundaryCondition::Loaded);
    CHECK(s.bcs[4] == BoundaryCondition::Loaded);
    for (std::size_t e : {1u, 2u, 5u, 6u, 7u}) CHECK(s.bcs[e] == BoundaryCondition::Free);
  }
  CHECK(edge_counts == std::set<int>{6, 7, 8});
  CHECK(seeds.size() == a.size());
  CHECK(sample_problems(ProblemKind::Elasticity, 5, 10)[0].polygon.vertices != a[0].polygon.vertices);

  for (const auto& p : sample_problems(ProblemKind::Poisson, 50, 3)) {
    CHECK(p.polygon.size() == 8);
    CHECK(p.bcs.empty());
  }
  CHECK(kind_from_string("poisson") == ProblemKind::Poisson);
  CHECK(kind_from_string("elasticity") == ProblemKind::Elasticity);
  CHECK_THROWS_AS(kind_from_string("heat"), Error);
}

TEST_CASE("feature vectors") {
  CHECK(feature_width(ProblemKind::Poisson) == 24);
  CHECK(feature_width(ProblemKind::Elasticity) == 27);
  const ProblemSpec e = sample_problem(ProblemKind::Elasticity, 44);
  ProblemSpec p = e;
  p.kind = ProblemKind::Poisson;
  const Point2 q = polygon_centroid(e.polygon);
  const auto fe = build_features(e, q), fp = build_features(p, q);
  REQUIRE(fe.size() == 27);
  REQUIRE(fp.size() == 24);
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(fe[2 * i] == e.polygon.vertices[i].x);
    CHECK(fe[2 * i + 1] == e.polygon.vertices[i].y);
  }
  for (std::size_t i = 0; i < 24; ++i) CHECK(fe[i] == fp[i]);
  const auto w = mean_value_coordinates(e.polygon, q);
  double sum = 0;
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(fe[16 + i] == w[i]);
    sum += fe[16 + i];
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(fe[24] == e.traction);
  CHECK(fe[25] == e.density);
  CHECK(fe[26] == e.poisson_ratio);
}

TEST_CASE("problem files") {
  TempDir dir("problems");
  const auto probs = sample_problems(ProblemKind::Elasticity, 7, 1);
  write_problems(dir / "p.jsonl", probs);
  const auto back = read_problems(dir / "p.jsonl");
  REQUIRE(back.size() == probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    CHECK(back[i].id == probs[i].id);
    CHECK(back[i].seed == probs[i].seed);
    CHECK(back[i].polygon.vertices == probs[i].polygon.vertices);
    CHECK(back[i].bcs == probs[i].bcs);
    CHECK(back[i].traction == probs[i].traction);
    CHECK(back[i].density == probs[i].density);
    CHECK(back[i].poisson_ratio == probs[i].poisson_ratio);
  }
  std::string text = read_bytes(dir / "p.jsonl");
  text += "{not json\n";
  write_bytes(dir / "bad.jsonl", text);
  try {
    read_problems(dir / "bad.jsonl");
    FAIL("expected FormatError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::FormatError);
    CHECK(std::string(e.what()).find(":8:") != std::string::npos);
  }
}

TEST_CASE("training data generation") {
  TempDir dir("dataset");
  auto probs = sample_problems(ProblemKind::Poisson, 4, 5);
  GenerateOptions g;
  g.pipeline = small_options();
  const Dataset d = generate_training_data(probs, g);

  SUBCASE("one finite sample per LDUM element") {
    CHECK(d.feature_width == 24);
    std::size_t total = 0;
    for (const auto& r : d.manifest.at("problems")) {
      CHECK(r.at("ok").get<bool>());
      const auto n = r.at("samples").get<std::size_t>();
      CHECK(n == r.at("ldum_elements").get<std::size_t>());
      CHECK(n > 200);
      CHECK(n < 300);
      total += n;
    }
    CHECK(total == d.sample_count());
    for (float f : d.rows) CHECK(std::isfinite(f));
    // label column is log(area); areas are below the polygon area
    for (std::size_t r = 0; r < d.sample_count(); ++r) CHECK(std::exp(d.rows[r * 25 + 24]) < 200.0 * 200.0 * 4);
  }

  SUBCASE("file round trip and determinism") {
    write_dataset(dir / "a.bin", d);
    const Dataset r = read_dataset(dir / "a.bin");
    CHECK(r.rows == d.rows);
    CHECK(r.kind == d.kind);
    CHECK(r.norm.feature_mean == d.norm.feature_mean);
    CHECK(r.norm.target_scale == d.norm.target_scale);
    CHECK(r.manifest == d.manifest);
    GenerateOptions g2 = g;
    g2.threads = 3;
    write_dataset(dir / "b.bin", generate_training_data(probs, g2));
    CHECK(file_checksum(dir / "a.bin") == file_checksum(dir / "b.bin"));
    CHECK(read_bytes(dir / "a.bin") == read_bytes(dir / "b.bin"));
  }

  SUBCASE("damaged files are rejected") {
    write_dataset(dir / "a.bin", d);
    const std::string bytes = read_bytes(dir / "a.bin");
    auto rejects = [&](const std::string& bad) {
      write_bytes(dir / "bad.bin", bad);
      try {
        read_dataset(dir / "bad.bin");
        return false;
      } catch (const Error& e) {
        return e.code() == ErrorCode::FormatError;
      }
    };
    CHECK(rejects("MSHNET1" + bytes.substr(7)));
    CHECK(rejects(bytes.substr(0, bytes.size() / 2)));
    CHECK(rejects(bytes.substr(0, bytes.size() - 3)));
    std::string v = bytes;
    const auto at = v.find("\"version\":1");
    REQUIRE(at != std::string::npos);
    v[at + 10] = '7';
    CHECK(rejects(v));
    CHECK_THROWS_AS(read_dataset(dir / "missing.bin"), Error);
  }

  SUBCASE("per-problem parts are reused on resume") {
    GenerateOptions gp = g;
    gp.parts_dir = dir / "parts";
    const Dataset first = generate_training_data(probs, gp);
    CHECK(first.rows == d.rows);
    CHECK(fs::exists(dir / "parts/problem_000002.part"));
    // Same id and seed: the stored part wins even though the geometry changed.
    auto altered = probs;
    altered[2].polygon = generate_random_polygon(999, 8);
    CHECK(generate_training_data(altered, gp).rows == d.rows);
    // A damaged part is recomputed.
    std::string part = read_bytes(dir / "parts/problem_000002.part");
    part[part.size() / 2] ^= 0x20;
    write_bytes(dir / "parts/problem_000002.part", part);
    CHECK(generate_training_data(probs, gp).rows == d.rows);
    CHECK(generate_training_data(altered, gp).rows == d.rows);
    // A different seed for the same id invalidates the part.
    fs::remove(dir / "parts/problem_000002.part");
    CHECK(generate_training_data(altered, gp).rows != d.rows);
  }

  SUBCASE("failing problems are quarantined") {
    auto bad = probs;
    bad[1].polygon.vertices.resize(5);
    std::vector<ProblemRecord> seen;
    GenerateOptions gq = g;
    gq.progress = [&](const ProblemRecord& r) { seen.push_back(r); };
    const Dataset q = generate_training_data(bad, gq);
    CHECK(seen.size() == 4);
    CHECK(q.manifest.at("failed") == 1);
    const auto& r1 = q.manifest.at("problems").at(1);
    CHECK_FALSE(r1.at("ok").get<bool>());
    CHECK_FALSE(r1.at("error").get<std::string>().empty());
    const std::size_t lost = d.manifest.at("problems").at(1).at("samples").get<std::size_t>();
    CHECK(q.sample_count() == d.sample_count() - lost);
  }

  CHECK_THROWS_AS(generate_training_data({}, g), Error);
  probs.push_back(sample_problem(ProblemKind::Elasticity, 1));
  CHECK_THROWS_AS(generate_training_data(probs, g), Error);
}

TEST_CASE("normalization statistics") {
  // two samples of width 2: features (1, 5) and (3, 5), labels 0 and 2
  const std::vector<float> rows{1, 5, 0, 3, 5, 2};
  const Normalization n = compute_normalization(rows, 2);
  CHECK(n.feature_mean == std::vector<double>{2, 5});
  CHECK(n.feature_scale[0] == doctest::Approx(1.0));
  CHECK(n.feature_scale[1] == 1.0);  // constant column
  CHECK(n.target_mean == 1.0);
  CHECK(n.target_scale == doctest::Approx(1.0));
}

TEST_CASE("guided meshing with a model") {
  const ProblemSpec spec = sample_problem(ProblemKind::Poisson, 123);
  const Model flat = constant_model(ProblemKind::Poisson, std::log(7.0));

  SUBCASE("target 4000 lands in [3800, 4200]") {
    const Prediction p = predict_mesh(spec, flat, 4000);
    CHECK(p.mesh.element_count() >= 3800);
    CHECK(p.mesh.element_count() <= 4200);
    CHECK(p.predict_ms < 1000.0);
    CHECK(audit_mesh(p.mesh, spec.polygon).ok);
  }

  SUBCASE("a constant model gives an essentially uniform mesh") {
    const Prediction p = predict_mesh(spec, flat, 2000);
    const CountedMesh u = triangulate_uniform_to_count(spec.polygon, 2000, 0.05);
    const double np = static_cast<double>(p.mesh.element_count()), nu = static_cast<double>(u.mesh.element_count());
    CHECK(std::abs(np - nu) / nu < 0.1);
    CHECK(area_cv(p.mesh) < 1.25 * area_cv(u.mesh) + 0.05);
    for (double b : p.bounds) CHECK(b == doctest::Approx(7.0).epsilon(1e-12));
  }

  SUBCASE("model kind and width are checked") {
    const Model wrong = constant_model(ProblemKind::Elasticity, 0.0);
    CHECK_THROWS_AS(predict_mesh(spec, wrong, 1000), Error);
  }
}

TEST_CASE("evaluation of all strategies") {
  const auto probs = sample_problems(ProblemKind::Poisson, 3, 77);
  const Model flat = constant_model(ProblemKind::Poisson, 0.0);
  EvaluateOptions o;
  o.pipeline.target_elements = 1500;
  std::vector<int> progress;
  o.progress = [&](int id, const std::string&) { progress.push_back(id); };
  const EvaluationResult r = evaluate(probs, &flat, o);
  CHECK(r.failures.empty());
  REQUIRE(r.records.size() == probs.size() * kStrategies.size());
  CHECK(progress.size() == probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const EvaluationRecord* rec = &r.records[i * 4];
    std::size_t lo = SIZE_MAX, hi = 0;
    for (std::size_t s = 0; s < 4; ++s) {
      CHECK(rec[s].problem_id == probs[i].id);
      CHECK(rec[s].strategy == kStrategies[s]);
      CHECK(rec[s].score > 0.0);
      lo = std::min(lo, rec[s].elements);
      hi = std::max(hi, rec[s].elements);
    }
    CHECK(std::abs(static_cast<double>(rec[0].elements) - 1500.0) <= 75.0);
    // all strategies within a band of one another
    CHECK(static_cast<double>(hi - lo) <= 0.1 * 1500.0);
    // oracle beats uniform
    CHECK(rec[3].score < rec[0].score);
    // a constant model reproduces the uniform error closely
    CHECK(rec[1].score == doctest::Approx(rec[0].score).epsilon(0.1));
  }

  EvaluateOptions only;
  only.pipeline.target_elements = 1500;
  only.strategies = {"uniform", "oracle"};
  const EvaluationResult r2 = evaluate(probs, nullptr, only);
  REQUIRE(r2.records.size() == 6);
  CHECK(r2.records[0].score == r.records[0].score);  // deterministic
  CHECK(r2.records[1].score == r.records[3].score);

  // the model strategy needs a model; the whole problem is quarantined
  EvaluateOptions needs = only;
  needs.strategies = {"uniform", "meshingnet"};
  const EvaluationResult r3 = evaluate({probs[0]}, nullptr, needs);
  CHECK(r3.records.empty());
  REQUIRE(r3.failures.size() == 1);
  CHECK(r3.failures[0].first == probs[0].id);
}

TEST_CASE("elasticity evaluation records energies") {
  const auto probs = sample_problems(ProblemKind::Elasticity, 2, 31);
  EvaluateOptions o;
  o.pipeline.target_elements = 1500;
  o.strategies = {"uniform", "zz", "oracle"};
  const EvaluationResult r = evaluate(probs, nullptr, o);
  REQUIRE(r.failures.empty());
  REQUIRE(r.records.size() == 6);
  for (const auto& rec : r.records) {
    CHECK(rec.score == doctest::Approx(rec.energy - rec.has_energy));
    CHECK(std::isfinite(rec.energy));
    CHECK(rec.has_energy < 0.0);  // loads do positive work, so the minimum energy is negative
  }
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(r.records[i * 3].has_energy == r.records[i * 3 + 2].has_energy);
    CHECK(r.records[i * 3 + 2].score < r.records[i * 3].score);  // oracle below uniform
  }
}
