#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "meshforge/error.hpp"
#include "meshforge/report.hpp"

using namespace meshforge;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream is(path);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::size_t count(const std::string& text, const std::string& what) {
  std::size_t n = 0;
  for (auto p = text.find(what); p != std::string::npos; p = text.find(what, p + 1)) ++n;
  return n;
}

std::vector<EvaluationRecord> fake_records(std::size_t problems, bool elasticity) {
  std::vector<EvaluationRecord> out;
  for (std::size_t i = 0; i < problems; ++i)
    for (std::size_t s = 0; s < kStrategies.size(); ++s) {
      EvaluationRecord r;
      r.problem_id = static_cast<int>(i);
      r.strategy = kStrategies[s];
      r.elements = 4000 + i + s;
      // uniform worst, then zz, meshingnet, oracle
      const double factor[] = {1.0, 0.6, 0.8, 0.5};
      r.score = (0.001 + 0.0001 * static_cast<double>(i)) * factor[s] + 1e-17 * static_cast<double>(i);
      r.predict_ms = s == 1 ? 2.5 : 0.0;
      if (elasticity) {
        r.has_energy = -1000.0 - static_cast<double>(i);
        r.score = 4.0 * factor[s] - (s == 3 ? 3.0 : 0.0);
        r.energy = r.has_energy + r.score;
      }
      out.push_back(r);
    }
  return out;
}

}  // namespace

TEST_CASE("histogram binning") {
  const Histogram h = poisson_error_histogram({0.0, 0.0004999, 0.0005, 0.0012, 0.0029999, 0.003, 0.01, -1e-9});
  REQUIRE(h.edges.size() == 7);
  for (std::size_t i = 0; i < h.edges.size(); ++i) CHECK(h.edges[i] == doctest::Approx(0.0005 * static_cast<double>(i)));
  CHECK(h.counts == std::vector<std::size_t>{2, 1, 1, 0, 0, 1});
  CHECK(h.overflow == 2);
  CHECK(h.underflow == 1);
  CHECK(h.show_overflow);

  const Histogram g = energy_gap_histogram({-0.5, 0.0, 0.05, 0.15, 0.59, 0.6, 3.0});
  REQUIRE(g.edges.size() == 7);
  CHECK(g.edges.back() == doctest::Approx(0.6));
  CHECK(g.counts == std::vector<std::size_t>{2, 1, 0, 0, 0, 1});
  CHECK(g.overflow == 2);  // gaps >= 0.6 land in the overflow bar
  CHECK(g.underflow == 1);
  CHECK(g.show_underflow);

  const Histogram m = make_histogram({1, 2, 3}, 0, 4, 1);
  CHECK(m.counts == std::vector<std::size_t>{0, 1, 1, 1});
}

TEST_CASE("histogram SVG") {
  const Histogram a = poisson_error_histogram({0.0001, 0.0006, 0.0007, 0.02});
  const Histogram b = poisson_error_histogram({0.0001});
  const std::string svg = svg_histogram("errors", "L1 error", {{"uniform", a}, {"guided", b}}, 4);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  // six bins plus the overflow bar, per series
  CHECK(count(svg, "class=\"bar\"") == 14);
  CHECK(svg.find("data-series=\"uniform\" data-bin=\"0.0005-0.0010\" data-count=\"2\"") != std::string::npos);
  CHECK(svg.find("&gt;=") != std::string::npos);
  CHECK(svg.find("guided") != std::string::npos);
  CHECK(svg.find("0.0005") != std::string::npos);
}

TEST_CASE("loss curves") {
  const std::string svg = svg_loss_curves("loss", {{"fcn", {1.0, 0.5, 0.1}}, {"resnet2", {0.8, 0.2, 0.05}}});
  CHECK(count(svg, "<polyline") == 2);
  CHECK(svg.find("resnet2") != std::string::npos);
  const fs::path dir = fs::temp_directory_path() / "meshforge_test_loss";
  fs::create_directories(dir);
  const std::string p = (dir / "loss.csv").string();
  const std::vector<double> loss{0.5, 0.25, 0.125000000001};
  write_loss_csv(p, loss);
  const std::string text = slurp(p);
  CHECK(text.rfind("epoch,loss\n", 0) == 0);
  CHECK(count(text, "\n") == 4);  // header plus one row per epoch
  CHECK(read_loss_csv(p) == loss);
  fs::remove_all(dir);
}

TEST_CASE("evaluation CSV") {
  const fs::path dir = fs::temp_directory_path() / "meshforge_test_csv";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto recs = fake_records(5, true);
  const std::string csv = (dir / "evaluation.csv").string(), en = (dir / "energies.csv").string();
  write_evaluation_csv(csv, recs);
  write_energy_csv(en, recs);
  const std::string text = slurp(csv);
  CHECK(text.rfind("problem_id,strategy,elements,score,predict_ms\n", 0) == 0);
  CHECK(count(text, "\n") == 1 + 5 * kStrategies.size());
  auto back = read_evaluation_csv(csv);
  REQUIRE(back.size() == recs.size());
  merge_energy_csv(en, back);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(back[i].problem_id == recs[i].problem_id);
    CHECK(back[i].strategy == recs[i].strategy);
    CHECK(back[i].elements == recs[i].elements);
    CHECK(back[i].score == recs[i].score);  // full precision
    CHECK(back[i].energy == recs[i].energy);
    CHECK(back[i].has_energy == recs[i].has_energy);
  }
  std::ofstream(dir / "bad.csv") << "problem_id,strategy,elements,score,predict_ms\n1,uniform,x,0.1,0\n";
  CHECK_THROWS_AS(read_evaluation_csv((dir / "bad.csv").string()), Error);
  fs::remove_all(dir);
}

TEST_CASE("summaries") {
  SUBCASE("poisson") {
    const EvaluationSummary s = summarize(ProblemKind::Poisson, fake_records(4, false));
    REQUIRE(s.strategies.size() == 4);
    const StrategySummary* u = s.find("uniform");
    const StrategySummary* m = s.find("meshingnet");
    REQUIRE(u);
    REQUIRE(m);
    CHECK(u->problems == 4);
    CHECK(u->mean_score == doctest::Approx(0.00115));
    CHECK(u->median_score == doctest::Approx(0.00115));
    CHECK(m->improved_over_uniform == 1.0);
    CHECK(u->improved_over_uniform == 0.0);
    CHECK(m->mean_predict_ms == 2.5);
    CHECK(s.find("nothing") == nullptr);
    const auto j = summary_json(s);
    CHECK(j.at("strategies").at("oracle").contains("note"));
    const std::string md = summary_markdown(s);
    CHECK(md.find("oracle (reference)") != std::string::npos);
  }
  SUBCASE("elasticity") {
    const EvaluationSummary s = summarize(ProblemKind::Elasticity, fake_records(3, true));
    CHECK(s.mean_has_energy == doctest::Approx(-1001.0));
    const StrategySummary* u = s.find("uniform");
    REQUIRE(u);
    CHECK(u->mean_energy == doctest::Approx(-1001.0 + 4.0));
    CHECK(u->mean_score == doctest::Approx(4.0));
    const double expect = (400.0 / 1000 + 400.0 / 1001 + 400.0 / 1002) / 3;
    CHECK(u->mean_relative_gap_percent == doctest::Approx(expect));
    CHECK(s.find("oracle")->mean_score == doctest::Approx(-1.0));
  }
}

TEST_CASE("report directory") {
  const fs::path dir = fs::temp_directory_path() / "meshforge_test_report";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto files = write_report(dir.string(), ProblemKind::Elasticity, fake_records(6, true));
  CHECK(fs::exists(dir / "energy_gap_histogram.svg"));
  CHECK(fs::exists(dir / "summary.json"));
  CHECK(fs::exists(dir / "summary.md"));
  CHECK(files.size() >= 3);
  const std::string svg = slurp((dir / "energy_gap_histogram.svg").string());
  // every oracle gap is negative
  CHECK(svg.find("data-bin=\"&lt; 0.0\" data-count=\"6\"") != std::string::npos);
  CHECK(svg.find("data-bin=\"&gt;= 0.6\"") != std::string::npos);
  const auto j = nlohmann::json::parse(slurp((dir / "summary.json").string()));
  CHECK(j.at("kind") == "elasticity");
  fs::remove_all(dir);
}
