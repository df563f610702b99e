#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <omp.h>

#include "meshforge/pipeline.hpp"
#include "meshforge/report.hpp"

namespace fs = std::filesystem;
using namespace meshforge;

namespace {

enum class Level { Error = 0, Info = 1, Debug = 2 };

Level g_level = Level::Info;

void init_logging() {
  const char* env = std::getenv("MESHFORGE_LOG");
  if (!env) return;
  const std::string v = env;
  if (v == "error") g_level = Level::Error;
  else if (v == "debug") g_level = Level::Debug;
  else g_level = Level::Info;
}

// One "level=... event=... k=v ..." line per event on stderr.
void log(Level lvl, const std::string& event, const std::string& fields = {}) {
  if (lvl > g_level) return;
  static const char* names[] = {"error", "info", "debug"};
  std::cerr << "level=" << names[static_cast<int>(lvl)] << " event=" << event;
  if (!fields.empty()) std::cerr << ' ' << fields;
  std::cerr << '\n';
}

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string quote(const std::string& s) {
  if (s.find_first_of(" \t\"=") == std::string::npos && !s.empty()) return s;
  std::string o = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') o += '\\';
    o += c;
  }
  return o + "\"";
}

struct Config {
  std::vector<std::pair<std::string, std::string>> items;
  template <class T>
  Config& add(const std::string& k, const T& v) {
    std::ostringstream os;
    os << v;
    items.emplace_back(k, os.str());
    return *this;
  }
  void print(const std::string& cmd) const {
    std::cout << "config command=" << cmd;
    for (const auto& [k, v] : items) std::cout << ' ' << k << '=' << quote(v);
    std::cout << std::endl;
  }
};

void ensure_dir(const fs::path& dir, bool mkdirs) {
  if (dir.empty() || fs::is_directory(dir)) return;
  if (!mkdirs) throw Error(ErrorCode::InvalidArgument, "output directory " + dir.string() + " does not exist (use --mkdirs)");
  fs::create_directories(dir);
}

void ensure_parent(const std::string& file, bool mkdirs) { ensure_dir(fs::path(file).parent_path(), mkdirs); }

struct Common {
  std::optional<std::uint64_t> seed;
  std::string kind;
  std::string out;
  int threads = 1;
  bool mkdirs = false;
};

void add_common(CLI::App* app, Common& c, bool out_required) {
  app->add_option("--seed", c.seed, "master seed");
  app->add_option("--kind", c.kind, "problem kind")->check(CLI::IsMember({"poisson", "elasticity"}));
  auto* o = app->add_option("--out", c.out, "output path");
  if (out_required) o->required();
  app->add_option("--threads", c.threads, "problem-level threads")->check(CLI::PositiveNumber)->capture_default_str();
  app->add_flag("--mkdirs", c.mkdirs, "create missing output directories");
}

std::uint64_t need_seed(const Common& c) {
  if (!c.seed) throw UsageError("--seed is required");
  return *c.seed;
}

ProblemKind need_kind(const Common& c) {
  if (c.kind.empty()) throw UsageError("--kind is required");
  return kind_from_string(c.kind);
}

struct ProblemSource {
  std::string problems;
  std::size_t count = 0;
};

std::vector<ProblemSpec> load_or_sample(const Common& c, const ProblemSource& src, Config& cfg) {
  if (!src.problems.empty()) {
    cfg.add("problems", src.problems);
    auto p = read_problems(src.problems);
    if (p.empty()) throw UsageError("problem file " + src.problems + " is empty");
    if (!c.kind.empty() && to_string(p.front().kind) != c.kind)
      throw UsageError("--kind " + c.kind + " does not match the problem file");
    return p;
  }
  if (src.count == 0) throw UsageError("--count must be at least 1 (or pass --problems)");
  const ProblemKind kind = need_kind(c);
  const std::uint64_t seed = need_seed(c);
  cfg.add("count", src.count).add("seed", seed);
  return sample_problems(kind, src.count, seed);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string hex64(std::uint64_t x) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string t;
  while (std::getline(ss, t, sep))
    if (!t.empty()) out.push_back(t);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  init_logging();
  CLI::App app{"meshforge: learned area-bound prediction for 2D Delaunay meshing"};
  app.require_subcommand(1);

  // gen-problems
  Common gp;
  std::size_t gp_count = 0;
  auto* c_gp = app.add_subcommand("gen-problems", "sample random problems into a JSONL file");
  add_common(c_gp, gp, true);
  c_gp->add_option("--count", gp_count, "number of problems")->required();

  // gen-data
  Common gd;
  ProblemSource gd_src;
  PipelineOptions gd_pipe;
  std::string gd_parts;
  bool gd_keep_parts = false;
  auto* c_gd = app.add_subcommand("gen-data", "solve problems and write a training dataset");
  add_common(c_gd, gd, true);
  c_gd->add_option("--problems", gd_src.problems, "problem JSONL (otherwise sampled from --kind/--count/--seed)")
      ->check(CLI::ExistingFile);
  c_gd->add_option("--count", gd_src.count, "number of problems to sample");
  c_gd->add_option("--ldum-elements", gd_pipe.ldum_elements, "coarse mesh element count")->capture_default_str();
  c_gd->add_option("--hdum-refinement", gd_pipe.hdum_refinement, "HDUM area bound divisor")->capture_default_str();
  c_gd->add_option("--target", gd_pipe.target_elements, "element target used for labels")->capture_default_str();
  c_gd->add_option("--parts", gd_parts, "per-problem resume directory (default: <out>.parts)");
  c_gd->add_flag("--keep-parts", gd_keep_parts, "keep the resume directory after success");

  // train
  Common tr;
  std::string tr_data, tr_arch = "fcn", tr_loss;
  TrainConfig tr_cfg;
  auto* c_tr = app.add_subcommand("train", "train an area-bound predictor");
  add_common(c_tr, tr, true);
  c_tr->add_option("--data", tr_data, "dataset file")->required()->check(CLI::ExistingFile);
  c_tr->add_option("--arch", tr_arch, "network preset")->check(CLI::IsMember({"fcn", "resnet1", "resnet2"}))->capture_default_str();
  c_tr->add_option("--epochs", tr_cfg.epochs, "training epochs")->check(CLI::PositiveNumber)->capture_default_str();
  c_tr->add_option("--batch", tr_cfg.batch_size, "mini-batch size")->check(CLI::PositiveNumber)->capture_default_str();
  c_tr->add_option("--lr", tr_cfg.lr, "Adam learning rate")->check(CLI::PositiveNumber)->capture_default_str();
  c_tr->add_option("--loss", tr_loss, "loss CSV (default: <out>.loss.csv)");

  // mesh
  Common me;
  std::string me_problems, me_model, me_strategy = "model";
  int me_id = -1;
  EvaluateOptions me_opts;
  auto* c_me = app.add_subcommand("mesh", "mesh one problem and write .node/.ele files");
  add_common(c_me, me, true);
  c_me->add_option("--problems", me_problems, "problem JSONL")->required()->check(CLI::ExistingFile);
  c_me->add_option("--id", me_id, "problem id (default: first problem)");
  c_me->add_option("--model", me_model, "model file")->check(CLI::ExistingFile);
  c_me->add_option("--strategy", me_strategy, "mesh strategy")
      ->check(CLI::IsMember({"uniform", "zz", "oracle", "model"}))
      ->capture_default_str();
  c_me->add_option("--target", me_opts.pipeline.target_elements, "element target")->capture_default_str();

  // evaluate
  Common ev;
  ProblemSource ev_src;
  std::string ev_model, ev_strategies = "uniform,meshingnet,zz,oracle";
  EvaluateOptions ev_opts;
  auto* c_ev = app.add_subcommand("evaluate", "compare strategies on held-out problems");
  add_common(c_ev, ev, true);
  c_ev->add_option("--problems", ev_src.problems, "problem JSONL")->check(CLI::ExistingFile);
  c_ev->add_option("--count", ev_src.count, "number of problems to sample");
  c_ev->add_option("--model", ev_model, "model file")->check(CLI::ExistingFile);
  c_ev->add_option("--strategies", ev_strategies, "comma-separated strategies")->capture_default_str();
  c_ev->add_option("--target", ev_opts.pipeline.target_elements, "element target")->capture_default_str();

  // report
  Common rp;
  std::string rp_in;
  std::vector<std::string> rp_loss;
  auto* c_rp = app.add_subcommand("report", "re-render SVG and summaries from evaluation/loss CSVs");
  add_common(c_rp, rp, false);
  c_rp->add_option("--in", rp_in, "directory holding evaluation.csv")->check(CLI::ExistingDirectory);
  c_rp->add_option("--loss", rp_loss, "label=path.csv loss curves")->expected(1, -1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (c_gp->parsed()) {
      Config cfg;
      if (gp_count == 0) throw UsageError("--count must be at least 1");
      const ProblemKind kind = need_kind(gp);
      const std::uint64_t seed = need_seed(gp);
      cfg.add("kind", to_string(kind)).add("count", gp_count).add("seed", seed).add("threads", gp.threads).add("out", gp.out)
          .add("mkdirs", gp.mkdirs);
      cfg.print("gen-problems");
      ensure_parent(gp.out, gp.mkdirs);
      const auto problems = sample_problems(kind, gp_count, seed);
      write_problems(gp.out, problems);
      log(Level::Info, "done", "problems=" + std::to_string(problems.size()) + " out=" + quote(gp.out));
      std::cout << "result problems=" << problems.size() << " checksum=" << hex64(file_checksum(gp.out)) << std::endl;
      return 0;
    }

    if (c_gd->parsed()) {
      Config cfg;
      const auto problems = load_or_sample(gd, gd_src, cfg);
      if (gd_parts.empty()) gd_parts = gd.out + ".parts";
      cfg.add("kind", to_string(problems.front().kind))
          .add("out", gd.out)
          .add("threads", gd.threads)
          .add("ldum_elements", gd_pipe.ldum_elements)
          .add("hdum_refinement", gd_pipe.hdum_refinement)
          .add("target", gd_pipe.target_elements)
          .add("parts", gd_parts)
          .add("mkdirs", gd.mkdirs);
      cfg.print("gen-data");
      ensure_parent(gd.out, gd.mkdirs);
      const auto t0 = std::chrono::steady_clock::now();
      GenerateOptions go;
      go.pipeline = gd_pipe;
      go.threads = gd.threads;
      go.parts_dir = gd_parts;
      std::vector<std::pair<int, double>> timings;
      go.progress = [&](const ProblemRecord& r) {
        timings.emplace_back(r.id, r.seconds);
        std::ostringstream os;
        os << "id=" << r.id << " ok=" << (r.ok ? 1 : 0) << " samples=" << r.samples << " K=" << r.K
           << " refined=" << r.refined_elements << " seconds=" << r.seconds;
        if (!r.ok) os << " error=" << quote(r.error);
        log(r.ok ? Level::Info : Level::Error, "problem", os.str());
      };
      const Dataset data = generate_training_data(problems, go);
      if (data.sample_count() == 0) throw Error(ErrorCode::GenerationFailure, "every problem failed");
      write_dataset(gd.out, data);
      {
        std::sort(timings.begin(), timings.end());
        std::ofstream os(gd.out + ".timings.csv");
        os << "problem_id,seconds\n";
        for (const auto& [id, s] : timings) os << id << ',' << s << '\n';
      }
      if (!gd_keep_parts) fs::remove_all(gd_parts);
      std::cout << "result problems=" << problems.size() << " failed=" << data.manifest["failed"].get<std::size_t>()
                << " samples=" << data.sample_count() << " seconds=" << seconds_since(t0)
                << " checksum=" << hex64(file_checksum(gd.out)) << std::endl;
      return 0;
    }

    if (c_tr->parsed()) {
      Config cfg;
      tr_cfg.seed = need_seed(tr);
      if (tr_loss.empty()) tr_loss = tr.out + ".loss.csv";
      cfg.add("data", tr_data).add("arch", tr_arch).add("epochs", tr_cfg.epochs).add("batch", tr_cfg.batch_size)
          .add("lr", tr_cfg.lr).add("seed", tr_cfg.seed).add("threads", tr.threads).add("out", tr.out)
          .add("loss", tr_loss).add("mkdirs", tr.mkdirs);
      cfg.print("train");
      ensure_parent(tr.out, tr.mkdirs);
      ensure_parent(tr_loss, tr.mkdirs);
      omp_set_num_threads(tr.threads);
      const Dataset data = read_dataset(tr_data);
      if (!tr.kind.empty() && tr.kind != to_string(data.kind)) throw UsageError("--kind does not match the dataset");
      log(Level::Info, "dataset", "samples=" + std::to_string(data.sample_count()) + " kind=" + to_string(data.kind));
      const auto t0 = std::chrono::steady_clock::now();
      const TrainedModel tm = train_model(data, tr_arch, tr_cfg);
      for (std::size_t e = 0; e < tm.loss_history.size(); ++e)
        log(Level::Debug, "epoch", "epoch=" + std::to_string(e + 1) + " loss=" + std::to_string(tm.loss_history[e]));
      save_model(tr.out, tm.model);
      write_loss_csv(tr_loss, tm.loss_history);
      std::cout << "result parameters=" << tm.model.params.size() << " final_loss=" << tm.loss_history.back()
                << " seconds=" << seconds_since(t0) << " checksum=" << hex64(file_checksum(tr.out)) << std::endl;
      return 0;
    }

    if (c_me->parsed()) {
      Config cfg;
      const auto problems = read_problems(me_problems);
      if (problems.empty()) throw UsageError("problem file is empty");
      const ProblemSpec* spec = &problems.front();
      if (me_id >= 0) {
        spec = nullptr;
        for (const auto& p : problems)
          if (p.id == me_id) spec = &p;
        if (!spec) throw UsageError("no problem with id " + std::to_string(me_id));
      }
      if (me_strategy == "model" && me_model.empty()) throw UsageError("--strategy model needs --model");
      cfg.add("problems", me_problems).add("id", spec->id).add("strategy", me_strategy).add("model", me_model)
          .add("target", me_opts.pipeline.target_elements).add("threads", me.threads).add("out", me.out)
          .add("mkdirs", me.mkdirs);
      cfg.print("mesh");
      ensure_parent(me.out, me.mkdirs);
      std::optional<Model> model;
      if (!me_model.empty()) model = load_model(me_model);
      const auto t0 = std::chrono::steady_clock::now();
      TriMesh mesh;
      double ms = 0.0;
      if (me_strategy == "model") {
        Prediction p = predict_mesh(*spec, *model, me_opts.pipeline.target_elements, me_opts.pipeline, me_opts.calibration);
        mesh = std::move(p.mesh);
        ms = p.predict_ms;
      } else if (me_strategy == "uniform") {
        ProblemContext ctx;
        ctx.spec = *spec;
        mesh = strategy_mesh(ctx, "uniform", nullptr, me_opts, &ms);
      } else {
        const ProblemContext ctx = prepare_problem(*spec, me_opts.pipeline);
        mesh = strategy_mesh(ctx, me_strategy, nullptr, me_opts, &ms);
      }
      save_mesh(me.out, mesh);
      double min_angle = 180.0;
      for (std::size_t e = 0; e < mesh.element_count(); ++e) min_angle = std::min(min_angle, min_angle_deg(mesh, e));
      std::cout << "result elements=" << mesh.element_count() << " vertices=" << mesh.vertex_count()
                << " min_angle=" << min_angle << " predict_ms=" << ms << " seconds=" << seconds_since(t0)
                << " node=" << quote(me.out + ".node") << " ele=" << quote(me.out + ".ele") << std::endl;
      return 0;
    }

    if (c_ev->parsed()) {
      Config cfg;
      const auto problems = load_or_sample(ev, ev_src, cfg);
      const ProblemKind kind = problems.front().kind;
      ev_opts.strategies = split(ev_strategies, ',');
      if (ev_opts.strategies.empty()) throw UsageError("--strategies is empty");
      for (const auto& s : ev_opts.strategies)
        if (std::find(kStrategies.begin(), kStrategies.end(), s) == kStrategies.end())
          throw UsageError("unknown strategy '" + s + "'");
      const bool needs_model =
          std::find(ev_opts.strategies.begin(), ev_opts.strategies.end(), "meshingnet") != ev_opts.strategies.end();
      if (needs_model && ev_model.empty()) throw UsageError("the meshingnet strategy needs --model");
      ev_opts.threads = ev.threads;
      cfg.add("kind", to_string(kind)).add("model", ev_model).add("strategies", ev_strategies)
          .add("target", ev_opts.pipeline.target_elements).add("threads", ev.threads).add("out", ev.out)
          .add("mkdirs", ev.mkdirs);
      cfg.print("evaluate");
      ensure_dir(ev.out, ev.mkdirs);
      std::optional<Model> model;
      if (!ev_model.empty()) {
        model = load_model(ev_model);
        if (model->kind != to_string(kind)) throw UsageError("model was trained on " + model->kind + " problems");
      }
      ev_opts.progress = [](int id, const std::string& msg) {
        log(Level::Info, "problem", "id=" + std::to_string(id) + " result=" + quote(msg));
      };
      const auto t0 = std::chrono::steady_clock::now();
      const EvaluationResult res = evaluate(problems, model ? &*model : nullptr, ev_opts);
      for (const auto& [id, err] : res.failures) log(Level::Error, "quarantined", "id=" + std::to_string(id) + " error=" + quote(err));
      const std::string csv = (fs::path(ev.out) / "evaluation.csv").string();
      write_evaluation_csv(csv, res.records);
      if (kind == ProblemKind::Elasticity) write_energy_csv((fs::path(ev.out) / "energies.csv").string(), res.records);
      write_report(ev.out, kind, res.records);
      std::cout << summary_markdown(summarize(kind, res.records));
      std::cout << "result problems=" << problems.size() << " failed=" << res.failures.size()
                << " rows=" << res.records.size() << " seconds=" << seconds_since(t0) << " csv=" << quote(csv) << std::endl;
      return res.records.empty() ? 1 : 0;
    }

    if (c_rp->parsed()) {
      Config cfg;
      if (rp_in.empty() && rp_loss.empty()) throw UsageError("report needs --in and/or --loss");
      std::string out = rp.out.empty() ? rp_in : rp.out;
      if (out.empty()) throw UsageError("--out is required when only --loss is given");
      cfg.add("in", rp_in).add("kind", rp.kind).add("threads", rp.threads).add("out", out).add("mkdirs", rp.mkdirs);
      for (const auto& l : rp_loss) cfg.add("loss", l);
      cfg.print("report");
      ensure_dir(out, rp.mkdirs);
      std::vector<std::string> written;
      if (!rp_in.empty()) {
        const ProblemKind kind = need_kind(rp);
        auto records = read_evaluation_csv((fs::path(rp_in) / "evaluation.csv").string());
        const auto energies = fs::path(rp_in) / "energies.csv";
        if (kind == ProblemKind::Elasticity) {
          if (!fs::exists(energies)) throw Error(ErrorCode::FormatError, "missing " + energies.string());
          merge_energy_csv(energies.string(), records);
        }
        written = write_report(out, kind, records);
      }
      if (!rp_loss.empty()) {
        std::vector<LineSeries> series;
        for (const auto& spec : rp_loss) {
          const auto eq = spec.find('=');
          const std::string label = eq == std::string::npos ? fs::path(spec).stem().string() : spec.substr(0, eq);
          const std::string path = eq == std::string::npos ? spec : spec.substr(eq + 1);
          series.push_back({label, read_loss_csv(path)});
        }
        const std::string path = (fs::path(out) / "loss_curves.svg").string();
        write_text(path, svg_loss_curves("Training loss", series));
        written.push_back(path);
      }
      for (const auto& w : written) std::cout << "wrote " << w << '\n';
      std::cout << "result files=" << written.size() << std::endl;
      return 0;
    }
  } catch (const UsageError& e) {
    log(Level::Error, "usage", "message=" + quote(e.what()));
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    log(Level::Error, "failure", "message=" + quote(e.what()));
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    log(Level::Error, "failure", "message=" + quote(e.what()));
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
