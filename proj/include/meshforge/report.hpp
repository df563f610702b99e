#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "meshforge/pipeline.hpp"

namespace meshforge {

void write_evaluation_csv(const std::string& path, const std::vector<EvaluationRecord>& records);
/// problem_id,strategy,energy,has_energy; elasticity only.
void write_energy_csv(const std::string& path, const std::vector<EvaluationRecord>& records);
std::vector<EvaluationRecord> read_evaluation_csv(const std::string& path);
/// Fills energy/has_energy of matching records.
void merge_energy_csv(const std::string& path, std::vector<EvaluationRecord>& records);

struct Histogram {
  std::vector<double> edges;  // bins are [edges[i], edges[i+1])
  std::vector<std::size_t> counts;
  std::size_t underflow = 0;  // < edges.front()
  std::size_t overflow = 0;   // >= edges.back()
  bool show_underflow = false;
  bool show_overflow = true;
};

Histogram make_histogram(const std::vector<double>& values, double lo, double hi, double width);

/// 0.0005-wide bins on [0, 0.003] plus an overflow bin.
Histogram poisson_error_histogram(const std::vector<double>& errors);
/// Relative energy gap in percent: negative bin, 0.1-wide bins on [0, 0.6], overflow for >= 0.6.
Histogram energy_gap_histogram(const std::vector<double>& gaps_percent);

struct HistogramSeries {
  std::string label;
  Histogram hist;
};

std::string svg_histogram(const std::string& title, const std::string& xlabel, const std::vector<HistogramSeries>& series,
                          int label_digits);

struct LineSeries {
  std::string label;
  std::vector<double> y;
};

/// Loss curves, log-scaled y axis.
std::string svg_loss_curves(const std::string& title, const std::vector<LineSeries>& series);

void write_text(const std::string& path, const std::string& text);

std::vector<double> read_loss_csv(const std::string& path);
void write_loss_csv(const std::string& path, const std::vector<double>& loss);

struct StrategySummary {
  std::string strategy;
  std::size_t problems = 0;
  double mean_elements = 0.0;
  double mean_score = 0.0;
  double median_score = 0.0;
  double mean_relative_gap_percent = 0.0;  // elasticity
  double mean_energy = 0.0;                // elasticity
  double mean_predict_ms = 0.0;
  double improved_over_uniform = 0.0;      // fraction of problems with a lower score than uniform
};

struct EvaluationSummary {
  ProblemKind kind = ProblemKind::Poisson;
  std::vector<StrategySummary> strategies;
  double mean_has_energy = 0.0;

  const StrategySummary* find(const std::string& strategy) const;
};

EvaluationSummary summarize(ProblemKind kind, const std::vector<EvaluationRecord>& records);
nlohmann::json summary_json(const EvaluationSummary& s);
std::string summary_markdown(const EvaluationSummary& s);

/// Renders histogram SVG(s), summary.json and summary.md into dir. Returns the paths written.
std::vector<std::string> write_report(const std::string& dir, ProblemKind kind,
                                      const std::vector<EvaluationRecord>& records);

}  // namespace meshforge
