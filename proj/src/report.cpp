#include "meshforge/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace meshforge {

namespace {

const char* kPalette[] = {"#4e79a7", "#e15759", "#59a14f", "#b07aa1", "#f28e2b", "#76b7b2"};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string g17(double v) { return fmt("%.17g", v); }

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::FormatError, "cannot open " + path + " for writing");
  return os;
}

double parse_double(const std::string& s, const std::string& path) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::FormatError, path + ": bad number '" + s + "'");
  }
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string display_name(const std::string& strategy) {
  return strategy == "oracle" ? "oracle (reference)" : strategy;
}

double relative_gap_percent(const EvaluationRecord& r) {
  return r.has_energy != 0.0 ? 100.0 * r.score / std::abs(r.has_energy) : 0.0;
}

}  // namespace

void write_evaluation_csv(const std::string& path, const std::vector<EvaluationRecord>& records) {
  auto os = open_out(path);
  os << "problem_id,strategy,elements,score,predict_ms\n";
  for (const auto& r : records)
    os << r.problem_id << ',' << r.strategy << ',' << r.elements << ',' << g17(r.score) << ','
       << fmt("%.3f", r.predict_ms) << '\n';
}

void write_energy_csv(const std::string& path, const std::vector<EvaluationRecord>& records) {
  auto os = open_out(path);
  os << "problem_id,strategy,energy,has_energy\n";
  for (const auto& r : records) os << r.problem_id << ',' << r.strategy << ',' << g17(r.energy) << ',' << g17(r.has_energy) << '\n';
}

std::vector<EvaluationRecord> read_evaluation_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::FormatError, "cannot open " + path);
  std::string line;
  if (!std::getline(is, line) || line != "problem_id,strategy,elements,score,predict_ms")
    throw Error(ErrorCode::FormatError, path + ": unexpected header");
  std::vector<EvaluationRecord> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto c = split_csv(line);
    if (c.size() != 5) throw Error(ErrorCode::FormatError, path + ": expected 5 columns in '" + line + "'");
    EvaluationRecord r;
    r.problem_id = static_cast<int>(parse_double(c[0], path));
    r.strategy = c[1];
    r.elements = static_cast<std::size_t>(parse_double(c[2], path));
    r.score = parse_double(c[3], path);
    r.predict_ms = parse_double(c[4], path);
    out.push_back(r);
  }
  return out;
}

void merge_energy_csv(const std::string& path, std::vector<EvaluationRecord>& records) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::FormatError, "cannot open " + path);
  std::string line;
  std::getline(is, line);
  std::map<std::pair<int, std::string>, std::pair<double, double>> e;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto c = split_csv(line);
    if (c.size() != 4) throw Error(ErrorCode::FormatError, path + ": expected 4 columns");
    e[{static_cast<int>(parse_double(c[0], path)), c[1]}] = {parse_double(c[2], path), parse_double(c[3], path)};
  }
  for (auto& r : records) {
    auto it = e.find({r.problem_id, r.strategy});
    if (it == e.end()) continue;
    r.energy = it->second.first;
    r.has_energy = it->second.second;
  }
}

Histogram make_histogram(const std::vector<double>& values, double lo, double hi, double width) {
  Histogram h;
  const int bins = static_cast<int>(std::lround((hi - lo) / width));
  for (int i = 0; i <= bins; ++i) h.edges.push_back(lo + i * width);
  h.edges.back() = hi;
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  for (double v : values) {
    if (v < lo) {
      ++h.underflow;
    } else if (v >= hi) {
      ++h.overflow;
    } else {
      // upper_bound keeps values that sit on an edge in the bin starting there
      auto it = std::upper_bound(h.edges.begin(), h.edges.end(), v);
      const auto bin = static_cast<std::size_t>(std::distance(h.edges.begin(), it) - 1);
      ++h.counts[std::min(bin, h.counts.size() - 1)];
    }
  }
  return h;
}

Histogram poisson_error_histogram(const std::vector<double>& errors) {
  Histogram h = make_histogram(errors, 0.0, 0.003, 0.0005);
  h.show_underflow = false;
  return h;
}

Histogram energy_gap_histogram(const std::vector<double>& gaps_percent) {
  Histogram h = make_histogram(gaps_percent, 0.0, 0.6, 0.1);
  h.show_underflow = true;
  return h;
}

std::string svg_histogram(const std::string& title, const std::string& xlabel, const std::vector<HistogramSeries>& series,
                          int label_digits) {
  if (series.empty()) throw Error(ErrorCode::InvalidArgument, "no histogram series");
  const Histogram& h0 = series.front().hist;
  struct Slot {
    std::string label;
    std::vector<std::size_t> counts;
  };
  std::vector<Slot> slots;
  auto edge = [&](double v) { return fmt(("%." + std::to_string(label_digits) + "f").c_str(), v); };
  if (h0.show_underflow) slots.push_back({"< " + edge(h0.edges.front()), {}});
  for (std::size_t b = 0; b < h0.counts.size(); ++b) slots.push_back({edge(h0.edges[b]) + "-" + edge(h0.edges[b + 1]), {}});
  if (h0.show_overflow) slots.push_back({">= " + edge(h0.edges.back()), {}});
  std::size_t peak = 1;
  for (const auto& s : series) {
    std::size_t k = 0;
    if (h0.show_underflow) slots[k++].counts.push_back(s.hist.underflow);
    for (std::size_t c : s.hist.counts) slots[k++].counts.push_back(c);
    if (h0.show_overflow) slots[k++].counts.push_back(s.hist.overflow);
    peak = std::max({peak, s.hist.underflow, s.hist.overflow});
    for (std::size_t c : s.hist.counts) peak = std::max(peak, c);
  }

  const double W = 860, H = 460, left = 60, right = 20, top = 50, bottom = 90;
  const double pw = W - left - right, ph = H - top - bottom;
  const double slot_w = pw / static_cast<double>(slots.size());
  const double bar_w = 0.8 * slot_w / static_cast<double>(series.size());
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << xml_escape(title) << "</text>\n";
  // y grid
  const int ticks = 5;
  for (int t = 0; t <= ticks; ++t) {
    const double v = static_cast<double>(peak) * t / ticks;
    const double y = top + ph - ph * t / ticks;
    o << "<line x1=\"" << left << "\" x2=\"" << left + pw << "\" y1=\"" << y << "\" y2=\"" << y
      << "\" stroke=\"#ddd\"/>\n";
    o << "<text x=\"" << left - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << fmt("%.0f", v) << "</text>\n";
  }
  for (std::size_t k = 0; k < slots.size(); ++k) {
    const double x0 = left + slot_w * static_cast<double>(k) + 0.1 * slot_w;
    for (std::size_t s = 0; s < series.size(); ++s) {
      const double c = static_cast<double>(slots[k].counts[s]);
      const double bh = ph * c / static_cast<double>(peak);
      o << "<rect class=\"bar\" data-series=\"" << xml_escape(series[s].label) << "\" data-bin=\""
        << xml_escape(slots[k].label) << "\" data-count=\"" << slots[k].counts[s] << "\" x=\""
        << x0 + bar_w * static_cast<double>(s) << "\" y=\"" << top + ph - bh << "\" width=\"" << bar_w
        << "\" height=\"" << bh << "\" fill=\"" << kPalette[s % 6] << "\"/>\n";
    }
    const double cx = left + slot_w * (static_cast<double>(k) + 0.5);
    o << "<text x=\"" << cx << "\" y=\"" << top + ph + 16 << "\" text-anchor=\"middle\" font-size=\"10\">"
      << xml_escape(slots[k].label) << "</text>\n";
  }
  o << "<line x1=\"" << left << "\" x2=\"" << left + pw << "\" y1=\"" << top + ph << "\" y2=\"" << top + ph
    << "\" stroke=\"black\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"" << top + ph + 40 << "\" text-anchor=\"middle\">" << xml_escape(xlabel)
    << "</text>\n";
  o << "<text transform=\"rotate(-90)\" x=\"" << -(top + ph / 2) << "\" y=\"16\" text-anchor=\"middle\">problems</text>\n";
  double lx = left;
  for (std::size_t s = 0; s < series.size(); ++s) {
    o << "<rect x=\"" << lx << "\" y=\"" << H - 26 << "\" width=\"12\" height=\"12\" fill=\"" << kPalette[s % 6]
      << "\"/>\n";
    o << "<text x=\"" << lx + 16 << "\" y=\"" << H - 16 << "\">" << xml_escape(series[s].label) << "</text>\n";
    lx += 40 + 7.0 * static_cast<double>(series[s].label.size());
  }
  o << "</svg>\n";
  return o.str();
}

std::string svg_loss_curves(const std::string& title, const std::vector<LineSeries>& series) {
  double lo = INFINITY, hi = -INFINITY;
  std::size_t n = 1;
  for (const auto& s : series) {
    n = std::max(n, s.y.size());
    for (double v : s.y)
      if (v > 0 && std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
  }
  if (!(lo < hi)) {
    lo = lo > 0 && std::isfinite(lo) ? lo / 2 : 1e-3;
    hi = lo * 4;
  }
  const double l0 = std::floor(std::log10(lo) * 4) / 4, l1 = std::ceil(std::log10(hi) * 4) / 4;
  const double W = 760, H = 440, left = 70, right = 20, top = 50, bottom = 70;
  const double pw = W - left - right, ph = H - top - bottom;
  auto px = [&](std::size_t i) { return left + pw * (n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.5); };
  auto py = [&](double v) { return top + ph - ph * (std::log10(v) - l0) / (l1 - l0); };
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << xml_escape(title) << "</text>\n";
  for (int t = 0; t <= 4; ++t) {
    const double lv = l0 + (l1 - l0) * t / 4;
    const double y = py(std::pow(10.0, lv));
    o << "<line x1=\"" << left << "\" x2=\"" << left + pw << "\" y1=\"" << y << "\" y2=\"" << y
      << "\" stroke=\"#ddd\"/>\n";
    o << "<text x=\"" << left - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << fmt("%.3g", std::pow(10.0, lv))
      << "</text>\n";
  }
  for (std::size_t i = 0; i < n; i += std::max<std::size_t>(1, n / 10))
    o << "<text x=\"" << px(i) << "\" y=\"" << top + ph + 16 << "\" text-anchor=\"middle\">" << i + 1 << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    o << "<polyline class=\"loss\" data-series=\"" << xml_escape(series[s].label) << "\" fill=\"none\" stroke=\""
      << kPalette[s % 6] << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < series[s].y.size(); ++i)
      if (series[s].y[i] > 0 && std::isfinite(series[s].y[i])) o << px(i) << ',' << py(series[s].y[i]) << ' ';
    o << "\"/>\n";
    o << "<rect x=\"" << left + 10 << "\" y=\"" << top + 8 + 18 * s << "\" width=\"12\" height=\"12\" fill=\""
      << kPalette[s % 6] << "\"/>\n";
    o << "<text x=\"" << left + 28 << "\" y=\"" << top + 18 + 18 * s << "\">" << xml_escape(series[s].label)
      << "</text>\n";
  }
  o << "<text x=\"" << W / 2 << "\" y=\"" << H - 20 << "\" text-anchor=\"middle\">epoch</text>\n";
  o << "<text transform=\"rotate(-90)\" x=\"" << -(top + ph / 2) << "\" y=\"16\" text-anchor=\"middle\">training MSE (standardized log area)</text>\n";
  o << "</svg>\n";
  return o.str();
}

void write_text(const std::string& path, const std::string& text) {
  auto os = open_out(path);
  os << text;
  if (!os) throw Error(ErrorCode::FormatError, "failed writing " + path);
}

void write_loss_csv(const std::string& path, const std::vector<double>& loss) {
  auto os = open_out(path);
  os << "epoch,loss\n";
  for (std::size_t i = 0; i < loss.size(); ++i) os << i + 1 << ',' << g17(loss[i]) << '\n';
}

std::vector<double> read_loss_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::FormatError, "cannot open " + path);
  std::string line;
  std::getline(is, line);
  if (line != "epoch,loss") throw Error(ErrorCode::FormatError, path + ": unexpected header");
  std::vector<double> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto c = split_csv(line);
    if (c.size() != 2) throw Error(ErrorCode::FormatError, path + ": expected 2 columns");
    out.push_back(parse_double(c[1], path));
  }
  return out;
}

const StrategySummary* EvaluationSummary::find(const std::string& strategy) const {
  for (const auto& s : strategies)
    if (s.strategy == strategy) return &s;
  return nullptr;
}

EvaluationSummary summarize(ProblemKind kind, const std::vector<EvaluationRecord>& records) {
  EvaluationSummary out;
  out.kind = kind;
  std::vector<std::string> order;
  std::map<std::string, std::vector<const EvaluationRecord*>> by;
  std::map<int, double> uniform;
  std::map<int, double> has;
  for (const auto& r : records) {
    if (!by.count(r.strategy)) order.push_back(r.strategy);
    by[r.strategy].push_back(&r);
    if (r.strategy == "uniform") uniform[r.problem_id] = r.score;
    has[r.problem_id] = r.has_energy;
  }
  for (const auto& [id, e] : has) out.mean_has_energy += e;
  if (!has.empty()) out.mean_has_energy /= static_cast<double>(has.size());
  for (const auto& name : order) {
    const auto& rs = by[name];
    StrategySummary s;
    s.strategy = name;
    s.problems = rs.size();
    std::vector<double> scores;
    std::size_t improved = 0, compared = 0;
    for (const auto* r : rs) {
      s.mean_elements += static_cast<double>(r->elements);
      s.mean_score += r->score;
      s.mean_energy += r->energy;
      s.mean_relative_gap_percent += relative_gap_percent(*r);
      s.mean_predict_ms += r->predict_ms;
      scores.push_back(r->score);
      auto it = uniform.find(r->problem_id);
      if (it != uniform.end()) {
        ++compared;
        if (r->score < it->second) ++improved;
      }
    }
    const double n = static_cast<double>(std::max<std::size_t>(rs.size(), 1));
    s.mean_elements /= n;
    s.mean_score /= n;
    s.mean_energy /= n;
    s.mean_relative_gap_percent /= n;
    s.mean_predict_ms /= n;
    s.median_score = median(scores);
    s.improved_over_uniform = compared ? static_cast<double>(improved) / static_cast<double>(compared) : 0.0;
    out.strategies.push_back(s);
  }
  return out;
}

nlohmann::json summary_json(const EvaluationSummary& s) {
  nlohmann::json j;
  j["kind"] = to_string(s.kind);
  j["score"] = s.kind == ProblemKind::Poisson ? "area-weighted relative L1 error" : "potential energy gap to HDUM";
  if (s.kind == ProblemKind::Elasticity) j["mean_has_energy"] = s.mean_has_energy;
  for (const auto& st : s.strategies) {
    nlohmann::json e{{"problems", st.problems},
                     {"mean_elements", st.mean_elements},
                     {"mean_score", st.mean_score},
                     {"median_score", st.median_score},
                     {"mean_predict_ms", st.mean_predict_ms},
                     {"improved_over_uniform", st.improved_over_uniform}};
    if (s.kind == ProblemKind::Elasticity) {
      e["mean_energy"] = st.mean_energy;
      e["mean_relative_gap_percent"] = st.mean_relative_gap_percent;
    }
    if (st.strategy == "oracle") e["note"] = "true-error-guided reference, not one of the compared methods";
    j["strategies"][st.strategy] = e;
  }
  return j;
}

std::string summary_markdown(const EvaluationSummary& s) {
  std::ostringstream o;
  const bool elas = s.kind == ProblemKind::Elasticity;
  o << "# Evaluation summary: " << to_string(s.kind) << "\n\n";
  o << "Score: " << (elas ? "potential energy minus HDUM potential energy (lower is better)"
                          : "area-weighted relative L1 error against the HDUM solution (lower is better)")
    << ".\n\n";
  if (elas) {
    o << "| strategy | problems | mean elements | mean energy | mean gap | mean gap % | better than uniform | predict ms |\n";
    o << "|---|---|---|---|---|---|---|---|\n";
  } else {
    o << "| strategy | problems | mean elements | mean error | median error | better than uniform | predict ms |\n";
    o << "|---|---|---|---|---|---|---|\n";
  }
  for (const auto& st : s.strategies) {
    o << "| " << display_name(st.strategy) << " | " << st.problems << " | " << fmt("%.0f", st.mean_elements) << " | ";
    if (elas)
      o << fmt("%.6g", st.mean_energy) << " | " << fmt("%.6g", st.mean_score) << " | "
        << fmt("%.4f", st.mean_relative_gap_percent) << " | ";
    else
      o << fmt("%.6f", st.mean_score) << " | " << fmt("%.6f", st.median_score) << " | ";
    o << fmt("%.1f%%", 100.0 * st.improved_over_uniform) << " | " << fmt("%.2f", st.mean_predict_ms) << " |\n";
  }
  if (elas) o << "\nMean HDUM energy: " << fmt("%.6g", s.mean_has_energy) << "\n";
  o << "\nThe oracle row refines with the true projected error field. It is a reference for what perfect"
       " error knowledge buys and is not one of the compared methods.\n";
  return o.str();
}

std::vector<std::string> write_report(const std::string& dir, ProblemKind kind,
                                      const std::vector<EvaluationRecord>& records) {
  namespace fs = std::filesystem;
  std::vector<std::string> written;
  std::vector<std::string> order;
  for (const auto& r : records)
    if (std::find(order.begin(), order.end(), r.strategy) == order.end()) order.push_back(r.strategy);
  std::vector<HistogramSeries> series;
  for (const auto& name : order) {
    std::vector<double> v;
    for (const auto& r : records)
      if (r.strategy == name) v.push_back(kind == ProblemKind::Poisson ? r.score : relative_gap_percent(r));
    series.push_back({display_name(name),
                      kind == ProblemKind::Poisson ? poisson_error_histogram(v) : energy_gap_histogram(v)});
  }
  if (!series.empty()) {
    const std::string path = (fs::path(dir) / (kind == ProblemKind::Poisson ? "error_histogram.svg"
                                                                           : "energy_gap_histogram.svg")).string();
    if (kind == ProblemKind::Poisson)
      write_text(path, svg_histogram("Global relative L1 error, 4000-element meshes", "error", series, 4));
    else
      write_text(path, svg_histogram("Potential energy gap to HDUM, 4000-element meshes",
                                     "gap as percent of |HDUM energy|", series, 1));
    written.push_back(path);
  }
  const EvaluationSummary s = summarize(kind, records);
  const std::string js = (fs::path(dir) / "summary.json").string();
  write_text(js, summary_json(s).dump(2) + "\n");
  written.push_back(js);
  const std::string md = (fs::path(dir) / "summary.md").string();
  write_text(md, summary_markdown(s));
  written.push_back(md);
  return written;
}

}  // namespace meshforge
