#pragma once

// Report bundles: CSV tables, SVG plots and a JSON summary. Plots only print
// numbers through format_value, and every printed number also appears in the
// table of the same name.

#include "wmg/geometry.hpp"

#include <fstream>
#include <iomanip>
#include <regex>

namespace wmg {

inline std::string format_value(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << v;
  std::string s = os.str();
  return s == "-0.0000" ? "0.0000" : s;
}

struct report_table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::string csv() const {
    std::ostringstream os;
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << cells[i];
      os << '\n';
    };
    line(columns);
    for (const auto& r : rows) line(r);
    return os.str();
  }
};

struct report_plot {
  std::string name;
  std::string svg;
};

struct report_bundle {
  std::vector<report_table> tables;
  std::vector<report_plot> plots;
  nlohmann::json summary;

  const report_table* table(const std::string& name) const {
    for (const auto& t : tables)
      if (t.name == name) return &t;
    return nullptr;
  }

  void write(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    for (const auto& t : tables) std::ofstream(dir / (t.name + ".csv"), std::ios::binary) << t.csv();
    for (const auto& p : plots) std::ofstream(dir / (p.name + ".svg"), std::ios::binary) << p.svg;
    std::ofstream(dir / "summary.json", std::ios::binary) << summary.dump(2) << '\n';
  }
};

// ---------------------------------------------------------------------------
// SVG primitives.

namespace svg {

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

class canvas {
 public:
  canvas(int w, int h, const std::string& title) : w_(w), h_(h) {
    body_ << "<text x=\"" << w / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
          << "</text>\n";
  }

  void rect(double x, double y, double w, double h, const std::string& fill) {
    body_ << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << w << "\" height=\"" << h << "\" fill=\"" << fill
          << "\" stroke=\"#333\" stroke-width=\"0.5\"/>\n";
  }
  void line(double x1, double y1, double x2, double y2, const std::string& stroke, const std::string& dash = {}) {
    body_ << "<line x1=\"" << x1 << "\" y1=\"" << y1 << "\" x2=\"" << x2 << "\" y2=\"" << y2 << "\" stroke=\"" << stroke
          << "\"" << (dash.empty() ? "" : " stroke-dasharray=\"" + dash + "\"") << "/>\n";
  }
  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke) {
    body_ << "<polyline fill=\"none\" stroke=\"" << stroke << "\" points=\"";
    for (const auto& [x, y] : pts) body_ << x << ',' << y << ' ';
    body_ << "\"/>\n";
  }
  void circle(double x, double y, double r, const std::string& fill) {
    body_ << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"" << r << "\" fill=\"" << fill << "\"/>\n";
  }
  /// Free text: never a data value.
  void label(double x, double y, const std::string& text, const std::string& anchor = "middle", int size = 10) {
    body_ << "<text x=\"" << x << "\" y=\"" << y << "\" text-anchor=\"" << anchor << "\" font-size=\"" << size << "\">"
          << escape(text) << "</text>\n";
  }
  /// Data annotation: the printed value is parsed back by consistency checks.
  void value(double x, double y, double v, const std::string& prefix = {}) {
    body_ << "<text class=\"value\" x=\"" << x << "\" y=\"" << y << "\" text-anchor=\"middle\" font-size=\"9\">"
          << escape(prefix) << "<tspan>" << format_value(v) << "</tspan></text>\n";
  }

  std::string str() const {
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w_ << "\" height=\"" << h_ << "\" viewBox=\"0 0 "
       << w_ << ' ' << h_ << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
       << body_.str() << "</svg>\n";
    return os.str();
  }

 private:
  int w_;
  int h_;
  std::ostringstream body_;
};

inline std::string heat_color(double v) {
  const double t = std::isnan(v) ? 0.0 : std::clamp(v, 0.0, 1.0);
  const int r = static_cast<int>(255 * t);
  const int b = static_cast<int>(255 * (1.0 - t));
  std::ostringstream os;
  os << "rgb(" << r << ",64," << b << ")";
  return os.str();
}

inline const char* palette(std::size_t k) {
  static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  return colors[k % 8];
}

}  // namespace svg

/// Every data value printed in an SVG produced by this module.
inline std::vector<std::string> svg_values(const std::string& doc) {
  static const std::regex re("<text class=\"value\"[^>]*>[^<]*<tspan>([^<]*)</tspan>");
  std::vector<std::string> out;
  for (auto it = std::sregex_iterator(doc.begin(), doc.end(), re); it != std::sregex_iterator(); ++it)
    out.push_back((*it)[1].str());
  return out;
}

// ---------------------------------------------------------------------------
// Tables and plots for each analysis.

inline report_table matrix_table(const std::string& name, const generalization_matrix& g) {
  report_table t{name, {"fit\\test"}, {}};
  for (const auto& l : g.labels) t.columns.push_back(l);
  for (index_t i = 0; i < g.values.rows(); ++i) {
    std::vector<std::string> row{g.labels[static_cast<std::size_t>(i)]};
    for (index_t j = 0; j < g.values.cols(); ++j) row.push_back(format_value(g.values(i, j)));
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline report_plot heatmap_plot(const std::string& name, const generalization_matrix& g) {
  const auto n = static_cast<int>(g.values.rows());
  const int cell = 48;
  const int left = 90;
  const int top = 40;
  svg::canvas c(left + n * cell + 20, top + n * cell + 60, name);
  for (int i = 0; i < n; ++i) {
    c.label(left - 6, top + i * cell + cell / 2 + 4, g.labels[static_cast<std::size_t>(i)], "end");
    c.label(left + i * cell + cell / 2, top + n * cell + 14, g.labels[static_cast<std::size_t>(i)]);
    for (int j = 0; j < n; ++j) {
      c.rect(left + j * cell, top + i * cell, cell, cell, svg::heat_color(g.values(i, j)));
      c.value(left + j * cell + cell / 2, top + i * cell + cell / 2 + 3, g.values(i, j));
    }
  }
  c.label(left + n * cell / 2.0, top + n * cell + 34, "rows: fit condition, columns: test condition");
  return {name, c.str()};
}

struct ortho_entry {
  std::string model;
  std::string space;
  ortho_index index;
};

inline double sample_sd(const std::vector<double>& v) { return v.size() >= 2 ? std::sqrt(variance_of(v)) : 0.0; }

inline report_table ortho_table(const std::string& name, const std::vector<ortho_entry>& entries,
                                const std::vector<std::pair<std::string, ortho_comparison>>& tests) {
  report_table t{name, {"model", "space", "value", "bootstrap_mean", "bootstrap_sd", "n", "t", "df", "p"}, {}};
  for (const auto& e : entries) {
    const double m = e.index.samples.empty() ? std::nan("") : mean_of(e.index.samples);
    std::vector<std::string> row{e.model, e.space, format_value(e.index.value), format_value(m),
                                 format_value(sample_sd(e.index.samples)), std::to_string(e.index.samples.size())};
    const auto it = std::find_if(tests.begin(), tests.end(), [&](const auto& p) { return p.first == e.model; });
    const bool annotate = it != tests.end() && e.space == "encoding";
    row.push_back(annotate ? format_value(it->second.test.t) : "");
    row.push_back(annotate ? format_value(it->second.test.df) : "");
    row.push_back(annotate ? format_value(it->second.test.p) : "");
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline report_plot ortho_plot(const std::string& name, const std::vector<ortho_entry>& entries,
                              const std::vector<std::pair<std::string, ortho_comparison>>& tests) {
  const int bar = 36;
  const int left = 50;
  const int top = 40;
  const int height = 200;
  const int width = left + static_cast<int>(entries.size()) * (bar + 14) + 40;
  svg::canvas c(width, top + height + 80, name);
  c.line(left, top + height, width - 20, top + height, "#000");
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const auto& e = entries[k];
    const double v = e.index.samples.empty() ? e.index.value : mean_of(e.index.samples);
    const double x = left + static_cast<double>(k) * (bar + 14);
    const double h = std::clamp(v, 0.0, 1.0) * height;
    c.rect(x, top + height - h, bar, h, e.space == "encoding" ? "#d62728" : "#1f77b4");
    c.value(x + bar / 2.0, top + height - h - 4, v);
    c.label(x + bar / 2.0, top + height + 14, e.model);
    c.label(x + bar / 2.0, top + height + 26, e.space);
    const auto it = std::find_if(tests.begin(), tests.end(), [&](const auto& p) { return p.first == e.model; });
    if (it != tests.end() && e.space == "encoding") {
      c.value(x + bar / 2.0, top + height + 42, it->second.test.t, "t=");
      c.value(x + bar / 2.0, top + height + 54, it->second.test.p, "p=");
    }
  }
  return {name, c.str()};
}

inline report_table cross_time_table(const std::string& name, const std::vector<cross_time_result>& results) {
  report_table t{name, {"task", "feature", "source", "target", "accuracy", "executive"}, {}};
  for (const auto& r : results)
    for (std::size_t k = 0; k < r.targets.size(); ++k)
      t.rows.push_back({to_string(r.task), to_string(r.feat), std::to_string(r.source), std::to_string(r.targets[k]),
                        format_value(r.accuracy[k]), r.targets[k] == r.executive_step() ? "1" : "0"});
  return t;
}

inline report_plot line_plot(const std::string& name, const std::vector<std::string>& series_names,
                             const std::vector<std::vector<std::pair<double, double>>>& series, double x_lo, double x_hi,
                             double y_lo, double y_hi, const std::vector<std::pair<std::size_t, double>>& markers = {}) {
  const int left = 50;
  const int top = 40;
  const int w = 360;
  const int h = 220;
  svg::canvas c(left + w + 150, top + h + 50, name);
  auto px = [&](double x) { return left + (x_hi > x_lo ? (x - x_lo) / (x_hi - x_lo) : 0.5) * w; };
  auto py = [&](double y) { return top + h - (y_hi > y_lo ? (std::clamp(y, y_lo, y_hi) - y_lo) / (y_hi - y_lo) : 0.5) * h; };
  c.line(left, top + h, left + w, top + h, "#000");
  c.line(left, top, left, top + h, "#000");
  c.label(left - 6, py(y_lo) + 3, "lo", "end");
  c.label(left - 6, py(y_hi) + 3, "hi", "end");
  for (std::size_t s = 0; s < series.size(); ++s) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& [x, y] : series[s]) {
      pts.emplace_back(px(x), py(y));
      c.circle(px(x), py(y), 2.5, svg::palette(s));
      c.value(px(x), py(y) - 5, y);
    }
    c.polyline(pts, svg::palette(s));
    c.label(left + w + 10, top + 14 + 14 * static_cast<double>(s), series_names[s], "start");
  }
  for (const auto& [s, x] : markers) c.line(px(x), top, px(x), top + h, svg::palette(s), "4,3");
  return {name, c.str()};
}

inline report_plot cross_time_plot(const std::string& name, const std::vector<cross_time_result>& results) {
  std::vector<std::string> names;
  std::vector<std::vector<std::pair<double, double>>> series;
  std::vector<std::pair<std::size_t, double>> markers;
  double x_hi = 1.0;
  for (const auto& r : results) {
    names.push_back(to_string(r.task) + " " + to_string(r.feat) + " E" + std::to_string(r.source));
    std::vector<std::pair<double, double>> pts;
    for (std::size_t k = 0; k < r.targets.size(); ++k) {
      pts.emplace_back(r.targets[k], r.accuracy[k]);
      x_hi = std::max(x_hi, static_cast<double>(r.targets[k]));
    }
    series.push_back(std::move(pts));
    if (r.executive_step() <= r.targets.back()) markers.emplace_back(series.size() - 1, r.executive_step());
  }
  return line_plot(name, names, series, 0.0, x_hi, 0.0, 1.0, markers);
}

inline report_table swap_table(const std::string& name, const swap_report& rep) {
  report_table t{name, {"i", "j", "none", "time_shift", "stimulus_shift"}, {}};
  for (const auto& r : rep.rows)
    t.rows.push_back({std::to_string(r.i), std::to_string(r.j), format_value(r.none), format_value(r.time_shift),
                      format_value(r.stimulus_shift)});
  t.rows.push_back({"mean", "", format_value(rep.mean(swap_kind::none)), format_value(rep.mean(swap_kind::time_shift)),
                    format_value(rep.mean(swap_kind::stimulus_shift))});
  return t;
}

inline report_plot swap_plot(const std::string& name, const swap_report& rep) {
  const int group = 3 * 18 + 16;
  const int left = 50;
  const int top = 40;
  const int height = 200;
  const auto n = static_cast<int>(rep.rows.size());
  svg::canvas c(left + n * group + 150, top + height + 50, name);
  c.line(left, top + height, left + n * group, top + height, "#000");
  const std::array<const char*, 3> kinds{"none", "time_shift", "stimulus_shift"};
  for (int g = 0; g < n; ++g) {
    const auto& r = rep.rows[static_cast<std::size_t>(g)];
    const std::array<double, 3> v{r.none, r.time_shift, r.stimulus_shift};
    for (std::size_t k = 0; k < 3; ++k) {
      const double x = left + g * group + static_cast<double>(k) * 18;
      const double h = std::clamp(v[k], 0.0, 1.0) * height;
      c.rect(x, top + height - h, 16, h, svg::palette(k));
      c.value(x + 8, top + height - h - 3, v[k]);
    }
    c.label(left + g * group + 27, top + height + 14, "(" + std::to_string(r.i) + "," + std::to_string(r.j) + ")");
  }
  for (std::size_t k = 0; k < 3; ++k) c.label(left + n * group + 10, top + 14 + 14 * static_cast<double>(k), kinds[k], "start");
  return {name, c.str()};
}

inline report_table perturbation_table(const std::string& name, const perturbation_curve& curve) {
  report_table t{name, {"magnitude", "match", "non_match", "no_action"}, {}};
  for (std::size_t k = 0; k < curve.magnitudes.size(); ++k)
    t.rows.push_back({format_value(curve.magnitudes[k]), format_value(curve.probabilities[k][0]),
                      format_value(curve.probabilities[k][1]), format_value(curve.probabilities[k][2])});
  return t;
}

inline report_plot perturbation_plot(const std::string& name, const perturbation_curve& curve) {
  std::vector<std::vector<std::pair<double, double>>> series(3);
  for (std::size_t k = 0; k < curve.magnitudes.size(); ++k)
    for (std::size_t r = 0; r < 3; ++r) series[r].emplace_back(curve.magnitudes[k], curve.probabilities[k][r]);
  const double lo = curve.magnitudes.empty() ? -1.0 : *std::min_element(curve.magnitudes.begin(), curve.magnitudes.end());
  const double hi = curve.magnitudes.empty() ? 1.0 : *std::max_element(curve.magnitudes.begin(), curve.magnitudes.end());
  return line_plot(name, {"match", "non_match", "no_action"}, series, lo, hi, 0.0, 1.0);
}

inline report_table relevance_table(const std::string& name, const std::vector<relevance_row>& rows) {
  report_table t{name, {"model", "task", "feature", "relevant", "accuracy"}, {}};
  for (const auto& r : rows)
    t.rows.push_back({r.model, to_string(r.task), to_string(r.feat), r.relevant ? "1" : "0", format_value(r.accuracy)});
  return t;
}

/// Procrustes-reconstructed decoders against the fitted target decoders, on the target slice.
struct reconstruction_row {
  task_spec task;
  feature feat = feature::location;
  int i = 0;
  int j = 0;
  double fitted = 0.0;
  double reconstructed = 0.0;
  bool rank_deficient = false;
};

inline report_table reconstruction_table(const std::string& name, const std::vector<reconstruction_row>& rows) {
  report_table t{name, {"task", "feature", "i", "j", "fitted", "reconstructed", "rank_deficient"}, {}};
  for (const auto& r : rows)
    t.rows.push_back({to_string(r.task), to_string(r.feat), std::to_string(r.i), std::to_string(r.j),
                      format_value(r.fitted), format_value(r.reconstructed), r.rank_deficient ? "1" : "0"});
  return t;
}

// ---------------------------------------------------------------------------
// Bundle assembly.

struct analysis_outputs {
  std::string manifest_hash;
  std::vector<std::pair<std::string, generalization_matrix>> matrices;
  std::vector<ortho_entry> ortho;
  std::vector<std::pair<std::string, ortho_comparison>> ortho_tests;
  std::vector<std::pair<std::string, std::vector<cross_time_result>>> cross_time;
  std::vector<std::pair<std::string, swap_report>> swaps;
  std::vector<std::pair<std::string, perturbation_curve>> perturbations;
  std::vector<relevance_row> relevance;
  std::vector<std::pair<std::string, std::vector<reconstruction_row>>> reconstructions;
  std::vector<std::string> expected;  // analyses the run was configured to produce
  std::vector<std::pair<std::string, std::string>> skipped;  // analysis name, reason

  void merge(const analysis_outputs& o) {
    if (manifest_hash.empty()) manifest_hash = o.manifest_hash;
    auto cat = [](auto& a, const auto& b) { a.insert(a.end(), b.begin(), b.end()); };
    cat(matrices, o.matrices);
    cat(ortho, o.ortho);
    cat(ortho_tests, o.ortho_tests);
    cat(cross_time, o.cross_time);
    cat(swaps, o.swaps);
    cat(perturbations, o.perturbations);
    cat(relevance, o.relevance);
    cat(reconstructions, o.reconstructions);
    cat(expected, o.expected);
    cat(skipped, o.skipped);
  }

  bool empty() const {
    return matrices.empty() && ortho.empty() && cross_time.empty() && swaps.empty() && perturbations.empty() &&
           relevance.empty() && reconstructions.empty();
  }
};

inline report_bundle emit_report(const analysis_outputs& out) {
  report_bundle b;
  std::vector<std::string> present;
  for (const auto& [name, g] : out.matrices) {
    b.tables.push_back(matrix_table(name, g));
    b.plots.push_back(heatmap_plot(name, g));
    present.push_back(name);
  }
  if (!out.ortho.empty()) {
    b.tables.push_back(ortho_table("ortho", out.ortho, out.ortho_tests));
    b.plots.push_back(ortho_plot("ortho", out.ortho, out.ortho_tests));
    present.push_back("ortho");
    for (const auto& e : out.ortho)
      if (e.model.find('/') == std::string::npos && std::find(present.begin(), present.end(), "ortho_" + e.model) == present.end())
        present.push_back("ortho_" + e.model);
  }
  for (const auto& [name, r] : out.cross_time) {
    b.tables.push_back(cross_time_table(name, r));
    b.plots.push_back(cross_time_plot(name, r));
    present.push_back(name);
  }
  for (const auto& [name, r] : out.swaps) {
    b.tables.push_back(swap_table(name, r));
    b.plots.push_back(swap_plot(name, r));
    present.push_back(name);
  }
  for (const auto& [name, c] : out.perturbations) {
    b.tables.push_back(perturbation_table(name, c));
    b.plots.push_back(perturbation_plot(name, c));
    present.push_back(name);
  }
  if (!out.relevance.empty()) {
    b.tables.push_back(relevance_table("relevance", out.relevance));
    present.push_back("relevance");
    for (const auto& r : out.relevance)
      if (std::find(present.begin(), present.end(), "relevance_" + r.model) == present.end()) present.push_back("relevance_" + r.model);
  }
  for (const auto& [name, rows] : out.reconstructions) {
    b.tables.push_back(reconstruction_table(name, rows));
    present.push_back(name);
  }

  std::vector<std::string> absent;
  for (const auto& e : out.expected)
    if (std::find(present.begin(), present.end(), e) == present.end()) absent.push_back(e);
  b.summary = {{"manifest_hash", out.manifest_hash}, {"analyses", present}, {"absent", absent}};
  for (const auto& [name, why] : out.skipped) b.summary["absent_reasons"][name] = why;
  if (out.empty()) b.summary["status"] = "no data";
  else b.summary["status"] = absent.empty() ? "complete" : "partial";
  for (const auto& [model, c] : out.ortho_tests)
    b.summary["ortho_tests"][model] = {{"t", c.test.t}, {"df", c.test.df}, {"p", c.test.p}, {"direction", c.direction}};
  for (const auto& [name, r] : out.swaps)
    b.summary["swaps"][name] = {{"none", r.mean(swap_kind::none)},
                                {"time_shift", r.mean(swap_kind::time_shift)},
                                {"stimulus_shift", r.mean(swap_kind::stimulus_shift)}};
  return b;
}

// ---------------------------------------------------------------------------
// JSON round trip of analysis outputs (cached stage results). Doubles are
// written in shortest round-trip form; NaN is stored as null.

namespace detail {

inline nlohmann::json num(double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); }
inline double num(const nlohmann::json& j) { return j.is_null() ? std::nan("") : j.get<double>(); }

inline nlohmann::json nums(const std::vector<double>& v) {
  auto a = nlohmann::json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}
inline std::vector<double> nums(const nlohmann::json& j) {
  std::vector<double> v;
  for (const auto& x : j) v.push_back(num(x));
  return v;
}

inline nlohmann::json matrix_json(const generalization_matrix& g) {
  auto rows = nlohmann::json::array();
  for (index_t i = 0; i < g.values.rows(); ++i) {
    std::vector<double> r(static_cast<std::size_t>(g.values.cols()));
    for (index_t k = 0; k < g.values.cols(); ++k) r[static_cast<std::size_t>(k)] = g.values(i, k);
    rows.push_back(nums(r));
  }
  return {{"labels", g.labels}, {"values", rows}, {"chance_classes", g.chance_classes}};
}
inline generalization_matrix matrix_from(const nlohmann::json& j) {
  generalization_matrix g;
  g.labels = j.at("labels").get<std::vector<std::string>>();
  g.chance_classes = j.at("chance_classes").get<int>();
  const auto& rows = j.at("values");
  const auto n = static_cast<index_t>(rows.size());
  g.values.resize(n, n ? static_cast<index_t>(rows[0].size()) : 0);
  for (index_t i = 0; i < n; ++i) {
    const auto r = nums(rows[static_cast<std::size_t>(i)]);
    for (std::size_t k = 0; k < r.size(); ++k) g.values(i, static_cast<index_t>(k)) = r[k];
  }
  return g;
}

}  // namespace detail

inline nlohmann::json to_json(const analysis_outputs& o) {
  using detail::num;
  using detail::nums;
  nlohmann::json j;
  j["manifest_hash"] = o.manifest_hash;
  j["matrices"] = nlohmann::json::array();
  for (const auto& [n, g] : o.matrices) j["matrices"].push_back({{"name", n}, {"matrix", detail::matrix_json(g)}});
  j["ortho"] = nlohmann::json::array();
  for (const auto& e : o.ortho)
    j["ortho"].push_back({{"model", e.model}, {"space", e.space}, {"value", num(e.index.value)}, {"samples", nums(e.index.samples)}});
  j["ortho_tests"] = nlohmann::json::array();
  for (const auto& [n, c] : o.ortho_tests)
    j["ortho_tests"].push_back({{"name", n}, {"t", num(c.test.t)}, {"df", num(c.test.df)}, {"p", num(c.test.p)},
                                {"mean_perceptual", num(c.mean_perceptual)}, {"mean_encoding", num(c.mean_encoding)},
                                {"direction", c.direction}});
  j["cross_time"] = nlohmann::json::array();
  for (const auto& [n, rs] : o.cross_time) {
    auto arr = nlohmann::json::array();
    for (const auto& r : rs)
      arr.push_back({{"task", to_string(r.task)}, {"feature", to_string(r.feat)}, {"source", r.source},
                     {"targets", r.targets}, {"accuracy", nums(r.accuracy)}, {"validation", num(r.validation)},
                     {"executive", num(r.executive)}, {"non_executive", num(r.non_executive)}});
    j["cross_time"].push_back({{"name", n}, {"results", arr}});
  }
  j["swaps"] = nlohmann::json::array();
  for (const auto& [n, rep] : o.swaps) {
    auto arr = nlohmann::json::array();
    for (const auto& r : rep.rows)
      arr.push_back({{"i", r.i}, {"j", r.j}, {"none", num(r.none)}, {"time_shift", num(r.time_shift)},
                     {"stimulus_shift", num(r.stimulus_shift)}});
    j["swaps"].push_back({{"name", n}, {"rows", arr}});
  }
  j["perturbations"] = nlohmann::json::array();
  for (const auto& [n, c] : o.perturbations) {
    auto probs = nlohmann::json::array();
    for (const auto& p : c.probabilities) probs.push_back({num(p[0]), num(p[1]), num(p[2])});
    j["perturbations"].push_back({{"name", n}, {"magnitudes", nums(c.magnitudes)}, {"probabilities", probs},
                                  {"unit", num(c.unit)}, {"n_trials", c.n_trials}});
  }
  j["relevance"] = nlohmann::json::array();
  for (const auto& r : o.relevance)
    j["relevance"].push_back({{"model", r.model}, {"task", to_string(r.task)}, {"feature", to_string(r.feat)},
                              {"relevant", r.relevant}, {"accuracy", num(r.accuracy)}});
  j["reconstructions"] = nlohmann::json::array();
  for (const auto& [n, rows] : o.reconstructions) {
    auto arr = nlohmann::json::array();
    for (const auto& r : rows)
      arr.push_back({{"task", to_string(r.task)}, {"feature", to_string(r.feat)}, {"i", r.i}, {"j", r.j},
                     {"fitted", num(r.fitted)}, {"reconstructed", num(r.reconstructed)}, {"rank_deficient", r.rank_deficient}});
    j["reconstructions"].push_back({{"name", n}, {"rows", arr}});
  }
  j["expected"] = o.expected;
  j["skipped"] = nlohmann::json::array();
  for (const auto& [n, why] : o.skipped) j["skipped"].push_back({n, why});
  return j;
}

inline analysis_outputs analysis_from_json(const nlohmann::json& j) {
  using detail::num;
  using detail::nums;
  analysis_outputs o;
  o.manifest_hash = j.at("manifest_hash").get<std::string>();
  for (const auto& m : j.at("matrices")) o.matrices.emplace_back(m.at("name").get<std::string>(), detail::matrix_from(m.at("matrix")));
  for (const auto& e : j.at("ortho"))
    o.ortho.push_back({e.at("model").get<std::string>(), e.at("space").get<std::string>(),
                       {num(e.at("value")), nums(e.at("samples")), e.at("space").get<std::string>()}});
  for (const auto& t : j.at("ortho_tests")) {
    ortho_comparison c;
    c.test = {num(t.at("t")), num(t.at("df")), num(t.at("p"))};
    c.mean_perceptual = num(t.at("mean_perceptual"));
    c.mean_encoding = num(t.at("mean_encoding"));
    c.direction = t.at("direction").get<int>();
    o.ortho_tests.emplace_back(t.at("name").get<std::string>(), c);
  }
  for (const auto& ct : j.at("cross_time")) {
    std::vector<cross_time_result> rs;
    for (const auto& r : ct.at("results")) {
      cross_time_result x;
      x.task = parse_task(r.at("task").get<std::string>());
      x.feat = parse_feature(r.at("feature").get<std::string>());
      x.source = r.at("source").get<int>();
      x.targets = r.at("targets").get<std::vector<int>>();
      x.accuracy = nums(r.at("accuracy"));
      x.validation = num(r.at("validation"));
      x.executive = num(r.at("executive"));
      x.non_executive = num(r.at("non_executive"));
      rs.push_back(std::move(x));
    }
    o.cross_time.emplace_back(ct.at("name").get<std::string>(), std::move(rs));
  }
  for (const auto& s : j.at("swaps")) {
    swap_report rep;
    for (const auto& r : s.at("rows"))
      rep.rows.push_back({r.at("i").get<int>(), r.at("j").get<int>(), num(r.at("none")), num(r.at("time_shift")),
                          num(r.at("stimulus_shift"))});
    o.swaps.emplace_back(s.at("name").get<std::string>(), std::move(rep));
  }
  for (const auto& p : j.at("perturbations")) {
    perturbation_curve c;
    c.magnitudes = nums(p.at("magnitudes"));
    for (const auto& pr : p.at("probabilities")) c.probabilities.push_back({num(pr[0]), num(pr[1]), num(pr[2])});
    c.unit = num(p.at("unit"));
    c.n_trials = p.at("n_trials").get<int>();
    o.perturbations.emplace_back(p.at("name").get<std::string>(), std::move(c));
  }
  for (const auto& r : j.at("relevance"))
    o.relevance.push_back({r.at("model").get<std::string>(), parse_task(r.at("task").get<std::string>()),
                           parse_feature(r.at("feature").get<std::string>()), r.at("relevant").get<bool>(),
                           num(r.at("accuracy"))});
  for (const auto& rc : j.at("reconstructions")) {
    std::vector<reconstruction_row> rows;
    for (const auto& r : rc.at("rows"))
      rows.push_back({parse_task(r.at("task").get<std::string>()), parse_feature(r.at("feature").get<std::string>()),
                      r.at("i").get<int>(), r.at("j").get<int>(), num(r.at("fitted")), num(r.at("reconstructed")),
                      r.at("rank_deficient").get<bool>()});
    o.reconstructions.emplace_back(rc.at("name").get<std::string>(), std::move(rows));
  }
  o.expected = j.at("expected").get<std::vector<std::string>>();
  for (const auto& s : j.at("skipped")) o.skipped.emplace_back(s[0].get<std::string>(), s[1].get<std::string>());
  return o;
}

}  // namespace wmg
