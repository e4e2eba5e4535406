#pragma once

// Serialization of results to JSON, CSV and SVG.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "bageval/csv.hpp"
#include "bageval/error.hpp"
#include "bageval/evaluation.hpp"
#include "bageval/survival.hpp"

namespace bageval::report {

using nlohmann::json;

inline json to_json(const MetricSummary& m) { return {{"mean", m.mean}, {"ci_low", m.ci_low}, {"ci_high", m.ci_high}}; }

/// "0.65 (0.60, 0.70)"
inline std::string format_summary(const MetricSummary& m, int digits = 2) {
  return csv::format_fixed(m.mean, digits) + " (" + csv::format_fixed(m.ci_low, digits) + ", " +
         csv::format_fixed(m.ci_high, digits) + ")";
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path + " for writing");
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Classification table

inline json to_json(const ClassificationResult& r) {
  return {{"feature_set", r.feature_set},
          {"classifier", r.classifier},
          {"n_tuples", r.n_tuples},
          {"pooled_auc", r.point_auc},
          {"accuracy", to_json(r.metrics.accuracy)},
          {"auc", to_json(r.metrics.auc)},
          {"summary", {{"accuracy", format_summary(r.metrics.accuracy)}, {"auc", format_summary(r.metrics.auc)}}}};
}

inline json table2_json(const std::vector<ClassificationResult>& rows) {
  json j = json::array();
  for (const auto& r : rows) j.push_back(to_json(r));
  return j;
}

inline constexpr const char* kTable2Header =
    "feature_set,classifier,accuracy_mean,accuracy_lo,accuracy_hi,auc_mean,auc_lo,auc_hi";

inline void write_table2_csv(std::ostream& out, const std::vector<ClassificationResult>& rows) {
  out << kTable2Header << '\n';
  for (const auto& r : rows) {
    const auto& a = r.metrics.accuracy;
    const auto& u = r.metrics.auc;
    csv::write_row(out, {r.feature_set, r.classifier, csv::format_double(a.mean), csv::format_double(a.ci_low),
                         csv::format_double(a.ci_high), csv::format_double(u.mean), csv::format_double(u.ci_low),
                         csv::format_double(u.ci_high)});
  }
}

// ---------------------------------------------------------------------------
// Windows

struct WindowSeries {
  std::string name;  // feature set
  WindowReport report;
};

inline json to_json(const WindowReport& r) {
  json ws = json::array();
  for (const auto& w : r.windows)
    ws.push_back({{"window_center", w.window_center},
                  {"n_pairs", w.n_pairs},
                  {"mean_age", w.mean_age},
                  {"auc", to_json(w.auc)},
                  {"accuracy", to_json(w.accuracy)}});
  return {{"windows", ws}, {"skipped", r.skipped}};
}

inline json windows_json(const std::string& mode, const std::string& classifier, const WindowSpec& wspec,
                         const std::vector<WindowSeries>& series) {
  json j;
  j["mode"] = mode;
  j["classifier"] = classifier;
  j["window"] = {{"length", wspec.length}, {"stride", wspec.stride}, {"min_pairs", wspec.min_pairs}};
  j["score_semantics"] = classifier == "logreg" ? "probability"
                         : classifier == "svm"  ? "signed margin (probability surrogate)"
                                                : "vote fraction (probability surrogate)";
  auto& s = j["series"] = json::array();
  for (const auto& ser : series) {
    json o = to_json(ser.report);
    o["feature_set"] = ser.name;
    s.push_back(std::move(o));
  }
  return j;
}

namespace detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline const char* palette(std::size_t i) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  return colors[i % 6];
}

}  // namespace detail

/// AUC-vs-time-to-MCI plot: one line per feature set with a shaded CI band
/// and the pair count above every window.
inline std::string render_svg(const std::vector<WindowSeries>& series, const std::string& title = "AUC by time to MCI") {
  const double W = 640, H = 400, left = 60, right = 150, top = 40, bottom = 50;
  const double pw = W - left - right, ph = H - top - bottom;
  double t_max = 1.0;
  for (const auto& s : series)
    for (const auto& w : s.report.windows) t_max = std::max(t_max, w.window_center);
  t_max = std::ceil(t_max);
  auto px = [&](double t) { return left + pw * t / t_max; };
  auto py = [&](double a) { return top + ph * (1.0 - a); };
  using detail::fmt;

  std::ostringstream o;
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
    << ' ' << H << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << fmt(left + pw / 2) << "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" "
    << "font-size=\"14\">" << title << "</text>\n";
  // Axes and ticks.
  o << "<g stroke=\"black\" stroke-width=\"1\">\n";
  o << "<line x1=\"" << fmt(left) << "\" y1=\"" << fmt(top + ph) << "\" x2=\"" << fmt(left + pw) << "\" y2=\""
    << fmt(top + ph) << "\"/>\n";
  o << "<line x1=\"" << fmt(left) << "\" y1=\"" << fmt(top) << "\" x2=\"" << fmt(left) << "\" y2=\"" << fmt(top + ph)
    << "\"/>\n";
  o << "</g>\n<g font-family=\"sans-serif\" font-size=\"10\">\n";
  for (int k = 0; k <= 10; k += 2) {
    const double a = k / 10.0;
    o << "<text x=\"" << fmt(left - 6) << "\" y=\"" << fmt(py(a) + 3) << "\" text-anchor=\"end\">" << fmt(a)
      << "</text>\n";
  }
  const int step = t_max > 12 ? 2 : 1;
  for (int t = 0; t <= static_cast<int>(t_max); t += step)
    o << "<text x=\"" << fmt(px(t)) << "\" y=\"" << fmt(top + ph + 14) << "\" text-anchor=\"middle\">" << t
      << "</text>\n";
  o << "<text x=\"" << fmt(left + pw / 2) << "\" y=\"" << fmt(H - 12)
    << "\" text-anchor=\"middle\">time to first MCI (years)</text>\n";
  o << "<text x=\"15\" y=\"" << fmt(top + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 15 "
    << fmt(top + ph / 2) << ")\">AUC</text>\n</g>\n";
  o << "<line x1=\"" << fmt(left) << "\" y1=\"" << fmt(py(0.5)) << "\" x2=\"" << fmt(left + pw) << "\" y2=\""
    << fmt(py(0.5)) << "\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& ws = series[i].report.windows;
    const char* color = detail::palette(i);
    o << "<g class=\"series\" data-name=\"" << series[i].name << "\">\n";
    if (!ws.empty()) {
      o << "<polygon fill=\"" << color << "\" fill-opacity=\"0.15\" stroke=\"none\" points=\"";
      for (const auto& w : ws) o << fmt(px(w.window_center)) << ',' << fmt(py(w.auc.ci_high)) << ' ';
      for (auto it = ws.rbegin(); it != ws.rend(); ++it)
        o << fmt(px(it->window_center)) << ',' << fmt(py(it->auc.ci_low)) << ' ';
      o << "\"/>\n<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
      for (const auto& w : ws) o << fmt(px(w.window_center)) << ',' << fmt(py(w.auc.mean)) << ' ';
      o << "\"/>\n";
      for (const auto& w : ws)
        o << "<text x=\"" << fmt(px(w.window_center)) << "\" y=\"" << fmt(py(w.auc.ci_high) - 4 - 10.0 * i)
          << "\" font-family=\"sans-serif\" font-size=\"8\" text-anchor=\"middle\" fill=\"" << color << "\">n="
          << w.n_pairs << "</text>\n";
    }
    o << "<rect x=\"" << fmt(left + pw + 12) << "\" y=\"" << fmt(top + 16.0 * i) << "\" width=\"10\" height=\"10\" fill=\""
      << color << "\"/>\n<text x=\"" << fmt(left + pw + 26) << "\" y=\"" << fmt(top + 16.0 * i + 9)
      << "\" font-family=\"sans-serif\" font-size=\"10\">" << series[i].name << "</text>\n</g>\n";
  }
  o << "</svg>\n";
  return o.str();
}

// ---------------------------------------------------------------------------
// Survival table

inline json to_json(const CoxFit& f) {
  json c = json::object();
  for (std::size_t j = 0; j < f.covariate_names.size(); ++j)
    c[f.covariate_names[j]] = {{"coefficient", f.coefficients[j]}, {"standard_error", f.standard_errors[j]}};
  return {{"covariates", c},
          {"log_partial_likelihood", f.log_partial_likelihood},
          {"aic", f.aic},
          {"converged", f.converged},
          {"monotone_likelihood", f.monotone_likelihood},
          {"n_records", f.n_records},
          {"n_events", f.n_events}};
}

inline json table3_json(const std::vector<ScenarioRow>& rows) {
  json j = json::array();
  for (const auto& r : rows)
    j.push_back({{"features", r.features},
                 {"added_covariate", r.added_covariate},
                 {"c_index_without", to_json(r.c_index_without)},
                 {"c_index_with", to_json(r.c_index_with)},
                 {"c_index_without_point", r.c_index_without_point},
                 {"c_index_with_point", r.c_index_with_point},
                 {"summary",
                  {{"without", format_summary(r.c_index_without)}, {"with", format_summary(r.c_index_with)}}},
                 {"aic_without", r.fit_without.aic},
                 {"aic_with", r.fit_with.aic},
                 {"lrt", {{"chi_squared", r.lrt.chi_squared}, {"df", r.lrt.df}, {"p_value", r.lrt.p_value}}},
                 {"fit_without", to_json(r.fit_without)},
                 {"fit_with", to_json(r.fit_with)}});
  return j;
}

inline constexpr const char* kLifeTableHeader = "interval_start,interval_end,n_at_risk,n_events,n_censored";

inline void write_life_table_csv(std::ostream& out, const LifeTable& table) {
  out << kLifeTableHeader << '\n';
  for (const auto& r : table)
    csv::write_row(out, {csv::format_double(r.start), csv::format_double(r.end), std::to_string(r.n_at_risk),
                         std::to_string(r.n_events), std::to_string(r.n_censored)});
}

// ---------------------------------------------------------------------------
// Adjusted paired differences

inline json to_json(const AdjustedDifferences& d) {
  json g = json::array();
  for (const auto& gd : d.groups) {
    json o = {{"group", to_string(gd.group)}, {"n", gd.n}, {"mean_raw", gd.mean_raw}, {"mean_adjusted", gd.mean_adjusted}};
    if (gd.wilcoxon)
      o["wilcoxon"] = {{"statistic", gd.wilcoxon->statistic},
                       {"n_effective", gd.wilcoxon->n_effective},
                       {"p_value", gd.wilcoxon->p_value},
                       {"exact", gd.wilcoxon->exact}};
    else
      o["wilcoxon_error"] = gd.wilcoxon_error.value_or("");
    g.push_back(std::move(o));
  }
  return {{"reference_mean", d.reference_mean}, {"groups", g}};
}

}  // namespace bageval::report
