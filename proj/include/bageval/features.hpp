#pragma once

#include <cctype>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bageval/cohort.hpp"
#include "bageval/error.hpp"

namespace bageval {

/// Brain-age gap: estimated minus chronological age.
constexpr double compute_bag(double estimated, double chronological) {
  return estimated - chronological;
}

/// Linear age trend of the gap on a reference set.
struct BiasParams {
  std::string model_name;
  double slope = 0.0;
  double intercept = 0.0;
};

struct AgeBag {
  double age;
  double bag;
};

/// Ordinary least squares of bag on age.
inline BiasParams fit_bias(std::span<const AgeBag> rows, std::string model_name = {}) {
  if (rows.size() < 2) throw Error(ErrorCode::DegenerateReference, "need at least two rows");
  double mean_age = 0.0, mean_bag = 0.0;
  for (const auto& r : rows) {
    mean_age += r.age;
    mean_bag += r.bag;
  }
  mean_age /= static_cast<double>(rows.size());
  mean_bag /= static_cast<double>(rows.size());
  double sxx = 0.0, sxy = 0.0;
  for (const auto& r : rows) {
    const double dx = r.age - mean_age;
    sxx += dx * dx;
    sxy += dx * (r.bag - mean_bag);
  }
  if (!(sxx > 0.0)) throw Error(ErrorCode::DegenerateReference, "all reference ages are equal");
  BiasParams p;
  p.model_name = std::move(model_name);
  p.slope = sxy / sxx;
  p.intercept = mean_bag - p.slope * mean_age;
  if (!std::isfinite(p.slope) || !std::isfinite(p.intercept))
    throw Error(ErrorCode::DegenerateReference, "non-finite bias parameters");
  return p;
}

constexpr double apply_bias(double bag, double age, const BiasParams& p) {
  return bag - (p.slope * age + p.intercept);
}

/// Which sessions serve as the bias-correction reference.
enum class ReferenceSelection { CnStable, Cn, All, None };

/// Case-insensitive: "CN_stable", "CN", "all", "none".
inline std::optional<ReferenceSelection> parse_reference(std::string_view text) {
  std::string s(text);
  for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  if (s == "cn_stable") return ReferenceSelection::CnStable;
  if (s == "cn") return ReferenceSelection::Cn;
  if (s == "all") return ReferenceSelection::All;
  if (s == "none") return ReferenceSelection::None;
  return std::nullopt;
}

inline std::vector<SessionIndex> reference_sessions(const Cohort& cohort, ReferenceSelection sel) {
  std::vector<SessionIndex> out;
  for (SessionIndex i = 0; i < cohort.size(); ++i) {
    switch (sel) {
      case ReferenceSelection::CnStable:
        if (cohort.label(i).group == LabelGroup::CN_stable) out.push_back(i);
        break;
      case ReferenceSelection::Cn:
        if (cohort.session(i).diagnosis == Diagnosis::CN) out.push_back(i);
        break;
      case ReferenceSelection::All:
        out.push_back(i);
        break;
      case ReferenceSelection::None:
        break;
    }
  }
  return out;
}

/// Fits bias parameters for `model` on the given cohort sessions.
inline BiasParams fit_bias(const Cohort& cohort, const std::string& model,
                           std::span<const SessionIndex> reference) {
  if (!cohort.has_model(model)) throw Error(ErrorCode::UnknownModel, model);
  std::vector<AgeBag> rows;
  for (auto i : reference) {
    const auto& s = cohort.session(i);
    if (auto e = s.estimate(model)) rows.push_back({s.age, compute_bag(*e, s.age)});
  }
  return fit_bias(rows, model);
}

/// Per-session corrected gaps and change rates for a set of models.
class BagTable {
 public:
  BagTable() = default;

  /// Fits one BiasParams per model on `reference` (identity when empty).
  BagTable(const Cohort& cohort, const std::vector<std::string>& models,
           std::span<const SessionIndex> reference) {
    for (const auto& m : models) {
      if (!cohort.has_model(m)) throw Error(ErrorCode::UnknownModel, m);
      BiasParams p{m, 0.0, 0.0};
      if (!reference.empty()) p = fit_bias(cohort, m, reference);
      add(cohort, p);
    }
  }

  BagTable(const Cohort& cohort, const std::vector<BiasParams>& params) {
    for (const auto& p : params) {
      if (!cohort.has_model(p.model_name)) throw Error(ErrorCode::UnknownModel, p.model_name);
      add(cohort, p);
    }
  }

  bool has(const std::string& model) const { return bags_.count(model) != 0; }

  const std::vector<std::optional<double>>& bags(const std::string& model) const {
    auto it = bags_.find(model);
    if (it == bags_.end()) throw Error(ErrorCode::UnknownModel, model);
    return it->second;
  }

  const std::vector<std::optional<double>>& rates(const std::string& model) const {
    auto it = rates_.find(model);
    if (it == rates_.end()) throw Error(ErrorCode::UnknownModel, model);
    return it->second;
  }

  const BiasParams& params(const std::string& model) const {
    auto it = params_.find(model);
    if (it == params_.end()) throw Error(ErrorCode::UnknownModel, model);
    return it->second;
  }

 private:
  void add(const Cohort& cohort, const BiasParams& p);

  std::map<std::string, BiasParams> params_;
  std::map<std::string, std::vector<std::optional<double>>> bags_;
  std::map<std::string, std::vector<std::optional<double>>> rates_;
};

/// Gap change rate against the immediately preceding session of the same
/// participant; absent for first sessions or when either gap is missing.
inline std::vector<std::optional<double>> compute_bag_rate(
    const Cohort& cohort, const std::vector<std::optional<double>>& bags) {
  std::vector<std::optional<double>> out(cohort.size());
  for (SessionIndex i = 0; i < cohort.size(); ++i) {
    const auto prev = cohort.previous_session(i);
    if (!prev || !bags[i] || !bags[*prev]) continue;
    const double dt = cohort.session(i).age - cohort.session(*prev).age;
    if (dt == 0.0) throw Error(ErrorCode::ZeroInterval, cohort.session(i).participant_id);
    out[i] = (*bags[i] - *bags[*prev]) / dt;
  }
  return out;
}

inline void BagTable::add(const Cohort& cohort, const BiasParams& p) {
  std::vector<std::optional<double>> bags(cohort.size());
  for (SessionIndex i = 0; i < cohort.size(); ++i) {
    const auto& s = cohort.session(i);
    if (auto e = s.estimate(p.model_name))
      bags[i] = apply_bias(compute_bag(*e, s.age), s.age, p);
  }
  rates_[p.model_name] = compute_bag_rate(cohort, bags);
  bags_[p.model_name] = std::move(bags);
  params_[p.model_name] = p;
}

/// Feature selection: the models whose gaps enter the matrix and whether
/// change-rate columns are added. No models means the age+sex baseline.
struct FeatureSpec {
  std::vector<std::string> models;
  bool include_rate = false;

  /// "basic", or "model[,model...][+rate]".
  static FeatureSpec parse(std::string_view text) {
    FeatureSpec spec;
    std::string s(csv::trim(text));
    const std::string suffix = "+rate";
    if (s.size() > suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0) {
      spec.include_rate = true;
      s.resize(s.size() - suffix.size());
    }
    if (s == "basic" || s.empty()) return spec;
    for (auto& part : csv::split_line(s)) {
      auto t = std::string(csv::trim(part));
      if (!t.empty()) spec.models.push_back(t);
    }
    return spec;
  }

  std::string name() const {
    if (models.empty()) return include_rate ? "basic+rate" : "basic";
    std::string out;
    for (std::size_t i = 0; i < models.size(); ++i) out += (i ? "," : "") + models[i];
    if (include_rate) out += "+rate";
    return out;
  }
};

/// Dense row-major feature table with a missing-value mask.
struct FeatureMatrix {
  std::vector<std::string> column_names;
  std::vector<double> values;
  std::vector<unsigned char> missing;
  std::vector<SessionIndex> row_sessions;

  std::size_t rows() const { return column_names.empty() ? 0 : values.size() / column_names.size(); }
  std::size_t cols() const { return column_names.size(); }
  double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }
  bool is_missing(std::size_t r, std::size_t c) const { return missing[r * cols() + c] != 0; }

  FeatureMatrix select_rows(std::span<const std::size_t> idx) const {
    FeatureMatrix out;
    out.column_names = column_names;
    const std::size_t p = cols();
    out.values.reserve(idx.size() * p);
    out.missing.reserve(idx.size() * p);
    for (auto r : idx) {
      out.values.insert(out.values.end(), values.begin() + r * p, values.begin() + (r + 1) * p);
      out.missing.insert(out.missing.end(), missing.begin() + r * p, missing.begin() + (r + 1) * p);
      if (!row_sessions.empty()) out.row_sessions.push_back(row_sessions[r]);
    }
    return out;
  }

  friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;
};

/// Columns: age, sex, then per model [bag, bag*age, bag*sex], then with
/// rates per model [rate, rate*age, rate*sex].
inline FeatureMatrix build_feature_matrix(const Cohort& cohort, const BagTable& bags,
                                          std::span<const SessionIndex> rows,
                                          const FeatureSpec& spec) {
  for (const auto& m : spec.models)
    if (!bags.has(m)) throw Error(ErrorCode::UnknownModel, m);

  FeatureMatrix fm;
  fm.column_names = {"age", "sex"};
  for (const auto& m : spec.models) {
    fm.column_names.push_back(m + ":bag");
    fm.column_names.push_back(m + ":bag*age");
    fm.column_names.push_back(m + ":bag*sex");
  }
  if (spec.include_rate) {
    for (const auto& m : spec.models) {
      fm.column_names.push_back(m + ":rate");
      fm.column_names.push_back(m + ":rate*age");
      fm.column_names.push_back(m + ":rate*sex");
    }
  }
  fm.values.reserve(rows.size() * fm.cols());
  fm.missing.reserve(rows.size() * fm.cols());
  auto push = [&](std::optional<double> v) {
    fm.values.push_back(v.value_or(0.0));
    fm.missing.push_back(v ? 0 : 1);
  };
  auto push_triplet = [&](std::optional<double> v, double age, double sex) {
    push(v);
    push(v ? std::optional<double>(*v * age) : std::nullopt);
    push(v ? std::optional<double>(*v * sex) : std::nullopt);
  };
  for (auto i : rows) {
    const auto& s = cohort.session(i);
    const double sex = encode(s.sex);
    push(s.age);
    push(sex);
    for (const auto& m : spec.models) push_triplet(bags.bags(m)[i], s.age, sex);
    if (spec.include_rate)
      for (const auto& m : spec.models) push_triplet(bags.rates(m)[i], s.age, sex);
    fm.row_sessions.push_back(i);
  }
  return fm;
}

/// Training-fold statistics for mean imputation and min-max scaling to [-1, 1].
struct ScalerParams {
  std::vector<std::string> column_names;  // kept columns, in order
  std::vector<std::size_t> source_columns;
  std::vector<double> min, max, mean;
  std::vector<std::string> dropped;  // all-missing columns
};

inline ScalerParams fit_scaler(const FeatureMatrix& train) {
  if (train.rows() == 0) throw Error(ErrorCode::EmptyTrainingSet, "no training rows");
  ScalerParams p;
  for (std::size_t c = 0; c < train.cols(); ++c) {
    double lo = INFINITY, hi = -INFINITY, sum = 0.0;
    std::size_t n = 0;
    for (std::size_t r = 0; r < train.rows(); ++r) {
      if (train.is_missing(r, c)) continue;
      const double v = train.at(r, c);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      sum += v;
      ++n;
    }
    if (n == 0) {
      p.dropped.push_back(train.column_names[c]);
      continue;
    }
    p.column_names.push_back(train.column_names[c]);
    p.source_columns.push_back(c);
    p.min.push_back(lo);
    p.max.push_back(hi);
    p.mean.push_back(sum / static_cast<double>(n));
  }
  return p;
}

inline double scale_value(double v, double lo, double hi) {
  if (!(hi > lo)) return 0.0;
  return 2.0 * (v - lo) / (hi - lo) - 1.0;
}

inline double unscale_value(double z, double lo, double hi) {
  if (!(hi > lo)) return lo;
  return lo + (z + 1.0) * 0.5 * (hi - lo);
}

/// Imputes then scales; out-of-range values are not clamped.
inline FeatureMatrix apply_scaler(const FeatureMatrix& rows, const ScalerParams& p) {
  // Column set must match what the scaler saw (dropped columns included).
  std::size_t expected = p.column_names.size() + p.dropped.size();
  if (rows.cols() != expected)
    throw Error(ErrorCode::ColumnMismatch, "expected " + std::to_string(expected) +
                                               " columns, got " + std::to_string(rows.cols()));
  for (std::size_t k = 0; k < p.source_columns.size(); ++k)
    if (rows.column_names[p.source_columns[k]] != p.column_names[k])
      throw Error(ErrorCode::ColumnMismatch, "column '" + rows.column_names[p.source_columns[k]] +
                                                 "' where '" + p.column_names[k] + "' expected");
  FeatureMatrix out;
  out.column_names = p.column_names;
  out.row_sessions = rows.row_sessions;
  out.values.reserve(rows.rows() * p.column_names.size());
  out.missing.assign(rows.rows() * p.column_names.size(), 0);
  for (std::size_t r = 0; r < rows.rows(); ++r) {
    for (std::size_t k = 0; k < p.source_columns.size(); ++k) {
      const std::size_t c = p.source_columns[k];
      const double v = rows.is_missing(r, c) ? p.mean[k] : rows.at(r, c);
      out.values.push_back(scale_value(v, p.min[k], p.max[k]));
    }
  }
  return out;
}

}  // namespace bageval
