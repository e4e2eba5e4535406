#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/special_functions/gamma.hpp>

#include "bageval/cohort.hpp"
#include "bageval/error.hpp"
#include "bageval/evaluation.hpp"
#include "bageval/features.hpp"

namespace bageval {

struct SurvivalRecord {
  std::string participant_id;
  double duration = 0.0;
  bool event = false;
  std::map<std::string, double> covariates;
};

/// How a model enters the Cox design: corrected brain age (age + corrected
/// gap) or the corrected gap itself.
enum class BrainAgeCovariate { BrainAge, Gap };

inline std::string covariate_name(const std::string& model) { return "brain_age:" + model; }

/// Baseline sessions of participants who are CN at baseline. Time origin is
/// the baseline age; the event is the first later non-CN diagnosis, otherwise
/// the record is censored at the last session. Participants without
/// follow-up are left out.
inline std::vector<SurvivalRecord> build_survival_records(const Cohort& cohort, const BagTable& bags,
                                                          const std::vector<std::string>& models,
                                                          BrainAgeCovariate mode = BrainAgeCovariate::BrainAge) {
  std::vector<SurvivalRecord> out;
  for (const auto& p : cohort.participants()) {
    const auto& base = cohort.session(p.begin);
    const auto group = cohort.label(p.begin).group;
    if (group != LabelGroup::CN_stable && group != LabelGroup::CN_star) continue;
    if (p.end - p.begin < 2) continue;
    SurvivalRecord r;
    r.participant_id = p.id;
    r.duration = cohort.session(p.end - 1).age - base.age;
    for (SessionIndex i = p.begin + 1; i < p.end; ++i) {
      if (cohort.session(i).diagnosis != Diagnosis::CN) {
        r.event = true;
        r.duration = cohort.session(i).age - base.age;
        break;
      }
    }
    r.covariates["age"] = base.age;
    r.covariates["sex"] = encode(base.sex);
    bool complete = true;
    for (const auto& m : models) {
      const auto& b = bags.bags(m)[p.begin];
      if (!b) {
        complete = false;
        break;
      }
      r.covariates[covariate_name(m)] = mode == BrainAgeCovariate::BrainAge ? base.age + *b : *b;
    }
    if (complete) out.push_back(std::move(r));
  }
  if (out.empty()) throw Error(ErrorCode::EmptySelection, "no CN baseline with follow-up");
  return out;
}

struct CoxFit {
  std::vector<std::string> covariate_names;
  std::vector<double> coefficients;
  std::vector<double> standard_errors;
  double log_partial_likelihood = 0.0;
  double aic = 0.0;
  int n_iterations = 0;
  bool converged = false;
  bool monotone_likelihood = false;
  double gradient_max_norm = 0.0;
  std::size_t n_records = 0;
  std::size_t n_events = 0;
};

struct CoxOptions {
  double tolerance = 1e-9;
  int max_iterations = 100;
  double coefficient_cap = 20.0;  // on the standardized scale
};

/// Design matrix in record order.
inline Eigen::MatrixXd cox_design(std::span<const SurvivalRecord> records, const std::vector<std::string>& names) {
  Eigen::MatrixXd x(records.size(), names.size());
  for (std::size_t i = 0; i < records.size(); ++i)
    for (std::size_t j = 0; j < names.size(); ++j) {
      auto it = records[i].covariates.find(names[j]);
      if (it == records[i].covariates.end())
        throw Error(ErrorCode::UnknownModel, "record " + records[i].participant_id + " lacks covariate " + names[j]);
      if (!std::isfinite(it->second)) throw Error(ErrorCode::NonFiniteAge, "non-finite covariate " + names[j]);
      x(i, j) = it->second;
    }
  return x;
}

/// Efron log partial likelihood with optional gradient and observed
/// information, for linear predictor x * beta.
inline double efron_log_likelihood(const Eigen::MatrixXd& x, std::span<const double> time, std::span<const unsigned char> event,
                                   const Eigen::VectorXd& beta, Eigen::VectorXd* gradient = nullptr,
                                   Eigen::MatrixXd* information = nullptr) {
  const Eigen::Index n = x.rows(), p = x.cols();
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return time[a] > time[b]; });
  const Eigen::VectorXd eta = x * beta;
  const double shift = n > 0 ? eta.maxCoeff() : 0.0;  // exp scaling; cancels in the ratio terms

  double loglik = 0.0;
  double s0 = 0.0;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);
  if (gradient) gradient->setZero(p);
  if (information) information->setZero(p, p);

  for (Eigen::Index k = 0; k < n;) {
    // All records sharing this time enter the risk set together.
    Eigen::Index m = k;
    double d0 = 0.0;
    Eigen::VectorXd d1 = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd d2 = Eigen::MatrixXd::Zero(p, p);
    int deaths = 0;
    while (m < n && time[order[m]] == time[order[k]]) {
      const Eigen::Index i = order[m];
      const double w = std::exp(eta(i) - shift);
      s0 += w;
      s1 += w * x.row(i).transpose();
      if (information) s2 += w * x.row(i).transpose() * x.row(i);
      if (event[i]) {
        ++deaths;
        d0 += w;
        d1 += w * x.row(i).transpose();
        if (information) d2 += w * x.row(i).transpose() * x.row(i);
        loglik += eta(i);
        if (gradient) *gradient += x.row(i).transpose();
      }
      ++m;
    }
    for (int l = 0; l < deaths; ++l) {
      const double frac = static_cast<double>(l) / deaths;
      const double a0 = s0 - frac * d0;
      loglik -= std::log(a0) + shift;
      if (gradient || information) {
        const Eigen::VectorXd a1 = s1 - frac * d1;
        if (gradient) *gradient -= a1 / a0;
        if (information) *information += (s2 - frac * d2) / a0 - a1 * a1.transpose() / (a0 * a0);
      }
    }
    k = m;
  }
  return loglik;
}

/// Newton-Raphson with step halving on standardized covariates.
inline CoxFit fit_cox(std::span<const SurvivalRecord> records, const std::vector<std::string>& names,
                      const CoxOptions& opt = {}) {
  CoxFit fit;
  fit.covariate_names = names;
  fit.n_records = records.size();
  std::vector<double> time(records.size());
  std::vector<unsigned char> ev(records.size());
  bool any_event = false;
  for (std::size_t i = 0; i < records.size(); ++i) {
    time[i] = records[i].duration;
    ev[i] = records[i].event ? 1 : 0;
    any_event |= records[i].event;
    fit.n_events += records[i].event ? 1 : 0;
  }
  if (!any_event) throw Error(ErrorCode::NoEvents, "no events among " + std::to_string(records.size()) + " records");

  const Eigen::Index p = static_cast<Eigen::Index>(names.size());
  Eigen::MatrixXd x = cox_design(records, names);
  Eigen::VectorXd center(p), scale(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    center(j) = x.col(j).mean();
    const double var = (x.col(j).array() - center(j)).square().sum() / static_cast<double>(x.rows());
    scale(j) = std::sqrt(var);
    if (!(scale(j) > 1e-12 * std::max(1.0, std::abs(center(j)))))
      throw Error(ErrorCode::ZeroVarianceCovariate, names[j]);
    x.col(j) = (x.col(j).array() - center(j)) / scale(j);
  }

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd grad(p);
  Eigen::MatrixXd info(p, p);
  double loglik = efron_log_likelihood(x, time, ev, beta, &grad, &info);
  int iter = 0;
  for (; iter < opt.max_iterations; ++iter) {
    if (p == 0 || grad.cwiseAbs().maxCoeff() < opt.tolerance) break;
    Eigen::VectorXd step = info.ldlt().solve(grad);
    if (!step.allFinite()) step = grad;
    double t = 1.0;
    bool improved = false;
    for (int h = 0; h < 40; ++h) {
      Eigen::VectorXd cand = beta + t * step;
      bool capped = false;
      for (Eigen::Index j = 0; j < p; ++j)
        if (std::abs(cand(j)) > opt.coefficient_cap) {
          cand(j) = std::copysign(opt.coefficient_cap, cand(j));
          capped = true;
        }
      Eigen::VectorXd g2(p);
      Eigen::MatrixXd i2(p, p);
      const double ll = efron_log_likelihood(x, time, ev, cand, &g2, &i2);
      if (std::isfinite(ll) && ll >= loglik - 1e-12 * std::abs(loglik)) {
        if (capped) fit.monotone_likelihood = true;
        improved = ll > loglik || (cand - beta).norm() > 0.0;
        beta = cand;
        loglik = ll;
        grad = g2;
        info = i2;
        break;
      }
      t *= 0.5;
    }
    if (!improved) {
      ++iter;
      break;
    }
  }
  fit.n_iterations = iter;
  fit.gradient_max_norm = p ? grad.cwiseAbs().maxCoeff() : 0.0;
  fit.converged = fit.gradient_max_norm < opt.tolerance;
  for (Eigen::Index j = 0; j < p; ++j)
    if (std::abs(std::abs(beta(j)) - opt.coefficient_cap) < 1e-12) fit.monotone_likelihood = true;
  fit.log_partial_likelihood = loglik;
  fit.aic = 2.0 * static_cast<double>(p) - 2.0 * loglik;
  const Eigen::MatrixXd cov = info.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
  for (Eigen::Index j = 0; j < p; ++j) {
    fit.coefficients.push_back(beta(j) / scale(j));
    const double v = cov(j, j);
    fit.standard_errors.push_back(v > 0 ? std::sqrt(v) / scale(j) : NAN);
  }
  return fit;
}

/// Linear predictor of each record under the fitted coefficients.
inline std::vector<double> risk_scores(const CoxFit& fit, std::span<const SurvivalRecord> records) {
  const Eigen::MatrixXd x = cox_design(records, fit.covariate_names);
  std::vector<double> out(records.size(), 0.0);
  for (std::size_t i = 0; i < records.size(); ++i)
    for (std::size_t j = 0; j < fit.coefficients.size(); ++j) out[i] += fit.coefficients[j] * x(i, j);
  return out;
}

/// Harrell's C. A pair is comparable when the shorter duration ends in an
/// event (an event tied in time with a censoring also counts); risk ties
/// score 0.5.
inline double concordance_index(std::span<const double> risk, std::span<const SurvivalRecord> records) {
  double concordant = 0.0, comparable = 0.0;
  const std::size_t n = records.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!records[i].event) continue;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const bool earlier = records[i].duration < records[j].duration ||
                           (records[i].duration == records[j].duration && !records[j].event);
      if (!earlier) continue;
      comparable += 1.0;
      if (risk[i] > risk[j]) concordant += 1.0;
      else if (risk[i] == risk[j]) concordant += 0.5;
    }
  }
  if (comparable == 0.0) throw Error(ErrorCode::NoComparablePairs, "no comparable pairs");
  return concordant / comparable;
}

inline double concordance_index(const CoxFit& fit, std::span<const SurvivalRecord> records) {
  const auto risk = risk_scores(fit, records);
  return concordance_index(risk, records);
}

/// Upper tail of the chi-squared distribution.
inline double chi_squared_upper_tail(double x, int df) {
  if (df <= 0) throw Error(ErrorCode::InvalidConfig, "chi-squared df must be positive");
  if (x <= 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  return boost::math::gamma_q(0.5 * df, 0.5 * x);
}

struct LRTResult {
  double chi_squared = 0.0;
  int df = 0;
  double p_value = 1.0;
};

inline LRTResult likelihood_ratio_test(const CoxFit& reduced, const CoxFit& full) {
  const std::set<std::string> big(full.covariate_names.begin(), full.covariate_names.end());
  for (const auto& n : reduced.covariate_names)
    if (!big.count(n)) throw Error(ErrorCode::NotNested, "covariate " + n + " missing from the full model");
  if (reduced.n_records != full.n_records || reduced.n_events != full.n_events)
    throw Error(ErrorCode::NotNested, "models were fitted on different records");
  LRTResult r;
  r.df = static_cast<int>(full.covariate_names.size() - reduced.covariate_names.size());
  r.chi_squared = std::max(0.0, 2.0 * (full.log_partial_likelihood - reduced.log_partial_likelihood));
  r.p_value = r.df == 0 ? 1.0 : chi_squared_upper_tail(r.chi_squared, r.df);
  return r;
}

struct LifeTableRow {
  double start = 0.0;
  double end = 0.0;
  std::size_t n_at_risk = 0;
  std::size_t n_events = 0;
  std::size_t n_censored = 0;
};

using LifeTable = std::vector<LifeTableRow>;

inline LifeTable build_life_table(std::span<const SurvivalRecord> records, double width = 2.0) {
  if (records.empty()) throw Error(ErrorCode::EmptySelection, "life table over zero records");
  if (!(width > 0.0)) throw Error(ErrorCode::InvalidConfig, "interval width must be > 0");
  double max_d = 0.0;
  for (const auto& r : records) max_d = std::max(max_d, r.duration);
  const auto n_rows = static_cast<std::size_t>(std::floor(max_d / width)) + 1;
  LifeTable table(n_rows);
  for (std::size_t k = 0; k < n_rows; ++k) {
    table[k].start = static_cast<double>(k) * width;
    table[k].end = static_cast<double>(k + 1) * width;
  }
  for (const auto& r : records) {
    const auto k = std::min(n_rows - 1, static_cast<std::size_t>(std::floor(r.duration / width)));
    for (std::size_t j = 0; j <= k; ++j) ++table[j].n_at_risk;
    (r.event ? table[k].n_events : table[k].n_censored)++;
  }
  return table;
}

// ---------------------------------------------------------------------------
// Scenario comparison (with vs without an added covariate)

struct ScenarioRow {
  std::string features;
  std::vector<std::string> base_covariates;
  std::string added_covariate;
  double c_index_without_point = 0.0;
  double c_index_with_point = 0.0;
  MetricSummary c_index_without;
  MetricSummary c_index_with;
  CoxFit fit_without;
  CoxFit fit_with;
  LRTResult lrt;
};

/// Bootstrap C-index of a refitted Cox model, resampling records.
inline MetricSummary bootstrap_c_index(std::span<const SurvivalRecord> records, const std::vector<std::string>& names,
                                       const BootstrapSpec& spec) {
  return bootstrap(
      records.size(),
      [&](std::span<const std::size_t> idx) -> std::optional<double> {
        std::vector<SurvivalRecord> sample;
        sample.reserve(idx.size());
        for (auto i : idx) sample.push_back(records[i]);
        try {
          const auto fit = fit_cox(sample, names);
          return concordance_index(fit, sample);
        } catch (const Error&) {
          return std::nullopt;
        }
      },
      spec);
}

/// Scenario names: "basic" (age + sex) or a model name (basic + that model's
/// brain age). Each row compares the scenario with and without `added_model`.
inline std::vector<ScenarioRow> survival_scenarios(std::span<const SurvivalRecord> records,
                                                   const std::vector<std::string>& scenarios,
                                                   const std::string& added_model, const BootstrapSpec& bspec) {
  std::vector<ScenarioRow> rows(scenarios.size());
  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    ScenarioRow& row = rows[s];
    row.base_covariates = {"age", "sex"};
    row.features = "basic";
    if (scenarios[s] != "basic") {
      row.base_covariates.push_back(covariate_name(scenarios[s]));
      row.features = "basic+" + scenarios[s];
    }
    row.added_covariate = covariate_name(added_model);
    auto with = row.base_covariates;
    with.push_back(row.added_covariate);
    row.fit_without = fit_cox(records, row.base_covariates);
    row.fit_with = fit_cox(records, with);
    row.c_index_without_point = concordance_index(row.fit_without, records);
    row.c_index_with_point = concordance_index(row.fit_with, records);
    row.lrt = likelihood_ratio_test(row.fit_without, row.fit_with);
    BootstrapSpec b = bspec;
    b.master_seed = derive_seed(bspec.master_seed, s);
    row.c_index_without = bootstrap_c_index(records, row.base_covariates, b);
    row.c_index_with = bootstrap_c_index(records, with, b);
  }
  return rows;
}

}  // namespace bageval
