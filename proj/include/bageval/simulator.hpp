#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/special_functions/digamma.hpp>

#include "json.hpp"

#include "bageval/cohort.hpp"
#include "bageval/error.hpp"
#include "bageval/random.hpp"

namespace bageval {

/// Planted effect of one brain-age model.
struct ModelEffect {
  std::string name;
  double noise_sd = 3.0;
  double bias_slope = 0.0;
  double bias_intercept = 0.0;
  /// Offset applied to CN sessions whose true time to MCI lies in
  /// [prodromal_start, prodromal_end].
  double prodromal_start = 0.0;
  double prodromal_end = 0.0;
  double prodromal_offset = 0.0;
  double mci_offset = 0.0;
  double ad_offset = 0.0;
  /// Years added per unit of centred log-frailty in CN sessions. Links the
  /// pre-symptomatic estimate to the participant's latent MCI risk.
  double frailty_loading = 0.0;
};

struct SimConfig {
  std::size_t n_participants = 500;
  double baseline_age_min = 50.0;
  double baseline_age_max = 90.0;
  double visit_interval_mean = 2.0;
  double visit_interval_sd = 1.0;
  double visit_interval_min = 0.25;
  int max_followups = 8;
  double sex_ratio = 0.45;  // fraction male
  /// MCI hazard: base_rate * frailty * exp(age_slope * (age - 70)), from
  /// risk_onset_age on.
  double mci_base_rate = 0.15;
  double mci_age_slope = 0.04;
  double risk_onset_age = 60.0;
  double frailty_shape = 1.0;  // gamma(shape, 1/shape); 0 disables frailty
  double ad_conversion_rate = 0.12;
  std::vector<ModelEffect> models;
  std::string dataset_id = "SIM";
  std::uint64_t master_seed = 0;

  void validate() const {
    auto bad = [](const std::string& why) { throw Error(ErrorCode::InvalidConfig, why); };
    if (n_participants == 0) bad("n_participants must be positive");
    if (!(baseline_age_min > 0.0) || !(baseline_age_min < baseline_age_max)) bad("invalid baseline age range");
    if (!(visit_interval_mean > 0.0) || visit_interval_sd < 0.0 || !(visit_interval_min > 0.0))
      bad("invalid visit interval");
    if (max_followups < 0) bad("max_followups must be >= 0");
    if (sex_ratio < 0.0 || sex_ratio > 1.0) bad("sex_ratio must lie in [0, 1]");
    if (mci_base_rate < 0.0 || ad_conversion_rate < 0.0 || frailty_shape < 0.0) bad("rates must be >= 0");
    if (models.empty()) bad("at least one model is required");
    for (const auto& m : models) {
      if (m.name.empty()) bad("model name must be non-empty");
      if (!(m.noise_sd > 0.0)) bad("noise_sd must be > 0 for model " + m.name);
      if (!(m.prodromal_start <= m.prodromal_end)) bad("prodromal window must have start <= end for " + m.name);
    }
  }
};

struct ParticipantTruth {
  std::string participant_id;
  double frailty = 1.0;
  std::optional<double> mci_onset_age;
  std::optional<double> ad_onset_age;
};

struct SimTruth {
  std::vector<ParticipantTruth> participants;
  /// Injected offset per (participant_id, age) key and model.
  std::map<std::pair<std::string, double>, std::map<std::string, double>> offsets;
};

namespace detail {

// Dividing by the reciprocal keeps 0.01-grid values as the nearest doubles.
inline double round_to(double v, double step) {
  const double inv = 1.0 / step;
  return std::round(v * inv) / inv;
}

// Inverse of the cumulative hazard H(a) = r/g * (exp(g(a-70)) - exp(g(a0-70))).
inline std::optional<double> draw_onset(Rng& rng, double rate, double slope, double onset_age) {
  if (rate <= 0.0) return std::nullopt;
  const double e = rng.exponential(1.0);
  if (std::abs(slope) < 1e-12) return onset_age + e / rate;
  const double inner = e * slope / rate + std::exp(slope * (onset_age - 70.0));
  if (!(inner > 0.0)) return std::nullopt;  // negative slope: may never occur
  return 70.0 + std::log(inner) / slope;
}

}  // namespace detail

inline double planted_offset(const ModelEffect& m, Diagnosis dx, std::optional<double> time_to_mci) {
  switch (dx) {
    case Diagnosis::CN:
      if (time_to_mci && *time_to_mci >= m.prodromal_start && *time_to_mci <= m.prodromal_end)
        return m.prodromal_offset;
      return 0.0;
    case Diagnosis::MCI: return m.mci_offset;
    case Diagnosis::AD: return m.ad_offset;
  }
  return 0.0;
}

/// Seeded synthetic cohort with monotone CN -> MCI -> AD trajectories.
inline std::pair<Cohort, SimTruth> simulate_cohort(const SimConfig& cfg) {
  cfg.validate();
  std::vector<SessionRecord> sessions;
  SimTruth truth;
  char id[32];
  for (std::size_t p = 0; p < cfg.n_participants; ++p) {
    Rng rng(derive_seed(cfg.master_seed, p));
    std::snprintf(id, sizeof id, "sub-%05zu", p);
    ParticipantTruth t;
    t.participant_id = id;
    const Sex sex = rng.bernoulli(cfg.sex_ratio) ? Sex::Male : Sex::Female;
    const double baseline = detail::round_to(rng.uniform(cfg.baseline_age_min, cfg.baseline_age_max), 0.01);
    t.frailty = cfg.frailty_shape > 0.0 ? rng.gamma(cfg.frailty_shape, 1.0 / cfg.frailty_shape) : 1.0;
    t.mci_onset_age = detail::draw_onset(rng, cfg.mci_base_rate * t.frailty, cfg.mci_age_slope, cfg.risk_onset_age);
    if (t.mci_onset_age && cfg.ad_conversion_rate > 0.0)
      t.ad_onset_age = *t.mci_onset_age + rng.exponential(cfg.ad_conversion_rate);
    // E[log f] for gamma(k, 1/k) is digamma(k) - log(k).
    const double log_frailty =
        cfg.frailty_shape > 0.0
            ? std::log(t.frailty) - (boost::math::digamma(cfg.frailty_shape) - std::log(cfg.frailty_shape))
            : 0.0;
    const int followups = static_cast<int>(rng.index(static_cast<std::size_t>(cfg.max_followups) + 1));

    double age = baseline;
    for (int v = 0; v <= followups; ++v) {
      if (v > 0) {
        const double gap = std::max(cfg.visit_interval_min, rng.normal(cfg.visit_interval_mean, cfg.visit_interval_sd));
        age = detail::round_to(age + gap, 0.01);
      }
      SessionRecord s;
      s.dataset_id = cfg.dataset_id;
      s.participant_id = id;
      s.age = age;
      s.sex = sex;
      s.diagnosis = Diagnosis::CN;
      if (t.mci_onset_age && age >= *t.mci_onset_age) s.diagnosis = Diagnosis::MCI;
      if (t.ad_onset_age && age >= *t.ad_onset_age) s.diagnosis = Diagnosis::AD;
      std::optional<double> time_to_mci;
      if (t.mci_onset_age) time_to_mci = *t.mci_onset_age - age;
      auto& offs = truth.offsets[{s.participant_id, s.age}];
      for (const auto& m : cfg.models) {
        const double off = planted_offset(m, s.diagnosis, time_to_mci);
        const double risk = s.diagnosis == Diagnosis::CN ? m.frailty_loading * log_frailty : 0.0;
        offs[m.name] = off;
        s.estimates[m.name] = age + off + risk + m.bias_slope * age + m.bias_intercept + rng.normal(0.0, m.noise_sd);
      }
      sessions.push_back(std::move(s));
    }
    truth.participants.push_back(std::move(t));
  }
  std::vector<std::string> names;
  for (const auto& m : cfg.models) names.push_back(m.name);
  return {Cohort(std::move(sessions), std::move(names)), std::move(truth)};
}

/// Three models: a white-matter model that ages early (0-4 years before MCI),
/// a grey-matter model that ages at MCI/AD, and an affine white-matter model
/// in between. All share a -0.3 regression-to-the-mean bias. The white-matter
/// model also tracks latent MCI risk in CN sessions.
inline SimConfig default_scenario(std::size_t n = 500, std::uint64_t seed = 42) {
  SimConfig cfg;
  cfg.n_participants = n;
  cfg.master_seed = seed;
  auto model = [](std::string name, double prodromal, double mci, double ad) {
    ModelEffect m;
    m.name = std::move(name);
    m.noise_sd = 3.0;
    m.bias_slope = -0.3;
    m.bias_intercept = 21.0;  // zero bias at age 70
    m.prodromal_start = 0.0;
    m.prodromal_end = 4.0;
    m.prodromal_offset = prodromal;
    m.mci_offset = mci;
    m.ad_offset = ad;
    return m;
  };
  cfg.models = {model("wm_nonrigid", 2.0, 0.0, 2.0), model("wm_affine", 1.0, 1.0, 3.0),
                model("gm_ours", 0.0, 2.0, 4.0)};
  cfg.models[0].frailty_loading = 0.75;
  return cfg;
}

inline nlohmann::json to_json(const SimTruth& truth) {
  nlohmann::json j;
  auto& ps = j["participants"] = nlohmann::json::array();
  for (const auto& p : truth.participants) {
    nlohmann::json o;
    o["participant_id"] = p.participant_id;
    o["frailty"] = p.frailty;
    o["mci_onset_age"] = p.mci_onset_age ? nlohmann::json(*p.mci_onset_age) : nlohmann::json();
    o["ad_onset_age"] = p.ad_onset_age ? nlohmann::json(*p.ad_onset_age) : nlohmann::json();
    ps.push_back(o);
  }
  auto& ss = j["session_offsets"] = nlohmann::json::array();
  for (const auto& [key, offs] : truth.offsets)
    ss.push_back({{"participant_id", key.first}, {"age", key.second}, {"offsets", offs}});
  return j;
}

inline nlohmann::json to_json(const SimConfig& c) {
  nlohmann::json j;
  j["n_participants"] = c.n_participants;
  j["baseline_age_range"] = {c.baseline_age_min, c.baseline_age_max};
  j["visit_interval"] = {{"mean", c.visit_interval_mean}, {"sd", c.visit_interval_sd}, {"min", c.visit_interval_min}};
  j["max_followups"] = c.max_followups;
  j["sex_ratio"] = c.sex_ratio;
  j["mci_hazard"] = {{"base_rate", c.mci_base_rate},
                     {"age_slope", c.mci_age_slope},
                     {"risk_onset_age", c.risk_onset_age},
                     {"frailty_shape", c.frailty_shape}};
  j["ad_conversion_rate"] = c.ad_conversion_rate;
  j["dataset_id"] = c.dataset_id;
  j["master_seed"] = c.master_seed;
  auto& ms = j["models"] = nlohmann::json::array();
  for (const auto& m : c.models)
    ms.push_back({{"name", m.name},
                  {"noise_sd", m.noise_sd},
                  {"bias_slope", m.bias_slope},
                  {"bias_intercept", m.bias_intercept},
                  {"prodromal_window", {m.prodromal_start, m.prodromal_end}},
                  {"prodromal_offset", m.prodromal_offset},
                  {"mci_offset", m.mci_offset},
                  {"ad_offset", m.ad_offset},
                  {"frailty_loading", m.frailty_loading}});
  return j;
}

/// Reads a config; absent fields keep the defaults of `base`.
inline SimConfig sim_config_from_json(const nlohmann::json& j, SimConfig base = default_scenario()) {
  try {
    SimConfig c = std::move(base);
    c.n_participants = j.value("n_participants", c.n_participants);
    if (j.contains("baseline_age_range")) {
      c.baseline_age_min = j["baseline_age_range"][0].get<double>();
      c.baseline_age_max = j["baseline_age_range"][1].get<double>();
    }
    if (j.contains("visit_interval")) {
      const auto& v = j["visit_interval"];
      c.visit_interval_mean = v.value("mean", c.visit_interval_mean);
      c.visit_interval_sd = v.value("sd", c.visit_interval_sd);
      c.visit_interval_min = v.value("min", c.visit_interval_min);
    }
    c.max_followups = j.value("max_followups", c.max_followups);
    c.sex_ratio = j.value("sex_ratio", c.sex_ratio);
    if (j.contains("mci_hazard")) {
      const auto& h = j["mci_hazard"];
      c.mci_base_rate = h.value("base_rate", c.mci_base_rate);
      c.mci_age_slope = h.value("age_slope", c.mci_age_slope);
      c.risk_onset_age = h.value("risk_onset_age", c.risk_onset_age);
      c.frailty_shape = h.value("frailty_shape", c.frailty_shape);
    }
    c.ad_conversion_rate = j.value("ad_conversion_rate", c.ad_conversion_rate);
    c.dataset_id = j.value("dataset_id", c.dataset_id);
    c.master_seed = j.value("master_seed", c.master_seed);
    if (j.contains("models")) {
      c.models.clear();
      for (const auto& o : j["models"]) {
        ModelEffect m;
        m.name = o.at("name").get<std::string>();
        m.noise_sd = o.value("noise_sd", m.noise_sd);
        m.bias_slope = o.value("bias_slope", m.bias_slope);
        m.bias_intercept = o.value("bias_intercept", m.bias_intercept);
        if (o.contains("prodromal_window")) {
          m.prodromal_start = o["prodromal_window"][0].get<double>();
          m.prodromal_end = o["prodromal_window"][1].get<double>();
        }
        m.prodromal_offset = o.value("prodromal_offset", m.prodromal_offset);
        m.mci_offset = o.value("mci_offset", m.mci_offset);
        m.ad_offset = o.value("ad_offset", m.ad_offset);
        m.frailty_loading = o.value("frailty_loading", m.frailty_loading);
        c.models.push_back(std::move(m));
      }
    }
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigSchemaError, std::string("simulation config: ") + e.what());
  }
}

}  // namespace bageval
