#include <sstream>

#include "oracles.hpp"
#include "test_util.hpp"

using namespace bageval;
using namespace testutil;

namespace {

std::string csv_bytes(const Cohort& c) {
  std::ostringstream out;
  export_sessions(c, out);
  return out.str();
}

SimConfig null_scenario(std::size_t n, std::uint64_t seed) {
  auto cfg = default_scenario(n, seed);
  for (auto& m : cfg.models) m.prodromal_offset = m.mci_offset = m.ad_offset = m.frailty_loading = 0.0;
  return cfg;
}

}  // namespace

TEST(Simulator, ZeroHazardsKeepEveryoneStable) {
  auto cfg = default_scenario(200, 1);
  cfg.mci_base_rate = 0.0;
  const auto c = label_trajectories(simulate_cohort(cfg).first);
  for (const auto& l : c.labels()) EXPECT_EQ(l.group, LabelGroup::CN_stable);
}

TEST(Simulator, NoiselessUnbiasedModelHasZeroGap) {
  SimConfig cfg;
  cfg.n_participants = 100;
  ModelEffect m;
  m.name = "exact";
  m.noise_sd = 1e-300;
  cfg.models = {m};
  const auto c = simulate_cohort(cfg).first;
  for (const auto& s : c.sessions()) EXPECT_LT(std::abs(compute_bag(s.estimates.at("exact"), s.age)), 1e-9);
}

TEST(Simulator, SameSeedSameBytes) {
  const auto a = simulate_cohort(default_scenario(300, 42));
  const auto b = simulate_cohort(default_scenario(300, 42));
  EXPECT_EQ(csv_bytes(a.first), csv_bytes(b.first));
  EXPECT_EQ(to_json(a.second).dump(), to_json(b.second).dump());
  EXPECT_NE(csv_bytes(a.first), csv_bytes(simulate_cohort(default_scenario(300, 43)).first));
}

TEST(Simulator, DefaultScenarioHasAllGroups) {
  const auto c = label_trajectories(simulate_cohort(default_scenario(500, 42)).first);
  std::map<LabelGroup, std::size_t> counts;
  for (const auto& l : c.labels()) ++counts[l.group];
  for (auto g : {LabelGroup::CN_stable, LabelGroup::CN_star, LabelGroup::MCI, LabelGroup::AD})
    EXPECT_GT(counts[g], 0u) << to_string(g);
}

TEST(Simulator, PlantedBiasSlopeAndLine) {
  // The grey-matter model carries no CN-session effect, so its stable-CN
  // gaps follow the planted bias line alone.
  const auto c = label_trajectories(simulate_cohort(default_scenario(500, 42)).first);
  std::vector<double> ages, bags;
  double resid = 0;
  for (SessionIndex i = 0; i < c.size(); ++i) {
    if (c.label(i).group != LabelGroup::CN_stable) continue;
    const auto& s = c.session(i);
    ages.push_back(s.age);
    bags.push_back(compute_bag(s.estimates.at("gm_ours"), s.age));
    resid += bags.back() - (-0.3 * s.age + 21.0);
  }
  const auto [slope, intercept] = oracle::ols(ages, bags);
  EXPECT_NEAR(slope, -0.3, 0.02);
  EXPECT_NEAR(resid / static_cast<double>(ages.size()), 0.0, 0.3);
}

TEST(Simulator, DiagnosesNeverRevert) {
  const auto c = simulate_cohort(default_scenario(500, 6)).first;
  for (const auto& p : c.participants())
    for (SessionIndex i = p.begin + 1; i < p.end; ++i)
      EXPECT_LE(static_cast<int>(c.session(i - 1).diagnosis), static_cast<int>(c.session(i).diagnosis));
}

TEST(Simulator, NullScenarioAucIntervalsCoverHalf) {
  int covered = 0;
  double auc_sum = 0;
  std::string misses;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto c = label_trajectories(simulate_cohort(null_scenario(500, seed)).first);
    const BagTable bags(c, c.models(), reference_sessions(c, ReferenceSelection::CnStable));
    const auto m = greedy_match(c, MatchSpec::for_groups({LabelGroup::CN_stable, LabelGroup::AD}));
    BootstrapSpec b;
    b.master_seed = seed;
    const auto r = evaluate_classification(c, bags, m, FeatureSpec::parse("wm_nonrigid,gm_ours"),
                                           ClassifierSpec::parse("logreg", seed), b);
    const bool ok = r.metrics.auc.ci_low <= 0.5 && 0.5 <= r.metrics.auc.ci_high;
    covered += ok;
    auc_sum += r.point_auc;
    if (!ok) misses += " seed " + std::to_string(seed) + " [" + std::to_string(r.metrics.auc.ci_low) + ", " +
                       std::to_string(r.metrics.auc.ci_high) + "]";
  }
  // The pair bootstrap treats LOOCV scores as fixed and ignores fold-to-fold
  // training noise, so its coverage runs below nominal (about 82% over 100
  // seeds). All 20 covering is not attainable; require a clear majority and
  // a mean AUC at chance instead.
  EXPECT_GE(covered, 15) << misses;
  EXPECT_NEAR(auc_sum / 20, 0.5, 0.05);
}

TEST(Simulator, FrailtyRecoveredByCox) {
  int positive = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto [raw, truth] = simulate_cohort(default_scenario(400, seed));
    const auto c = label_trajectories(raw);
    const BagTable bags(c, c.models(), reference_sessions(c, ReferenceSelection::CnStable));
    auto recs = build_survival_records(c, bags, {});
    std::map<std::string, double> frailty;
    for (const auto& t : truth.participants) frailty[t.participant_id] = std::log(t.frailty);
    for (auto& r : recs) r.covariates["log_frailty"] = frailty.at(r.participant_id);
    const auto fit = fit_cox(recs, {"age", "sex", "log_frailty"});
    positive += fit.coefficients[2] > 0.0;
  }
  EXPECT_GE(positive, 19);
}

TEST(Simulator, InvalidConfigs) {
  auto cfg = default_scenario(10, 1);
  cfg.n_participants = 0;
  EXPECT_EQ(error_of([&] { simulate_cohort(cfg); }), ErrorCode::InvalidConfig);
  cfg = default_scenario(10, 1);
  cfg.models[0].noise_sd = 0.0;
  EXPECT_EQ(error_of([&] { simulate_cohort(cfg); }), ErrorCode::InvalidConfig);
  cfg = default_scenario(10, 1);
  cfg.models.clear();
  EXPECT_EQ(error_of([&] { simulate_cohort(cfg); }), ErrorCode::InvalidConfig);
  cfg = default_scenario(10, 1);
  cfg.baseline_age_min = 95;
  EXPECT_EQ(error_of([&] { simulate_cohort(cfg); }), ErrorCode::InvalidConfig);
}

TEST(Simulator, ConfigJsonRoundTrip) {
  auto cfg = default_scenario(250, 9);
  cfg.models[1].noise_sd = 2.5;
  const auto back = sim_config_from_json(nlohmann::json::parse(to_json(cfg).dump()));
  EXPECT_EQ(csv_bytes(simulate_cohort(back).first), csv_bytes(simulate_cohort(cfg).first));
}
