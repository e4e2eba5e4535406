#include <random>

#include "oracles.hpp"
#include "test_util.hpp"

using namespace bageval;
using namespace testutil;

TEST(Bag, Definition) {
  EXPECT_DOUBLE_EQ(compute_bag(75.0, 70.0), 5.0);
  EXPECT_DOUBLE_EQ(compute_bag(70.0, 70.0), 0.0);
  EXPECT_NEAR(compute_bag(68.2, 73.1), -4.9, 1e-12);
}

TEST(Bag, Antisymmetric) {
  Rng rng(1);
  for (int k = 0; k < 1000; ++k) {
    const double a = rng.uniform(40, 100), b = rng.uniform(40, 100);
    EXPECT_EQ(compute_bag(a, b), -compute_bag(b, a));
  }
}

TEST(Bias, ClosedFormCases) {
  std::vector<AgeBag> zero, line, two;
  for (double age : {60.0, 65.0, 71.0, 80.0}) {
    zero.push_back({age, 0.0});
    line.push_back({age, 0.5 * age - 30.0});
    two.push_back({age, 2.0});
  }
  auto p = fit_bias(zero);
  EXPECT_EQ(p.slope, 0.0);
  EXPECT_EQ(p.intercept, 0.0);
  p = fit_bias(line);
  EXPECT_NEAR(p.slope, 0.5, 1e-12);
  EXPECT_NEAR(p.intercept, -30.0, 1e-10);
  p = fit_bias(two);
  EXPECT_NEAR(p.slope, 0.0, 1e-15);
  EXPECT_NEAR(p.intercept, 2.0, 1e-12);
}

TEST(Bias, DegenerateReference) {
  std::vector<AgeBag> same = {{70, 1}, {70, 2}, {70, 3}};
  EXPECT_EQ(error_of([&] { fit_bias(same); }), ErrorCode::DegenerateReference);
  std::vector<AgeBag> one = {{70, 1}};
  EXPECT_EQ(error_of([&] { fit_bias(one); }), ErrorCode::DegenerateReference);
}

TEST(Bias, Apply) {
  EXPECT_DOUBLE_EQ(apply_bias(5.0, 70.0, {"m", 0.5, -30.0}), 0.0);
  EXPECT_DOUBLE_EQ(apply_bias(3.7, 55.0, {"m", 0.0, 0.0}), 3.7);
}

TEST(Bias, ResidualsAreFlat) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    std::vector<AgeBag> rows;
    for (int i = 0; i < 300; ++i) {
      const double age = rng.uniform(50, 90);
      rows.push_back({age, -0.3 * (age - 70) + rng.normal(0, 3)});
    }
    const auto p = fit_bias(rows);
    std::vector<double> ages, res;
    for (const auto& r : rows) {
      ages.push_back(r.age);
      res.push_back(apply_bias(r.bag, r.age, p));
    }
    const auto [slope, intercept] = oracle::ols(ages, res);
    EXPECT_LT(std::abs(slope), 1e-8);
    EXPECT_LT(std::abs(intercept), 1e-8);
  }
}

TEST(BagRate, Examples) {
  const auto c = make_cohort({{"p", 70, Sex::Female, Diagnosis::CN, {{"m", 72}}},
                              {"p", 72, Sex::Female, Diagnosis::CN, {{"m", 75}}},
                              {"q", 70, Sex::Male, Diagnosis::CN, {{"m", 71}}},
                              {"q", 71.5, Sex::Male, Diagnosis::CN, {{"m", 72.5}}},
                              {"r", 66, Sex::Male, Diagnosis::CN, {{"m", 66}}}});
  const BagTable bags(c, std::vector<std::string>{"m"}, {});
  const auto& rate = bags.rates("m");
  EXPECT_FALSE(rate[0]);
  EXPECT_DOUBLE_EQ(*rate[1], 0.5);
  EXPECT_FALSE(rate[2]);
  EXPECT_DOUBLE_EQ(*rate[3], 0.0);
  EXPECT_FALSE(rate[4]);
}

TEST(FeatureMatrix, ColumnCountsAndSexInteraction) {
  const auto c = make_cohort({{"p", 70, Sex::Female, Diagnosis::CN, {{"a", 73}, {"b", 70}}},
                              {"p", 72, Sex::Female, Diagnosis::CN, {{"a", 75}, {"b", 71}}}},
                             {"a", "b"});
  const BagTable bags(c, std::vector<std::string>{"a", "b"}, {});
  const auto rows = all_sessions(c);
  EXPECT_EQ(build_feature_matrix(c, bags, rows, FeatureSpec::parse("a")).cols(), 5u);
  EXPECT_EQ(build_feature_matrix(c, bags, rows, FeatureSpec::parse("a,b+rate")).cols(), 14u);
  const auto fm = build_feature_matrix(c, bags, rows, FeatureSpec::parse("a"));
  EXPECT_EQ(fm.column_names[2], "a:bag");
  EXPECT_DOUBLE_EQ(fm.at(0, 2), 3.0);
  EXPECT_DOUBLE_EQ(fm.at(0, 4), 0.0);
  EXPECT_EQ(error_of([&] { build_feature_matrix(c, bags, rows, FeatureSpec::parse("zzz")); }),
            ErrorCode::UnknownModel);
}

TEST(FeatureMatrix, Deterministic) {
  const auto c = label_trajectories(simulate_cohort(default_scenario(150, 2)).first);
  const auto ref = reference_sessions(c, ReferenceSelection::CnStable);
  const BagTable b1(c, c.models(), ref), b2(c, c.models(), ref);
  const auto rows = all_sessions(c);
  const auto spec = FeatureSpec::parse("wm_nonrigid,gm_ours+rate");
  EXPECT_TRUE(build_feature_matrix(c, b1, rows, spec) == build_feature_matrix(c, b2, rows, spec));
}

namespace {

FeatureMatrix column(std::vector<std::optional<double>> v) {
  FeatureMatrix fm;
  fm.column_names = {"x"};
  for (auto x : v) {
    fm.values.push_back(x.value_or(0.0));
    fm.missing.push_back(x ? 0 : 1);
  }
  return fm;
}

}  // namespace

TEST(Scaler, Examples) {
  const auto p = fit_scaler(column({0.0, 10.0}));
  EXPECT_DOUBLE_EQ(apply_scaler(column({5.0}), p).at(0, 0), 0.0);
  EXPECT_NEAR(apply_scaler(column({-2.0}), p).at(0, 0), -1.4, 1e-15);
  EXPECT_DOUBLE_EQ(apply_scaler(column({std::nullopt}), p).at(0, 0), 0.0);

  const auto constant = fit_scaler(column({3.0, 3.0}));
  EXPECT_DOUBLE_EQ(apply_scaler(column({3.0}), constant).at(0, 0), 0.0);

  FeatureMatrix two;
  two.column_names = {"x", "y"};
  two.values = {1, 0, 2, 0};
  two.missing = {0, 1, 0, 1};
  const auto dropped = fit_scaler(two);
  EXPECT_EQ(dropped.dropped, std::vector<std::string>{"y"});
  EXPECT_EQ(apply_scaler(two, dropped).cols(), 1u);

  FeatureMatrix empty;
  empty.column_names = {"x"};
  EXPECT_EQ(error_of([&] { fit_scaler(empty); }), ErrorCode::EmptyTrainingSet);
}

TEST(Scaler, InverseRecoversTrainingValues) {
  Rng rng(4);
  std::vector<std::optional<double>> v;
  for (int i = 0; i < 200; ++i) v.push_back(rng.uniform() < 0.1 ? std::nullopt : std::optional(rng.normal(70, 10)));
  const auto fm = column(v);
  const auto p = fit_scaler(fm);
  const auto z = apply_scaler(fm, p);
  for (std::size_t i = 0; i < v.size(); ++i)
    if (v[i]) {
      EXPECT_NEAR(unscale_value(z.at(i, 0), p.min[0], p.max[0]), *v[i], 1e-12);
      EXPECT_GE(z.at(i, 0), -1.0 - 1e-15);
      EXPECT_LE(z.at(i, 0), 1.0 + 1e-15);
    }
}
