#include <random>

#include "oracles.hpp"
#include "test_util.hpp"

using namespace bageval;
using namespace testutil;

namespace {

FeatureMatrix matrix(const std::vector<std::vector<double>>& rows) {
  FeatureMatrix fm;
  for (std::size_t c = 0; c < rows[0].size(); ++c) fm.column_names.push_back("x" + std::to_string(c));
  for (const auto& r : rows)
    for (double v : r) {
      fm.values.push_back(v);
      fm.missing.push_back(0);
    }
  return fm;
}

/// Two Gaussian blobs separated along the first axis by a clear margin.
std::pair<FeatureMatrix, std::vector<int>> separable(std::uint64_t seed, int n = 40) {
  Rng rng(seed);
  std::vector<std::vector<double>> rows;
  std::vector<int> y;
  for (int i = 0; i < n; ++i) {
    const int label = i % 2;
    rows.push_back({(label ? 3.0 : -3.0) + rng.uniform(-1, 1), rng.normal(0, 2)});
    y.push_back(label);
  }
  return {matrix(rows), y};
}

}  // namespace

TEST(Classifiers, SeparableDataIsSeparatedByEveryKind) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto [x, y] = separable(seed);
    for (const char* kind : {"logreg", "svm", "forest"}) {
      const auto model = train(ClassifierSpec::parse(kind, seed), x, y);
      const auto s = score(model, x);
      double min_pos = INFINITY, max_neg = -INFINITY;
      for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i]) min_pos = std::min(min_pos, s[i]);
        else max_neg = std::max(max_neg, s[i]);
      }
      EXPECT_GT(min_pos, max_neg) << kind << " seed " << seed;
      const auto labels = predict_labels(model, s);
      EXPECT_DOUBLE_EQ(accuracy(labels, y), 1.0) << kind;
    }
  }
}

TEST(Classifiers, ForestOutOfBagUnderNull) {
  double total = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(derive_seed(1234, seed));
    std::vector<std::vector<double>> rows;
    std::vector<int> y;
    for (int i = 0; i < 60; ++i) {
      rows.push_back({1.0, 2.0});
      y.push_back(rng.uniform() < 0.5 ? 1 : 0);
    }
    if (std::count(y.begin(), y.end(), 1) == 0 || std::count(y.begin(), y.end(), 0) == 0) y[0] = 1 - y[0];
    const auto model = train(ClassifierSpec::parse("forest", seed), matrix(rows), y);
    ASSERT_TRUE(model.oob_accuracy.has_value());
    total += *model.oob_accuracy;
  }
  EXPECT_NEAR(total / 100.0, 0.5, 0.1);
}

TEST(Classifiers, DuplicatedRowsWithBothLabelsGiveZeroWeights) {
  Rng rng(7);
  std::vector<std::vector<double>> rows;
  std::vector<int> y;
  for (int i = 0; i < 30; ++i) {
    const std::vector<double> r = {rng.normal(), rng.normal(), rng.normal()};
    rows.push_back(r);
    rows.push_back(r);
    y.push_back(0);
    y.push_back(1);
  }
  const auto model = train(ClassifierSpec::parse("logreg"), matrix(rows), y);
  for (double w : model.weights) EXPECT_NEAR(w, 0.0, 1e-8);
  EXPECT_NEAR(model.bias, 0.0, 1e-8);
}

TEST(Classifiers, HandBuiltScores) {
  // A scaler fitted on {-1, 1} is the identity map.
  const auto unit = matrix({{-1.0}, {1.0}});
  TrainedClassifier lr;
  lr.kind = ClassifierKind::LogisticRegression;
  lr.scaler = fit_scaler(unit);
  lr.weights = {2.0};
  lr.bias = 0.0;
  EXPECT_DOUBLE_EQ(score(lr, matrix({{0.0}}))[0], 0.5);

  TrainedClassifier svm = lr;
  svm.kind = ClassifierKind::LinearSvm;
  svm.weights = {1.5};
  svm.bias = -0.25;
  const auto rows = matrix({{-0.7}, {0.1}, {0.9}});
  const auto s1 = score(svm, rows);
  svm.weights = {-1.5};
  svm.bias = 0.25;
  const auto s2 = score(svm, rows);
  for (std::size_t i = 0; i < s1.size(); ++i) EXPECT_DOUBLE_EQ(s1[i], -s2[i]);

  TrainedClassifier forest = lr;
  forest.kind = ClassifierKind::RandomForest;
  DecisionTree positive;
  positive.nodes.push_back({-1, 0.0, -1, -1, 1.0, 3});
  forest.trees.assign(7, positive);
  EXPECT_DOUBLE_EQ(score(forest, rows)[2], 1.0);
  EXPECT_EQ(predict_labels(forest, score(forest, rows))[0], 1);
}

TEST(Classifiers, LogregGradientMatchesFiniteDifferences) {
  Rng rng(21);
  const Eigen::Index n = 40, p = 4;
  Eigen::MatrixXd x(n, p);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) x(i, j) = rng.uniform(-1, 1);
    y(i) = rng.uniform() < 0.5 ? 1.0 : 0.0;
  }
  for (int point = 0; point < 10; ++point) {
    Eigen::VectorXd theta(p + 1);
    for (Eigen::Index j = 0; j <= p; ++j) theta(j) = rng.normal(0, 2);
    Eigen::VectorXd grad;
    logreg_loss(x, y, theta, 0.05, &grad);
    for (Eigen::Index j = 0; j <= p; ++j) {
      const double h = 1e-6;
      Eigen::VectorXd a = theta, b = theta;
      a(j) += h;
      b(j) -= h;
      const double fd = (logreg_loss(x, y, a, 0.05) - logreg_loss(x, y, b, 0.05)) / (2 * h);
      EXPECT_LT(std::abs(fd - grad(j)) / std::max(1e-3, std::abs(grad(j))), 1e-5) << "point " << point << " j " << j;
    }
  }
}

TEST(Classifiers, SingleTreeMatchesRecursiveCart) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const int n = 20 + static_cast<int>(rng.index(31)), p = 3;
    std::vector<std::vector<double>> rows;
    std::vector<int> y;
    for (int i = 0; i < n; ++i) {
      // Coarse grid values create ties in both features and split scores.
      std::vector<double> r;
      for (int j = 0; j < p; ++j) r.push_back(std::round(rng.uniform(0, 6)) / 2.0);
      y.push_back(r[0] + r[1] + rng.normal(0, 1) > 3.0 ? 1 : 0);
      rows.push_back(r);
    }
    if (std::count(y.begin(), y.end(), 1) == 0) y[0] = 1;
    if (std::count(y.begin(), y.end(), 0) == 0) y[0] = 0;
    const auto fm = matrix(rows);
    const auto model = train(ClassifierSpec::parse("forest:n_trees=1,bootstrap=0,max_features=3", seed), fm, y);
    ASSERT_EQ(model.trees.size(), 1u);

    // The oracle works in the classifier's scaled space.
    const auto scaled = apply_scaler(fm, model.scaler);
    std::vector<std::vector<double>> z(n, std::vector<double>(p));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < p; ++j) z[i][j] = scaled.at(i, j);
    const oracle::Cart cart(z, y);
    EXPECT_EQ(model.trees[0].nodes.size(), cart.size()) << "seed " << seed;
    for (int probe = 0; probe < 200; ++probe) {
      std::vector<double> q(p);
      for (auto& v : q) v = rng.uniform(-1.2, 1.2);
      EXPECT_EQ(model.trees[0].leaf_fraction(q), cart.predict(q));
    }
    for (const auto& r : z) EXPECT_EQ(model.trees[0].leaf_fraction(r), cart.predict(r));
  }
}

TEST(Classifiers, BitwiseDeterministicAcrossRunsAndThreads) {
  const auto [x, y] = separable(3, 60);
  for (const char* kind : {"logreg", "svm", "forest"}) {
    set_thread_count(1);
    const auto a = train(ClassifierSpec::parse(kind, 99), x, y);
    set_thread_count(4);
    const auto b = train(ClassifierSpec::parse(kind, 99), x, y);
    set_thread_count(1);
    EXPECT_EQ(a.weights, b.weights) << kind;
    EXPECT_EQ(a.bias, b.bias) << kind;
    EXPECT_EQ(score(a, x), score(b, x)) << kind;
    EXPECT_EQ(a.oob_accuracy, b.oob_accuracy) << kind;
  }
}

TEST(Classifiers, Errors) {
  const auto x = matrix({{1.0}, {2.0}, {3.0}});
  const std::vector<int> one = {1, 1, 1};
  EXPECT_EQ(error_of([&] { train(ClassifierSpec::parse("logreg"), x, one); }), ErrorCode::SingleClassTraining);
  const std::vector<int> y = {0, 1, 1};
  const auto model = train(ClassifierSpec::parse("logreg"), x, y);
  EXPECT_EQ(error_of([&] { score(model, matrix({{1.0, 2.0}})); }), ErrorCode::ColumnMismatch);
  EXPECT_EQ(error_of([] { ClassifierSpec::parse("tree"); }), ErrorCode::ConfigSchemaError);
  EXPECT_EQ(error_of([] { ClassifierSpec::parse("forest:n_trees=0"); }), ErrorCode::InvalidConfig);
}

TEST(Classifiers, IterationCapReportsNonConvergence) {
  const auto [x, y] = separable(5);
  const auto model = train(ClassifierSpec::parse("logreg:max_iter=1"), x, y);
  EXPECT_FALSE(model.converged);
  EXPECT_EQ(model.iterations, 1);
  EXPECT_EQ(model.weights.size(), 2u);
}

TEST(Classifiers, MissingCellsAreImputedWithTrainingMean) {
  FeatureMatrix fm = matrix({{0.0}, {10.0}, {4.0}});
  fm.missing[2] = 1;
  const std::vector<int> y = {0, 1, 0};
  const auto model = train(ClassifierSpec::parse("logreg"), fm, y);
  EXPECT_DOUBLE_EQ(model.scaler.mean[0], 5.0);
}
