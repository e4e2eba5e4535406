#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "bageval/error.hpp"
#include "bageval/features.hpp"
#include "bageval/random.hpp"

namespace bageval {

enum class ClassifierKind { LogisticRegression, LinearSvm, RandomForest };

inline std::string_view to_string(ClassifierKind k) {
  switch (k) {
    case ClassifierKind::LogisticRegression: return "logreg";
    case ClassifierKind::LinearSvm: return "svm";
    case ClassifierKind::RandomForest: return "forest";
  }
  return "?";
}

struct LogRegParams {
  double l2_lambda = 1e-4;
  int max_iter = 1000;
  double tol = 1e-8;
};

struct SvmParams {
  double cost = 1.0;
  int epochs = 200;
  double tol = 1e-4;
};

struct ForestParams {
  int n_trees = 100;
  int max_features = 0;  // 0: ceil(sqrt(p))
  int min_samples_split = 2;
  bool bootstrap = true;
};

struct ClassifierSpec {
  ClassifierKind kind = ClassifierKind::LogisticRegression;
  LogRegParams logreg;
  SvmParams svm;
  ForestParams forest;
  std::uint64_t seed = 0;

  /// "logreg", "svm" or "forest", optionally followed by ":key=value,..."
  /// (e.g. "forest:n_trees=50,min_samples_split=4").
  static ClassifierSpec parse(std::string_view text, std::uint64_t seed = 0) {
    ClassifierSpec spec;
    spec.seed = seed;
    std::string s(csv::trim(text));
    std::string opts;
    if (auto colon = s.find(':'); colon != std::string::npos) {
      opts = s.substr(colon + 1);
      s.resize(colon);
    }
    if (s == "logreg" || s == "logistic_regression") spec.kind = ClassifierKind::LogisticRegression;
    else if (s == "svm" || s == "linear_svm") spec.kind = ClassifierKind::LinearSvm;
    else if (s == "forest" || s == "random_forest") spec.kind = ClassifierKind::RandomForest;
    else throw Error(ErrorCode::ConfigSchemaError, "unknown classifier '" + s + "'");
    if (!opts.empty()) {
      for (const auto& kv : csv::split_line(opts)) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw Error(ErrorCode::ConfigSchemaError, "bad option '" + kv + "'");
        const std::string key(csv::trim(std::string_view(kv).substr(0, eq)));
        const auto val = csv::parse_double(std::string_view(kv).substr(eq + 1));
        if (!val) throw Error(ErrorCode::ConfigSchemaError, "bad value in '" + kv + "'");
        if (key == "l2_lambda") spec.logreg.l2_lambda = *val;
        else if (key == "max_iter") spec.logreg.max_iter = static_cast<int>(*val);
        else if (key == "tol") spec.logreg.tol = spec.svm.tol = *val;
        else if (key == "C" || key == "cost") spec.svm.cost = *val;
        else if (key == "epochs") spec.svm.epochs = static_cast<int>(*val);
        else if (key == "n_trees") spec.forest.n_trees = static_cast<int>(*val);
        else if (key == "max_features") spec.forest.max_features = static_cast<int>(*val);
        else if (key == "min_samples_split") spec.forest.min_samples_split = static_cast<int>(*val);
        else if (key == "bootstrap") spec.forest.bootstrap = *val != 0.0;
        else throw Error(ErrorCode::ConfigSchemaError, "unknown classifier option '" + key + "'");
      }
    }
    spec.validate();
    return spec;
  }

  void validate() const {
    const bool ok = logreg.l2_lambda >= 0.0 && logreg.max_iter > 0 && logreg.tol > 0.0 &&
                    svm.cost > 0.0 && svm.epochs > 0 && svm.tol > 0.0 && forest.n_trees > 0 &&
                    forest.max_features >= 0 && forest.min_samples_split >= 2;
    if (!ok) throw Error(ErrorCode::InvalidConfig, "classifier hyperparameters must be positive");
  }
};

/// One CART node; leaves have feature == -1.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double positive_fraction = 0.0;
  int n = 0;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;

  double leaf_fraction(std::span<const double> x) const {
    int i = 0;
    while (nodes[i].feature >= 0) i = x[nodes[i].feature] <= nodes[i].threshold ? nodes[i].left : nodes[i].right;
    return nodes[i].positive_fraction;
  }

  /// 1 for a positive majority, 0 for negative, 0.5 for an even leaf.
  double vote(std::span<const double> x) const {
    const double f = leaf_fraction(x);
    return f > 0.5 ? 1.0 : (f < 0.5 ? 0.0 : 0.5);
  }
};

struct TrainedClassifier {
  ClassifierKind kind = ClassifierKind::LogisticRegression;
  ScalerParams scaler;
  std::vector<double> weights;
  double bias = 0.0;
  std::vector<DecisionTree> trees;
  bool converged = true;
  int iterations = 0;
  double gradient_norm = 0.0;
  std::optional<double> oob_accuracy;

  double threshold() const { return kind == ClassifierKind::LinearSvm ? 0.0 : 0.5; }
};

namespace detail {

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
inline double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

inline Eigen::MatrixXd to_eigen(const FeatureMatrix& fm) {
  Eigen::MatrixXd x(fm.rows(), fm.cols());
  for (std::size_t r = 0; r < fm.rows(); ++r)
    for (std::size_t c = 0; c < fm.cols(); ++c) x(r, c) = fm.at(r, c);
  return x;
}

}  // namespace detail

/// Regularized logistic loss: mean log-loss + (lambda/2)|w|^2, bias unpenalized.
/// `theta` holds the weights followed by the bias.
inline double logreg_loss(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& theta,
                          double lambda, Eigen::VectorXd* gradient = nullptr) {
  const Eigen::Index n = x.rows(), p = x.cols();
  const Eigen::VectorXd w = theta.head(p);
  const Eigen::VectorXd z = (x * w).array() + theta(p);
  double loss = 0.0;
  Eigen::VectorXd resid(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    loss += detail::softplus(z(i)) - y(i) * z(i);
    resid(i) = detail::sigmoid(z(i)) - y(i);
  }
  loss = loss / static_cast<double>(n) + 0.5 * lambda * w.squaredNorm();
  if (gradient) {
    gradient->resize(p + 1);
    gradient->head(p) = x.transpose() * resid / static_cast<double>(n) + lambda * w;
    (*gradient)(p) = resid.sum() / static_cast<double>(n);
  }
  return loss;
}

namespace detail {

inline void train_logreg(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const LogRegParams& prm,
                         TrainedClassifier& out) {
  const Eigen::Index n = x.rows(), p = x.cols();
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(p + 1);
  Eigen::VectorXd grad;
  double loss = logreg_loss(x, y, theta, prm.l2_lambda, &grad);
  int iter = 0;
  for (; iter < prm.max_iter && grad.norm() >= prm.tol; ++iter) {
    // Newton direction on the penalized objective.
    Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(p + 1, p + 1);
    Eigen::MatrixXd xa(n, p + 1);
    xa.leftCols(p) = x;
    xa.col(p).setOnes();
    const Eigen::VectorXd z = xa * theta;
    Eigen::VectorXd wts(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double s = sigmoid(z(i));
      wts(i) = s * (1.0 - s);
    }
    hess = xa.transpose() * wts.asDiagonal() * xa / static_cast<double>(n);
    for (Eigen::Index j = 0; j < p; ++j) hess(j, j) += prm.l2_lambda;
    hess(p, p) += 1e-12;
    Eigen::VectorXd step = hess.ldlt().solve(grad);
    if (!step.allFinite()) step = grad;
    double t = 1.0;
    Eigen::VectorXd cand, next_grad;
    double next_loss = 0.0;
    bool accepted = false;
    for (int halving = 0; halving < 60 && !accepted; ++halving, t *= 0.5) {
      cand = theta - t * step;
      next_loss = logreg_loss(x, y, cand, prm.l2_lambda, &next_grad);
      accepted = next_loss <= loss - 1e-4 * t * grad.dot(step);
    }
    if (!accepted) break;  // floating-point floor reached
    theta = cand;
    loss = next_loss;
    grad = next_grad;
  }
  out.weights.assign(theta.data(), theta.data() + p);
  out.bias = theta(p);
  out.iterations = iter;
  out.gradient_norm = grad.norm();
  out.converged = out.gradient_norm < prm.tol;
}

// Dual coordinate descent for the hinge-loss linear SVM; the bias is an
// extra constant feature and is regularized with the weights.
inline void train_svm(const Eigen::MatrixXd& x, const Eigen::VectorXd& y01, const SvmParams& prm,
                      std::uint64_t seed, TrainedClassifier& out) {
  const Eigen::Index n = x.rows(), p = x.cols();
  Eigen::VectorXd w = Eigen::VectorXd::Zero(p + 1);
  std::vector<double> alpha(n, 0.0), qdiag(n);
  std::vector<double> y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    y[i] = y01(i) > 0.5 ? 1.0 : -1.0;
    qdiag[i] = x.row(i).squaredNorm() + 1.0;
  }
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  int epoch = 0;
  double gap = 0.0;
  for (; epoch < prm.epochs; ++epoch) {
    rng.shuffle(order);
    double pg_max = -INFINITY, pg_min = INFINITY;
    for (auto i : order) {
      const double margin = x.row(i).dot(w.head(p)) + w(p);
      const double g = y[i] * margin - 1.0;
      double pg = g;
      if (alpha[i] == 0.0) pg = std::min(g, 0.0);
      else if (alpha[i] == prm.cost) pg = std::max(g, 0.0);
      pg_max = std::max(pg_max, pg);
      pg_min = std::min(pg_min, pg);
      if (std::abs(pg) > 1e-12) {
        const double old = alpha[i];
        alpha[i] = std::clamp(old - g / qdiag[i], 0.0, prm.cost);
        const double d = (alpha[i] - old) * y[i];
        w.head(p) += d * x.row(i).transpose();
        w(p) += d;
      }
    }
    gap = pg_max - pg_min;
    if (gap < prm.tol) {
      ++epoch;
      break;
    }
  }
  out.weights.assign(w.data(), w.data() + p);
  out.bias = w(p);
  out.iterations = epoch;
  out.gradient_norm = gap;
  out.converged = gap < prm.tol;
}

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double score = -INFINITY;
};

// Gini split score: sum over children of (pos^2 + neg^2) / size. Maximizing
// it minimizes the size-weighted Gini impurity of the children.
inline double gini_split_score(double pl, double nl, double pr, double nr) {
  return (pl * pl + nl * nl) / (pl + nl) + (pr * pr + nr * nr) / (pr + nr);
}

inline DecisionTree grow_tree(const Eigen::MatrixXd& x, const std::vector<int>& y,
                              std::vector<std::size_t> rows, const ForestParams& prm, int mtry, Rng& rng) {
  DecisionTree tree;
  const int p = static_cast<int>(x.cols());
  struct Pending {
    int node;
    std::vector<std::size_t> rows;
  };
  std::vector<Pending> stack;
  tree.nodes.emplace_back();
  stack.push_back({0, std::move(rows)});
  std::vector<int> features(p);
  std::vector<std::pair<double, int>> sorted;
  while (!stack.empty()) {
    Pending cur = std::move(stack.back());
    stack.pop_back();
    const auto& idx = cur.rows;
    int pos = 0;
    for (auto r : idx) pos += y[r];
    const int n = static_cast<int>(idx.size());
    tree.nodes[cur.node].n = n;
    tree.nodes[cur.node].positive_fraction = static_cast<double>(pos) / n;
    if (n < prm.min_samples_split || pos == 0 || pos == n) continue;

    std::iota(features.begin(), features.end(), 0);
    for (int j = 0; j < mtry; ++j) std::swap(features[j], features[j + rng.index(p - j)]);
    std::vector<int> candidates(features.begin(), features.begin() + mtry);
    std::sort(candidates.begin(), candidates.end());

    SplitChoice best;
    for (int f : candidates) {
      sorted.clear();
      for (auto r : idx) sorted.emplace_back(x(r, f), y[r]);
      std::sort(sorted.begin(), sorted.end());
      double pl = 0, nl = 0;
      const double pt = pos, nt = n - pos;
      for (int k = 0; k + 1 < n; ++k) {
        (sorted[k].second ? pl : nl) += 1.0;
        if (sorted[k].first == sorted[k + 1].first) continue;
        const double score = gini_split_score(pl, nl, pt - pl, nt - nl);
        if (score > best.score) {
          double thr = 0.5 * (sorted[k].first + sorted[k + 1].first);
          if (!(thr < sorted[k + 1].first)) thr = sorted[k].first;
          best = {f, thr, score};
        }
      }
    }
    if (best.feature < 0) continue;

    std::vector<std::size_t> left, right;
    for (auto r : idx) (x(r, best.feature) <= best.threshold ? left : right).push_back(r);
    const int li = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    tree.nodes[cur.node].feature = best.feature;
    tree.nodes[cur.node].threshold = best.threshold;
    tree.nodes[cur.node].left = li;
    tree.nodes[cur.node].right = li + 1;
    stack.push_back({li + 1, std::move(right)});
    stack.push_back({li, std::move(left)});
  }
  return tree;
}

inline void train_forest(const Eigen::MatrixXd& x, const Eigen::VectorXd& y01, const ForestParams& prm,
                         std::uint64_t seed, TrainedClassifier& out) {
  const std::size_t n = static_cast<std::size_t>(x.rows());
  const int p = static_cast<int>(x.cols());
  const int mtry = prm.max_features > 0 ? std::min(prm.max_features, p)
                                        : std::max(1, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(p)))));
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = y01(i) > 0.5 ? 1 : 0;
  out.trees.assign(prm.n_trees, {});
  std::vector<std::vector<unsigned char>> in_bag(prm.n_trees);
  parallel_for(static_cast<std::size_t>(prm.n_trees), [&](std::size_t t) {
    Rng rng(derive_seed(seed, t));
    std::vector<std::size_t> rows(n);
    in_bag[t].assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      rows[i] = prm.bootstrap ? rng.index(n) : i;
      in_bag[t][rows[i]] = 1;
    }
    out.trees[t] = grow_tree(x, y, std::move(rows), prm, mtry, rng);
  });
  if (prm.bootstrap) {
    std::size_t scored = 0, correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double votes = 0.0;
      int count = 0;
      for (int t = 0; t < prm.n_trees; ++t) {
        if (in_bag[t][i]) continue;
        Eigen::VectorXd row = x.row(i).transpose();
        votes += out.trees[t].vote(std::span<const double>(row.data(), row.size()));
        ++count;
      }
      if (count == 0) continue;
      ++scored;
      correct += ((votes / count > 0.5) == (y[i] == 1)) ? 1 : 0;
    }
    if (scored) out.oob_accuracy = static_cast<double>(correct) / static_cast<double>(scored);
  }
  out.iterations = prm.n_trees;
}

}  // namespace detail

/// Fits imputation/scaling on `train_rows`, then the classifier. Labels are 0/1.
inline TrainedClassifier train(const ClassifierSpec& spec, const FeatureMatrix& train_rows,
                               std::span<const int> labels) {
  spec.validate();
  if (labels.size() != train_rows.rows())
    throw Error(ErrorCode::LengthMismatch, "labels and rows differ in length");
  std::size_t positives = 0;
  for (int l : labels) positives += l ? 1 : 0;
  if (positives == 0 || positives == labels.size())
    throw Error(ErrorCode::SingleClassTraining, "training labels contain a single class");

  TrainedClassifier out;
  out.kind = spec.kind;
  out.scaler = fit_scaler(train_rows);
  const Eigen::MatrixXd x = detail::to_eigen(apply_scaler(train_rows, out.scaler));
  Eigen::VectorXd y(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) y(i) = labels[i] ? 1.0 : 0.0;
  switch (spec.kind) {
    case ClassifierKind::LogisticRegression: detail::train_logreg(x, y, spec.logreg, out); break;
    case ClassifierKind::LinearSvm: detail::train_svm(x, y, spec.svm, spec.seed, out); break;
    case ClassifierKind::RandomForest: detail::train_forest(x, y, spec.forest, spec.seed, out); break;
  }
  return out;
}

/// Continuous scores: probability, signed margin, or positive vote fraction.
inline std::vector<double> score(const TrainedClassifier& model, const FeatureMatrix& rows) {
  const FeatureMatrix scaled = apply_scaler(rows, model.scaler);
  std::vector<double> out(scaled.rows());
  const std::size_t p = scaled.cols();
  for (std::size_t r = 0; r < scaled.rows(); ++r) {
    std::span<const double> x(scaled.values.data() + r * p, p);
    switch (model.kind) {
      case ClassifierKind::LogisticRegression:
      case ClassifierKind::LinearSvm: {
        double z = model.bias;
        for (std::size_t c = 0; c < p; ++c) z += model.weights[c] * x[c];
        out[r] = model.kind == ClassifierKind::LogisticRegression ? detail::sigmoid(z) : z;
        break;
      }
      case ClassifierKind::RandomForest: {
        double votes = 0.0;
        for (const auto& t : model.trees) votes += t.vote(x);
        out[r] = votes / static_cast<double>(model.trees.size());
        break;
      }
    }
  }
  return out;
}

inline std::vector<int> predict_labels(const TrainedClassifier& model, std::span<const double> scores) {
  std::vector<int> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] > model.threshold() ? 1 : 0;
  return out;
}

}  // namespace bageval
