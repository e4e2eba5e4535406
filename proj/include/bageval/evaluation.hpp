#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "bageval/classifiers.hpp"
#include "bageval/cohort.hpp"
#include "bageval/error.hpp"
#include "bageval/features.hpp"
#include "bageval/matching.hpp"
#include "bageval/random.hpp"

namespace bageval {

// ---------------------------------------------------------------------------
// Metrics

/// Mann-Whitney AUC: (concordant + 0.5 * tied) / (positives * negatives),
/// computed from midranks in O(n log n).
inline double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw Error(ErrorCode::LengthMismatch, "scores vs labels");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double positives = 0.0, rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    // Ranks i+1..j share the midrank (i + 1 + j) / 2.
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]]) {
        rank_sum += midrank;
        positives += 1.0;
      }
    }
    i = j;
  }
  const double negatives = static_cast<double>(n) - positives;
  if (positives == 0.0 || negatives == 0.0) throw Error(ErrorCode::SingleClass, "AUC needs both classes");
  return (rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives);
}

inline double accuracy(std::span<const int> predicted, std::span<const int> labels) {
  if (predicted.size() != labels.size() || predicted.empty())
    throw Error(ErrorCode::LengthMismatch, "accuracy needs equal, non-empty lists");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += (predicted[i] != 0) == (labels[i] != 0) ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

// ---------------------------------------------------------------------------
// Bootstrap

enum class ResampleUnit { MatchedPair, DataPoint };

struct BootstrapSpec {
  int n_replicates = 1000;
  double ci_level = 0.95;
  std::uint64_t master_seed = 0;
  ResampleUnit unit = ResampleUnit::MatchedPair;

  void validate() const {
    if (n_replicates < 1 || !(ci_level > 0.0 && ci_level < 1.0))
      throw Error(ErrorCode::InvalidConfig, "bootstrap needs n_replicates >= 1 and 0 < ci_level < 1");
  }
};

struct MetricSummary {
  double mean = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t n = 0;
  std::size_t skipped_replicates = 0;
};

/// Linear-interpolation quantile of sorted data.
inline double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.size() == 1) return sorted[0];
  const double h = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Metric over a resample given as unit indices (with repetition); nullopt
/// when undefined on that resample.
using ResampleMetric = std::function<std::optional<double>(std::span<const std::size_t>)>;

/// Percentile bootstrap. Replicate r draws from seed derive_seed(master, {r, attempt});
/// undefined replicates are redrawn up to 10 times, then skipped.
inline MetricSummary bootstrap(std::size_t n_units, const ResampleMetric& metric, const BootstrapSpec& spec) {
  spec.validate();
  if (n_units == 0) throw Error(ErrorCode::EmptySelection, "bootstrap over zero units");
  std::vector<std::optional<double>> values(spec.n_replicates);
  parallel_for(static_cast<std::size_t>(spec.n_replicates), [&](std::size_t r) {
    std::vector<std::size_t> idx(n_units);
    for (std::uint64_t attempt = 0; attempt <= 10; ++attempt) {
      Rng rng(derive_seed(spec.master_seed, {r, attempt}));
      for (auto& i : idx) i = rng.index(n_units);
      if (auto v = metric(idx)) {
        values[r] = *v;
        return;
      }
    }
  });
  std::vector<double> ok;
  for (const auto& v : values)
    if (v) ok.push_back(*v);
  if (ok.empty()) throw Error(ErrorCode::AllReplicatesDegenerate, "every bootstrap replicate was undefined");
  MetricSummary s;
  s.n = n_units;
  s.skipped_replicates = values.size() - ok.size();
  s.mean = std::accumulate(ok.begin(), ok.end(), 0.0) / static_cast<double>(ok.size());
  std::sort(ok.begin(), ok.end());
  s.ci_low = quantile_sorted(ok, (1.0 - spec.ci_level) / 2.0);
  s.ci_high = quantile_sorted(ok, (1.0 + spec.ci_level) / 2.0);
  return s;
}

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank

struct WilcoxonResult {
  double statistic = 0.0;  // sum of ranks of positive differences
  std::size_t n_effective = 0;
  double p_value = 1.0;
  bool exact = false;
};

inline double normal_upper_tail(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

/// Largest n_effective handled by the exact null distribution.
inline constexpr std::size_t kWilcoxonExactMax = 25;

namespace detail {

struct SignedRanks {
  std::vector<double> ranks;  // midranks of |d|, nonzero d only
  std::vector<bool> positive;
  double tie_term = 0.0;  // sum of (t^3 - t) over tie groups
};

inline SignedRanks signed_ranks(std::span<const double> diffs) {
  std::vector<double> nz;
  for (double d : diffs)
    if (d != 0.0) nz.push_back(d);
  SignedRanks out;
  const std::size_t n = nz.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return std::abs(nz[a]) < std::abs(nz[b]); });
  out.ranks.assign(n, 0.0);
  out.positive.assign(n, false);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && std::abs(nz[order[j]]) == std::abs(nz[order[i]])) ++j;
    const double t = static_cast<double>(j - i);
    out.tie_term += t * t * t - t;
    for (std::size_t k = i; k < j; ++k) out.ranks[order[k]] = 0.5 * static_cast<double>(i + 1 + j);
    i = j;
  }
  for (std::size_t i = 0; i < n; ++i) out.positive[i] = nz[i] > 0.0;
  return out;
}

}  // namespace detail

/// Two-sided p from the normal approximation with tie-corrected variance and
/// continuity correction.
inline double wilcoxon_normal_p(double statistic, std::size_t n, double tie_term) {
  const double nn = static_cast<double>(n);
  const double mean = nn * (nn + 1.0) / 4.0;
  const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
  if (!(var > 0.0)) return 1.0;
  const double dev = std::max(0.0, std::abs(statistic - mean) - 0.5);
  return std::min(1.0, 2.0 * normal_upper_tail(dev / std::sqrt(var)));
}

/// Two-sided exact p: P(|W - mean| >= |w - mean|) under the sign-flip null,
/// counted over all 2^n sign assignments via the rank-sum generating function.
/// Midranks are doubled so sums stay integral.
inline double wilcoxon_exact_p(std::span<const double> ranks, double statistic) {
  std::vector<long> doubled(ranks.size());
  long total = 0;
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    doubled[i] = std::lround(2.0 * ranks[i]);
    total += doubled[i];
  }
  std::vector<double> counts(static_cast<std::size_t>(total) + 1, 0.0);
  counts[0] = 1.0;
  long reach = 0;
  for (long r : doubled) {
    for (long s = reach; s >= 0; --s)
      if (counts[s] != 0.0) counts[s + r] += counts[s];
    reach += r;
  }
  const long observed = std::lround(2.0 * statistic);
  // |2s - total| compares deviations from the mean total/2 in integers.
  const long obs_dev = std::labs(2 * observed - total);
  double tail = 0.0;
  for (long s = 0; s <= total; ++s)
    if (std::labs(2 * s - total) >= obs_dev) tail += counts[s];
  return std::min(1.0, std::ldexp(tail, -static_cast<int>(ranks.size())));
}

inline WilcoxonResult wilcoxon_signed_rank(std::span<const double> diffs) {
  const auto sr = detail::signed_ranks(diffs);
  if (sr.ranks.empty()) throw Error(ErrorCode::AllZeroDifferences, "all paired differences are zero");
  WilcoxonResult out;
  out.n_effective = sr.ranks.size();
  for (std::size_t i = 0; i < sr.ranks.size(); ++i)
    if (sr.positive[i]) out.statistic += sr.ranks[i];
  if (out.n_effective <= kWilcoxonExactMax) {
    out.exact = true;
    out.p_value = wilcoxon_exact_p(sr.ranks, out.statistic);
  } else {
    out.p_value = wilcoxon_normal_p(out.statistic, out.n_effective, sr.tie_term);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Group-level brain-age summaries

struct GroupDifference {
  LabelGroup group;
  std::size_t n = 0;
  double mean_raw = 0.0;       // mean of BAG_a - BAG_b
  double mean_adjusted = 0.0;  // mean_raw minus the CN_stable mean
  std::vector<double> adjusted;
  std::optional<WilcoxonResult> wilcoxon;
  std::optional<std::string> wilcoxon_error;
};

struct AdjustedDifferences {
  double reference_mean = 0.0;  // CN_stable mean of BAG_a - BAG_b
  std::vector<GroupDifference> groups;  // in matched-set group order
};

/// Paired model-a minus model-b gap differences per matched group, shifted by
/// the CN_stable mean. Wilcoxon tests use the unshifted within-group pairs.
inline AdjustedDifferences adjusted_paired_difference(const Cohort& /*cohort*/, const BagTable& bags,
                                                      const MatchedSet& matched, const std::string& model_a,
                                                      const std::string& model_b) {
  const auto& ba = bags.bags(model_a);
  const auto& bb = bags.bags(model_b);
  std::optional<std::size_t> reference;
  for (std::size_t g = 0; g < matched.spec.groups.size(); ++g)
    if (matched.spec.groups[g].group == LabelGroup::CN_stable) reference = g;
  if (!reference) throw Error(ErrorCode::InvalidConfig, "matched set has no CN_stable group");

  std::vector<std::vector<double>> diffs(matched.spec.groups.size());
  for (const auto& t : matched.tuples)
    for (std::size_t g = 0; g < t.size(); ++g)
      if (ba[t[g]] && bb[t[g]]) diffs[g].push_back(*ba[t[g]] - *bb[t[g]]);

  auto mean = [](const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  AdjustedDifferences out;
  out.reference_mean = mean(diffs[*reference]);
  for (std::size_t g = 0; g < diffs.size(); ++g) {
    GroupDifference gd;
    gd.group = matched.spec.groups[g].group;
    gd.n = diffs[g].size();
    gd.mean_raw = mean(diffs[g]);
    gd.mean_adjusted = gd.mean_raw - out.reference_mean;
    for (double d : diffs[g]) gd.adjusted.push_back(d - out.reference_mean);
    try {
      gd.wilcoxon = wilcoxon_signed_rank(diffs[g]);
    } catch (const Error& e) {
      gd.wilcoxon_error = std::string(to_string(e.code()));
    }
    out.groups.push_back(std::move(gd));
  }
  return out;
}

/// Mean |BAG| over sessions whose age lies in [min_age, max_age].
inline double mean_abs_bag(const Cohort& cohort, const BagTable& bags, std::span<const SessionIndex> rows,
                           const std::string& model, double min_age = -INFINITY, double max_age = INFINITY) {
  const auto& b = bags.bags(model);
  double sum = 0.0;
  std::size_t n = 0;
  for (auto i : rows) {
    const double age = cohort.session(i).age;
    if (age < min_age || age > max_age || !b[i]) continue;
    sum += std::abs(*b[i]);
    ++n;
  }
  if (n == 0) throw Error(ErrorCode::EmptyAfterFilter, "no sessions left for model " + model);
  return sum / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Leave-one-out cross-validation over matched tuples

struct LoocvPrediction {
  double score = 0.0;
  int label = 0;
  int predicted = 0;
  SessionIndex session = 0;
  std::string participant_id;
  std::optional<double> time_to_event;
  std::size_t tuple = 0;
  std::size_t fold = 0;
};

struct LoocvOutput {
  std::vector<LoocvPrediction> predictions;  // tuple order, members in group order
  /// Training tuple indices used by each fold.
  std::vector<std::vector<std::size_t>> fold_training;
  std::vector<std::vector<std::size_t>> fold_held_out;
  std::size_t nonconverged_folds = 0;
};

/// Two-group LOOCV. Group `positive_group` (default: the last) is labeled 1.
/// A fold holds out every tuple whose positive member belongs to one
/// participant, and trains only on tuples sharing no participant with them.
inline LoocvOutput loocv_predictions(const Cohort& cohort, const BagTable& bags, const MatchedSet& matched,
                                     const FeatureSpec& features, const ClassifierSpec& clf,
                                     std::optional<std::size_t> positive_group = std::nullopt) {
  if (matched.spec.groups.size() != 2) throw Error(ErrorCode::InvalidConfig, "LOOCV needs a two-group matched set");
  if (matched.tuples.size() < 3) throw Error(ErrorCode::InsufficientTuples, "LOOCV needs at least 3 tuples");
  const std::size_t pos = positive_group.value_or(1);

  std::vector<SessionIndex> sessions;
  std::vector<int> labels;
  for (const auto& t : matched.tuples)
    for (std::size_t g = 0; g < 2; ++g) {
      sessions.push_back(t[g]);
      labels.push_back(g == pos ? 1 : 0);
    }
  const FeatureMatrix all = build_feature_matrix(cohort, bags, sessions, features);

  // Folds keyed by the positive member's participant, in first-seen order.
  std::map<std::size_t, std::size_t> fold_of_participant;
  std::vector<std::vector<std::size_t>> folds;
  for (std::size_t t = 0; t < matched.tuples.size(); ++t) {
    const std::size_t person = cohort.participant_of(matched.tuples[t][pos]);
    auto [it, inserted] = fold_of_participant.emplace(person, folds.size());
    if (inserted) folds.emplace_back();
    folds[it->second].push_back(t);
  }

  LoocvOutput out;
  out.predictions.resize(sessions.size());
  out.fold_training.resize(folds.size());
  out.fold_held_out = folds;
  std::vector<unsigned char> converged(folds.size(), 1);
  parallel_for(folds.size(), [&](std::size_t f) {
    std::set<std::size_t> held_people;
    for (auto t : folds[f])
      for (auto s : matched.tuples[t]) held_people.insert(cohort.participant_of(s));
    std::vector<std::size_t> train_rows, test_rows;
    std::vector<int> train_labels;
    std::vector<std::size_t> train_tuples;
    for (std::size_t t = 0; t < matched.tuples.size(); ++t) {
      bool shares = false;
      for (auto s : matched.tuples[t]) shares |= held_people.count(cohort.participant_of(s)) != 0;
      if (shares) continue;
      train_tuples.push_back(t);
      for (std::size_t g = 0; g < 2; ++g) {
        train_rows.push_back(2 * t + g);
        train_labels.push_back(labels[2 * t + g]);
      }
    }
    for (auto t : folds[f])
      for (std::size_t g = 0; g < 2; ++g) test_rows.push_back(2 * t + g);

    // Every fold reuses the classifier seed, so folds differ only in their data.
    const auto model = train(clf, all.select_rows(train_rows), train_labels);
    converged[f] = model.converged ? 1 : 0;
    const auto scores = score(model, all.select_rows(test_rows));
    const auto hard = predict_labels(model, scores);
    for (std::size_t k = 0; k < test_rows.size(); ++k) {
      const std::size_t r = test_rows[k];
      auto& p = out.predictions[r];
      p.score = scores[k];
      p.predicted = hard[k];
      p.label = labels[r];
      p.session = sessions[r];
      p.participant_id = cohort.session(sessions[r]).participant_id;
      p.time_to_event = cohort.label(sessions[r]).time_to_event();
      p.tuple = r / 2;
      p.fold = f;
    }
    out.fold_training[f] = std::move(train_tuples);
  });
  for (auto c : converged) out.nonconverged_folds += c ? 0 : 1;
  return out;
}

/// Bootstrap summaries of AUC and accuracy over a set of scored pairs.
struct PairMetrics {
  MetricSummary auc;
  MetricSummary accuracy;
};

/// `pairs` holds prediction indices, two per pair (negative then positive).
inline PairMetrics bootstrap_pairs(const std::vector<LoocvPrediction>& preds,
                                   const std::vector<std::array<std::size_t, 2>>& pairs, const BootstrapSpec& spec) {
  const bool by_pair = spec.unit == ResampleUnit::MatchedPair;
  const std::size_t n_units = by_pair ? pairs.size() : 2 * pairs.size();
  auto gather = [&](std::span<const std::size_t> idx, std::vector<double>& s, std::vector<int>& l,
                    std::vector<int>& h) {
    for (auto u : idx) {
      if (by_pair) {
        for (auto p : pairs[u]) {
          s.push_back(preds[p].score);
          l.push_back(preds[p].label);
          h.push_back(preds[p].predicted);
        }
      } else {
        const auto p = pairs[u / 2][u % 2];
        s.push_back(preds[p].score);
        l.push_back(preds[p].label);
        h.push_back(preds[p].predicted);
      }
    }
  };
  PairMetrics out;
  out.auc = bootstrap(
      n_units,
      [&](std::span<const std::size_t> idx) -> std::optional<double> {
        std::vector<double> s;
        std::vector<int> l, h;
        gather(idx, s, l, h);
        const auto positives = std::count(l.begin(), l.end(), 1);
        if (positives == 0 || positives == static_cast<long>(l.size())) return std::nullopt;
        return auc(s, l);
      },
      spec);
  out.accuracy = bootstrap(
      n_units,
      [&](std::span<const std::size_t> idx) -> std::optional<double> {
        std::vector<double> s;
        std::vector<int> l, h;
        gather(idx, s, l, h);
        return accuracy(h, l);
      },
      spec);
  out.auc.n = out.accuracy.n = pairs.size();
  return out;
}

/// Point estimate of the pooled LOOCV AUC.
inline double pooled_auc(const LoocvOutput& out) {
  std::vector<double> s;
  std::vector<int> l;
  for (const auto& p : out.predictions) {
    s.push_back(p.score);
    l.push_back(p.label);
  }
  return auc(s, l);
}

/// Table-2 style evaluation of one (feature set, classifier) on a two-group
/// matched set: LOOCV, then pair-level bootstrap.
struct ClassificationResult {
  std::string feature_set;
  std::string classifier;
  PairMetrics metrics;
  double point_auc = 0.0;
  std::size_t n_tuples = 0;
};

inline ClassificationResult evaluate_classification(const Cohort& cohort, const BagTable& bags,
                                                    const MatchedSet& matched, const FeatureSpec& features,
                                                    const ClassifierSpec& clf, const BootstrapSpec& bspec) {
  const auto out = loocv_predictions(cohort, bags, matched, features, clf);
  std::vector<std::array<std::size_t, 2>> pairs;
  for (std::size_t t = 0; t < matched.tuples.size(); ++t) pairs.push_back({2 * t, 2 * t + 1});
  ClassificationResult r;
  r.feature_set = features.name();
  r.classifier = std::string(to_string(clf.kind));
  r.metrics = bootstrap_pairs(out.predictions, pairs, bspec);
  r.point_auc = pooled_auc(out);
  r.n_tuples = matched.tuples.size();
  return r;
}

// ---------------------------------------------------------------------------
// Sliding windows over time to first MCI

struct WindowSpec {
  double length = 1.0;
  double stride = 0.5;
  std::size_t min_pairs = 5;

  void validate() const {
    if (!(length > 0.0) || !(stride > 0.0)) throw Error(ErrorCode::InvalidConfig, "window length and stride must be > 0");
  }

  /// Half-open bounds [k*stride, k*stride + length) of window k.
  double lower(std::size_t k) const { return static_cast<double>(k) * stride; }
  double upper(std::size_t k) const { return lower(k) + length; }
  double center(std::size_t k) const { return lower(k) + 0.5 * length; }

  /// Number of windows needed so every t in [0, max_time] is covered.
  std::size_t count(double max_time) const {
    if (max_time < 0.0) return 0;
    return static_cast<std::size_t>(std::floor(max_time / stride)) + 1;
  }

  bool contains(std::size_t k, double t) const { return t >= lower(k) && t < upper(k); }
};

struct WindowResult {
  double window_center = 0.0;
  MetricSummary auc;
  MetricSummary accuracy;
  std::size_t n_pairs = 0;
  double mean_age = 0.0;
};

struct WindowReport {
  std::vector<WindowResult> windows;
  std::vector<std::string> skipped;  // one log line per skipped window
};

namespace detail {

inline double pair_mean_age(const Cohort& cohort, const std::vector<LoocvPrediction>& preds,
                            const std::vector<std::array<std::size_t, 2>>& pairs) {
  double sum = 0.0;
  for (const auto& pr : pairs)
    for (auto p : pr) sum += cohort.session(preds[p].session).age;
  return sum / static_cast<double>(2 * pairs.size());
}

}  // namespace detail

/// One classifier trained by LOOCV over the whole CN_stable/CN_star matched
/// set; windows then pick each participant's most central pair.
inline WindowReport global_model_windows(const Cohort& cohort, const BagTable& bags, const MatchedSet& matched,
                                         const FeatureSpec& features, const ClassifierSpec& clf,
                                         const WindowSpec& wspec, const BootstrapSpec& bspec) {
  wspec.validate();
  std::optional<std::size_t> star, stable;
  for (std::size_t g = 0; g < matched.spec.groups.size(); ++g) {
    if (matched.spec.groups[g].group == LabelGroup::CN_star) star = g;
    if (matched.spec.groups[g].group == LabelGroup::CN_stable) stable = g;
  }
  if (!star || !stable || matched.spec.groups.size() != 2)
    throw Error(ErrorCode::InvalidConfig, "global model needs a CN_stable vs CN_star matched set");
  const auto out = loocv_predictions(cohort, bags, matched, features, clf, *star);

  double max_t = 0.0;
  for (const auto& t : matched.tuples) max_t = std::max(max_t, *cohort.label(t[*star]).time_to_first_mci);

  WindowReport report;
  for (std::size_t k = 0; k < wspec.count(max_t); ++k) {
    const double c = wspec.center(k);
    // Most central pair per CN_star participant; ties go to the earlier session.
    std::map<std::size_t, std::size_t> chosen;
    for (std::size_t t = 0; t < matched.tuples.size(); ++t) {
      const SessionIndex s = matched.tuples[t][*star];
      const double tt = *cohort.label(s).time_to_first_mci;
      if (!wspec.contains(k, tt)) continue;
      const std::size_t person = cohort.participant_of(s);
      auto it = chosen.find(person);
      if (it == chosen.end()) {
        chosen.emplace(person, t);
        continue;
      }
      const SessionIndex cur = matched.tuples[it->second][*star];
      const double dc = std::abs(*cohort.label(cur).time_to_first_mci - c);
      const double dn = std::abs(tt - c);
      if (dn < dc || (dn == dc && cohort.session(s).age < cohort.session(cur).age)) it->second = t;
    }
    if (chosen.size() < wspec.min_pairs) {
      report.skipped.push_back("window center " + csv::format_double(c) + ": " + std::to_string(chosen.size()) +
                               " pairs < " + std::to_string(wspec.min_pairs));
      continue;
    }
    std::vector<std::array<std::size_t, 2>> pairs;
    for (const auto& [person, t] : chosen) pairs.push_back({2 * t + *stable, 2 * t + *star});
    BootstrapSpec wb = bspec;
    wb.master_seed = derive_seed(bspec.master_seed, k);
    const auto m = bootstrap_pairs(out.predictions, pairs, wb);
    report.windows.push_back({c, m.auc, m.accuracy, pairs.size(), detail::pair_mean_age(cohort, out.predictions, pairs)});
  }
  return report;
}

/// One classifier per window: CN_star sessions inside the window are matched
/// to CN_stable partners and evaluated by LOOCV within the subset.
inline WindowReport time_specific_windows(const Cohort& cohort, const BagTable& bags, const FeatureSpec& features,
                                          const ClassifierSpec& clf, const MatchSpec& base, const WindowSpec& wspec,
                                          const BootstrapSpec& bspec) {
  wspec.validate();
  double max_t = -1.0;
  for (SessionIndex i = 0; i < cohort.size(); ++i)
    if (cohort.label(i).group == LabelGroup::CN_star) max_t = std::max(max_t, *cohort.label(i).time_to_first_mci);

  WindowReport report;
  for (std::size_t k = 0; k < wspec.count(max_t); ++k) {
    const double c = wspec.center(k);
    MatchSpec ms = base;
    ms.groups = {{LabelGroup::CN_stable, std::nullopt, std::nullopt},
                 {LabelGroup::CN_star, std::nullopt, std::make_pair(wspec.lower(k), wspec.upper(k))}};
    if (!ms.time_tolerance) ms.time_tolerance = 1.0;
    ms.one_per_participant = true;
    MatchedSet matched;
    try {
      matched = greedy_match(cohort, ms);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoMatches) throw;
      report.skipped.push_back("window center " + csv::format_double(c) + ": no matches");
      continue;
    }
    if (matched.tuples.size() < wspec.min_pairs) {
      report.skipped.push_back("window center " + csv::format_double(c) + ": " + std::to_string(matched.tuples.size()) +
                               " pairs < " + std::to_string(wspec.min_pairs));
      continue;
    }
    ClassifierSpec wclf = clf;
    wclf.seed = derive_seed(clf.seed, k);
    const auto out = loocv_predictions(cohort, bags, matched, features, wclf, 1);
    std::vector<std::array<std::size_t, 2>> pairs;
    for (std::size_t t = 0; t < matched.tuples.size(); ++t) pairs.push_back({2 * t, 2 * t + 1});
    BootstrapSpec wb = bspec;
    wb.master_seed = derive_seed(bspec.master_seed, k);
    const auto m = bootstrap_pairs(out.predictions, pairs, wb);
    report.windows.push_back({c, m.auc, m.accuracy, pairs.size(), detail::pair_mean_age(cohort, out.predictions, pairs)});
  }
  return report;
}

}  // namespace bageval
