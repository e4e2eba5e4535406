#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "json.hpp"

#include "bageval/cohort.hpp"
#include "bageval/error.hpp"

namespace bageval {

/// One diagnostic group taking part in matching.
struct GroupSelector {
  LabelGroup group = LabelGroup::CN_stable;
  std::optional<std::string> dataset;
  /// Half-open [lo, hi) restriction on the session's time-to-event.
  std::optional<std::pair<double, double>> time_window;

  bool accepts(const Cohort& cohort, SessionIndex i) const {
    const auto& l = cohort.label(i);
    if (l.group != group) return false;
    if (dataset && cohort.session(i).dataset_id != *dataset) return false;
    if (time_window) {
      const auto t = l.time_to_event();
      if (!t || *t < time_window->first || *t >= time_window->second) return false;
    }
    return true;
  }
};

struct MatchSpec {
  std::vector<GroupSelector> groups;
  double age_tolerance = 1.0;
  /// Tolerance on |time to last CN - time to first MCI| between the CN_stable
  /// and CN_star members; disabled when absent.
  std::optional<double> time_tolerance;
  /// When false each session (not participant) is used at most once, so a
  /// participant may contribute several tuples.
  bool one_per_participant = true;

  /// Spec with default tolerances: time matching is on iff both CN_stable and
  /// CN_star take part.
  static MatchSpec for_groups(std::vector<LabelGroup> gs, double age_tol = 1.0) {
    MatchSpec s;
    bool stable = false, star = false;
    for (auto g : gs) {
      s.groups.push_back({g, std::nullopt, std::nullopt});
      stable |= g == LabelGroup::CN_stable;
      star |= g == LabelGroup::CN_star;
    }
    s.age_tolerance = age_tol;
    if (stable && star) s.time_tolerance = 1.0;
    return s;
  }

  void validate() const {
    if (groups.size() < 2) throw Error(ErrorCode::InvalidConfig, "matching needs at least two groups");
    if (!(age_tolerance > 0.0)) throw Error(ErrorCode::InvalidConfig, "age tolerance must be > 0");
    if (time_tolerance && !(*time_tolerance > 0.0))
      throw Error(ErrorCode::InvalidConfig, "time tolerance must be > 0");
  }
};

/// Tuples of sessions, one per group in `spec.groups` order.
struct MatchedSet {
  std::vector<std::vector<SessionIndex>> tuples;
  MatchSpec spec;

  std::size_t size() const { return tuples.size(); }
};

namespace detail {

constexpr double kTolSlack = 1e-9;

inline bool time_linked(LabelGroup a, LabelGroup b) {
  return (a == LabelGroup::CN_stable && b == LabelGroup::CN_star) ||
         (a == LabelGroup::CN_star && b == LabelGroup::CN_stable);
}

}  // namespace detail

/// Greedy nearest-age matching across the groups of `spec`.
inline MatchedSet greedy_match(const Cohort& cohort, const MatchSpec& spec) {
  spec.validate();
  const std::size_t k = spec.groups.size();

  // Eligible sessions per group, split by sex and sorted by age.
  std::vector<std::array<std::vector<SessionIndex>, 2>> pools(k);
  std::vector<std::size_t> participant_counts(k, 0);
  for (std::size_t g = 0; g < k; ++g) {
    std::set<std::size_t> people;
    for (SessionIndex i = 0; i < cohort.size(); ++i) {
      if (!spec.groups[g].accepts(cohort, i)) continue;
      pools[g][static_cast<int>(cohort.session(i).sex)].push_back(i);
      people.insert(cohort.participant_of(i));
    }
    participant_counts[g] = people.size();
    for (auto& pool : pools[g])
      std::sort(pool.begin(), pool.end(), [&](SessionIndex a, SessionIndex b) {
        return std::tie(cohort.session(a).age, a) < std::tie(cohort.session(b).age, b);
      });
    if (people.empty())
      throw Error(ErrorCode::NoMatches,
                  "group " + std::string(to_string(spec.groups[g].group)) + " has no eligible sessions");
  }

  const std::size_t anchor =
      static_cast<std::size_t>(std::min_element(participant_counts.begin(), participant_counts.end()) -
                               participant_counts.begin());
  const bool anchor_timed = spec.time_tolerance.has_value();

  std::vector<SessionIndex> anchors;
  for (const auto& pool : pools[anchor]) anchors.insert(anchors.end(), pool.begin(), pool.end());
  auto anchor_key = [&](SessionIndex i) {
    const double t = anchor_timed ? cohort.label(i).time_to_event().value_or(0.0) : 0.0;
    return std::make_tuple(t, cohort.session(i).age, std::cref(cohort.session(i).participant_id), i);
  };
  std::sort(anchors.begin(), anchors.end(),
            [&](SessionIndex a, SessionIndex b) { return anchor_key(a) < anchor_key(b); });

  std::vector<unsigned char> participant_used(cohort.participants().size(), 0);
  std::vector<unsigned char> session_used(cohort.size(), 0);
  auto is_used = [&](SessionIndex i) {
    return spec.one_per_participant ? participant_used[cohort.participant_of(i)] != 0
                                    : session_used[i] != 0;
  };

  MatchedSet out;
  out.spec = spec;
  for (SessionIndex a : anchors) {
    if (is_used(a)) continue;
    const auto& as = cohort.session(a);
    std::vector<SessionIndex> tuple(k, 0);
    std::vector<bool> filled(k, false);
    tuple[anchor] = a;
    filled[anchor] = true;
    bool complete = true;
    for (std::size_t g = 0; g < k && complete; ++g) {
      if (g == anchor) continue;
      // Time constraint partner: a filled member whose group is time-linked.
      std::optional<double> partner_time;
      if (spec.time_tolerance) {
        for (std::size_t h = 0; h < k; ++h) {
          if (!filled[h] || !detail::time_linked(spec.groups[g].group, spec.groups[h].group)) continue;
          partner_time = cohort.label(tuple[h]).time_to_event();
        }
      }
      const auto& pool = pools[g][static_cast<int>(as.sex)];
      const double lo = as.age - spec.age_tolerance - detail::kTolSlack;
      auto it = std::lower_bound(pool.begin(), pool.end(), lo, [&](SessionIndex i, double v) {
        return cohort.session(i).age < v;
      });
      std::optional<SessionIndex> best;
      double best_age = 0.0, best_time = 0.0;
      for (; it != pool.end(); ++it) {
        const SessionIndex c = *it;
        const auto& cs = cohort.session(c);
        const double age_gap = std::abs(cs.age - as.age);
        if (cs.age > as.age + spec.age_tolerance + detail::kTolSlack) break;
        if (age_gap > spec.age_tolerance + detail::kTolSlack) continue;
        if (is_used(c)) continue;
        const std::size_t person = cohort.participant_of(c);
        bool clash = false;
        for (std::size_t h = 0; h < k; ++h)
          if (filled[h] && cohort.participant_of(tuple[h]) == person) clash = true;
        if (clash) continue;
        double time_gap = 0.0;
        if (partner_time) {
          const auto ct = cohort.label(c).time_to_event();
          if (!ct) continue;
          time_gap = std::abs(*ct - *partner_time);
          if (time_gap > *spec.time_tolerance + detail::kTolSlack) continue;
        }
        const bool better =
            !best || age_gap < best_age ||
            (age_gap == best_age &&
             (time_gap < best_time ||
              (time_gap == best_time &&
               (cs.participant_id < cohort.session(*best).participant_id ||
                (cs.participant_id == cohort.session(*best).participant_id && c < *best)))));
        if (better) {
          best = c;
          best_age = age_gap;
          best_time = time_gap;
        }
      }
      if (!best) {
        complete = false;
        break;
      }
      tuple[g] = *best;
      filled[g] = true;
    }
    if (!complete) continue;
    for (auto s : tuple) {
      participant_used[cohort.participant_of(s)] = 1;
      session_used[s] = 1;
    }
    out.tuples.push_back(std::move(tuple));
  }
  if (out.tuples.empty()) throw Error(ErrorCode::NoMatches, "greedy matching produced no tuples");
  return out;
}

struct TupleAudit {
  double max_age_gap = 0.0;
  std::optional<double> time_gap;
};

struct MatchAudit {
  std::vector<TupleAudit> tuples;
  std::size_t female_tuples = 0;
  std::size_t male_tuples = 0;
  double max_age_gap = 0.0;
  std::optional<double> max_time_gap;
  std::size_t distinct_participants = 0;
};

/// Re-checks every matched-set invariant; throws InvariantViolation naming
/// the first offending tuple.
inline MatchAudit audit_match(const Cohort& cohort, const MatchedSet& set) {
  MatchAudit report;
  const auto& spec = set.spec;
  std::set<std::size_t> seen_participants;
  std::set<SessionIndex> seen_sessions;
  std::size_t members = 0;
  auto fail = [](std::size_t t, const std::string& why) {
    throw Error(ErrorCode::InvariantViolation, "tuple " + std::to_string(t) + ": " + why);
  };
  for (std::size_t t = 0; t < set.tuples.size(); ++t) {
    const auto& tuple = set.tuples[t];
    if (tuple.size() != spec.groups.size()) fail(t, "member count differs from group count");
    TupleAudit ta;
    std::set<std::size_t> in_tuple;
    for (std::size_t g = 0; g < tuple.size(); ++g) {
      const SessionIndex s = tuple[g];
      if (s >= cohort.size()) fail(t, "session index out of range");
      if (!spec.groups[g].accepts(cohort, s)) fail(t, "member not eligible for its group");
      if (cohort.session(s).sex != cohort.session(tuple[0]).sex) fail(t, "mixed sexes");
      const std::size_t person = cohort.participant_of(s);
      if (!in_tuple.insert(person).second) fail(t, "participant repeated within tuple");
      if (spec.one_per_participant && !seen_participants.insert(person).second)
        fail(t, "participant " + cohort.session(s).participant_id + " used in more than one tuple");
      if (!spec.one_per_participant && !seen_sessions.insert(s).second)
        fail(t, "session used in more than one tuple");
      seen_participants.insert(person);
      ++members;
    }
    // Anchor-based age check: some member is within tolerance of all others.
    double best_span = std::numeric_limits<double>::infinity();
    for (auto a : tuple) {
      double span = 0.0;
      for (auto b : tuple) span = std::max(span, std::abs(cohort.session(a).age - cohort.session(b).age));
      best_span = std::min(best_span, span);
    }
    ta.max_age_gap = best_span;
    if (best_span > spec.age_tolerance + detail::kTolSlack) fail(t, "age gap exceeds tolerance");
    if (spec.time_tolerance) {
      for (std::size_t g = 0; g < tuple.size(); ++g)
        for (std::size_t h = g + 1; h < tuple.size(); ++h) {
          if (!detail::time_linked(spec.groups[g].group, spec.groups[h].group)) continue;
          const auto tg = cohort.label(tuple[g]).time_to_event();
          const auto th = cohort.label(tuple[h]).time_to_event();
          if (!tg || !th) fail(t, "missing time-to-event");
          const double gap = std::abs(*tg - *th);
          ta.time_gap = std::max(ta.time_gap.value_or(0.0), gap);
          if (gap > *spec.time_tolerance + detail::kTolSlack) fail(t, "time-to-event gap exceeds tolerance");
        }
    }
    if (!tuple.empty()) {
      (cohort.session(tuple[0]).sex == Sex::Male ? report.male_tuples : report.female_tuples)++;
    }
    report.max_age_gap = std::max(report.max_age_gap, ta.max_age_gap);
    if (ta.time_gap) report.max_time_gap = std::max(report.max_time_gap.value_or(0.0), *ta.time_gap);
    report.tuples.push_back(ta);
  }
  report.distinct_participants = seen_participants.size();
  if (spec.one_per_participant && report.distinct_participants != members)
    throw Error(ErrorCode::InvariantViolation, "participant count does not equal groups x tuples");
  return report;
}

inline nlohmann::json to_json(const MatchSpec& spec) {
  nlohmann::json j;
  auto& groups = j["groups"] = nlohmann::json::array();
  for (const auto& g : spec.groups) {
    nlohmann::json o;
    o["group"] = std::string(to_string(g.group));
    if (g.dataset) o["dataset"] = *g.dataset;
    if (g.time_window) o["time_window"] = {g.time_window->first, g.time_window->second};
    groups.push_back(o);
  }
  j["age_tolerance"] = spec.age_tolerance;
  j["time_tolerance"] = spec.time_tolerance ? nlohmann::json(*spec.time_tolerance) : nlohmann::json();
  j["one_per_participant"] = spec.one_per_participant;
  return j;
}

inline MatchSpec match_spec_from_json(const nlohmann::json& j) {
  MatchSpec spec;
  for (const auto& o : j.at("groups")) {
    GroupSelector g;
    const auto lg = parse_label_group(o.at("group").get<std::string>());
    if (!lg) throw Error(ErrorCode::ConfigSchemaError, "unknown group " + o.at("group").dump());
    g.group = *lg;
    if (o.contains("dataset")) g.dataset = o.at("dataset").get<std::string>();
    if (o.contains("time_window"))
      g.time_window = std::make_pair(o.at("time_window")[0].get<double>(),
                                     o.at("time_window")[1].get<double>());
    spec.groups.push_back(g);
  }
  spec.age_tolerance = j.value("age_tolerance", 1.0);
  if (j.contains("time_tolerance") && !j.at("time_tolerance").is_null())
    spec.time_tolerance = j.at("time_tolerance").get<double>();
  spec.one_per_participant = j.value("one_per_participant", true);
  return spec;
}

/// Members are written as (participant_id, age) keys so the file stays valid
/// for any cohort holding those sessions.
inline nlohmann::json to_json(const Cohort& cohort, const MatchedSet& set) {
  nlohmann::json j;
  j["spec"] = to_json(set.spec);
  auto& tuples = j["tuples"] = nlohmann::json::array();
  for (const auto& t : set.tuples) {
    auto arr = nlohmann::json::array();
    for (auto s : t) {
      const auto& rec = cohort.session(s);
      arr.push_back({{"participant_id", rec.participant_id}, {"age", rec.age}});
    }
    tuples.push_back(arr);
  }
  return j;
}

inline MatchedSet matched_set_from_json(const Cohort& cohort, const nlohmann::json& j) {
  try {
    MatchedSet set;
    set.spec = match_spec_from_json(j.at("spec"));
    for (const auto& t : j.at("tuples")) {
      std::vector<SessionIndex> tuple;
      for (const auto& m : t) {
        const auto pid = m.at("participant_id").get<std::string>();
        const auto idx = cohort.find(pid, m.at("age").get<double>());
        if (!idx) throw Error(ErrorCode::InvariantViolation, "matched session " + pid + " not in cohort");
        tuple.push_back(*idx);
      }
      set.tuples.push_back(std::move(tuple));
    }
    return set;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigSchemaError, std::string("malformed matched-set JSON: ") + e.what());
  }
}

}  // namespace bageval
