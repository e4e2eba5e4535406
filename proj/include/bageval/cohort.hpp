#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "bageval/csv.hpp"
#include "bageval/error.hpp"

namespace bageval {

enum class Sex { Female = 0, Male = 1 };
enum class Diagnosis { CN, MCI, AD };
enum class LabelGroup { CN_stable, CN_star, MCI, AD };

inline double encode(Sex s) { return s == Sex::Male ? 1.0 : 0.0; }

inline std::string_view to_string(Sex s) { return s == Sex::Male ? "M" : "F"; }

inline std::string_view to_string(Diagnosis d) {
  switch (d) {
    case Diagnosis::CN: return "CN";
    case Diagnosis::MCI: return "MCI";
    case Diagnosis::AD: return "AD";
  }
  return "?";
}

inline std::string_view to_string(LabelGroup g) {
  switch (g) {
    case LabelGroup::CN_stable: return "CN_stable";
    case LabelGroup::CN_star: return "CN_star";
    case LabelGroup::MCI: return "MCI";
    case LabelGroup::AD: return "AD";
  }
  return "?";
}

inline std::optional<Sex> parse_sex(std::string_view s) {
  s = csv::trim(s);
  if (s == "F") return Sex::Female;
  if (s == "M") return Sex::Male;
  return std::nullopt;
}

inline std::optional<Diagnosis> parse_diagnosis(std::string_view s) {
  s = csv::trim(s);
  if (s == "CN") return Diagnosis::CN;
  if (s == "MCI") return Diagnosis::MCI;
  if (s == "AD") return Diagnosis::AD;
  return std::nullopt;
}

inline std::optional<LabelGroup> parse_label_group(std::string_view s) {
  s = csv::trim(s);
  if (s == "CN_stable" || s == "CN") return LabelGroup::CN_stable;
  if (s == "CN_star" || s == "CN*") return LabelGroup::CN_star;
  if (s == "MCI") return LabelGroup::MCI;
  if (s == "AD") return LabelGroup::AD;
  return std::nullopt;
}

/// One imaging session. `age` is the chronological age at scan in years and
/// doubles as the session time key.
struct SessionRecord {
  std::string dataset_id;
  std::string participant_id;
  double age = 0.0;
  Sex sex = Sex::Female;
  Diagnosis diagnosis = Diagnosis::CN;
  std::map<std::string, double> estimates;
  std::map<std::string, std::string> metadata;

  std::optional<double> estimate(const std::string& model) const {
    auto it = estimates.find(model);
    if (it == estimates.end()) return std::nullopt;
    return it->second;
  }

  friend bool operator==(const SessionRecord&, const SessionRecord&) = default;
};

struct TrajectoryLabel {
  LabelGroup group = LabelGroup::CN_stable;
  std::optional<double> time_to_first_mci;
  std::optional<double> time_to_last_cn;

  /// Time-to-event used by matching and windowing: time to first MCI for
  /// CN_star, time to last CN for CN_stable, absent otherwise.
  std::optional<double> time_to_event() const {
    if (group == LabelGroup::CN_star) return time_to_first_mci;
    if (group == LabelGroup::CN_stable) return time_to_last_cn;
    return std::nullopt;
  }

  friend bool operator==(const TrajectoryLabel&, const TrajectoryLabel&) = default;
};

/// Index of a session inside its Cohort.
using SessionIndex = std::size_t;

/// Canonical column names of the ingestion format mapped to the names found
/// in the file. Estimate columns are discovered by prefix.
struct IngestSchema {
  std::string dataset = "dataset";
  std::string participant_id = "participant_id";
  std::string age = "age";
  std::string sex = "sex";
  std::string diagnosis = "diagnosis";
  std::string estimate_prefix = "pred__";
};

/// Validated longitudinal cohort. Sessions are ordered by participant id and
/// then ascending age; the object is immutable once built.
class Cohort {
 public:
  Cohort() = default;

  Cohort(std::vector<SessionRecord> sessions, std::vector<std::string> models,
         std::vector<std::string> metadata_columns = {})
      : sessions_(std::move(sessions)),
        models_(std::move(models)),
        metadata_columns_(std::move(metadata_columns)) {
    validate_and_index();
  }

  const std::vector<SessionRecord>& sessions() const { return sessions_; }
  const SessionRecord& session(SessionIndex i) const { return sessions_.at(i); }
  std::size_t size() const { return sessions_.size(); }
  const std::vector<std::string>& models() const { return models_; }
  const std::vector<std::string>& metadata_columns() const { return metadata_columns_; }

  bool has_model(const std::string& m) const {
    return std::find(models_.begin(), models_.end(), m) != models_.end();
  }

  bool labeled() const { return labels_.size() == sessions_.size() && !sessions_.empty(); }

  const TrajectoryLabel& label(SessionIndex i) const { return labels_.at(i); }
  const std::vector<TrajectoryLabel>& labels() const { return labels_; }

  /// Participants in id order, each with its contiguous session range.
  struct Participant {
    std::string id;
    SessionIndex begin;
    SessionIndex end;
  };
  const std::vector<Participant>& participants() const { return participants_; }

  /// Participant slot of a session.
  std::size_t participant_of(SessionIndex i) const { return participant_slot_.at(i); }

  /// Immediately preceding session of the same participant, if any.
  std::optional<SessionIndex> previous_session(SessionIndex i) const {
    const auto& p = participants_[participant_slot_.at(i)];
    if (i == p.begin) return std::nullopt;
    return i - 1;
  }

  std::optional<SessionIndex> find(const std::string& participant_id, double age) const {
    auto it = std::lower_bound(
        participants_.begin(), participants_.end(), participant_id,
        [](const Participant& p, const std::string& id) { return p.id < id; });
    if (it == participants_.end() || it->id != participant_id) return std::nullopt;
    for (SessionIndex i = it->begin; i < it->end; ++i)
      if (sessions_[i].age == age) return i;
    return std::nullopt;
  }

  Cohort with_labels(std::vector<TrajectoryLabel> labels) const {
    Cohort out = *this;
    out.labels_ = std::move(labels);
    return out;
  }

  friend bool operator==(const Cohort& a, const Cohort& b) {
    return a.sessions_ == b.sessions_ && a.models_ == b.models_ &&
           a.metadata_columns_ == b.metadata_columns_ && a.labels_ == b.labels_;
  }

 private:
  void validate_and_index() {
    // Row indices refer to the order the caller supplied.
    std::vector<std::size_t> order(sessions_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = 0; i < sessions_.size(); ++i) {
      const auto& s = sessions_[i];
      if (!std::isfinite(s.age) || s.age <= 0.0)
        throw Error(ErrorCode::NonFiniteAge, "age must be finite and positive", i);
      for (const auto& [m, v] : s.estimates)
        if (!std::isfinite(v))
          throw Error(ErrorCode::NonFiniteAge, "non-finite estimate for model " + m, i);
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const auto& x = sessions_[a];
      const auto& y = sessions_[b];
      if (x.participant_id != y.participant_id) return x.participant_id < y.participant_id;
      return x.age < y.age;
    });
    for (std::size_t k = 1; k < order.size(); ++k) {
      const auto& x = sessions_[order[k - 1]];
      const auto& y = sessions_[order[k]];
      if (x.participant_id == y.participant_id && x.age == y.age)
        throw Error(ErrorCode::DuplicateSession,
                    "participant " + y.participant_id + " age " + csv::format_double(y.age),
                    std::max(order[k - 1], order[k]));
    }
    std::vector<SessionRecord> sorted;
    sorted.reserve(sessions_.size());
    for (auto i : order) sorted.push_back(std::move(sessions_[i]));
    sessions_ = std::move(sorted);

    participants_.clear();
    participant_slot_.assign(sessions_.size(), 0);
    for (SessionIndex i = 0; i < sessions_.size(); ++i) {
      if (participants_.empty() || participants_.back().id != sessions_[i].participant_id)
        participants_.push_back({sessions_[i].participant_id, i, i + 1});
      else
        participants_.back().end = i + 1;
      participant_slot_[i] = participants_.size() - 1;
    }
  }

  std::vector<SessionRecord> sessions_;
  std::vector<std::string> models_;
  std::vector<std::string> metadata_columns_;
  std::vector<TrajectoryLabel> labels_;
  std::vector<Participant> participants_;
  std::vector<std::size_t> participant_slot_;
};

/// Parses a prediction table. Unknown extra columns (e.g. race) are carried
/// as metadata and never used as features.
inline Cohort ingest_sessions(std::istream& in, const IngestSchema& schema = {}) {
  const csv::Table table = csv::read(in);
  auto require = [&](const std::string& name) {
    auto c = table.column(name);
    if (!c) throw Error(ErrorCode::MissingColumn, "required column '" + name + "' not found");
    return *c;
  };
  const std::size_t c_pid = require(schema.participant_id);
  const std::size_t c_age = require(schema.age);
  const std::size_t c_sex = require(schema.sex);
  const std::size_t c_dx = require(schema.diagnosis);
  const auto c_dataset = table.column(schema.dataset);

  std::vector<std::pair<std::string, std::size_t>> model_cols;
  std::vector<std::pair<std::string, std::size_t>> meta_cols;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    const auto& h = table.header[c];
    if (h.rfind(schema.estimate_prefix, 0) == 0 && h.size() > schema.estimate_prefix.size()) {
      model_cols.emplace_back(h.substr(schema.estimate_prefix.size()), c);
    } else if (c != c_pid && c != c_age && c != c_sex && c != c_dx &&
               (!c_dataset || c != *c_dataset)) {
      meta_cols.emplace_back(h, c);
    }
  }
  if (model_cols.empty())
    throw Error(ErrorCode::MissingColumn,
                "no estimate column matching '" + schema.estimate_prefix + "<model>'");

  std::vector<SessionRecord> sessions;
  sessions.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    auto cell = [&](std::size_t c) -> std::string_view {
      return c < row.size() ? csv::trim(row[c]) : std::string_view{};
    };
    SessionRecord s;
    s.dataset_id = c_dataset ? std::string(cell(*c_dataset)) : std::string{};
    s.participant_id = std::string(cell(c_pid));
    const auto age = csv::parse_double(cell(c_age));
    if (!age || !std::isfinite(*age) || *age <= 0.0)
      throw Error(ErrorCode::NonFiniteAge, "age '" + std::string(cell(c_age)) + "'", r);
    s.age = *age;
    const auto sex = parse_sex(cell(c_sex));
    if (!sex) throw Error(ErrorCode::UnknownSexLabel, "sex '" + std::string(cell(c_sex)) + "'", r);
    s.sex = *sex;
    const auto dx = parse_diagnosis(cell(c_dx));
    if (!dx)
      throw Error(ErrorCode::UnknownDiagnosisLabel,
                  "diagnosis '" + std::string(cell(c_dx)) + "'", r);
    s.diagnosis = *dx;
    for (const auto& [model, c] : model_cols) {
      const auto text = cell(c);
      if (text.empty()) continue;
      const auto v = csv::parse_double(text);
      if (!v || !std::isfinite(*v))
        throw Error(ErrorCode::NonFiniteAge,
                    "estimate '" + std::string(text) + "' for model " + model, r);
      s.estimates.emplace(model, *v);
    }
    if (s.estimates.empty())
      throw Error(ErrorCode::NonFiniteAge, "row carries no brain-age estimate", r);
    for (const auto& [name, c] : meta_cols) s.metadata.emplace(name, std::string(cell(c)));
    sessions.push_back(std::move(s));
  }

  std::vector<std::string> models;
  for (const auto& [m, c] : model_cols) models.push_back(m);
  std::vector<std::string> meta;
  for (const auto& [m, c] : meta_cols) meta.push_back(m);
  return Cohort(std::move(sessions), std::move(models), std::move(meta));
}

inline Cohort ingest_sessions(const std::string& path, const IngestSchema& schema = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  return ingest_sessions(in, schema);
}

/// Writes the cohort in the ingestion format; re-ingesting yields an equal cohort.
inline void export_sessions(const Cohort& cohort, std::ostream& out) {
  std::vector<std::string> header{"dataset", "participant_id", "age", "sex", "diagnosis"};
  for (const auto& m : cohort.metadata_columns()) header.push_back(m);
  for (const auto& m : cohort.models()) header.push_back("pred__" + m);
  csv::write_row(out, header);
  for (const auto& s : cohort.sessions()) {
    std::vector<std::string> row{s.dataset_id, s.participant_id, csv::format_double(s.age),
                                 std::string(to_string(s.sex)),
                                 std::string(to_string(s.diagnosis))};
    for (const auto& m : cohort.metadata_columns()) {
      auto it = s.metadata.find(m);
      row.push_back(it == s.metadata.end() ? std::string{} : it->second);
    }
    for (const auto& m : cohort.models()) {
      auto v = s.estimate(m);
      row.push_back(v ? csv::format_double(*v) : std::string{});
    }
    csv::write_row(out, row);
  }
}

/// Assigns CN_stable / CN_star / MCI / AD labels and time-to-event fields.
inline Cohort label_trajectories(const Cohort& cohort) {
  const auto& ss = cohort.sessions();
  std::vector<TrajectoryLabel> labels(ss.size());
  for (const auto& p : cohort.participants()) {
    std::optional<double> last_cn_age;
    for (SessionIndex i = p.begin; i < p.end; ++i)
      if (ss[i].diagnosis == Diagnosis::CN) last_cn_age = ss[i].age;

    for (SessionIndex i = p.begin; i < p.end; ++i) {
      TrajectoryLabel& l = labels[i];
      const auto& s = ss[i];
      for (SessionIndex j = i; j < p.end; ++j) {
        if (ss[j].diagnosis == Diagnosis::MCI) {
          l.time_to_first_mci = ss[j].age - s.age;
          break;
        }
      }
      switch (s.diagnosis) {
        case Diagnosis::CN:
          l.group = l.time_to_first_mci ? LabelGroup::CN_star : LabelGroup::CN_stable;
          l.time_to_last_cn = *last_cn_age - s.age;
          break;
        case Diagnosis::MCI: l.group = LabelGroup::MCI; break;
        case Diagnosis::AD: l.group = LabelGroup::AD; break;
      }
    }
  }
  return cohort.with_labels(std::move(labels));
}

/// First session of every participant whose baseline label is in `groups`.
inline std::vector<SessionIndex> select_baselines(const Cohort& cohort,
                                                  const std::set<LabelGroup>& groups) {
  std::vector<SessionIndex> out;
  if (!cohort.labeled()) throw Error(ErrorCode::EmptySelection, "cohort is not labeled");
  for (const auto& p : cohort.participants())
    if (groups.count(cohort.label(p.begin).group)) out.push_back(p.begin);
  if (out.empty()) throw Error(ErrorCode::EmptySelection, "no participant qualifies");
  return out;
}

// JSON form of a cohort (the `ingest` command's output).

inline nlohmann::json to_json(const Cohort& cohort) {
  nlohmann::json j;
  j["models"] = cohort.models();
  j["metadata_columns"] = cohort.metadata_columns();
  auto& arr = j["sessions"] = nlohmann::json::array();
  for (SessionIndex i = 0; i < cohort.size(); ++i) {
    const auto& s = cohort.session(i);
    nlohmann::json o;
    o["dataset"] = s.dataset_id;
    o["participant_id"] = s.participant_id;
    o["age"] = s.age;
    o["sex"] = std::string(to_string(s.sex));
    o["diagnosis"] = std::string(to_string(s.diagnosis));
    o["estimates"] = s.estimates;
    if (!s.metadata.empty()) o["metadata"] = s.metadata;
    if (cohort.labeled()) {
      const auto& l = cohort.label(i);
      o["label"] = std::string(to_string(l.group));
      if (l.time_to_first_mci) o["time_to_first_mci"] = *l.time_to_first_mci;
      if (l.time_to_last_cn) o["time_to_last_cn"] = *l.time_to_last_cn;
    }
    arr.push_back(std::move(o));
  }
  return j;
}

inline Cohort cohort_from_json(const nlohmann::json& j) {
  try {
    std::vector<SessionRecord> sessions;
    std::size_t row = 0;
    for (const auto& o : j.at("sessions")) {
      SessionRecord s;
      s.dataset_id = o.value("dataset", std::string{});
      s.participant_id = o.at("participant_id").get<std::string>();
      s.age = o.at("age").get<double>();
      const auto sex = parse_sex(o.at("sex").get<std::string>());
      if (!sex) throw Error(ErrorCode::UnknownSexLabel, "bad sex", row);
      s.sex = *sex;
      const auto dx = parse_diagnosis(o.at("diagnosis").get<std::string>());
      if (!dx) throw Error(ErrorCode::UnknownDiagnosisLabel, "bad diagnosis", row);
      s.diagnosis = *dx;
      s.estimates = o.at("estimates").get<std::map<std::string, double>>();
      if (o.contains("metadata"))
        s.metadata = o.at("metadata").get<std::map<std::string, std::string>>();
      sessions.push_back(std::move(s));
      ++row;
    }
    return Cohort(std::move(sessions), j.at("models").get<std::vector<std::string>>(),
                  j.value("metadata_columns", std::vector<std::string>{}));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigSchemaError, std::string("malformed cohort JSON: ") + e.what());
  }
}

/// Loads a cohort from CSV or from the JSON written by `ingest`, labeled.
inline Cohort load_cohort(const std::string& path) {
  if (path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ConfigSchemaError, path + ": " + e.what());
    }
    return label_trajectories(cohort_from_json(j));
  }
  return label_trajectories(ingest_sessions(path));
}

}  // namespace bageval
