#pragma once

// Declarative pipelines: a JSON config lists steps that run in order against
// one cohort and write reports plus a manifest of content hashes.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "bageval/classifiers.hpp"
#include "bageval/cohort.hpp"
#include "bageval/error.hpp"
#include "bageval/evaluation.hpp"
#include "bageval/features.hpp"
#include "bageval/matching.hpp"
#include "bageval/random.hpp"
#include "bageval/report.hpp"
#include "bageval/simulator.hpp"
#include "bageval/survival.hpp"

namespace bageval {

inline constexpr const char* kVersion = "1.0.0";

/// 64-bit FNV-1a, rendered as 16 hex digits.
inline std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline nlohmann::json read_json_file(const std::string& path) {
  const auto text = read_file_bytes(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigSchemaError, path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Spec parsing shared by the CLI and the pipeline

inline std::vector<std::string> split_list(std::string_view text, char sep = ',') {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto pos = std::min(text.find(sep, start), text.size());
    const auto part = csv::trim(text.substr(start, pos - start));
    if (!part.empty()) out.emplace_back(part);
    start = pos + 1;
  }
  return out;
}

inline std::vector<LabelGroup> parse_groups(const std::vector<std::string>& names) {
  std::vector<LabelGroup> out;
  for (const auto& n : names) {
    const auto g = parse_label_group(n);
    if (!g) throw Error(ErrorCode::ConfigSchemaError, "unknown group " + n);
    out.push_back(*g);
  }
  return out;
}

inline ReferenceSelection reference_or_throw(std::string_view text) {
  const auto r = parse_reference(text);
  if (!r) throw Error(ErrorCode::ConfigSchemaError, "unknown reference selection " + std::string(text));
  return *r;
}

inline BootstrapSpec bootstrap_from_json(const nlohmann::json& j, std::uint64_t seed) {
  BootstrapSpec b;
  b.master_seed = seed;
  if (j.is_number_integer()) {
    b.n_replicates = j.get<int>();
  } else if (j.is_object()) {
    b.n_replicates = j.value("n_replicates", b.n_replicates);
    b.ci_level = j.value("ci_level", b.ci_level);
    const auto unit = j.value("unit", std::string("pair"));
    if (unit == "pair") b.unit = ResampleUnit::MatchedPair;
    else if (unit == "point") b.unit = ResampleUnit::DataPoint;
    else throw Error(ErrorCode::ConfigSchemaError, "bootstrap unit must be pair or point");
  }
  if (b.n_replicates <= 0 || !(b.ci_level > 0.0 && b.ci_level < 1.0))
    throw Error(ErrorCode::ConfigSchemaError, "invalid bootstrap settings");
  return b;
}

/// Classification table: every feature set crossed with every classifier on one matched set.
/// Classifier i of feature set f trains with seed derive_seed(seed, {f, i}).
inline std::vector<ClassificationResult> run_table2(const Cohort& cohort, const BagTable& bags,
                                                    const MatchedSet& matched,
                                                    const std::vector<std::string>& feature_sets,
                                                    const std::vector<std::string>& classifiers, std::uint64_t seed,
                                                    const BootstrapSpec& bspec) {
  std::vector<ClassificationResult> rows;
  for (std::size_t f = 0; f < feature_sets.size(); ++f) {
    const auto fs = FeatureSpec::parse(feature_sets[f]);
    for (std::size_t c = 0; c < classifiers.size(); ++c) {
      const auto clf = ClassifierSpec::parse(classifiers[c], derive_seed(seed, {f, c}));
      BootstrapSpec b = bspec;
      b.master_seed = derive_seed(bspec.master_seed, {f, c});
      rows.push_back(evaluate_classification(cohort, bags, matched, fs, clf, b));
    }
  }
  return rows;
}

enum class PredictMode { Global, TimeSpecific };

inline PredictMode parse_predict_mode(std::string_view s) {
  if (s == "global") return PredictMode::Global;
  if (s == "time-specific" || s == "time_specific") return PredictMode::TimeSpecific;
  throw Error(ErrorCode::ConfigSchemaError, "mode must be global or time-specific");
}

/// One window series per feature set. The global model uses session-level
/// CN_stable/CN_star matching so every pre-MCI session can be scored.
inline std::vector<report::WindowSeries> run_windows(const Cohort& cohort, const BagTable& bags, PredictMode mode,
                                                     const std::vector<std::string>& feature_sets,
                                                     const std::string& classifier, std::uint64_t seed,
                                                     const WindowSpec& wspec, const BootstrapSpec& bspec,
                                                     double age_tol = 1.0, double time_tol = 1.0) {
  auto base = MatchSpec::for_groups({LabelGroup::CN_stable, LabelGroup::CN_star}, age_tol);
  base.time_tolerance = time_tol;
  std::optional<MatchedSet> global_set;
  if (mode == PredictMode::Global) {
    auto ms = base;
    ms.one_per_participant = false;
    global_set = greedy_match(cohort, ms);
  }
  std::vector<report::WindowSeries> out;
  for (std::size_t f = 0; f < feature_sets.size(); ++f) {
    const auto fs = FeatureSpec::parse(feature_sets[f]);
    const auto clf = ClassifierSpec::parse(classifier, derive_seed(seed, f));
    out.push_back({fs.name(), mode == PredictMode::Global
                                  ? global_model_windows(cohort, bags, *global_set, fs, clf, wspec, bspec)
                                  : time_specific_windows(cohort, bags, fs, clf, base, wspec, bspec)});
  }
  return out;
}

/// Scenario models plus the added model, deduplicated, for record building.
inline std::vector<std::string> survival_models(const std::vector<std::string>& scenarios, const std::string& added) {
  std::vector<std::string> models;
  for (const auto& s : scenarios)
    if (s != "basic" && std::find(models.begin(), models.end(), s) == models.end()) models.push_back(s);
  if (std::find(models.begin(), models.end(), added) == models.end()) models.push_back(added);
  return models;
}

inline std::string features_csv(const Cohort& cohort, const FeatureMatrix& fm) {
  std::ostringstream o;
  // Session age is the leading feature column.
  std::vector<std::string> header = {"dataset", "participant_id", "diagnosis", "group"};
  header.insert(header.end(), fm.column_names.begin(), fm.column_names.end());
  csv::write_row(o, header);
  for (std::size_t r = 0; r < fm.rows(); ++r) {
    const auto i = fm.row_sessions[r];
    const auto& s = cohort.session(i);
    std::vector<std::string> row = {s.dataset_id, s.participant_id, std::string(to_string(s.diagnosis)),
                                    std::string(to_string(cohort.label(i).group))};
    for (std::size_t c = 0; c < fm.cols(); ++c) row.push_back(fm.is_missing(r, c) ? "" : csv::format_double(fm.at(r, c)));
    csv::write_row(o, row);
  }
  return o.str();
}

inline nlohmann::json to_json(const BiasParams& p) {
  return {{"model", p.model_name}, {"slope", p.slope}, {"intercept", p.intercept}};
}

inline SimConfig simulation_from_json(const nlohmann::json& step, std::uint64_t seed) {
  const auto scenario = step.value("scenario", std::string("default"));
  if (scenario != "default" && scenario != "paper-default")
    throw Error(ErrorCode::ConfigSchemaError, "unknown scenario " + scenario);
  SimConfig cfg = default_scenario(step.value("n", std::size_t{500}), seed);
  if (step.contains("config")) cfg = sim_config_from_json(step.at("config"), cfg);
  cfg.master_seed = seed;
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// Pipeline

struct RunConfig {
  nlohmann::json source;  // the config document as given
  std::uint64_t seed = 0;
  std::string output_dir = ".";
  std::optional<std::string> input;
  ReferenceSelection reference = ReferenceSelection::CnStable;
  BootstrapSpec bootstrap;
  std::vector<nlohmann::json> steps;
  std::optional<int> threads;

  static RunConfig from_json(const nlohmann::json& j, const std::string& base_dir = ".") {
    auto fail = [](const std::string& why) { throw Error(ErrorCode::ConfigSchemaError, why); };
    if (!j.is_object()) fail("config must be a JSON object");
    RunConfig c;
    c.source = j;
    if (!j.contains("seed") || !j.at("seed").is_number_integer() || j.at("seed").get<std::int64_t>() < 0)
      fail("config field 'seed' (unsigned integer) is mandatory");
    c.seed = j.at("seed").get<std::uint64_t>();
    auto resolve = [&](const std::string& p) {
      const std::filesystem::path path(p);
      return path.is_absolute() ? p : (std::filesystem::path(base_dir) / path).lexically_normal().string();
    };
    c.output_dir = resolve(j.value("output_dir", std::string(".")));
    if (j.contains("input")) c.input = resolve(j.at("input").get<std::string>());
    c.reference = reference_or_throw(j.value("reference", std::string("CN_stable")));
    c.bootstrap = bootstrap_from_json(j.value("bootstrap", nlohmann::json::object()), c.seed);
    if (j.contains("threads")) c.threads = j.at("threads").get<int>();
    if (!j.contains("steps") || !j.at("steps").is_array() || j.at("steps").empty())
      fail("config field 'steps' must be a non-empty array");
    static const std::set<std::string> known = {"simulate", "ingest", "bias", "features", "match", "classify",
                                                "predict", "survival", "lifetable", "differences"};
    bool has_source = c.input.has_value();
    for (const auto& s : j.at("steps")) {
      if (!s.is_object() || !s.contains("type")) fail("every step needs a 'type'");
      const auto type = s.at("type").get<std::string>();
      if (!known.count(type)) fail("unknown step type " + type);
      if (type == "simulate") has_source = true;
      else if (!has_source) fail("step " + type + " runs before any cohort is available");
      c.steps.push_back(s);
    }
    return c;
  }

  /// Every model name a step refers to.
  std::set<std::string> referenced_models() const {
    std::set<std::string> out;
    auto add_features = [&](const nlohmann::json& v) {
      for (const auto& f : v) for (const auto& m : FeatureSpec::parse(f.get<std::string>()).models) out.insert(m);
    };
    for (const auto& s : steps) {
      const auto type = s.at("type").get<std::string>();
      if (s.contains("features")) {
        if (s.at("features").is_array()) add_features(s.at("features"));
        else add_features(nlohmann::json::array({s.at("features")}));
      }
      if (s.contains("models")) for (const auto& m : s.at("models")) out.insert(m.get<std::string>());
      if (type == "survival") {
        for (const auto& m : s.value("scenarios", std::vector<std::string>{"basic"}))
          if (m != "basic") out.insert(m);
        if (s.contains("add")) out.insert(s.at("add").get<std::string>());
      }
      if (type == "differences") {
        out.insert(s.value("model_a", std::string()));
        out.insert(s.value("model_b", std::string()));
      }
    }
    out.erase("");
    return out;
  }
};

struct RunResult {
  std::vector<std::pair<std::string, std::string>> outputs;  // path relative to output_dir, hash
  std::string reports_hash;
  nlohmann::json manifest;
};

namespace detail {

struct RunState {
  const RunConfig& cfg;
  std::optional<Cohort> cohort;
  std::optional<BagTable> bags;
  std::optional<MatchedSet> matched;
  std::vector<std::pair<std::string, std::string>> inputs;
  std::vector<std::pair<std::string, std::string>> outputs;

  void check_models() const {
    for (const auto& m : cfg.referenced_models())
      if (!cohort->has_model(m))
        throw Error(ErrorCode::ConfigSchemaError, "model column pred__" + m + " is not present in the input");
  }

  const BagTable& bag_table() {
    if (!bags) bags.emplace(*cohort, cohort->models(), reference_sessions(*cohort, cfg.reference));
    return *bags;
  }

  void set_cohort(Cohort c) {
    cohort = std::move(c);
    bags.reset();
    matched.reset();
    check_models();
  }

  void write(const std::string& rel, const std::string& text) {
    const auto path = std::filesystem::path(cfg.output_dir) / rel;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    report::write_text_file(path.string(), text);
    outputs.emplace_back(rel, fnv1a_hex(text));
  }
};

inline std::vector<std::string> string_list(const nlohmann::json& s, const char* key, std::vector<std::string> def) {
  if (!s.contains(key)) return def;
  const auto& v = s.at(key);
  if (v.is_string()) return {v.get<std::string>()};
  return v.get<std::vector<std::string>>();
}

inline void run_step(RunState& st, const nlohmann::json& s, std::size_t index) {
  const auto type = s.at("type").get<std::string>();
  const std::uint64_t seed = s.contains("seed") ? s.at("seed").get<std::uint64_t>() : derive_seed(st.cfg.seed, index);
  BootstrapSpec bspec = s.contains("bootstrap") ? bootstrap_from_json(s.at("bootstrap"), seed) : st.cfg.bootstrap;
  bspec.master_seed = derive_seed(seed, 1);

  if (type == "simulate") {
    const auto cfg = simulation_from_json(s, s.contains("seed") ? seed : st.cfg.seed);
    auto [cohort, truth] = simulate_cohort(cfg);
    std::ostringstream o;
    export_sessions(cohort, o);
    st.write(s.value("out", std::string("sim.csv")), o.str());
    if (s.contains("truth")) st.write(s.at("truth").get<std::string>(), report::dump(to_json(truth)));
    st.set_cohort(label_trajectories(cohort));
  } else if (type == "ingest") {
    st.write(s.value("out", std::string("cohort.json")), report::dump(to_json(*st.cohort)));
  } else if (type == "bias") {
    auto j = nlohmann::json::array();
    const auto models = string_list(s, "models", st.cohort->models());
    const auto ref = s.contains("reference") ? reference_or_throw(s.at("reference").get<std::string>()) : st.cfg.reference;
    const auto ref_rows = reference_sessions(*st.cohort, ref);
    for (const auto& m : models) j.push_back(to_json(fit_bias(*st.cohort, m, ref_rows)));
    st.write(s.value("out", std::string("bias.json")), report::dump(j));
  } else if (type == "features") {
    const auto fs = FeatureSpec::parse(s.value("features", std::string("basic")));
    std::vector<SessionIndex> rows(st.cohort->size());
    for (SessionIndex i = 0; i < rows.size(); ++i) rows[i] = i;
    st.write(s.value("out", std::string("features.csv")),
             features_csv(*st.cohort, build_feature_matrix(*st.cohort, st.bag_table(), rows, fs)));
  } else if (type == "match") {
    auto ms = MatchSpec::for_groups(parse_groups(string_list(s, "groups", {"CN_stable", "AD"})), s.value("age_tol", 1.0));
    if (s.contains("time_tol")) ms.time_tolerance = s.at("time_tol").get<double>();
    ms.one_per_participant = s.value("one_per_participant", true);
    st.matched = greedy_match(*st.cohort, ms);
    if (s.contains("out")) st.write(s.at("out").get<std::string>(), report::dump(to_json(*st.cohort, *st.matched)));
  } else if (type == "classify") {
    if (s.contains("groups") || !st.matched) {
      auto ms = MatchSpec::for_groups(parse_groups(string_list(s, "groups", {"CN_stable", "AD"})), s.value("age_tol", 1.0));
      st.matched = greedy_match(*st.cohort, ms);
    }
    const auto rows = run_table2(*st.cohort, st.bag_table(), *st.matched, string_list(s, "features", {"basic"}),
                                 string_list(s, "classifiers", {"logreg"}), seed, bspec);
    st.write(s.value("out", std::string("table2.json")), report::dump(report::table2_json(rows)));
    if (s.contains("csv")) {
      std::ostringstream o;
      report::write_table2_csv(o, rows);
      st.write(s.at("csv").get<std::string>(), o.str());
    }
  } else if (type == "predict") {
    const auto mode = parse_predict_mode(s.value("mode", std::string("global")));
    WindowSpec w;
    if (s.contains("window")) {
      w.length = s.at("window").value("length", w.length);
      w.stride = s.at("window").value("stride", w.stride);
      w.min_pairs = s.at("window").value("min_pairs", w.min_pairs);
    }
    const auto clf = s.value("classifier", std::string("logreg"));
    const auto series = run_windows(*st.cohort, st.bag_table(), mode, string_list(s, "features", {"basic"}), clf, seed, w,
                                    bspec, s.value("age_tol", 1.0), s.value("time_tol", 1.0));
    st.write(s.value("out", std::string("windows.json")),
             report::dump(report::windows_json(s.value("mode", std::string("global")),
                                               std::string(to_string(ClassifierSpec::parse(clf).kind)), w, series)));
    if (s.contains("svg")) st.write(s.at("svg").get<std::string>(), report::render_svg(series));
  } else if (type == "survival") {
    const auto scenarios = string_list(s, "scenarios", {"basic"});
    const auto added = s.value("add", std::string());
    if (added.empty()) throw Error(ErrorCode::ConfigSchemaError, "survival step needs 'add'");
    const auto records = build_survival_records(*st.cohort, st.bag_table(), survival_models(scenarios, added));
    st.write(s.value("out", std::string("table3.json")),
             report::dump(report::table3_json(survival_scenarios(records, scenarios, added, bspec))));
  } else if (type == "lifetable") {
    const auto records = build_survival_records(*st.cohort, st.bag_table(), {});
    std::ostringstream o;
    report::write_life_table_csv(o, build_life_table(records, s.value("width", 2.0)));
    st.write(s.value("out", std::string("lifetable.csv")), o.str());
  } else if (type == "differences") {
    const auto ms = MatchSpec::for_groups(
        parse_groups(string_list(s, "groups", {"CN_stable", "CN_star", "MCI", "AD"})), s.value("age_tol", 1.0));
    const auto matched = greedy_match(*st.cohort, ms);
    const auto d = adjusted_paired_difference(*st.cohort, st.bag_table(), matched, s.at("model_a").get<std::string>(),
                                              s.at("model_b").get<std::string>());
    auto j = report::to_json(d);
    j["n_tuples"] = matched.size();
    st.write(s.value("out", std::string("differences.json")), report::dump(j));
  }
}

}  // namespace detail

/// Runs every step in order, then writes manifest.json into the output
/// directory. Upstream errors are rethrown with the failing step named.
inline RunResult run_pipeline(const RunConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  if (cfg.threads) set_thread_count(static_cast<unsigned>(std::max(1, *cfg.threads)));
  std::filesystem::create_directories(cfg.output_dir);
  detail::RunState st{cfg, {}, {}, {}, {}, {}};
  if (cfg.input) {
    st.inputs.emplace_back(*cfg.input, fnv1a_hex(read_file_bytes(*cfg.input)));
    st.set_cohort(load_cohort(*cfg.input));
  }
  for (std::size_t i = 0; i < cfg.steps.size(); ++i) {
    const auto type = cfg.steps[i].at("type").get<std::string>();
    try {
      detail::run_step(st, cfg.steps[i], i);
    } catch (const Error& e) {
      throw Error(e.code(), "step " + std::to_string(i) + " (" + type + "): " + e.detail(), e.row());
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ConfigSchemaError, "step " + std::to_string(i) + " (" + type + "): " + e.what());
    }
  }

  RunResult res;
  res.outputs = st.outputs;
  std::string joined;
  for (const auto& [p, h] : st.outputs) joined += p + "\t" + h + "\n";
  res.reports_hash = fnv1a_hex(joined);
  nlohmann::json m;
  m["version"] = kVersion;
  m["config"] = cfg.source;
  m["inputs"] = nlohmann::json::array();
  for (const auto& [p, h] : st.inputs) m["inputs"].push_back({{"path", p}, {"fnv1a64", h}});
  m["outputs"] = nlohmann::json::array();
  for (const auto& [p, h] : st.outputs) m["outputs"].push_back({{"path", p}, {"fnv1a64", h}});
  m["reports_hash"] = res.reports_hash;
  m["threads"] = thread_count();
  m["wall_time_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report::write_text_file((std::filesystem::path(cfg.output_dir) / "manifest.json").string(), report::dump(m));
  res.manifest = std::move(m);
  return res;
}

}  // namespace bageval
