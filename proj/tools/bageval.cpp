// bageval command-line front end.

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "bageval/bageval.hpp"

using namespace bageval;
using nlohmann::json;

namespace {

int emit_error(ErrorCode code, const std::string& message, std::optional<std::size_t> row = std::nullopt) {
  const auto cat = category_of(code);
  json e = {{"code", std::string(to_string(code))},
            {"category", cat == ErrorCategory::Config ? "config" : cat == ErrorCategory::Data ? "data" : "numerical"},
            {"message", message}};
  if (row) e["row"] = *row;
  std::cerr << json{{"error", e}}.dump() << '\n';
  return static_cast<int>(cat);
}

/// --seed beats BAGEVAL_SEED; commands that draw random numbers require one.
struct SeedSource {
  std::optional<std::uint64_t> flag;

  std::optional<std::uint64_t> get() const {
    if (flag) return flag;
    if (const char* env = std::getenv("BAGEVAL_SEED")) {
      std::uint64_t v = 0;
      const std::string_view s(env);
      const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || p != s.data() + s.size())
        throw Error(ErrorCode::ConfigSchemaError, "BAGEVAL_SEED must be an unsigned integer");
      return v;
    }
    return std::nullopt;
  }

  std::uint64_t require() const {
    const auto s = get();
    if (!s) throw Error(ErrorCode::ConfigSchemaError, "a seed is required: pass --seed or set BAGEVAL_SEED");
    return *s;
  }
};

void write_json(const std::string& path, const json& j) { report::write_text_file(path, report::dump(j)); }

BagTable bag_table(const Cohort& c, const std::string& ref) {
  return BagTable(c, c.models(), reference_sessions(c, reference_or_throw(ref)));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Brain-age gap evaluation toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  unsigned threads = 1;
  SeedSource seed;
  app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  app.add_option_function<std::uint64_t>(
      "--seed", [&](const std::uint64_t& v) { seed.flag = v; }, "master seed (overrides BAGEVAL_SEED)");

  std::string cohort_path, out, ref = "CN_stable";
  int n_boot = 1000;

  // simulate
  auto* sim = app.add_subcommand("simulate", "write a synthetic cohort with planted effects");
  std::string scenario = "default", truth_path, sim_config;
  std::size_t n_participants = 500;
  sim->add_option("--scenario", scenario)->check(CLI::IsMember({"default", "paper-default"}));
  sim->add_option("--n", n_participants);
  sim->add_option("--config", sim_config, "JSON overrides for the scenario");
  sim->add_option("--out", out)->required();
  sim->add_option("--truth", truth_path);

  // ingest
  auto* ing = app.add_subcommand("ingest", "validate a session CSV and store it as JSON");
  std::string input;
  ing->add_option("--input", input)->required();
  ing->add_option("--out", out)->required();

  // bias fit
  auto* bias = app.add_subcommand("bias", "bias-correction parameters");
  auto* bias_fit = bias->add_subcommand("fit", "fit slope and intercept of the gap on age");
  bias->require_subcommand(1);
  std::string model;
  bias_fit->add_option("--cohort", cohort_path)->required();
  bias_fit->add_option("--model", model)->required();
  bias_fit->add_option("--ref", ref);
  bias_fit->add_option("--out", out)->required();

  // features
  auto* feat = app.add_subcommand("features", "per-session feature matrix");
  std::string models_list;
  bool rate = false;
  feat->add_option("--cohort", cohort_path)->required();
  feat->add_option("--models", models_list);
  feat->add_flag("--rate", rate);
  feat->add_option("--ref", ref);
  feat->add_option("--out", out)->required();

  // match
  auto* match = app.add_subcommand("match", "greedy age- and sex-matched tuples");
  std::string groups = "CN_stable,AD";
  double age_tol = 1.0;
  std::optional<double> time_tol;
  bool session_level = false;
  match->add_option("--cohort", cohort_path)->required();
  match->add_option("--groups", groups);
  match->add_option("--age-tol", age_tol);
  match->add_option("--time-tol", time_tol);
  match->add_flag("--session-level", session_level, "allow several tuples per participant");
  match->add_option("--out", out)->required();

  // classify
  auto* cls = app.add_subcommand("classify", "LOOCV classification on a matched set");
  std::string matched_path, csv_path;
  std::vector<std::string> feature_sets;
  std::vector<std::string> classifiers;
  cls->add_option("--matched", matched_path)->required();
  cls->add_option("--cohort", cohort_path, "defaults to the cohort recorded in the matched file");
  cls->add_option("--features", feature_sets, "feature spec; repeat for several")->required();
  cls->add_option("--classifier", classifiers, "logreg|svm|forest[:key=value,...]; repeat for several")->required();
  cls->add_option("--bootstrap", n_boot);
  cls->add_option("--ref", ref);
  cls->add_option("--out", out)->required();
  cls->add_option("--csv", csv_path);

  // predict
  auto* pred = app.add_subcommand("predict", "AUC over time to MCI");
  std::string mode = "global", classifier = "logreg", svg_path;
  double wlen = 1.0, stride = 0.5;
  pred->add_option("--mode", mode)->check(CLI::IsMember({"global", "time-specific"}));
  pred->add_option("--cohort", cohort_path)->required();
  pred->add_option("--features", feature_sets, "feature spec; repeat for several")->required();
  pred->add_option("--classifier", classifier);
  pred->add_option("--window-length", wlen);
  pred->add_option("--stride", stride);
  pred->add_option("--bootstrap", n_boot);
  pred->add_option("--ref", ref);
  pred->add_option("--out", out)->required();
  pred->add_option("--svg", svg_path);

  // survival
  auto* surv = app.add_subcommand("survival", "Cox scenarios with and without an added brain age");
  std::string scenarios = "basic", added;
  surv->add_option("--cohort", cohort_path)->required();
  surv->add_option("--scenarios", scenarios);
  surv->add_option("--add", added)->required();
  surv->add_option("--bootstrap", n_boot);
  surv->add_option("--ref", ref);
  surv->add_option("--out", out)->required();

  // lifetable
  auto* life = app.add_subcommand("lifetable", "interval counts of the survival cohort");
  double width = 2.0;
  life->add_option("--cohort", cohort_path)->required();
  life->add_option("--width", width);
  life->add_option("--out", out)->required();

  // differences
  auto* diff = app.add_subcommand("differences", "adjusted paired gap differences between two models");
  std::string model_a, model_b, diff_groups = "CN_stable,CN_star,MCI,AD";
  diff->add_option("--cohort", cohort_path)->required();
  diff->add_option("--model-a", model_a)->required();
  diff->add_option("--model-b", model_b)->required();
  diff->add_option("--groups", diff_groups);
  diff->add_option("--age-tol", age_tol);
  diff->add_option("--ref", ref);
  diff->add_option("--out", out)->required();

  // run
  auto* run = app.add_subcommand("run", "execute a pipeline config");
  std::string config_path;
  run->add_option("--config", config_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return emit_error(ErrorCode::ConfigSchemaError, e.what());
  }

  try {
    set_thread_count(threads);
    if (sim->parsed()) {
      json step = {{"scenario", scenario}, {"n", n_participants}};
      if (!sim_config.empty()) step["config"] = read_json_file(sim_config);
      const auto cfg = simulation_from_json(step, seed.require());
      auto [cohort, truth] = simulate_cohort(cfg);
      std::ostringstream o;
      export_sessions(cohort, o);
      report::write_text_file(out, o.str());
      if (!truth_path.empty()) {
        json t = to_json(truth);
        t["config"] = to_json(cfg);
        write_json(truth_path, t);
      }
    } else if (ing->parsed()) {
      write_json(out, to_json(label_trajectories(ingest_sessions(input))));
    } else if (bias_fit->parsed()) {
      const auto c = load_cohort(cohort_path);
      write_json(out, to_json(fit_bias(c, model, reference_sessions(c, reference_or_throw(ref)))));
    } else if (feat->parsed()) {
      const auto c = load_cohort(cohort_path);
      FeatureSpec fs;
      fs.models = split_list(models_list);
      fs.include_rate = rate;
      std::vector<SessionIndex> rows(c.size());
      for (SessionIndex i = 0; i < rows.size(); ++i) rows[i] = i;
      report::write_text_file(out, features_csv(c, build_feature_matrix(c, bag_table(c, ref), rows, fs)));
    } else if (match->parsed()) {
      const auto c = load_cohort(cohort_path);
      auto ms = MatchSpec::for_groups(parse_groups(split_list(groups)), age_tol);
      if (time_tol) ms.time_tolerance = *time_tol;
      ms.one_per_participant = !session_level;
      const auto m = greedy_match(c, ms);
      audit_match(c, m);
      json j = to_json(c, m);
      j["cohort"] = std::filesystem::absolute(cohort_path).lexically_normal().string();
      write_json(out, j);
    } else if (cls->parsed()) {
      const json mj = read_json_file(matched_path);
      if (cohort_path.empty()) {
        if (!mj.contains("cohort")) throw Error(ErrorCode::ConfigSchemaError, "matched file names no cohort; pass --cohort");
        cohort_path = mj.at("cohort").get<std::string>();
      }
      const auto c = load_cohort(cohort_path);
      const auto m = matched_set_from_json(c, mj);
      const std::uint64_t s = seed.require();
      BootstrapSpec b;
      b.n_replicates = n_boot;
      b.master_seed = derive_seed(s, 1);
      const auto rows = run_table2(c, bag_table(c, ref), m, feature_sets, classifiers, s, b);
      write_json(out, report::table2_json(rows));
      if (!csv_path.empty()) {
        std::ostringstream o;
        report::write_table2_csv(o, rows);
        report::write_text_file(csv_path, o.str());
      }
    } else if (pred->parsed()) {
      const auto c = load_cohort(cohort_path);
      const std::uint64_t s = seed.require();
      WindowSpec w;
      w.length = wlen;
      w.stride = stride;
      BootstrapSpec b;
      b.n_replicates = n_boot;
      b.master_seed = derive_seed(s, 1);
      const auto series = run_windows(c, bag_table(c, ref), parse_predict_mode(mode), feature_sets, classifier, s, w, b);
      write_json(out, report::windows_json(mode, std::string(to_string(ClassifierSpec::parse(classifier).kind)), w, series));
      if (!svg_path.empty()) report::write_text_file(svg_path, report::render_svg(series));
    } else if (surv->parsed()) {
      const auto c = load_cohort(cohort_path);
      BootstrapSpec b;
      b.n_replicates = n_boot;
      b.master_seed = derive_seed(seed.require(), 1);
      const auto sc = split_list(scenarios);
      const auto records = build_survival_records(c, bag_table(c, ref), survival_models(sc, added));
      write_json(out, report::table3_json(survival_scenarios(records, sc, added, b)));
    } else if (life->parsed()) {
      const auto c = load_cohort(cohort_path);
      const auto records = build_survival_records(c, BagTable(), {});
      std::ostringstream o;
      report::write_life_table_csv(o, build_life_table(records, width));
      report::write_text_file(out, o.str());
    } else if (diff->parsed()) {
      const auto c = load_cohort(cohort_path);
      const auto m = greedy_match(c, MatchSpec::for_groups(parse_groups(split_list(diff_groups)), age_tol));
      json j = report::to_json(adjusted_paired_difference(c, bag_table(c, ref), m, model_a, model_b));
      j["n_tuples"] = m.size();
      write_json(out, j);
    } else if (run->parsed()) {
      json j = read_json_file(config_path);
      if (const auto s = seed.get(); s && (seed.flag || !j.contains("seed"))) j["seed"] = *s;
      if (app.count("--threads")) j["threads"] = threads;
      const auto base = std::filesystem::path(config_path).parent_path().string();
      const auto res = run_pipeline(RunConfig::from_json(j, base.empty() ? "." : base));
      std::cout << json{{"reports_hash", res.reports_hash}, {"outputs", res.outputs.size()}}.dump() << '\n';
    }
  } catch (const Error& e) {
    return emit_error(e.code(), e.detail(), e.row());
  } catch (const json::exception& e) {
    return emit_error(ErrorCode::ConfigSchemaError, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return emit_error(ErrorCode::IoError, e.what());
  } catch (const std::exception& e) {
    return emit_error(ErrorCode::IoError, e.what());
  }
  return 0;
}
