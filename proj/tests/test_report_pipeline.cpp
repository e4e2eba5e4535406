#include <fstream>
#include <sstream>

#include "test_util.hpp"

using namespace bageval;
using namespace testutil;
using nlohmann::json;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Small pipeline config over the simulator; bootstrap kept short for speed.
json small_config(const std::filesystem::path& out, std::uint64_t seed = 7) {
  return {{"seed", seed},
          {"output_dir", out.string()},
          {"bootstrap", {{"n_replicates", 50}}},
          {"steps",
           {{{"type", "simulate"}, {"n", 300}, {"out", "sim.csv"}},
            {{"type", "match"}, {"groups", {"CN_stable", "AD"}}, {"out", "matched.json"}},
            {{"type", "classify"}, {"features", {"basic", "wm_nonrigid"}}, {"classifiers", {"logreg"}},
             {"out", "table2.json"}, {"csv", "table2.csv"}},
            {{"type", "predict"}, {"mode", "global"}, {"features", {"wm_nonrigid"}}, {"out", "windows.json"},
             {"svg", "curve.svg"}},
            {{"type", "survival"}, {"scenarios", {"basic"}}, {"add", "wm_nonrigid"}, {"out", "table3.json"}},
            {{"type", "lifetable"}, {"out", "lifetable.csv"}}}}};
}

}  // namespace

TEST(Report, EmptySvgStillHasAxes) {
  const auto svg = report::render_svg({});
  EXPECT_NE(svg.find("<svg"), std::string::npos);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  EXPECT_NE(svg.find("<line"), std::string::npos);
  EXPECT_EQ(svg.find("<polyline"), std::string::npos);
}

TEST(Report, Headers) {
  EXPECT_STREQ(report::kTable2Header,
               "feature_set,classifier,accuracy_mean,accuracy_lo,accuracy_hi,auc_mean,auc_lo,auc_hi");
  EXPECT_STREQ(report::kLifeTableHeader, "interval_start,interval_end,n_at_risk,n_events,n_censored");
  std::ostringstream o;
  report::write_table2_csv(o, {});
  EXPECT_EQ(o.str(), std::string(report::kTable2Header) + "\n");
}

TEST(Report, SummaryFormatting) {
  MetricSummary m;
  m.mean = 0.651;
  m.ci_low = 0.6;
  m.ci_high = 0.7;
  EXPECT_EQ(report::format_summary(m), "0.65 (0.60, 0.70)");
  const auto j = report::to_json(m);
  EXPECT_TRUE(j.contains("mean") && j.contains("ci_low") && j.contains("ci_high"));
}

TEST(Pipeline, MissingSeedIsConfigError) {
  json j = small_config(scratch_dir("noseed"));
  j.erase("seed");
  EXPECT_EQ(error_of([&] { RunConfig::from_json(j); }), ErrorCode::ConfigSchemaError);
}

TEST(Pipeline, MissingModelNamesTheColumn) {
  json j = small_config(scratch_dir("nomodel"));
  j["steps"][2]["features"] = {"nonexistent"};
  try {
    run_pipeline(RunConfig::from_json(j));
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigSchemaError);
    EXPECT_NE(e.detail().find("pred__nonexistent"), std::string::npos) << e.detail();
  }
}

TEST(Pipeline, RerunIsByteIdentical) {
  const auto a_dir = scratch_dir("rerun_a"), b_dir = scratch_dir("rerun_b");
  const auto a = run_pipeline(RunConfig::from_json(small_config(a_dir)));
  const auto b = run_pipeline(RunConfig::from_json(small_config(b_dir)));
  EXPECT_EQ(a.reports_hash, b.reports_hash);
  ASSERT_EQ(a.outputs.size(), b.outputs.size());
  for (const auto& [rel, hash] : a.outputs) {
    EXPECT_EQ(slurp(a_dir / rel), slurp(b_dir / rel)) << rel;
    EXPECT_EQ(fnv1a_hex(slurp(a_dir / rel)), hash) << rel;
  }
  for (const char* f : {"table2.json", "table2.csv", "windows.json", "curve.svg", "table3.json", "lifetable.csv",
                        "manifest.json"})
    EXPECT_TRUE(std::filesystem::exists(a_dir / f)) << f;
  const auto t3 = json::parse(slurp(a_dir / "table3.json"));
  ASSERT_TRUE(t3.is_array());
  EXPECT_EQ(t3.size(), 1u);
}

TEST(Pipeline, SeedChangesOutput) {
  const auto a = run_pipeline(RunConfig::from_json(small_config(scratch_dir("seed_a"), 1)));
  const auto b = run_pipeline(RunConfig::from_json(small_config(scratch_dir("seed_b"), 2)));
  EXPECT_NE(a.reports_hash, b.reports_hash);
}

TEST(Pipeline, ShippedConfigParses) {
  const auto path = std::filesystem::path(BAGEVAL_SOURCE_DIR) / "configs" / "default.json";
  const auto cfg = RunConfig::from_json(read_json_file(path.string()), path.parent_path().string());
  EXPECT_EQ(cfg.seed, 42u);
  EXPECT_FALSE(cfg.steps.empty());
}
