#include <cstdlib>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include "test_util.hpp"

using namespace bageval;
using namespace testutil;
using nlohmann::json;

namespace {

struct Outcome {
  int exit_code;
  std::string out, err;
};

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Runs the CLI through the shell. `env` is prepended verbatim.
Outcome cli(const std::filesystem::path& dir, const std::string& args, const std::string& env = "") {
  const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd = "env -u BAGEVAL_SEED " + env + " '" + BAGEVAL_CLI_PATH + "' " + args + " >'" +
                          out.string() + "' 2>'" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

json error_json(const Outcome& o) {
  const auto j = json::parse(o.err);
  return j.at("error");
}

void write(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

}  // namespace

TEST(Cli, SimulateThenIngestSucceeds) {
  const auto d = scratch_dir("cli_ok");
  const auto sim = d / "sim.csv";
  auto r = cli(d, "--seed 3 simulate --n 50 --out '" + sim.string() + "'");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  r = cli(d, "ingest --input '" + sim.string() + "' --out '" + (d / "c.json").string() + "'");
  EXPECT_EQ(r.exit_code, 0) << r.err;
  EXPECT_TRUE(json::parse(slurp(d / "c.json")).is_object());
}

TEST(Cli, MissingSeedExitsTwo) {
  const auto d = scratch_dir("cli_noseed");
  const auto r = cli(d, "simulate --n 50 --out '" + (d / "s.csv").string() + "'");
  EXPECT_EQ(r.exit_code, 2);
  const auto e = error_json(r);
  EXPECT_EQ(e.at("code"), "ConfigSchemaError");
  EXPECT_EQ(e.at("category"), "config");
}

TEST(Cli, BadArgumentsExitTwo) {
  const auto d = scratch_dir("cli_badargs");
  EXPECT_EQ(cli(d, "match --no-such-flag").exit_code, 2);
}

TEST(Cli, BadDiagnosisExitsThreeWithRow) {
  const auto d = scratch_dir("cli_baddx");
  write(d / "in.csv", "dataset,participant_id,age,sex,diagnosis,pred__m\nA,p1,70,F,CN,71\nA,p1,71,F,XYZ,72\n");
  const auto r = cli(d, "ingest --input '" + (d / "in.csv").string() + "' --out '" + (d / "c.json").string() + "'");
  EXPECT_EQ(r.exit_code, 3);
  const auto e = error_json(r);
  EXPECT_EQ(e.at("code"), "UnknownDiagnosisLabel");
  EXPECT_EQ(e.at("category"), "data");
  EXPECT_EQ(e.at("row"), 1);
}

TEST(Cli, DegenerateReferenceExitsFour) {
  const auto d = scratch_dir("cli_degenerate");
  // Every stable-CN session sits at the same age, so the bias line is undefined.
  write(d / "in.csv", "dataset,participant_id,age,sex,diagnosis,pred__m\nA,p1,70,F,CN,71\nA,p2,70,M,CN,69\n");
  ASSERT_EQ(cli(d, "ingest --input '" + (d / "in.csv").string() + "' --out '" + (d / "c.json").string() + "'").exit_code,
            0);
  const auto r = cli(d, "bias fit --cohort '" + (d / "c.json").string() + "' --model m --out '" +
                            (d / "b.json").string() + "'");
  EXPECT_EQ(r.exit_code, 4);
  EXPECT_EQ(error_json(r).at("code"), "DegenerateReference");
}

TEST(Cli, SeedFlagBeatsEnvironment) {
  const auto d = scratch_dir("cli_seed");
  const auto run = [&](const std::string& env, const std::string& flag, const std::string& name) {
    const auto r = cli(d, flag + " simulate --n 40 --out '" + (d / name).string() + "'", env);
    EXPECT_EQ(r.exit_code, 0) << r.err;
    return slurp(d / name);
  };
  const auto env5 = run("BAGEVAL_SEED=5", "", "a.csv");
  const auto flag5 = run("BAGEVAL_SEED=9", "--seed 5", "b.csv");
  const auto env9 = run("BAGEVAL_SEED=9", "", "c.csv");
  EXPECT_EQ(env5, flag5);
  EXPECT_NE(env5, env9);
  EXPECT_EQ(cli(d, "simulate --n 40 --out '" + (d / "x.csv").string() + "'", "BAGEVAL_SEED=abc").exit_code, 2);
}

TEST(Cli, ThreadCountDoesNotChangeResults) {
  const auto d = scratch_dir("cli_threads");
  ASSERT_EQ(cli(d, "--seed 11 simulate --n 300 --out '" + (d / "sim.csv").string() + "'").exit_code, 0);
  ASSERT_EQ(cli(d, "ingest --input '" + (d / "sim.csv").string() + "' --out '" + (d / "c.json").string() + "'").exit_code,
            0);
  ASSERT_EQ(cli(d, "match --cohort '" + (d / "c.json").string() + "' --out '" + (d / "m.json").string() + "'").exit_code,
            0);
  for (const char* t : {"1", "4"}) {
    const auto r = cli(d, std::string("--seed 2 --threads ") + t + " classify --matched '" + (d / "m.json").string() +
                              "' --features wm_nonrigid --classifier forest:n_trees=20 --classifier logreg"
                              " --bootstrap 40 --out '" +
                              (d / (std::string("t") + t + ".json")).string() + "'");
    ASSERT_EQ(r.exit_code, 0) << r.err;
  }
  EXPECT_EQ(slurp(d / "t1.json"), slurp(d / "t4.json"));
}

TEST(Cli, RunPrintsReportsHash) {
  const auto d = scratch_dir("cli_run");
  const json cfg = {{"seed", 4},
                    {"output_dir", "out"},
                    {"bootstrap", 20},
                    {"steps",
                     {{{"type", "simulate"}, {"n", 200}},
                      {{"type", "lifetable"}, {"out", "lifetable.csv"}}}}};
  write(d / "cfg.json", cfg.dump());
  const auto r = cli(d, "run --config '" + (d / "cfg.json").string() + "'");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_EQ(j.at("reports_hash").get<std::string>().size(), 16u);
  EXPECT_TRUE(std::filesystem::exists(d / "out" / "lifetable.csv"));
  EXPECT_TRUE(std::filesystem::exists(d / "out" / "manifest.json"));
}
