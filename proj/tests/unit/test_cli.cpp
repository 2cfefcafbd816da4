#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#ifdef TOPOLEAK_CLI_PATH

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string("\"") + TOPOLEAK_CLI_PATH + "\" " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch() {
  const auto p = fs::temp_directory_path() / "topoleak_cli_test";
  fs::create_directories(p);
  return p;
}

fs::path write(const char* name, const std::string& text) {
  const auto p = scratch() / name;
  std::ofstream(p) << text;
  return p;
}

const char* kTiny = R"({"topology": {"n": 4, "edge_mean": 3, "count": 2}, "perturbations": 3,
  "agents": {"output_len": 24}, "embedding": {"d": 32}, "model": {"hidden": 12, "latent": 8},
  "training": {"epochs": 2}, "workers": 1})";

}  // namespace

TEST(Cli, HelpExitsZero) { EXPECT_EQ(run("--help"), 0); }

TEST(Cli, UnknownFlagIsConfigError) { EXPECT_EQ(run("attack --bogus"), 2); }

TEST(Cli, BadVariantIsConfigError) { EXPECT_EQ(run("attack --variant triple"), 2); }

TEST(Cli, UnknownConfigKeyIsConfigError) {
  const auto cfg = write("bad.json", R"({"topology": {"nodes": 5}})");
  EXPECT_EQ(run("gen-topology --config " + cfg.string() + " --out " + (scratch() / "bad").string()), 2);
}

TEST(Cli, MissingConfigFileIsConfigError) {
  EXPECT_EQ(run("gen-topology --config " + (scratch() / "absent.json").string()), 2);
}

TEST(Cli, GenTopologySucceeds) {
  const auto out = scratch() / "gen";
  EXPECT_EQ(run("gen-topology --seed 3 --out " + out.string()), 0);
  EXPECT_TRUE(fs::exists(out / "topologies.json"));
}

TEST(Cli, AttackEvalReportSucceed) {
  const auto cfg = write("tiny.json", kTiny);
  const auto out = scratch() / "attack";
  fs::remove_all(out);
  EXPECT_EQ(run("attack --config " + cfg.string() + " --seed 2 --variant sub --out " + (scratch() / "sub").string()),
            0);
  ASSERT_EQ(run("attack --config " + cfg.string() + " --seed 2 --variant dual --out " + out.string()), 0);
  EXPECT_EQ(run("eval --out " + out.string()), 0);
  EXPECT_EQ(run("report --out " + out.string()), 0);
  EXPECT_TRUE(fs::exists(out / "report.md"));
}

TEST(Cli, MissingArtifactsAreConfigError) {
  const auto out = scratch() / "empty_run";
  fs::create_directories(out);
  const int rc = run("report --out " + out.string());
  EXPECT_EQ(rc, 2);
}

TEST(Cli, StageFailureExitsThree) {
  // The teacher endpoint points at a closed local port; the supervise stage fails.
  const auto cfg = write("teacher.json", std::string(R"({"topology": {"n": 4, "edge_mean": 3, "count": 1},
    "perturbations": 2, "embedding": {"d": 16}, "model": {"hidden": 8, "latent": 8}, "workers": 1,
    "supervision": {"oracle": "teacher",
      "endpoint": {"url": "http://127.0.0.1:9/v1", "max_attempts": 1, "timeout_s": 1}}})"));
  EXPECT_EQ(run("attack --config " + cfg.string() + " --out " + (scratch() / "teacher").string()), 3);
}

#else

TEST(Cli, SkippedWithoutBinary) { GTEST_SKIP() << "CLI target not built"; }

#endif
