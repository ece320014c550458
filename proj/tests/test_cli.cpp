#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <sys/wait.h>

#include "support.hpp"
#include "surglab/annotation_io.hpp"
#include "surglab/report.hpp"

using namespace surglab;
using namespace surglab::testing;

namespace {

struct Result {
  int status = -1;
  std::string output;  // stdout and stderr
};

Result cli(const std::string& args) {
  const std::string cmd = std::string("\"") + SURGLAB_CLI_PATH + "\" " + args + " 2>&1";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), static_cast<int>(buf.size()), pipe)) r.output += buf.data();
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

void write(const std::filesystem::path& p, const std::string& text) {
  std::ofstream os(p);
  os << text;
}

const char* kTinyModel = R"("model": {"hidden": 8, "epochs": 2, "batch_size": 16}, "runs_per_fold": 1, "window_n": 3)";

}  // namespace

TEST(Cli, GenerateThenStats) {
  const auto dir = scratch_dir("cli_generate");
  write(dir / "gen.json", R"({"n_interventions": 3, "activities_mean": 20, "activities_sd": 3})");
  auto r = cli("generate --preset PA.R --seed 2 --config " + (dir / "gen.json").string() + " --out " +
               (dir / "data").string());
  ASSERT_EQ(r.status, 0) << r.output;
  const auto d = load_dataset(dir / "data" / "manifest.json");
  EXPECT_EQ(d.interventions.size(), 3u);
  EXPECT_EQ(d.name, "PA.R");

  r = cli("stats --dataset " + (dir / "data" / "manifest.json").string());
  ASSERT_EQ(r.status, 0) << r.output;
  const auto j = nlohmann::json::parse(r.output);
  EXPECT_EQ(j["interventions"], 3);

  r = cli("stats --preset CS --out " + (dir / "cs.json").string());
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_EQ(nlohmann::json::parse(std::ifstream(dir / "cs.json"))["interventions"], 19);
}

TEST(Cli, Gradcheck) {
  auto r = cli("gradcheck --layers 1 --hidden 4 --window 2 --classes 3 --input-dim 5 --samples 50");
  EXPECT_EQ(r.status, 0) << r.output;
  EXPECT_NE(r.output.find("max relative error"), std::string::npos) << r.output;
  r = cli("gradcheck --samples 20 --tolerance 1e-15");
  EXPECT_EQ(r.status, 1) << r.output;
  EXPECT_NE(r.output.find("gradient check failed"), std::string::npos) << r.output;
}

TEST(Cli, RunAndCompare) {
  const auto dir = scratch_dir("cli_run");
  write(dir / "e2.json", std::string(R"({"experiment": "E2_two_element", "dataset": "CS",
    "generator": {"n_interventions": 8, "activities_mean": 25, "activities_sd": 4}, )") +
                             kTinyModel + R"(, "seed": 5, "output_dir": "unused"})");
  auto r = cli("run --quiet --config " + (dir / "e2.json").string() + " --out " + (dir / "a").string());
  ASSERT_EQ(r.status, 0) << r.output;
  for (const char* f : {"results.csv", "summary.json", "plot_element_accuracy.csv", "plot_config_boxplot.csv"})
    EXPECT_TRUE(std::filesystem::exists(dir / "a" / f)) << f;
  const auto records = load_results(dir / "a" / "results.csv");
  EXPECT_EQ(records.size(), 3u * 8u);

  r = cli("run --quiet --workers 2 --config " + (dir / "e2.json").string() + " --out " + (dir / "b").string());
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_EQ(load_results(dir / "b" / "results.csv"), records);

  r = cli("compare " + (dir / "a").string() + " " + (dir / "b" / "results.csv").string() +
          " --config-a IS --config-b VI --out " + (dir / "cmp.csv").string());
  ASSERT_EQ(r.status, 0) << r.output;
  std::ifstream is(dir / "cmp.csv");
  std::string header, row;
  std::getline(is, header);
  std::getline(is, row);
  EXPECT_TRUE(header.starts_with("config_a,config_b,folds")) << header;
  EXPECT_TRUE(row.starts_with("IS,VI,8,")) << row;

  // Same configuration against an identical report: no nonzero difference.
  r = cli("compare " + (dir / "a").string() + " " + (dir / "b").string() + " --config-a IS --config-b IS");
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.output.find("error:"), std::string::npos) << r.output;
}

TEST(Cli, ErrorsExitNonZero) {
  const auto dir = scratch_dir("cli_errors");
  EXPECT_NE(cli("").status, 0);
  EXPECT_NE(cli("generate --preset NOPE --out " + (dir / "x").string()).status, 0);
  EXPECT_NE(cli("stats").status, 0);
  EXPECT_NE(cli("stats --dataset " + (dir / "missing.json").string()).status, 0);
  write(dir / "bad.json", R"({"experiment": "E4_noise", "noise": [{"kind": "uniform", "rate": 2}]})");
  auto r = cli("run --config " + (dir / "bad.json").string());
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.output.find("error:"), std::string::npos) << r.output;
  write(dir / "e4.json", std::string(R"({"experiment": "E4_noise", "dataset": "CS",
    "generator": {"n_interventions": 3, "activities_mean": 20, "activities_sd": 2}, )") +
                             kTinyModel + R"(, "models": {"reuse_dir": ")" + (dir / "nothing").string() + R"("}})");
  r = cli("run --quiet --config " + (dir / "e4.json").string() + " --out " + (dir / "out").string());
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.output.find("missing model artifact"), std::string::npos) << r.output;
  write(dir / "broken.json", "{ not json");
  EXPECT_NE(cli("run --config " + (dir / "broken.json").string()).status, 0);
  EXPECT_NE(cli("compare " + (dir / "nope.csv").string() + " " + (dir / "nope.csv").string()).status, 0);
}
