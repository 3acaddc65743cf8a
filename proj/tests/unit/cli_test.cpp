#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "emo_cli/cli.hpp"

namespace emo::cli {
namespace {

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun run(std::vector<std::string> args) {
  args.insert(args.begin(), "emocnn");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

TEST(Cli, AnalyzePublishedTotal) {
  const CliRun r = run({"analyze", "--model", "proposed", "--mode", "paper"});
  EXPECT_EQ(r.code, kOk);
  EXPECT_NE(r.out.find("total macs: 450249\n"), std::string::npos);
}

TEST(Cli, PrintsResolvedConfigurationFirst) {
  const CliRun r = run({"analyze"});
  EXPECT_EQ(r.out.rfind("# analyze configuration", 0), 0u);
  EXPECT_NE(r.out.find("input-size=48"), std::string::npos);
}

TEST(Cli, HelpListsEveryFlagAndExitsZero) {
  const CliRun r = run({"analyze", "--help"});
  EXPECT_EQ(r.code, kOk);
  for (const char* flag : {"--model", "--source", "--mode", "--compare", "--literal",
                           "--input-size", "--format", "--out"}) {
    EXPECT_NE(r.out.find(flag), std::string::npos) << flag;
  }
  for (const char* sub : {"train", "eval", "simulate"}) EXPECT_EQ(run({sub, "--help"}).code, kOk);
}

TEST(Cli, NegativeLearningRateNamesTheFlag) {
  const CliRun r = run({"train", "--lr", "-1", "--synthetic", "1"});
  EXPECT_EQ(r.code, kUsage);
  EXPECT_NE(r.err.find("--lr"), std::string::npos);
}

TEST(Cli, UnknownFlagsAndValuesAreUsageErrors) {
  EXPECT_EQ(run({"analyze", "--bogus"}).code, kUsage);
  EXPECT_EQ(run({"analyze", "--model", "alexnet"}).code, kUsage);
  EXPECT_EQ(run({}).code, kUsage);
  EXPECT_EQ(run({"simulate", "--synthetic", "10"}).code, kUsage);
  const CliRun r = run({"train", "--epochs", "0", "--synthetic", "1"});
  EXPECT_EQ(r.code, kUsage);
  EXPECT_NE(r.err.find("--epochs"), std::string::npos);
}

TEST(Cli, MissingFilesAreRuntimeFailures) {
  EXPECT_EQ(run({"eval", "--weights", "/nonexistent.emw", "--synthetic", "1"}).code, kRuntime);
  EXPECT_EQ(run({"train", "--data", "/nonexistent.csv", "--epochs", "1"}).code, kRuntime);
}

TEST(Cli, AnalyzeCompareLiteral) {
  const CliRun r = run({"analyze", "--compare", "--literal"});
  EXPECT_EQ(r.code, kOk);
  EXPECT_NE(r.out.find("macs ratio: 0.393"), std::string::npos);
  EXPECT_EQ(run({"analyze", "--literal", "--source", "graph"}).code, kUsage);
}

TEST(Cli, AnalyzeMachineOutFile) {
  const auto path = std::filesystem::temp_directory_path() / "emo_cli_machine.csv";
  const CliRun r = run({"analyze", "--model", "vanilla", "--format", "machine", "--out", path.string()});
  EXPECT_EQ(r.code, kOk);
  const std::string csv = slurp(path);
  EXPECT_EQ(csv.rfind("kind,n_prev,s,n,params_std,params_sep,macs_eq2\n", 0), 0u);
  std::filesystem::remove(path);
}

TEST(Cli, SimulateStubLogsAreByteIdentical) {
  const auto dir = std::filesystem::temp_directory_path();
  const auto a = dir / "emo_cli_sim_a.jsonl", b = dir / "emo_cli_sim_b.jsonl";
  for (const auto& p : {a, b}) {
    const CliRun r = run({"simulate", "--stub", "--synthetic", "45", "--seed", "9", "--log-out", p.string()});
    ASSERT_EQ(r.code, kOk) << r.err;
  }
  EXPECT_FALSE(slurp(a).empty());
  EXPECT_EQ(slurp(a), slurp(b));
  std::filesystem::remove(a);
  std::filesystem::remove(b);
}

TEST(Cli, TrainEvalRoundTripOnATinySet) {
  const auto dir = std::filesystem::temp_directory_path();
  const auto w = dir / "emo_cli_w.emw", h = dir / "emo_cli_h.csv";
  const CliRun t = run({"train", "--synthetic", "2", "--epochs", "1", "--batch-size", "7", "--out",
                     w.string(), "--history", h.string()});
  ASSERT_EQ(t.code, kOk) << t.err;
  EXPECT_NE(slurp(h).find("epoch,loss,train_acc"), std::string::npos);
  const CliRun e = run({"eval", "--weights", w.string(), "--synthetic", "1"});
  EXPECT_EQ(e.code, kOk) << e.err;
  EXPECT_NE(e.out.find("accuracy:"), std::string::npos);
  std::filesystem::remove(w);
  std::filesystem::remove(h);
}

}  // namespace
}  // namespace emo::cli
