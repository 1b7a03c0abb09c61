#include <algorithm>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <tbb/global_control.h>

#include "cli.hpp"
#include "smart_tree/io.hpp"
#include "support.hpp"

namespace smart_tree {
namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "smart-tree");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

TEST(Cli, GenerateWritesBothFiles) {
  const auto dir = testing::scratch_dir("cli_generate");
  const auto r = run({"generate", "--depth", "3", "--seed", "7", "-o", (dir / "tree.json").string(),
                      "-c", (dir / "cloud.ply").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto tree = read_skeleton(dir / "tree.json");
  EXPECT_TRUE(skeleton_validate(tree.skeleton).empty());
  EXPECT_EQ(tree.meta["seed"], 7);
  const auto cloud = read_cloud(dir / "cloud.ply");
  EXPECT_GT(cloud.cloud.size(), 1000u);
  EXPECT_TRUE(cloud.cloud.labelled());
}

TEST(Cli, SkeletonizeOracleOutputValidates) {
  const auto dir = testing::scratch_dir("cli_skeletonize");
  ASSERT_EQ(run({"generate", "--seed", "2", "--density", "20000", "-o", (dir / "gt.json").string(),
                 "-c", (dir / "cloud.ply").string()})
                .code,
            0);
  const auto r = run({"skeletonize", (dir / "cloud.ply").string(), "--estimator", "oracle", "-o",
                      (dir / "out.json").string(), "--diagnostics", (dir / "diag.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto out = read_skeleton(dir / "out.json");
  EXPECT_FALSE(out.skeleton.empty());
  EXPECT_TRUE(skeleton_validate(out.skeleton).empty());
  const auto diag = nlohmann::json::parse(read_file(dir / "diag.json"));
  EXPECT_GE(diag["tree_count"].get<int>(), 1);

  const auto e = run({"evaluate", "--gt", (dir / "gt.json").string(), "--pred",
                      (dir / "out.json").string(), "--steps", "11", "-o", (dir / "r.csv").string(),
                      "--plot", (dir / "r.svg").string()});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_EQ(read_file(dir / "r.csv").rfind("t,precision,recall,f1\n", 0), 0u);
  EXPECT_NE(e.out.find("F1 AUC"), std::string::npos);
}

TEST(Cli, BaselineEstimatorRuns) {
  const auto dir = testing::scratch_dir("cli_baseline");
  ASSERT_EQ(run({"generate", "--depth", "1", "--seed", "3", "--density", "10000", "-o",
                 (dir / "gt.json").string(), "-c", (dir / "cloud.ply").string()})
                .code,
            0);
  const auto r = run({"skeletonize", (dir / "cloud.ply").string(), "--estimator", "baseline", "-o",
                      (dir / "out.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(skeleton_validate(read_skeleton(dir / "out.json").skeleton).empty());
}

TEST(Cli, PipelineIsByteIdenticalAcrossRunsAndParallelism) {
  const auto a = testing::scratch_dir("cli_pipeline_a");
  const auto b = testing::scratch_dir("cli_pipeline_b");
  const std::vector<std::string> common = {"pipeline", "--depth", "3", "--seed", "7",
                                           "--noise", "0.002", "--density", "20000"};
  auto args_a = common;
  args_a.insert(args_a.end(), {"--out-dir", a.string()});
  auto args_b = common;
  args_b.insert(args_b.end(), {"--out-dir", b.string()});
  ASSERT_EQ(run(args_a).code, 0);
  {
    tbb::global_control one(tbb::global_control::max_allowed_parallelism, 1);
    ASSERT_EQ(run(args_b).code, 0);
  }
  for (const char* name : {"gt.json", "cloud.ply", "skeleton.json", "diagnostics.json", "report.csv"}) {
    EXPECT_EQ(read_file(a / name), read_file(b / name)) << name;
  }
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"generate", "--depth", "3"}).code, 2);  // missing outputs
  EXPECT_EQ(run({"skeletonize", "x.ply", "--estimator", "magic", "-o", "y.json"}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);

  const auto dir = testing::scratch_dir("cli_errors");
  write_file(dir / "bad.ply", "ply\nformat ascii 1.0\nend_header\n");
  const auto r = run({"skeletonize", (dir / "bad.ply").string(), "-o", (dir / "o.json").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error: ", 0), 0u);
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);

  const auto bad_param = run({"generate", "--radius-decay", "1.5", "-o", (dir / "t.json").string(),
                              "-c", (dir / "c.ply").string()});
  EXPECT_EQ(bad_param.code, 1);
}

TEST(Cli, HelpDocumentsDefaults) {
  const auto top = run({"--help"});
  EXPECT_EQ(top.code, 0);
  EXPECT_NE(top.out.find("pipeline"), std::string::npos);
  for (const char* sub : {"generate", "skeletonize", "evaluate", "pipeline"}) {
    const auto r = run({sub, "--help"});
    EXPECT_EQ(r.code, 0) << sub;
    EXPECT_FALSE(r.out.empty()) << sub;
  }
  EXPECT_NE(run({"skeletonize", "--help"}).out.find("0.01"), std::string::npos);
  EXPECT_NE(run({"evaluate", "--help"}).out.find("101"), std::string::npos);
}

}  // namespace
}  // namespace smart_tree
