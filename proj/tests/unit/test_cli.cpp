#include "ordcore/cli.hpp"
#include "ordcore/serialize.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using namespace ordcore;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run invoke(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("ordcore_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }

  fs::path write_config(const io::Json& overrides, const std::string& name = "config.json") {
    io::Json doc = {{"batch_size", 8},
                    {"epochs", 2},
                    {"base_lr", 0.01},
                    {"hidden", {6}},
                    {"feature_dim", 3},
                    {"dataset", {{"class_count", 3}, {"samples_per_class", 8}, {"input_dim", 4}}}};
    if (overrides.is_object()) doc.merge_patch(overrides);
    const auto p = root_ / name;
    std::ofstream(p) << doc.dump();
    return p;
  }

  std::string dir(const std::string& name) const { return (root_ / name).string(); }

  fs::path root_;
};

}  // namespace

TEST_F(Cli, TrainWritesArtifactsReproducibly) {
  const auto cfg = write_config({}).string();
  const auto a = invoke({"--config", cfg, "--out", dir("a"), "train"});
  ASSERT_EQ(a.code, 0) << a.err;
  for (const char* f : {"checkpoint.json", "curves.csv", "manifest.json"}) EXPECT_TRUE(fs::exists(root_ / "a" / f)) << f;
  EXPECT_NE(a.out.find("train: mae="), std::string::npos);

  const auto b = invoke({"--config", cfg, "--out", dir("b"), "train"});
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(slurp(root_ / "a" / "curves.csv"), slurp(root_ / "b" / "curves.csv"));
  EXPECT_EQ(slurp(root_ / "a" / "checkpoint.json"), slurp(root_ / "b" / "checkpoint.json"));

  const auto c = invoke({"--config", cfg, "--seed", "9", "--out", dir("c"), "train"});
  ASSERT_EQ(c.code, 0) << c.err;
  EXPECT_NE(slurp(root_ / "a" / "curves.csv"), slurp(root_ / "c" / "curves.csv"));
  const auto manifest = io::read_json(root_ / "c" / "manifest.json");
  EXPECT_EQ(manifest.at("seed"), 9);
}

TEST_F(Cli, TrainFromCsv) {
  const auto csv = root_ / "data.csv";
  std::ofstream(csv) << "a,b,y\n";
  {
    std::ofstream out(csv, std::ios::app);
    for (int i = 0; i < 24; ++i) out << i * 0.1 << "," << (i % 5) * 0.3 << "," << (i % 3) << "\n";
  }
  const auto r = invoke({"--config", write_config({}).string(), "--out", dir("o"), "train", "--data",
                         csv.string(), "--header"});
  EXPECT_EQ(r.code, 0) << r.err;
}

TEST_F(Cli, BadInputExitsTwo) {
  const auto r = invoke({"--config", write_config({{"alpah", 1}}).string(), "--out", dir("o"), "train"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("exit=2"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("alpah"), std::string::npos) << r.err;
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);

  EXPECT_EQ(invoke({"--config", write_config({{"batch_size", 1}}).string(), "train"}).code, 2);
  EXPECT_EQ(invoke({"frobnicate"}).code, 2);
  EXPECT_EQ(invoke({"oracle-check", "--trials", "0"}).code, 2);
  EXPECT_EQ(invoke({"ablate", "--suite", "everything"}).code, 2);
}

TEST_F(Cli, DivergenceExitsThreeWithCheckpoint) {
  const auto r = invoke({"--config", write_config({{"base_lr", 1e300}}).string(), "--out", dir("o"), "train"});
  EXPECT_EQ(r.code, 3) << r.err;
  EXPECT_TRUE(fs::exists(root_ / "o" / "checkpoint.json"));
  EXPECT_NO_THROW(io::load_checkpoint(root_ / "o" / "checkpoint.json"));
}

TEST_F(Cli, IoErrorsExitFour) {
  EXPECT_EQ(invoke({"--config", dir("missing.json"), "train"}).code, 4);
  const auto cfg = write_config({}).string();
  fs::create_directories(root_ / "exists");
  const auto r = invoke({"--config", cfg, "--out", dir("exists"), "--no-overwrite", "train"});
  EXPECT_EQ(r.code, 4);
  EXPECT_NE(r.err.find("exit=4"), std::string::npos);
  EXPECT_EQ(invoke({"--config", cfg, "train", "--data", dir("nope.csv")}).code, 4);
}

TEST_F(Cli, OracleCheckReportsMismatch) {
  // Column-class multipliers cannot meet the full prototype constraint, so
  // the check fails and the worst instance is written out.
  const auto r = invoke({"--out", dir("o"), "oracle-check", "--trials", "10"});
  EXPECT_EQ(r.code, 5) << r.out << r.err;
  EXPECT_TRUE(fs::exists(root_ / "o" / "oracle_check.csv"));
  EXPECT_TRUE(fs::exists(root_ / "o" / "oracle_worst.json"));
  const auto worst = io::read_json(root_ / "o" / "oracle_worst.json");
  EXPECT_LE(worst.at("oracle_residual").get<double>(), 1e-6);

  const auto stdout_only = invoke({"oracle-check", "--trials", "10"});
  EXPECT_EQ(stdout_only.code, 5);
  EXPECT_NE(stdout_only.out.find("\"lambda_star\""), std::string::npos);
}

TEST_F(Cli, AblationSuites) {
  const auto cfg = write_config({{"epochs", 1}, {"dataset", {{"samples_per_class", 50}}}}).string();
  const auto lc = invoke({"--config", cfg, "--out", dir("lc"), "ablate", "--suite", "loss-components"});
  ASSERT_EQ(lc.code, 0) << lc.err;
  auto text = slurp(root_ / "lc" / "ablation_loss-components.csv");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);
  EXPECT_NE(text.find("kl-only"), std::string::npos);

  const auto bs = invoke({"--config", cfg, "--out", dir("bs"), "ablate", "--suite", "batch-size"});
  ASSERT_EQ(bs.code, 0) << bs.err;
  text = slurp(root_ / "bs" / "ablation_batch-size.csv");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 6);

  const auto sp = invoke({"--config", cfg, "--out", dir("sp"), "ablate", "--suite", "sampling"});
  ASSERT_EQ(sp.code, 0) << sp.err;
  EXPECT_NE(sp.err.find("warning: stratified"), std::string::npos) << sp.err;
}

TEST_F(Cli, DiagnoseWritesReports) {
  const auto cfg = write_config({{"epochs", 1}}).string();
  ASSERT_EQ(invoke({"--config", cfg, "--out", dir("t"), "train"}).code, 0);
  const auto r = invoke({"--out", dir("d"), "diagnose", "--checkpoint", (root_ / "t" / "checkpoint.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = io::read_json(root_ / "d" / "report.json");
  for (const char* k : {"mae", "accuracy", "cs", "srcc", "plcc", "ordinal_constraint_rate", "manifold_order_score",
                        "raw_kl"}) {
    EXPECT_TRUE(report.contains(k)) << k;
  }
  const auto pca = slurp(root_ / "d" / "pca.csv");
  EXPECT_EQ(pca.substr(0, pca.find('\n')), "index,label,pc1,pc2");
  const auto otd = slurp(root_ / "d" / "otd.csv");
  for (const char* m : {"\nP,", "\nQ,", "\nP_tilde,", "\nQ_tilde,"}) EXPECT_NE(otd.find(m), std::string::npos) << m;

  EXPECT_EQ(invoke({"diagnose", "--checkpoint", dir("none.json")}).code, 4);
}
