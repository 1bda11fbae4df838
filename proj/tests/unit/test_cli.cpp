#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "catgcn/error.hpp"
#include "catgcn_cli/commands.hpp"
#include "json.hpp"

namespace catgcn::cli {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out, err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "catgcn");
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("catgcn_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    const Result r = invoke({"synth", "--kind", "homophily", "--nodes", "150", "--num-features", "40", "--classes", "3",
                             "--n-f", "5", "--p-in", "0.05", "--p-out", "0.005", "--seed", "3", "--out",
                             (dir_ / "data").string()});
    ASSERT_EQ(r.code, kOk) << r.err;
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::vector<std::string> data_flags() const {
    return {"--edges", (dir_ / "data/edges.tsv").string(), "--features", (dir_ / "data/features.tsv").string(),
            "--labels", (dir_ / "data/labels.tsv").string()};
  }
  std::vector<std::string> train_args(const std::string& out, std::vector<std::string> extra = {}) const {
    std::vector<std::string> a{"train"};
    for (const auto& f : data_flags()) a.push_back(f);
    for (const auto& f : {"--n-f", "5", "--emb-dim", "8", "--hidden-dim", "8", "--max-epochs", "15", "--rho", "4",
                          "--dropout", "0.2", "--seed", "7", "--out"})
      a.emplace_back(f);
    a.push_back((dir_ / out).string());
    a.insert(a.end(), extra.begin(), extra.end());
    return a;
  }

  fs::path dir_;
};

TEST_F(CliTest, SynthWritesFilesAndMeta) {
  for (const char* f : {"edges.tsv", "features.tsv", "labels.tsv", "meta.json"}) EXPECT_TRUE(fs::exists(dir_ / "data" / f));
  std::ifstream meta(dir_ / "data/meta.json");
  EXPECT_EQ(nlohmann::json::parse(meta).at("nodes"), 150);
}

TEST_F(CliTest, TrainWritesArtifactsAndEvalReproducesMetrics) {
  const Result t = invoke(train_args("run"));
  ASSERT_EQ(t.code, kOk) << t.err;
  const auto metrics = nlohmann::json::parse(t.out);
  EXPECT_TRUE(metrics.contains("accuracy"));
  EXPECT_TRUE(metrics.contains("macro_f1"));
  EXPECT_TRUE(metrics.contains("best_epoch"));
  for (const char* f : {"manifest.json", "epochs.jsonl", "checkpoint.bin", "metrics.json"})
    EXPECT_TRUE(fs::exists(dir_ / "run" / f)) << f;

  std::vector<std::string> eval{"eval", "--checkpoint", (dir_ / "run/checkpoint.bin").string()};
  for (const auto& f : data_flags()) eval.push_back(f);
  const Result e = invoke(eval);
  ASSERT_EQ(e.code, kOk) << e.err;
  EXPECT_EQ(e.out, t.out);

  const auto manifest = nlohmann::json::parse(slurp(dir_ / "run/manifest.json"));
  EXPECT_EQ(manifest.at("config").at("seed"), 7);
  EXPECT_EQ(manifest.at("config").at("dropout"), 0.2);
  EXPECT_EQ(manifest.at("config").at("eta"), 0.0);  // defaults are materialized
  EXPECT_TRUE(manifest.at("dataset").contains("fingerprint"));
}

TEST_F(CliTest, ReplayAndJobsReproduceLogsAndCheckpoints) {
  ASSERT_EQ(invoke(train_args("a")).code, kOk);
  ASSERT_EQ(invoke(train_args("b", {"--jobs", "3"})).code, kOk);
  const Result replay = invoke({"train", "--replay", (dir_ / "a/manifest.json").string(), "--out", (dir_ / "c").string()});
  ASSERT_EQ(replay.code, kOk) << replay.err;
  const std::string log = slurp(dir_ / "a/epochs.jsonl");
  const std::string ckpt = slurp(dir_ / "a/checkpoint.bin");
  EXPECT_FALSE(log.empty());
  for (const char* other : {"b", "c"}) {
    EXPECT_EQ(slurp(dir_ / other / "epochs.jsonl"), log) << other;
    EXPECT_EQ(slurp(dir_ / other / "checkpoint.bin"), ckpt) << other;
  }
}

TEST_F(CliTest, ConfigFileIsOverriddenByFlags) {
  {
    std::ofstream cfg(dir_ / "run.cfg");
    cfg << "# settings\nalpha = 0.0\nhops=0\nmax_epochs=3\n";
  }
  const Result r = invoke(train_args("cfg", {"--config", (dir_ / "run.cfg").string(), "--hops", "1"}));
  ASSERT_EQ(r.code, kOk) << r.err;
  const auto m = nlohmann::json::parse(slurp(dir_ / "cfg/manifest.json"));
  EXPECT_EQ(m.at("config").at("alpha"), 0.0);
  EXPECT_EQ(m.at("config").at("hops"), 1);
  // --max-epochs 15 from the flags beats the file's 3.
  EXPECT_EQ(m.at("config").at("max_epochs"), 15);
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(invoke({}).code, kUsage);
  EXPECT_EQ(invoke({"train", "--bogus"}).code, kUsage);
  EXPECT_EQ(invoke({"train"}).code, kUsage);
  EXPECT_EQ(invoke(train_args("x", {"--alpha", "2"})).code, kUsage);
  EXPECT_EQ(invoke(train_args("x", {"--monitor", "f2"})).code, kUsage);
  EXPECT_EQ(invoke({"--help"}).code, kOk);

  std::vector<std::string> missing{"train", "--edges", (dir_ / "nope.tsv").string(), "--features",
                                   (dir_ / "data/features.tsv").string(), "--labels", (dir_ / "data/labels.tsv").string()};
  EXPECT_EQ(invoke(missing).code, kDataError);

  const Result div = invoke(train_args("div", {"--lr", "1e300"}));
  EXPECT_EQ(div.code, kDivergence);
  EXPECT_NE(div.err.find("last finite epoch 1"), std::string::npos) << div.err;

  ASSERT_EQ(invoke(train_args("ok")).code, kOk);
  const Result other = invoke({"synth", "--kind", "homophily", "--nodes", "150", "--num-features", "40", "--classes",
                               "3", "--n-f", "5", "--seed", "4", "--out", (dir_ / "other").string()});
  ASSERT_EQ(other.code, kOk);
  const Result mismatch = invoke({"eval", "--checkpoint", (dir_ / "ok/checkpoint.bin").string(), "--edges",
                                  (dir_ / "other/edges.tsv").string(), "--features",
                                  (dir_ / "other/features.tsv").string(), "--labels", (dir_ / "other/labels.tsv").string()});
  EXPECT_EQ(mismatch.code, kDataError);
  EXPECT_EQ(invoke({"eval", "--checkpoint", (dir_ / "data/edges.tsv").string(), "--edges", "a", "--features", "b",
                    "--labels", "c"})
                .code,
            kDataError);
}

TEST(CliVerify, DefaultSweepAndSingleCells) {
  const Result all = invoke({"verify"});
  EXPECT_EQ(all.code, kOk) << all.err;
  EXPECT_TRUE(nlohmann::json::parse(all.out).at("pass").get<bool>());

  const Result thm = invoke({"verify", "--theorem", "--n", "3", "--rho1", "2", "--k", "2"});
  ASSERT_EQ(thm.code, kOk);
  const auto cert = nlohmann::json::parse(thm.out);
  EXPECT_NEAR(cert.at("rho2").get<double>(), 4.0 / 7.0, 1e-15);
  EXPECT_LE(cert.at("max_entry_diff").get<double>(), 1e-14);
  EXPECT_NE(thm.err.find("0.571428"), std::string::npos);

  const Result spec = invoke({"verify", "--spectrum", "--n", "10", "--rho", "0"});
  ASSERT_EQ(spec.code, kOk);
  EXPECT_EQ(nlohmann::json::parse(spec.out).at("closed_form_filter"), nlohmann::json::parse("[1.0, 0.0]"));

  EXPECT_EQ(invoke({"verify", "--theorem", "--n", "3"}).code, kUsage);
  EXPECT_EQ(invoke({"verify", "--theorem", "--n", "60", "--rho1", "1", "--k", "1"}).code, kUsage);
}

TEST(CliGrid, DefaultGridHas1980Cells) {
  const Result r = invoke({"grid", "--list-cells"});
  ASSERT_EQ(r.code, kOk) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j.at("cell_count"), 1980);
  EXPECT_EQ(j.at("cells").size(), 1980u);
  const Result custom = invoke({"grid", "--list-cells", "--grid-learning-rate", "0.1,0.01", "--grid-eta", "0",
                                "--grid-dropout", "0", "--grid-alpha", "0,0.5,1", "--grid-rho", "0,21"});
  EXPECT_EQ(nlohmann::json::parse(custom.out).at("cell_count"), 12);
}

TEST_F(CliTest, GridRunsAndWritesResults) {
  std::vector<std::string> a{"grid"};
  for (const auto& f : data_flags()) a.push_back(f);
  for (const char* f : {"--n-f", "5", "--emb-dim", "4", "--hidden-dim", "4", "--max-epochs", "4", "--grid-learning-rate",
                        "1e300,0.01", "--grid-eta", "0", "--grid-dropout", "0", "--grid-alpha", "0.5", "--jobs", "2",
                        "--results"})
    a.emplace_back(f);
  a.push_back((dir_ / "grid.json").string());
  const Result r = invoke(a);
  ASSERT_EQ(r.code, kOk) << r.err;
  const auto summary = nlohmann::json::parse(r.out);
  EXPECT_EQ(summary.at("best_index"), 1);
  EXPECT_EQ(summary.at("failed_cells"), 1);
  const auto table = nlohmann::json::parse(slurp(dir_ / "grid.json"));
  EXPECT_EQ(table.at("cells").size(), 2u);
}

TEST(Settings, ApplyAndReject) {
  TrainConfig c;
  apply_setting(c, "learning_rate", " 0.5 ");
  apply_setting(c, "projection_hidden", "true");
  apply_setting(c, "local_pooling", "mean");
  EXPECT_EQ(c.learning_rate, 0.5);
  EXPECT_TRUE(c.projection_hidden);
  EXPECT_EQ(c.local_pooling, LocalPooling::kMean);
  EXPECT_THROW(apply_setting(c, "nope", "1"), ContractError);
  EXPECT_THROW(apply_setting(c, "hops", "-1"), ContractError);
  EXPECT_THROW(apply_setting(c, "eta", "1e-3x"), ContractError);
  EXPECT_THROW(apply_setting(c, "resample_per_epoch", "maybe"), ContractError);
  EXPECT_EQ(config_keys().size(), 18u);
}

}  // namespace
}  // namespace catgcn::cli
