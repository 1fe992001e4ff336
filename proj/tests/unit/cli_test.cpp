#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "tgseg/image_io.hpp"
#include "tgseg_cli/cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = tgseg::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

class CliWorkspace : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("tgseg_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string write_config(const nlohmann::json& j) const {
    const std::string p = path("config.json");
    std::ofstream(p) << j.dump();
    return p;
  }

  std::string read(const std::string& p) const {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
  }

  fs::path dir_;
};

}  // namespace

TEST(Cli, UsageErrorsExitWithTwo) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  const Result r = run({"infer", "--prompt", "wire"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("usage"), std::string::npos);
}

TEST(Cli, HelpExitsCleanly) {
  const Result r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("train"), std::string::npos);
}

TEST(Cli, DumpConfigIsValidJson) {
  const Result r = run({"dump-config"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_TRUE(j.contains("model"));
  EXPECT_TRUE(j.contains("train"));
}

TEST(Cli, ParamsReportsBothScales) {
  const Result toy = run({"params"});
  ASSERT_EQ(toy.code, 0) << toy.err;
  EXPECT_NE(toy.out.find("clip_frozen trainable"), std::string::npos);
  const Result full = run({"params", "--full-scale", "--regime", "clip_partial"});
  ASSERT_EQ(full.code, 0) << full.err;
  EXPECT_NE(full.out.find("SAM-HQ trainable"), std::string::npos);
  EXPECT_NE(full.out.find("clip_partial trainable"), std::string::npos);
  EXPECT_EQ(run({"params", "--regime", "nonsense"}).code, 1);
}

TEST_F(CliWorkspace, MissingDatasetRootIsReported) {
  const std::string cfg = write_config({{"data", {{"root", path("nowhere")}}}, {"output_dir", path("run")}});
  const Result r = run({"train", "--config", cfg});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("dataset root not found"), std::string::npos) << r.err;
}

TEST_F(CliWorkspace, EmptyManifestIsAnEmptyDataset) {
  std::ofstream(path("empty.jsonl")).close();
  const std::string cfg = write_config({{"output_dir", path("run")}});
  const Result r = run({"train", "--config", cfg, "--manifest", path("empty.jsonl"), "--steps", "1"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("empty-dataset"), std::string::npos) << r.err;
}

TEST_F(CliWorkspace, SynthTrainEvalInfer) {
  const Result synth = run({"synth", "--out", path("data"), "--count", "6", "--seed", "3"});
  ASSERT_EQ(synth.code, 0) << synth.err;
  EXPECT_NE(synth.out.find("wrote 6 samples"), std::string::npos);

  const std::string cfg = write_config(
      {{"data", {{"root", path("data")}, {"kind", "synthetic"}}}, {"output_dir", path("run")}, {"train", {{"batch_size", 2}}}});
  const Result train = run({"train", "--config", cfg, "--steps", "4"});
  ASSERT_EQ(train.code, 0) << train.err;
  EXPECT_NE(train.out.find("steps 4"), std::string::npos) << train.out;
  const std::string ckpt = path("run/checkpoint.tgs");
  ASSERT_TRUE(fs::exists(ckpt));
  EXPECT_TRUE(fs::exists(path("run/loss.csv")));
  EXPECT_TRUE(fs::exists(path("run/config.json")));

  const Result eval = run({"eval", "--config", cfg, "--checkpoint", ckpt, "--out", path("eval")});
  ASSERT_EQ(eval.code, 0) << eval.err;
  EXPECT_NE(eval.out.find("mIoU"), std::string::npos);
  std::ifstream records(path("eval/records.jsonl"));
  int lines = 0;
  for (std::string line; std::getline(records, line);) ++lines;
  EXPECT_EQ(lines, 6);

  std::vector<fs::path> images(fs::directory_iterator(path("data/images")), {});
  ASSERT_EQ(images.size(), 6u);
  std::sort(images.begin(), images.end());
  const std::string image = images.front().string();
  const Result a = run({"infer", "--checkpoint", ckpt, "--image", image, "--prompt", "line", "--out", path("a")});
  ASSERT_EQ(a.code, 0) << a.err;
  const Result b = run({"infer", "--checkpoint", ckpt, "--image", image, "--prompt", "line", "--out", path("b")});
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(read(path("a/mask.png")), read(path("b/mask.png")));
  EXPECT_EQ(read(path("a/similarity.png")), read(path("b/similarity.png")));
  const auto bytes = read(path("a/mask.png"));
  const tgseg::FeatureMap mask = tgseg::io::decode_image(std::vector<std::uint8_t>(bytes.begin(), bytes.end()));
  EXPECT_EQ(mask.height(), 64);
  EXPECT_EQ(mask.width(), 64);

  const Result c = run({"infer", "--checkpoint", ckpt, "--image", image, "--prompt", "grid", "--out", path("c")});
  ASSERT_EQ(c.code, 0) << c.err;
  EXPECT_NE(read(path("a/similarity.png")), read(path("c/similarity.png")));

  const Result bad_box =
      run({"infer", "--checkpoint", ckpt, "--image", image, "--prompt", "line", "--box", "1,2,3", "--out", path("d")});
  EXPECT_EQ(bad_box.code, 1);
  EXPECT_NE(bad_box.err.find("invalid-box"), std::string::npos) << bad_box.err;
}

TEST_F(CliWorkspace, ManifestCommandWritesFile) {
  ASSERT_EQ(run({"synth", "--out", path("data"), "--count", "3"}).code, 0);
  const Result r = run({"manifest", "--root", path("data"), "--out", path("m.jsonl")});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream in(path("m.jsonl"));
  int lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  EXPECT_EQ(lines, 3);
}
