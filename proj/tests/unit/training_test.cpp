#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <limits>

#include "tgseg/datasets.hpp"
#include "tgseg/training.hpp"

using namespace tgseg;
namespace fs = std::filesystem;

namespace {

std::vector<TrainingSample> synthetic_samples(const Model& model, int n) {
  std::vector<TrainingSample> out;
  for (int i = 0; i < n; ++i) {
    const auto s = render_synthetic_sample(0, i, 64);
    out.push_back(prepare_sample(model, s.category + "_" + std::to_string(i), s.category, s.image, s.target));
  }
  return out;
}

std::vector<Tensor> frozen_snapshot(const Model& m) {
  std::vector<Tensor> out;
  for (const WeightView& w : m.backbones().frozen_weights()) out.push_back(*w.tensor);
  return out;
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("tgseg_training_" + name);
  fs::remove_all(p);
  return p;
}

TrainConfig short_run(int steps) {
  TrainConfig c;
  c.max_steps = steps;
  return c;
}

}  // namespace

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.learning_rate = -1;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.accumulation_steps = 3;  // does not divide batch_size 4
  EXPECT_THROW(c.validate(), Error);
}

TEST(Train, EmptyDatasetIsRejected) {
  Model model = Model::create(ModelConfig{});
  try {
    train(short_run(1), {}, model);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::empty_dataset);
  }
}

TEST(Train, LossDecreasesOnSyntheticData) {
  Model model = Model::create(ModelConfig{});
  const auto samples = synthetic_samples(model, 10);
  const double before = mean_loss(model, samples);
  train(short_run(40), samples, model);
  EXPECT_LT(mean_loss(model, samples), before);
}

TEST(Train, SameSeedGivesIdenticalLossCurves) {
  Model a = Model::create(ModelConfig{});
  Model b = Model::create(ModelConfig{});
  const auto samples = synthetic_samples(a, 6);
  const TrainResult ra = train(short_run(12), samples, a);
  const TrainResult rb = train(short_run(12), samples, b);
  ASSERT_EQ(ra.steps.size(), 12u);
  ASSERT_EQ(rb.steps.size(), 12u);
  for (std::size_t i = 0; i < ra.steps.size(); ++i) EXPECT_NEAR(ra.steps[i].loss, rb.steps[i].loss, 1e-6);
  EXPECT_EQ(a.params(), b.params());
}

TEST(Train, OrderSeedChangesTrajectory) {
  Model a = Model::create(ModelConfig{});
  Model b = Model::create(ModelConfig{});
  const auto samples = synthetic_samples(a, 6);
  TrainConfig ca = short_run(6), cb = short_run(6);
  cb.seed = 99;
  train(ca, samples, a);
  train(cb, samples, b);
  EXPECT_NE(a.params(), b.params());
}

TEST(Train, EpochAccounting) {
  Model model = Model::create(ModelConfig{});
  const auto samples = synthetic_samples(model, 5);
  TrainConfig c;
  c.epochs = 3;
  c.batch_size = 2;
  const TrainResult r = train(c, samples, model);
  EXPECT_EQ(r.steps.size(), 9u);  // ceil(5 / 2) steps per epoch
  EXPECT_EQ(r.epochs_run, 3);
  EXPECT_EQ(r.epoch_losses.size(), 3u);
  EXPECT_EQ(r.steps.back().epoch, 2);
}

TEST(Train, AccumulationMatchesFullBatch) {
  Model a = Model::create(ModelConfig{});
  Model b = Model::create(ModelConfig{});
  const auto samples = synthetic_samples(a, 8);
  TrainConfig ca = short_run(4), cb = short_run(4);
  cb.accumulation_steps = 2;
  train(ca, samples, a);
  train(cb, samples, b);
  EXPECT_EQ(a.params(), b.params());
}

TEST(Train, MomentumChangesUpdates) {
  Model a = Model::create(ModelConfig{});
  Model b = Model::create(ModelConfig{});
  const auto samples = synthetic_samples(a, 4);
  TrainConfig cb = short_run(3);
  cb.momentum = 0.9;
  train(short_run(3), samples, a);
  train(cb, samples, b);
  EXPECT_NE(a.params(), b.params());
}

TEST(Train, ClipFrozenKeepsFrozenParametersBitIdentical) {
  Model model = Model::create(ModelConfig{});
  const auto samples = synthetic_samples(model, 6);
  const auto frozen_before = frozen_snapshot(model);
  const TrainableParams before = model.params();
  train(short_run(10), samples, model);
  EXPECT_EQ(frozen_snapshot(model), frozen_before);
  EXPECT_EQ(model.params().text_projection, before.text_projection);
  EXPECT_NE(model.params().projection, before.projection);
  EXPECT_NE(model.params().decoder, before.decoder);
  EXPECT_NE(model.params().prompt_encoder, before.prompt_encoder);
}

TEST(Train, ClipPartialTrainsOnlyTheFinalTextProjection) {
  Model model = Model::create(ModelConfig{});
  const auto samples = synthetic_samples(model, 6);
  const auto frozen_before = frozen_snapshot(model);
  const TrainableParams before = model.params();
  TrainConfig c = short_run(10);
  c.regime = FreezeRegime::clip_partial;
  train(c, samples, model);
  EXPECT_EQ(frozen_snapshot(model), frozen_before);
  EXPECT_NE(model.params().text_projection, before.text_projection);
  EXPECT_EQ(model.backbones().text_final_projection(), before.text_projection);
}

TEST(Train, NonFiniteLossNamesSampleAndStep) {
  Model model = Model::create(ModelConfig{});
  auto samples = synthetic_samples(model, 3);
  for (auto& s : samples) s.encoded.embedding.values.at(0, 0, 0) = std::numeric_limits<double>::quiet_NaN();
  samples[0].id = "bad_sample";
  samples[1].id = "bad_sample";
  samples[2].id = "bad_sample";
  try {
    train(short_run(2), samples, model);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::non_finite_loss);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("bad_sample"), std::string::npos) << msg;
    EXPECT_NE(msg.find("step 0"), std::string::npos) << msg;
  }
}

TEST(Train, WritesLossCurveAndCheckpoint) {
  Model model = Model::create(ModelConfig{});
  const auto samples = synthetic_samples(model, 4);
  const fs::path dir = temp_dir("outputs");
  int seen = 0;
  TrainOutputs out;
  out.directory = dir;
  out.on_step = [&](const StepLog&) { ++seen; };
  TrainConfig c;
  c.epochs = 2;
  train(c, samples, model, out);
  EXPECT_EQ(seen, 2);
  EXPECT_TRUE(fs::exists(dir / "checkpoint.tgs"));
  std::ifstream in(dir / "loss.csv");
  std::string header, line;
  std::getline(in, header);
  EXPECT_EQ(header, "step,epoch,loss");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 2);
  EXPECT_TRUE(fs::exists(dir / "epoch_loss.csv"));
  fs::remove_all(dir);
}

TEST(Checkpoint, RoundTripGivesBitIdenticalPredictions) {
  ModelConfig cfg;
  cfg.init_seed = 4;
  Model model = Model::create(cfg);
  const auto samples = synthetic_samples(model, 4);
  TrainConfig c = short_run(3);
  c.regime = FreezeRegime::clip_partial;
  train(c, samples, model);
  const fs::path dir = temp_dir("ckpt");
  fs::create_directories(dir);
  save_checkpoint(model, dir / "m.tgs");
  const Model loaded = load_checkpoint(dir / "m.tgs");
  EXPECT_EQ(loaded.params(), model.params());
  EXPECT_EQ(loaded.regime(), FreezeRegime::clip_partial);
  EXPECT_EQ(loaded.config().init_seed, 4u);
  for (const auto& s : samples) {
    EXPECT_EQ(loaded.forward(s.encoded, s.prompt, s.geometry).values,
              model.forward(s.encoded, s.prompt, s.geometry).values);
  }
  EXPECT_EQ(serialize_checkpoint(loaded), serialize_checkpoint(model));
  EXPECT_EQ(model_fingerprint(loaded), model_fingerprint(model));
  EXPECT_EQ(model_fingerprint(model).size(), 64u);
  fs::remove_all(dir);
}

TEST(Checkpoint, CorruptInputIsRejected) {
  const Model model = Model::create(ModelConfig{});
  const std::string good = serialize_checkpoint(model);
  EXPECT_THROW(deserialize_checkpoint("not a checkpoint"), Error);
  EXPECT_THROW(deserialize_checkpoint(good.substr(0, good.size() - 8)), Error);
  std::string bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(bad_magic), Error);
  std::string bad_version = good;
  bad_version[8] = 2;
  EXPECT_THROW(deserialize_checkpoint(bad_version), Error);
  EXPECT_THROW(load_checkpoint(fs::temp_directory_path() / "tgseg_missing.tgs"), Error);
}

TEST(Checkpoint, FingerprintTracksWeights) {
  Model a = Model::create(ModelConfig{});
  const std::string before = model_fingerprint(a);
  a.params().decoder.b_out[0] += 1e-12;
  EXPECT_NE(model_fingerprint(a), before);
}

TEST(PrepareSample, TightBoxAndModelResolution) {
  const Model model = Model::create(ModelConfig{});
  FeatureMap img(32, 128, 3, 0.5);
  BinaryMask mask(32, 128);
  for (int y = 4; y < 20; ++y)
    for (int x = 16; x < 64; ++x) mask.set(y, x, true);
  const TrainingSample s = prepare_sample(model, "a", "thing", img, mask);
  EXPECT_EQ(s.mask.height(), 64);
  EXPECT_EQ(s.mask.width(), 64);
  ASSERT_TRUE(s.geometry.box.has_value());
  EXPECT_DOUBLE_EQ(s.geometry.box->x_min, 8);
  EXPECT_DOUBLE_EQ(s.geometry.box->x_max, 32);
  EXPECT_DOUBLE_EQ(s.geometry.box->y_min, 8);
  EXPECT_DOUBLE_EQ(s.geometry.box->y_max, 40);
}
