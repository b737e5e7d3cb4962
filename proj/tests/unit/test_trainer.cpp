#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"
#include "versnet/errors.hpp"
#include "versnet/synthdata.hpp"
#include "versnet/trainer.hpp"

using namespace versnet;
using test_support::read_bytes;
using test_support::read_text;
using test_support::TempDir;

namespace {

VersNetConfig tiny_config() {
  VersNetConfig c;
  c.block_channels = {4, 6, 8, 8};
  c.fc_channels = 8;
  c.dropout_rate = 0.0f;
  return c;
}

NetworkParams fresh(std::uint64_t seed = 1) {
  Prng rng(seed);
  return build(tiny_config(), rng);
}

std::vector<LoadedChip> chips(int n, int size = 32, std::uint64_t seed = 5) {
  std::vector<LoadedChip> out;
  Prng rng(seed);
  for (int i = 0; i < n; ++i) {
    const int cls = kFirstTargetClass + i % kNumTargetClasses;
    TargetSpec spec{cls, rng.uniform(0, 360), 0.5, size / 2.0, size / 2.0};
    Chip c = gen_chip(spec, size, mix_seed(seed, static_cast<std::uint64_t>(i)));
    out.push_back({"c" + std::to_string(i), cls, std::move(c.image), std::move(c.label)});
  }
  return out;
}

TrainConfig config(int epochs, double lr = 1e-2) {
  TrainConfig c;
  c.epochs = epochs;
  c.learning_rate = lr;
  c.seed = 9;
  return c;
}

}  // namespace

TEST(Trainer, SingleChipDescends) {
  const auto data = chips(1);
  const TrainResult r = train(config(5, 5e-3), fresh(), data);
  ASSERT_EQ(r.log.size(), 5u);
  EXPECT_NEAR(r.log[0].mean_loss, std::log(12.0), 1e-4);  // zero score layer on the first step
  EXPECT_LT(r.log.back().mean_loss, std::log(12.0));

  // one epoch is one step here; the loss after it is already below ln 12
  const TrainResult one = train(config(1, 5e-3), fresh(), data);
  Prng rng(0);
  EXPECT_LT(forward_backward(one.params, data[0].image, data[0].label, rng).loss, std::log(12.0));
}

TEST(Trainer, LossFallsOverEpochs) {
  const auto data = chips(10);
  const TrainResult r = train(config(5), fresh(), data);
  EXPECT_LT(r.log[4].mean_loss, r.log[0].mean_loss);
  for (const auto& rec : r.log) EXPECT_TRUE(std::isfinite(rec.mean_loss));
}

TEST(Trainer, ZeroRateIsNoOp) {
  const auto data = chips(4);
  const NetworkParams init = fresh();
  const TrainResult r = train(config(3, 0.0), init, data);
  EXPECT_TRUE(r.params == init);
  for (const auto& rec : r.log) EXPECT_NEAR(rec.mean_loss, r.log[0].mean_loss, 1e-12);
}

TEST(Trainer, DeterministicCheckpoints) {
  TempDir a("tr_a"), b("tr_b");
  const auto data = chips(6);
  TrainConfig ca = config(2);
  ca.checkpoint_dir = a.path();
  ca.eval_every = 1;
  TrainConfig cb = ca;
  cb.checkpoint_dir = b.path();
  VersNetConfig cfg = tiny_config();
  cfg.dropout_rate = 0.5f;
  Prng r1(3), r2(3);
  const TrainResult ra = train(ca, build(cfg, r1), data, &data);
  const TrainResult rb = train(cb, build(cfg, r2), data, &data);
  EXPECT_TRUE(ra.params == rb.params);
  for (const char* f : {"epoch_001.vnck", "epoch_002.vnck", kFinalCheckpoint}) {
    ASSERT_TRUE(std::filesystem::exists(a / f)) << f;
    EXPECT_EQ(read_bytes(a / f), read_bytes(b / f)) << f;
  }
  const std::string log = read_text(a / kTrainLogFile);
  EXPECT_EQ(log.rfind("epoch,mean_loss,eval_mean_iou,seconds\n", 0), 0u);
  ASSERT_TRUE(ra.log[0].eval_mean_iou.has_value());
  EXPECT_EQ(*ra.log[0].eval_mean_iou, *rb.log[0].eval_mean_iou);

  const Checkpoint ck = load_checkpoint((a / kFinalCheckpoint).string());
  EXPECT_TRUE(ck.params == ra.params);
  ASSERT_TRUE(ck.momentum.has_value());
}

TEST(Trainer, ConfigValidation) {
  const auto data = chips(2);
  TrainConfig c = config(1);
  c.learning_rate = -1;
  EXPECT_THROW(train(c, fresh(), data), InvalidArgument);
  c = config(1);
  c.momentum = 1.0;
  EXPECT_THROW(train(c, fresh(), data), InvalidArgument);
  c = config(0);
  EXPECT_THROW(train(c, fresh(), data), InvalidArgument);
  c = config(1, std::nan(""));
  EXPECT_THROW(train(c, fresh(), data), InvalidArgument);
  EXPECT_THROW(train(config(1), fresh(), std::vector<LoadedChip>{}), InvalidArgument);

  TrainConfig d = config(10);
  d.lr_decay = 0.5;
  d.lr_decay_every = 3;
  EXPECT_DOUBLE_EQ(d.rate_for_epoch(1), 1e-2);
  EXPECT_DOUBLE_EQ(d.rate_for_epoch(4), 5e-3);
  EXPECT_DOUBLE_EQ(d.rate_for_epoch(7), 2.5e-3);
}

TEST(Trainer, DivergenceRaisesNumericError) {
  const auto data = chips(3);
  try {
    train(config(3, 1e12), fresh(), data);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos) << e.what();
  }
}

TEST(Evaluate, OracleTruthIsPerfect) {
  const auto data = chips(10);
  EvalOptions opts;
  opts.oracle_truth = true;
  const EvaluationReport rep = evaluate(fresh(), data, opts);
  EXPECT_EQ(rep.pixel.average_targets.iou, 1.0);
  EXPECT_EQ(rep.pixel.average_all.iou, 1.0);
  ASSERT_TRUE(rep.chips.has_value());
  EXPECT_EQ(rep.chips->overall, 1.0);
  ASSERT_TRUE(rep.iou.has_value());
  EXPECT_EQ(rep.iou->mean, 1.0);
  EXPECT_EQ(rep.chip_count, 10u);
  EXPECT_EQ(rep.pixel.pixel_confusion.total(), 10u * 32 * 32);
}

TEST(Evaluate, UntrainedNetPredictsBackground) {
  const auto data = chips(3);
  const EvaluationReport rep = evaluate(fresh(), data);
  // zero score layer: every pixel ties, lowest id wins
  EXPECT_EQ(rep.pixel.pixel_confusion.row_sum(kBackgroundClass), 3u * 32 * 32);
  EXPECT_THROW(evaluate(fresh(), std::vector<LoadedChip>{}), InvalidArgument);
}

TEST(Evaluate, CheckpointRoundTripGivesSameReport) {
  TempDir dir("ev_ck");
  const auto data = chips(6);
  const TrainResult r = train(config(2), fresh(), data);
  save_checkpoint((dir / "m.vnck").string(), r.params, &r.momentum);
  const Checkpoint ck = load_checkpoint((dir / "m.vnck").string());
  EXPECT_EQ(report_to_json(evaluate(ck.params, data)), report_to_json(evaluate(r.params, data)));
}

TEST(Dataset, TrainAndEvaluateFromManifest) {
  TempDir dir("mf_train");
  const DatasetManifest m = gen_dataset(1, 32, "train", 2, dir.path(), 3);
  const TrainResult r = train(config(1), fresh(), m);
  EXPECT_EQ(r.log.size(), 1u);
  const EvaluationReport rep = evaluate(r.params, apply_exclusions(m, {m.entries[0].id}).manifest);
  EXPECT_EQ(rep.chip_count, 2u);
  EXPECT_EQ(rep.excluded_count, 1u);
  EXPECT_THROW(train(config(1), fresh(), apply_exclusions(m, {m.entries[0].id, m.entries[1].id, m.entries[2].id}).manifest),
               InvalidArgument);
}

TEST(Dataset, UnreadableChipNamesTheFile) {
  TempDir dir("bad_chip");
  const DatasetManifest m = gen_dataset(1, 32, "train", 2, dir.path(), 2);
  test_support::write_text(m.image_path(m.entries[1]), "P5\n32 32\n");
  try {
    load_chips(m);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find(m.entries[1].id), std::string::npos) << e.what();
  }
  std::filesystem::remove(m.image_path(m.entries[1]));
  EXPECT_THROW(load_chips(m), IoError);
}
