#include <gtest/gtest.h>

#include <fstream>
#include <iterator>

#include "dunet/checkpoint.hpp"
#include "dunet/train.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

using namespace dunet;
using dunet::test::TempDir;
namespace fs = std::filesystem;

namespace {

ModelConfig toy_config(std::uint64_t init_seed = 1) {
  ModelConfig cfg;
  cfg.arch = Arch::dilated_dense;
  cfg.num_blocks = 2;
  cfg.layers_per_block = 2;
  cfg.base_filters = 3;
  cfg.kernel_down = 5;
  cfg.kernel_up = 3;
  cfg.sources = 2;
  cfg.channels = 1;
  cfg.segment_length = 128;
  cfg.init_seed = init_seed;
  cfg.stems = {"low", "high"};
  return cfg;
}

TrainConfig toy_train(std::size_t epochs) {
  TrainConfig t;
  t.lr = 1e-3;
  t.batch_size = 2;
  t.epochs = epochs;
  t.steps_per_epoch = 3;
  t.seed = 5;
  t.val_segments = 2;
  return t;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

template <typename Scalar>
std::vector<Segment<Scalar>> random_batch(Rng& rng, const ModelConfig& cfg, std::size_t n) {
  std::vector<Segment<Scalar>> batch;
  for (std::size_t i = 0; i < n; ++i)
    batch.push_back(augment_and_mix(test::random_tensor<Scalar>(rng, {cfg.sources, cfg.channels, cfg.segment_length},
                                                                -0.4, 0.4),
                                    std::vector<double>(cfg.sources, 1.0)));
  return batch;
}

}  // namespace

TEST(SeparationLoss, PerfectPredictionIsZero) {
  Rng rng(1);
  const auto t = test::random_tensor<double>(rng, {3, 2, 10});
  EXPECT_EQ(separation_loss(t, t), 0.0);
}

TEST(SeparationLoss, MeanOverSourcesOfPerSourceMse) {
  Tensor<double> targets({2, 1, 8}, 0.0), preds({2, 1, 8}, 0.0);
  for (std::size_t i = 0; i < 8; ++i) preds[i] = 1.0;
  EXPECT_DOUBLE_EQ(separation_loss(preds, targets), 0.5);
  Tape<double> tape;
  const Var l = separation_loss(tape, tape.leaf(preds), tape.leaf(targets));
  EXPECT_DOUBLE_EQ(tape.value(l)[0], 0.5);
}

TEST(SeparationLoss, ShapeMismatchRejected) {
  EXPECT_THROW(separation_loss(Tensor<double>({2, 1, 8}), Tensor<double>({2, 1, 7})), DimensionError);
  Tape<double> tape;
  EXPECT_THROW(separation_loss(tape, tape.leaf(Tensor<double>({2, 1, 8})), tape.leaf(Tensor<double>({1, 2, 8}))),
               DimensionError);
}

TEST(SeparationLoss, ResidualSourceTermReachesHeads) {
  // With the target of the estimated source equal to its prediction, only the
  // residual term is non-zero, so any head gradient must come through it.
  auto cfg = toy_config();
  cfg.segment_length = 16;
  cfg.num_blocks = 1;
  const Model<double> model(cfg);
  Rng rng(3);
  const auto mix = test::random_tensor<double>(rng, {1, 16});
  auto target = model.separate(mix);
  for (std::size_t i = 16; i < 32; ++i) target[i] += 0.1;
  std::size_t head_w = 0;
  for (std::size_t i = 0; i < model.graph().params.size(); ++i)
    if (model.graph().params[i].name == "head.low.weight") head_w = i;
  const auto check = test::grad_check(
      [&](Tape<double>& t, const std::vector<Var>& vars) {
        auto all = model.register_params(t, false);
        all[head_w] = vars[0];
        return separation_loss(t, model.forward(t, all, t.leaf(mix)), t.leaf(target));
      },
      std::vector<Tensor<double>>{model.params()[head_w]});
  EXPECT_LT(check.max_error, 1e-5);
  double norm = 0;
  for (double g : check.analytic.front().data()) norm += g * g;
  EXPECT_GT(norm, 1e-12);
}

TEST(BatchGradients, BatchLossAndGradientAreSampleMeans) {
  const auto cfg = toy_config();
  const Model<double> model(cfg);
  Rng rng(11);
  const auto batch = random_batch<double>(rng, cfg, 3);
  const auto whole = batch_gradients<double>(model, batch);
  double mean = 0;
  std::vector<Tensor<double>> grad_mean;
  for (const auto& p : model.params()) grad_mean.emplace_back(p.shape());
  for (const auto& seg : batch) {
    const auto one = batch_gradients<double>(model, std::span(&seg, 1));
    mean += one.loss / 3;
    EXPECT_NEAR(one.loss, separation_loss(model.separate(seg.mixture), seg.sources), 1e-12);
    for (std::size_t i = 0; i < grad_mean.size(); ++i)
      for (std::size_t j = 0; j < grad_mean[i].size(); ++j) grad_mean[i][j] += one.grads[i][j] / 3;
  }
  EXPECT_NEAR(whole.loss, mean, 1e-6);
  for (std::size_t i = 0; i < grad_mean.size(); ++i)
    for (std::size_t j = 0; j < grad_mean[i].size(); ++j) EXPECT_NEAR(whole.grads[i][j], grad_mean[i][j], 1e-12);
}

TEST(TrainStep, FixedBatchLossDecreases) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto cfg = toy_config(seed);
    Model<float> model(cfg);
    Rng rng({seed, 99});
    const auto batch = random_batch<float>(rng, cfg, 2);
    auto adam = AdamState<float>::zeros_like(model.params());
    std::vector<double> losses;
    for (int s = 0; s < 11; ++s) losses.push_back(train_step<float>(model, batch, adam, 1e-3, s + 1));
    int rises = 0;
    for (std::size_t i = 1; i < losses.size(); ++i) rises += losses[i] >= losses[i - 1];
    EXPECT_LE(rises, 1) << "seed " << seed;
    EXPECT_LT(losses.back(), losses.front());
  }
}

TEST(TrainStep, NonFiniteLossAbortsWithStep) {
  const auto cfg = toy_config();
  Model<float> model(cfg);
  model.params()[0][0] = std::numeric_limits<float>::quiet_NaN();
  const auto before = model.params();
  Rng rng(4);
  const auto batch = random_batch<float>(rng, cfg, 1);
  auto adam = AdamState<float>::zeros_like(model.params());
  try {
    train_step<float>(model, batch, adam, 1e-3, 7);
    FAIL() << "expected NumericAbort";
  } catch (const NumericAbort& e) {
    EXPECT_EQ(e.step(), 7);
  }
  EXPECT_EQ(adam.t, 0);
  EXPECT_EQ(model.params()[1], before[1]);
}

class TrainLoopTest : public ::testing::Test {
 protected:
  void SetUp() override {
    write_tone_dataset(tmp.path() / "data", {"low", "high"}, 2, 1500, 8);
    train_set = scan_dataset(tmp.path() / "data", Split::train, {"low", "high"});
    val_set = scan_dataset(tmp.path() / "data", Split::validation, {"low", "high"});
  }

  TempDir tmp;
  TrackSet train_set, val_set;
};

TEST_F(TrainLoopTest, ZeroEpochsLeavesModelUnchanged) {
  Model<float> model(toy_config());
  const auto before = model.params();
  SegmentSampler<float> sampler(train_set, 128);
  auto state = TrainState<float>::fresh(model);
  const auto rows = train_loop<float>(model, sampler, {}, toy_train(0), state);
  EXPECT_TRUE(rows.empty());
  EXPECT_EQ(model.params(), before);
}

TEST_F(TrainLoopTest, SeededRunsAreBitReproducible) {
  SegmentSampler<float> sampler(train_set, 128);
  SegmentSampler<float> val_sampler(val_set, 128);
  const auto val = validation_segments(val_sampler, 2, 5);
  std::vector<std::vector<HistoryRow>> runs;
  std::vector<std::vector<Tensor<float>>> params;
  for (int r = 0; r < 2; ++r) {
    Model<float> model(toy_config());
    auto state = TrainState<float>::fresh(model);
    runs.push_back(train_loop<float>(model, sampler, val, toy_train(2), state));
    params.push_back(model.params());
  }
  ASSERT_EQ(runs[0].size(), 6u);
  EXPECT_EQ(runs[0], runs[1]);
  EXPECT_EQ(params[0], params[1]);
  EXPECT_FALSE(runs[0][1].val_loss.has_value());
  EXPECT_TRUE(runs[0][2].val_loss.has_value());
  EXPECT_EQ(runs[0][5].step, 6u);
  EXPECT_EQ(runs[0][5].epoch, 2u);
}

TEST_F(TrainLoopTest, ResumeMatchesUninterruptedRun) {
  SegmentSampler<float> sampler(train_set, 128);
  SegmentSampler<float> val_sampler(val_set, 128);
  const auto val = validation_segments(val_sampler, 2, 5);

  Model<float> full(toy_config());
  auto full_state = TrainState<float>::fresh(full);
  const auto full_rows = train_loop<float>(full, sampler, val, toy_train(3), full_state);

  auto first = toy_train(1);
  first.checkpoint_path = (tmp.path() / "epoch1.ckpt").string();
  Model<float> part(toy_config());
  auto part_state = TrainState<float>::fresh(part);
  train_loop<float>(part, sampler, val, first, part_state);

  const auto ck = load_checkpoint(first.checkpoint_path);
  EXPECT_EQ(ck.epoch, 1u);
  EXPECT_EQ(ck.step, 3u);
  Model<float> resumed(ck.config);
  auto state = TrainState<float>::fresh(resumed);
  restore_checkpoint(ck, resumed, &state.adam);
  state.epoch = ck.epoch;
  state.step = ck.step;
  const auto rest = train_loop<float>(resumed, sampler, val, toy_train(3), state);
  ASSERT_EQ(rest.size(), 6u);
  EXPECT_EQ(rest, std::vector<HistoryRow>(full_rows.begin() + 3, full_rows.end()));
  EXPECT_EQ(resumed.params(), full.params());
}

TEST_F(TrainLoopTest, CheckpointsWrittenAtInterval) {
  SegmentSampler<float> sampler(train_set, 128);
  auto cfg = toy_train(3);
  cfg.steps_per_epoch = 1;
  cfg.checkpoint_interval = 2;
  cfg.checkpoint_path = (tmp.path() / "run.ckpt").string();
  std::vector<std::uint64_t> epochs;
  Model<float> model(toy_config());
  auto state = TrainState<float>::fresh(model);
  train_loop<float>(model, sampler, {}, cfg, state,
                    {nullptr, [&](const fs::path& p) { epochs.push_back(load_checkpoint(p).epoch); }});
  EXPECT_EQ(epochs, (std::vector<std::uint64_t>{2, 3}));
}

TEST(History, CsvSchema) {
  const std::vector<HistoryRow> rows{{1, 1, 0.25, std::nullopt}, {2, 1, 0.125, 0.5}};
  std::string text = history_csv_header();
  for (const auto& r : rows) text += history_csv_row(r);
  EXPECT_EQ(text, "step,epoch,train_loss,val_loss\n1,1,0.25,\n2,1,0.125,0.5\n");
}

TEST(TrainConfigText, RoundTripsAndValidates) {
  TrainConfig t;
  t.lr = 3e-4;
  t.precision = Precision::float64;
  t.checkpoint_path = "a/b.ckpt";
  TrainConfig back;
  for (const auto& e : parse_key_values(t.to_text())) ASSERT_TRUE(back.set(e.key, e.value)) << e.key;
  EXPECT_EQ(back.to_text(), t.to_text());
  EXPECT_FALSE(back.set("nope", "1"));
  t.lr = 0;
  EXPECT_THROW(t.validate(), ConfigError);
  t.lr = 1e-4;
  t.batch_size = 0;
  EXPECT_THROW(t.validate(), ConfigError);
}

TEST(Checkpoint, RoundTripIsByteIdentical) {
  TempDir tmp;
  Model<float> model(toy_config(4));
  auto adam = AdamState<float>::zeros_like(model.params());
  Rng rng(2);
  const auto batch = random_batch<float>(rng, model.config(), 1);
  train_step<float>(model, batch, adam, 1e-3, 1);
  const auto p1 = tmp.path() / "a.ckpt", p2 = tmp.path() / "b.ckpt";
  save_checkpoint(make_checkpoint(model, &adam, 1, 1), p1);
  const auto ck = load_checkpoint(p1);
  save_checkpoint(ck, p2);
  EXPECT_EQ(slurp(p1), slurp(p2));

  Model<float> loaded(ck.config);
  AdamState<float> adam2;
  restore_checkpoint(ck, loaded, &adam2);
  EXPECT_EQ(loaded.params(), model.params());
  EXPECT_EQ(adam2.t, adam.t);
  EXPECT_EQ(adam2.m, adam.m);
  EXPECT_EQ(adam2.v, adam.v);
}

TEST(Checkpoint, WithoutOptimizer) {
  const Model<float> model(toy_config());
  const auto bytes = encode_checkpoint(make_checkpoint<float>(model, nullptr, 0, 0));
  const auto ck = decode_checkpoint(bytes);
  EXPECT_FALSE(ck.optimizer.has_value());
  EXPECT_EQ(encode_checkpoint(ck), bytes);
}

TEST(Checkpoint, DefaultDenseCensus) {
  const ModelConfig cfg;
  const Model<float> model(cfg);
  const auto ck = make_checkpoint<float>(model, nullptr, 0, 0);
  const auto back = decode_checkpoint(encode_checkpoint(ck));
  std::map<std::string, int> seen;
  for (const auto& p : back.params) ++seen[p.name];
  ASSERT_EQ(seen.size(), model.graph().params.size());
  std::size_t total = 0;
  for (const auto& spec : model.graph().params) {
    EXPECT_EQ(seen[spec.name], 1) << spec.name;
    total += shape_size(spec.shape);
  }
  EXPECT_EQ(total, model.graph().parameter_count());
  EXPECT_EQ(back.config, cfg);
}

TEST(Checkpoint, MismatchedConfigNamesConflict) {
  const Model<float> model(toy_config());
  const auto ck = make_checkpoint<float>(model, nullptr, 0, 0);
  auto other_cfg = toy_config();
  other_cfg.base_filters = 4;
  Model<float> other(other_cfg);
  try {
    restore_checkpoint(ck, other);
    FAIL() << "expected a shape conflict";
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("down1.conv1.weight"), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, CensusErrors) {
  const Model<float> model(toy_config());
  auto ck = make_checkpoint<float>(model, nullptr, 0, 0);
  Model<float> target(toy_config());
  auto extra = ck;
  extra.params.push_back({"bogus.weight", Tensor<float>({1})});
  EXPECT_THROW(restore_checkpoint(extra, target), FormatError);
  auto missing = ck;
  const std::string dropped = missing.params.back().name;
  missing.params.pop_back();
  try {
    restore_checkpoint(missing, target);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find(dropped), std::string::npos);
  }
  auto dup = ck;
  dup.params.push_back(dup.params.front());
  EXPECT_THROW(restore_checkpoint(dup, target), FormatError);
}

TEST(Checkpoint, TruncationNamesParameter) {
  const Model<float> model(toy_config());
  const auto ck = make_checkpoint<float>(model, nullptr, 0, 0);
  const std::string bytes = encode_checkpoint(ck);
  // Cut inside the last tensor's data.
  const std::string cut = bytes.substr(0, bytes.size() - 1 - 4);
  try {
    decode_checkpoint(cut);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find(ck.params.back().name), std::string::npos) << e.what();
  }
  EXPECT_THROW(decode_checkpoint(bytes + "x"), FormatError);
}

TEST(Checkpoint, BadMagicAndVersion) {
  const Model<float> model(toy_config());
  std::string bytes = encode_checkpoint(make_checkpoint<float>(model, nullptr, 0, 0));
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad), FormatError);
  bad = bytes;
  bad[8] = 2;
  try {
    decode_checkpoint(bad);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("version 2"), std::string::npos);
  }
  EXPECT_THROW(decode_checkpoint(""), FormatError);
}
