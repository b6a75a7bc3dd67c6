// Copyright 2026 The limuse-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "limuse/checkpoint.hpp"
#include "limuse/train.hpp"

namespace limuse {
namespace {

namespace fs = std::filesystem;

// Give `p` the gradient `g` via sum(p * g).
void set_grad(Tensor& p, const Array& g) {
  p.zero_grad();
  sum(mul(p, Tensor::from(p.shape(), g))).backward();
}

TEST(Adam, MatchesScalarReference) {
  Tensor p = Tensor::from({3}, {0.5, -1.0, 2.0}, true);
  Adam adam({{"p", p, nn::ParamKind::kWeight}}, 0.01);
  double ref[3] = {0.5, -1.0, 2.0}, m[3] = {0, 0, 0}, v[3] = {0, 0, 0};
  Rng rng(1);
  for (int t = 1; t <= 25; ++t) {
    Array g(3);
    for (int i = 0; i < 3; ++i) g[i] = rng.normal();
    set_grad(p, g);
    adam.step();
    for (int i = 0; i < 3; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * g[i];
      v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(0.9, t));
      const double vh = v[i] / (1 - std::pow(0.999, t));
      ref[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    }
    for (int i = 0; i < 3; ++i) ASSERT_NEAR(p.data()[i], ref[i], 1e-12) << t;
  }
  EXPECT_EQ(adam.steps(), 25);
}

TEST(Clip, GlobalNorm) {
  Tensor a = Tensor::from({1}, {0.0}, true), b = Tensor::from({1}, {0.0}, true);
  nn::ParamList ps = {{"a", a, nn::ParamKind::kWeight}, {"b", b, nn::ParamKind::kWeight}};
  set_grad(a, Array::Constant(1, 3.0));
  set_grad(b, Array::Constant(1, 4.0));
  EXPECT_DOUBLE_EQ(clip_grad_norm(ps, 1.0), 5.0);
  EXPECT_NEAR(a.grad()[0], 0.6, 1e-15);
  EXPECT_NEAR(b.grad()[0], 0.8, 1e-15);
  EXPECT_NEAR(clip_grad_norm(ps, 5.0), 1.0, 1e-15);
  EXPECT_NEAR(a.grad()[0], 0.6, 1e-15);
}

TEST(Schedule, HalveThenStop) {
  PlateauSchedule s(4, 6);
  std::vector<int> halves;
  int stop_epoch = 0;
  for (int epoch = 1; epoch <= 20; ++epoch) {
    const auto d = s.observe(epoch == 1 ? 1.0 : 0.5);
    if (d.halve) halves.push_back(epoch);
    if (d.stop) {
      stop_epoch = epoch;
      break;
    }
  }
  EXPECT_EQ(halves, (std::vector<int>{5}));
  EXPECT_EQ(stop_epoch, 7);
  PlateauSchedule r(2, 3);
  r.observe(1.0);
  r.observe(0.0);
  EXPECT_TRUE(r.observe(2.0).improved);
  EXPECT_EQ(r.bad_epochs(), 0);
}

TEST(TrainConfig, ValidateAndApply) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.lr = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  TrainConfig d;
  EXPECT_EQ(d.apply({{"lr", "0.5"}, {"nope", "1"}}), (std::vector<std::string>{"nope"}));
  EXPECT_DOUBLE_EQ(d.lr, 0.5);
  TrainConfig e;
  EXPECT_TRUE(e.apply(d.to_map()).empty());
  EXPECT_EQ(e.to_map(), d.to_map());
}

ModelConfig tiny_model() {
  ModelConfig c;
  c.N = 16;
  c.K = 4;
  c.X = 2;
  c.U = 16;
  c.D_face = 8;
  c.S = 8;
  c.codec_depth = 1;
  return c;
}

data::DatasetSpec tiny_data() {
  data::DatasetSpec d;
  d.synth.seconds = 0.1;
  d.synth.voiceprint_dim = 16;
  d.synth.face_dim = 8;
  return d;
}

struct Sets {
  std::vector<data::MixtureSample> train, val;
};

Sets tiny_sets() {
  const auto spec = tiny_data();
  return {data::generate_split(spec, data::Split::kTrain, 8),
          data::generate_split(spec, data::Split::kValidation, 4)};
}

TrainConfig tiny_train(int epochs) {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = 4;
  return t;
}

TEST(Train, DeterministicLossCurve) {
  const Sets s = tiny_sets();
  std::vector<double> curves[2];
  for (int run = 0; run < 2; ++run) {
    LiMuSE m(tiny_model());
    const TrainResult r = train_stage(m, s.train, s.val, tiny_train(3), Stage::kFull);
    ASSERT_EQ(r.history.size(), 3u);
    for (const auto& e : r.history) {
      curves[run].push_back(e.train_loss);
      curves[run].push_back(e.val_si_sdr);
    }
  }
  EXPECT_EQ(curves[0], curves[1]);
}

TEST(Train, RejectsBadInputs) {
  const Sets s = tiny_sets();
  LiMuSE m(tiny_model());
  EXPECT_THROW(train_stage(m, {}, s.val, tiny_train(1), Stage::kFull), data::DataError);
  EXPECT_THROW(train_stage(m, s.train, s.val, tiny_train(1), Stage::kQat), quant::QuantError);
}

TEST(Train, QatSmoke) {
  const Sets s = tiny_sets();
  LiMuSE m(tiny_model());
  const TrainResult r = quantize_stage(m, s.train, s.val, tiny_train(1));
  EXPECT_EQ(r.state.stage, "qat");
  EXPECT_DOUBLE_EQ(r.history[0].temperature, 5.0);
  for (auto* l : m.quantizable_layers()) {
    ASSERT_TRUE(l->quantizer()->frozen);
    std::set<double> distinct(l->weight().data().data(),
                              l->weight().data().data() + l->weight().numel());
    EXPECT_LE(distinct.size(), 7u) << l->name();
  }
  const EvalResult ev = evaluate(m, s.val, eval_context(m));
  for (double v : ev.si_sdri) EXPECT_TRUE(std::isfinite(v));
}

class CheckpointTest : public ::testing::Test {
 protected:
  fs::path dir_ = fs::temp_directory_path() /
                  ("limuse_ckpt_" + std::string(::testing::UnitTest::GetInstance()
                                                    ->current_test_info()
                                                    ->name()));
  void SetUp() override { fs::create_directories(dir_); }
  void TearDown() override { fs::remove_all(dir_); }
};

void expect_same_eval(LiMuSE& a, LiMuSE& b, const std::vector<data::MixtureSample>& set) {
  const EvalResult ea = evaluate(a, set, eval_context(a));
  const EvalResult eb = evaluate(b, set, eval_context(b));
  EXPECT_EQ(ea.si_sdr, eb.si_sdr);
  EXPECT_EQ(ea.sdr, eb.sdr);
}

TEST_F(CheckpointTest, FullPrecisionRoundTrip) {
  const Sets s = tiny_sets();
  LiMuSE m(tiny_model());
  TrainResult r = train_stage(m, s.train, s.val, tiny_train(1), Stage::kFull);
  save_checkpoint(dir_ / "a.ckpt", m, &r.state);
  LoadedCheckpoint l = load_checkpoint(dir_ / "a.ckpt");
  ASSERT_TRUE(l.state.has_value());
  EXPECT_EQ(l.state->epoch, 1);
  EXPECT_EQ(l.state->adam_steps, r.state.adam_steps);
  EXPECT_EQ(l.model->config().to_map(), m.config().to_map());
  const auto pa = m.parameters(), pb = l.model->parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].name, pb[i].name);
    EXPECT_TRUE((pa[i].tensor.data() == pb[i].tensor.data()).all()) << pa[i].name;
  }
  expect_same_eval(m, *l.model, s.val);
}

TEST_F(CheckpointTest, QuantizedRoundTripIsPackedAndExact) {
  const Sets s = tiny_sets();
  LiMuSE m(tiny_model());
  quantize_stage(m, s.train, s.val, tiny_train(1));
  save_checkpoint(dir_ / "q.ckpt", m);
  LoadedCheckpoint l = load_checkpoint(dir_ / "q.ckpt");
  EXPECT_FALSE(l.state.has_value());
  ASSERT_TRUE(l.model->quantized());
  auto la = m.quantizable_layers(), lb = l.model->quantizable_layers();
  for (size_t i = 0; i < la.size(); ++i) {
    EXPECT_EQ(la[i]->quantizer()->codes, lb[i]->quantizer()->codes);
    EXPECT_TRUE((la[i]->weight().data() == lb[i]->weight().data()).all());
  }
  expect_same_eval(m, *l.model, s.val);
  // Packed 3-bit weights make the quantized file smaller than a float copy.
  LiMuSE f(tiny_model());
  save_checkpoint(dir_ / "f.ckpt", f);
  EXPECT_LT(fs::file_size(dir_ / "q.ckpt"), fs::file_size(dir_ / "f.ckpt"));
}

TEST_F(CheckpointTest, CorruptFilesAreRejected) {
  LiMuSE m(tiny_model());
  save_checkpoint(dir_ / "a.ckpt", m);
  const auto size = fs::file_size(dir_ / "a.ckpt");
  fs::resize_file(dir_ / "a.ckpt", size / 2);
  EXPECT_THROW(load_checkpoint(dir_ / "a.ckpt"), CheckpointError);
  EXPECT_THROW(load_checkpoint(dir_ / "missing.ckpt"), CheckpointError);
  {
    std::ofstream out(dir_ / "junk.ckpt", std::ios::binary);
    out << "not a checkpoint at all";
  }
  EXPECT_THROW(load_checkpoint(dir_ / "junk.ckpt"), CheckpointError);
}

}  // namespace
}  // namespace limuse
