// Copyright 2026 The limuse-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "limuse/metrics.hpp"
#include "limuse/model.hpp"
#include "test_util.hpp"

namespace limuse {
namespace {

using testing::random_tensor;

ModelConfig small(bool causal = false, bool codec = true) {
  ModelConfig c;
  c.N = 16;
  c.K = 4;
  c.X = 2;
  c.U = 12;
  c.D_face = 6;
  c.S = 8;
  c.codec_depth = 1;
  c.causal = causal;
  c.context_codec = codec;
  return c;
}

struct Inputs {
  Tensor mix, vp, vis;
};

Inputs inputs(const ModelConfig& c, Index B, Index samples, std::uint64_t seed) {
  const Index e = std::max<Index>(1, samples * c.fps / c.sample_rate);
  return {random_tensor({B, c.mics, samples}, seed, false, 0.3),
          random_tensor({B, c.U}, seed + 1, false),
          random_tensor({B, c.D_face, e}, seed + 2, false)};
}

TEST(ModelConfig, FramesAndValidation) {
  ModelConfig c;
  EXPECT_EQ(c.frames(48000), 2999);
  EXPECT_EQ(c.frames(32), 1);
  EXPECT_EQ(c.frames(33), 2);
  EXPECT_THROW(c.frames(31), DimensionError);
  ModelConfig causal = c;
  causal.causal = true;
  EXPECT_EQ(causal.padded_samples(causal.frames(48000)), 48000 + 31 + 1);
  ModelConfig bad = c;
  bad.K = 7;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c;
  bad.stride = 5;
  EXPECT_THROW(bad.validate(), ConfigError);
  EXPECT_NO_THROW(ModelConfig::reference(32).validate());
  EXPECT_NO_THROW(ModelConfig::vanilla().validate());
}

TEST(ModelConfig, MapRoundTrip) {
  ModelConfig c = small(true);
  c.T0 = 2.5;
  ModelConfig d;
  EXPECT_TRUE(d.apply(c.to_map()).empty());
  EXPECT_EQ(d.to_map(), c.to_map());
  EXPECT_EQ(d.apply({{"bogus", "1"}}), (std::vector<std::string>{"bogus"}));
  EXPECT_THROW(d.apply({{"N", "ten"}}), ConfigError);
  EXPECT_THROW(d.apply({{"causal", "maybe"}}), ConfigError);
}

TEST(Model, OutputLengthMatchesInput) {
  for (bool causal : {false, true}) {
    LiMuSE m(small(causal));
    NoGradGuard ng;
    for (Index n : {16000, 48000, 48017, 33}) {
      Inputs in = inputs(m.config(), 1, n, 5);
      ModelOutput out = m.forward(in.mix, in.vp, in.vis, {});
      EXPECT_EQ(out.estimate.shape(), (Shape{1, n}));
      EXPECT_EQ(out.mask.dim(2), m.config().frames(n));
      EXPECT_TRUE((out.mask.data() >= 0.0).all());
      EXPECT_TRUE(out.estimate.data().isFinite().all());
    }
  }
}

TEST(Model, EncoderExamples) {
  LiMuSE m(small());
  const Index n = 320;
  EXPECT_TRUE((m.encode_audio(Tensor::zeros({1, 2, n}), {}).data() == 0.0).all());
  // An impulse at sample 16 * 3 on mic 0 shows filter tap 0 at frame 3.
  Tensor x = Tensor::zeros({1, 2, n});
  x.mutable_data()[48] = 1.0;
  Tensor y = m.encode_audio(x, {});
  nn::ParamList ps = m.parameters();
  const Tensor& w = ps[0].tensor;  // encoder.weight, N x mics x L
  ASSERT_EQ(ps[0].name, "encoder.weight");
  for (Index c = 0; c < 16; ++c) {
    EXPECT_DOUBLE_EQ(y.at({0, c, 3}), w.at({c, 0, 0}));
    EXPECT_DOUBLE_EQ(y.at({0, c, 2}), w.at({c, 0, 16}));
  }
  EXPECT_THROW(m.encode_audio(Tensor::zeros({1, 3, n}), {}), DimensionError);
  EXPECT_THROW(m.encode_audio(Tensor::zeros({1, 2, 20}), {}), DimensionError);
}

TEST(Model, VoiceprintIsFcThenTile) {
  LiMuSE m(small());
  Tensor s = random_tensor({2, 12}, 3, false);
  Tensor y = m.encode_voiceprint(s, 7, {});
  ASSERT_EQ(y.shape(), (Shape{2, 16, 7}));
  nn::ParamList ps = m.parameters();
  Tensor w, b;
  for (const auto& p : ps) {
    if (p.name == "voiceprint_fc.weight") w = p.tensor;
    if (p.name == "voiceprint_fc.bias") b = p.tensor;
  }
  for (Index bb = 0; bb < 2; ++bb)
    for (Index o = 0; o < 16; ++o) {
      double want = b.data()[o];
      for (Index i = 0; i < 12; ++i) want += w.data()[o * 12 + i] * s.at({bb, i});
      for (Index t = 0; t < 7; ++t) EXPECT_NEAR(y.at({bb, o, t}), want, 1e-12);
    }
  Tensor z = m.encode_voiceprint(Tensor::zeros({1, 12}), 3, {});
  for (Index o = 0; o < 16; ++o) EXPECT_DOUBLE_EQ(z.at({0, o, 2}), b.data()[o]);
  EXPECT_THROW(m.encode_voiceprint(Tensor::zeros({1, 11}), 3, {}), DimensionError);
}

TEST(Model, VisualIndexMap) {
  LiMuSE m(small());
  Tensor v = random_tensor({1, 6, 5}, 4, false);
  const Tensor per_frame = m.encode_visual(v, 5, {});
  for (Index T : {5, 12, 37}) {
    Tensor y = m.encode_visual(v, T, {});
    ASSERT_EQ(y.shape(), (Shape{1, 16, T}));
    for (Index t = 0; t < T; ++t)
      for (Index c = 0; c < 16; ++c)
        ASSERT_EQ(y.at({0, c, t}), per_frame.at({0, c, t * 5 / T}));
  }
  Tensor two = m.encode_visual(random_tensor({1, 6, 2}, 5, false), 4, {});
  for (Index c = 0; c < 16; ++c) {
    EXPECT_EQ(two.at({0, c, 0}), two.at({0, c, 1}));
    EXPECT_EQ(two.at({0, c, 2}), two.at({0, c, 3}));
  }
  EXPECT_THROW(m.encode_visual(Tensor::zeros({1, 6, 0}), 4, {}), DimensionError);
}

TEST(Model, DecoderLinearZeroAndAdjoint) {
  LiMuSE m(small());
  Tensor a = random_tensor({1, 16, 20}, 6, false);
  Tensor b = random_tensor({1, 16, 20}, 7, false);
  Tensor lhs = m.decode(a + b);
  Tensor rhs = m.decode(a) + m.decode(b);
  EXPECT_LT((lhs.data() - rhs.data()).abs().maxCoeff(), 1e-10);
  EXPECT_TRUE((m.decode(Tensor::zeros({1, 16, 20})).data() == 0.0).all());
  // Tied weights: a stride-16 conv with the decoder kernel as its filters.
  const Tensor& w = m.decoder().weight();  // N x 1 x L
  Tensor x = random_tensor({1, 1, (20 - 1) * 16 + 32}, 8, false);
  ConvOptions opt;
  opt.stride = 16;
  const Tensor cx = conv1d(x, w, Tensor(), opt);
  ASSERT_EQ(cx.shape(), a.shape());
  const double l = (cx.data() * a.data()).sum();
  const double r = (x.data() * m.decode(a).data()).sum();
  EXPECT_NEAR(l, r, 1e-10 * std::max(1.0, std::abs(l)));
}

TEST(Model, ZeroMaskGivesSilence) {
  LiMuSE m(small());
  Inputs in = inputs(m.config(), 1, 800, 9);
  Tensor audio = m.encode_audio(in.mix, {});
  Tensor est = m.decode(Tensor::zeros(audio.shape()) * audio);
  EXPECT_TRUE((est.data() == 0.0).all());
}

TEST(Model, FusionOrderAndSynchronisation) {
  ModelConfig c = small(false, false);
  LiMuSE m(c);
  const Index T = 10, N = 16;
  Tensor z = Tensor::zeros({1, N, T});
  EXPECT_THROW(m.estimate_mask(z, Tensor::zeros({1, N, T + 1}), z, {}), DimensionError);
  EXPECT_THROW(m.estimate_mask(z, z, Tensor::zeros({2, N, T}), {}), DimensionError);

  // Zero every residual branch so each block is the identity, then let the
  // mask conv copy one N-channel slice of the fused stack.
  Tensor mw, mb;
  for (const auto& p : m.parameters()) {
    const bool branch = p.name.find(".out.") != std::string::npos ||
                        p.name.find(".fc3.") != std::string::npos;
    Tensor t = p.tensor;
    if (branch) t.mutable_data().setZero();
    if (p.name == "mask.weight") mw = p.tensor;
    if (p.name == "mask.bias") mb = p.tensor;
  }
  ASSERT_EQ(mw.shape(), (Shape{N, 3 * N, 1}));
  mb.mutable_data().setZero();
  const Tensor streams[3] = {random_tensor({1, N, T}, 10, false),
                             random_tensor({1, N, T}, 11, false),
                             random_tensor({1, N, T}, 12, false)};
  NoGradGuard ng;
  for (Index k = 0; k < 3; ++k) {
    mw.mutable_data().setZero();
    for (Index o = 0; o < N; ++o) mw.mutable_data()[o * 3 * N + k * N + o] = 1.0;
    const Tensor mask = m.estimate_mask(streams[0], streams[1], streams[2], {});
    const Array want = streams[k].data().max(0.0);
    EXPECT_LT((mask.data() - want).abs().maxCoeff(), 1e-12) << "slice " << k;
  }
}

TEST(Model, GradientReachesEveryParameter) {
  for (bool codec : {true, false}) {
    LiMuSE m(small(false, codec));
    Inputs in = inputs(m.config(), 2, 1600, 12);
    Tensor ref = random_tensor({2, 1600}, 15, false);
    ModelOutput out = m.forward(in.mix, in.vp, in.vis, {});
    si_sdr_loss(out.estimate, ref).backward();
    for (const auto& p : m.parameters()) {
      ASSERT_EQ(p.tensor.grad().size(), p.tensor.numel()) << p.name;
      EXPECT_GT(p.tensor.grad().abs().maxCoeff(), 0.0) << p.name;
    }
  }
}

TEST(Model, LossGradientMatchesFiniteDifferences) {
  LiMuSE m(small());
  Inputs in = inputs(m.config(), 1, 640, 20);
  Tensor ref = random_tensor({1, 640}, 23, false);
  auto loss = [&] { return si_sdr_loss(m.forward(in.mix, in.vp, in.vis, {}).estimate, ref); };
  loss().backward();
  nn::ParamList ps = m.parameters();
  std::vector<std::pair<Index, Index>> picks;
  Rng rng(3);
  while (picks.size() < 20) {
    const Index p = static_cast<Index>(rng.below(ps.size()));
    picks.emplace_back(p, static_cast<Index>(rng.below(ps[p].tensor.numel())));
  }
  NoGradGuard ng;
  for (auto [p, i] : picks) {
    Tensor t = ps[p].tensor;
    const double ana = t.grad()[i];
    const double orig = t.data()[i];
    const double eps = 1e-5;
    t.mutable_data()[i] = orig + eps;
    const double lp = loss().item();
    t.mutable_data()[i] = orig - eps;
    const double lm = loss().item();
    t.mutable_data()[i] = orig;
    const double num = (lp - lm) / (2 * eps);
    const double scale = std::max({1e-3, std::abs(num), std::abs(ana)});
    EXPECT_LT(std::abs(num - ana) / scale, 1e-4) << ps[p].name << "[" << i << "] " << num
                                                  << " vs " << ana;
  }
}

TEST(Model, CausalModelIsSampleCausal) {
  for (bool codec : {true, false}) {
    LiMuSE m(small(true, codec));
    const Index n = 1200;
    Inputs in = inputs(m.config(), 1, n, 30);
    NoGradGuard ng;
    const Tensor y = m.forward(in.mix, in.vp, in.vis, {}).estimate;
    for (Index t : {0, 17, 255, 256, 700, 1198}) {
      Tensor mix2 = in.mix.clone();
      for (Index c = 0; c < 2; ++c)
        for (Index s = t + 1; s < n; ++s) mix2.mutable_data()[c * n + s] += 0.5;
      const Tensor y2 = m.forward(mix2, in.vp, in.vis, {}).estimate;
      for (Index s = 0; s <= t; ++s) ASSERT_EQ(y.data()[s], y2.data()[s]) << t << " " << s;
      if (t + 40 < n) EXPECT_GT((y.data() - y2.data()).abs().maxCoeff(), 0.0);
    }
  }
}

TEST(Model, QuantizableLayersAndFreeze) {
  LiMuSE m(small());
  const auto layers = m.quantizable_layers();
  EXPECT_EQ(layers.front()->name(), "encoder");
  EXPECT_EQ(layers.back()->name(), "mask");
  EXPECT_FALSE(m.quantized());
  m.attach_quantizers();
  EXPECT_TRUE(m.quantized());
  for (auto* l : m.quantizable_layers()) {
    ASSERT_TRUE(l->quantizer().has_value());
    EXPECT_EQ(l->quantizer()->levels.size(), 7);
  }
  m.freeze_quantized();
  for (auto* l : m.quantizable_layers()) {
    std::set<double> distinct(l->weight().data().data(),
                              l->weight().data().data() + l->weight().numel());
    EXPECT_LE(distinct.size(), 7u) << l->name();
  }
}

}  // namespace
}  // namespace limuse
