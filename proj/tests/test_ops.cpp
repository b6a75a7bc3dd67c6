// Copyright 2026 The limuse-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <gtest/gtest.h>

#include <cmath>

#include "limuse/ops.hpp"
#include "test_util.hpp"

namespace limuse {
namespace {

using testing::expect_gradients;
using testing::probe;
using testing::random_tensor;

TEST(PReLU, Examples) {
  Tensor a = Tensor::from({1}, {0.25});
  EXPECT_DOUBLE_EQ(prelu(Tensor::from({1, 1}, {1.0}), a).item(), 1.0);
  EXPECT_DOUBLE_EQ(prelu(Tensor::from({1, 1}, {-2.0}), a).item(), -0.5);
  EXPECT_THROW(prelu(Tensor::zeros({1, 3, 2}), Tensor::zeros({2})), DimensionError);
}

TEST(PReLU, Gradients) {
  auto x = random_tensor({2, 3, 6}, 1);
  auto a = Tensor::from({3}, {0.25, -0.1, 0.6}, true);
  expect_gradients([](auto& in) { return probe(prelu(in[0], in[1])); }, {x, a});
  auto shared = Tensor::from({1}, {0.3}, true);
  expect_gradients([](auto& in) { return probe(prelu(in[0], in[1])); }, {x, shared});
}

TEST(LayerNorm, ConstantInputGivesBias) {
  Tensor x = Tensor::full({2, 3, 5}, 4.0);
  Tensor g = Tensor::from({3}, {2, 3, 4});
  Tensor b = Tensor::from({3}, {0.5, -1, 0});
  for (auto mode : {NormMode::kGlobal, NormMode::kCumulative}) {
    Tensor y = layer_norm(x, mode, g, b);
    for (Index c = 0; c < 3; ++c)
      for (Index t = 0; t < 5; ++t) EXPECT_DOUBLE_EQ(y.at({1, c, t}), b.data()[c]);
  }
}

TEST(LayerNorm, GlobalStatistics) {
  Tensor x = random_tensor({3, 4, 50}, 2, false, 3.0);
  x = add(x, 2.0);
  Tensor y = layer_norm(x, NormMode::kGlobal, Tensor::ones({4}), Tensor::zeros({4}));
  for (Index b = 0; b < 3; ++b) {
    const Array seg = y.data().segment(b * 200, 200);
    const double m = seg.mean();
    const double v = (seg - m).square().mean();
    EXPECT_NEAR(m, 0.0, 1e-6);
    EXPECT_NEAR(v, 1.0, 1e-6);
  }
}

TEST(LayerNorm, CumulativeLastStepEqualsGlobal) {
  Tensor x = random_tensor({2, 3, 8}, 3, false);
  Tensor g = Tensor::ones({3}), b = Tensor::zeros({3});
  Tensor yc = layer_norm(x, NormMode::kCumulative, g, b);
  Tensor yg = layer_norm(x, NormMode::kGlobal, g, b);
  for (Index bb = 0; bb < 2; ++bb)
    for (Index c = 0; c < 3; ++c) EXPECT_NEAR(yc.at({bb, c, 7}), yg.at({bb, c, 7}), 1e-12);
}

TEST(LayerNorm, CumulativeIsCausal) {
  Tensor x = random_tensor({1, 4, 12}, 4, false);
  Tensor g = random_tensor({4}, 5, false), b = random_tensor({4}, 6, false);
  Tensor y = layer_norm(x, NormMode::kCumulative, g, b);
  for (Index t = 0; t < 11; ++t) {
    Tensor x2 = x.clone();
    for (Index c = 0; c < 4; ++c)
      for (Index s = t + 1; s < 12; ++s) x2.mutable_data()[c * 12 + s] *= -7.0;
    Tensor y2 = layer_norm(x2, NormMode::kCumulative, g, b);
    for (Index c = 0; c < 4; ++c)
      for (Index s = 0; s <= t; ++s) ASSERT_EQ(y.at({0, c, s}), y2.at({0, c, s}));
  }
}

TEST(LayerNorm, Gradients) {
  auto x = random_tensor({2, 3, 6}, 7);
  auto g = random_tensor({3}, 8);
  auto b = random_tensor({3}, 9);
  for (auto mode : {NormMode::kGlobal, NormMode::kCumulative}) {
    expect_gradients([mode](auto& in) { return probe(layer_norm(in[0], mode, in[1], in[2])); },
                     {x, g, b}, 1e-5);
  }
}

TEST(Blocks, CountAndLayout) {
  EXPECT_EQ(block_count(64, 32, 16), 3);
  EXPECT_EQ(block_count(32, 32, 16), 1);
  EXPECT_EQ(block_count(17, 32, 16), 1);
  EXPECT_EQ(block_count(33, 32, 16), 2);
  EXPECT_EQ(block_count(1000, 32, 16), 62);

  Array v(64);
  for (Index i = 0; i < 64; ++i) v[i] = static_cast<double>(i + 1);
  Tensor x = Tensor::from({1, 1, 64}, v);
  Tensor blk = segment_blocks(x, 32, 16);
  ASSERT_EQ(blk.shape(), (Shape{3, 1, 32}));
  EXPECT_DOUBLE_EQ(blk.at({0, 0, 0}), 1.0);
  EXPECT_DOUBLE_EQ(blk.at({1, 0, 0}), 17.0);
  EXPECT_DOUBLE_EQ(blk.at({2, 0, 0}), 33.0);
  EXPECT_DOUBLE_EQ(blk.at({2, 0, 31}), 64.0);

  Tensor y = segment_blocks(Tensor::ones({1, 1, 60}), 32, 16);
  EXPECT_DOUBLE_EQ(y.at({2, 0, 27}), 1.0);
  EXPECT_DOUBLE_EQ(y.at({2, 0, 28}), 0.0);  // zero padded tail
}

TEST(Blocks, OverlapAddOfOnesIsOnes) {
  for (Index L : {17, 32, 100, 1000}) {
    const Index n = block_count(L, 32, 16);
    Tensor y = overlap_add_blocks(Tensor::ones({2 * n, 3, 32}), 2, L, 16);
    ASSERT_EQ(y.shape(), (Shape{2, 3, L}));
    EXPECT_TRUE((y.data() == 1.0).all()) << L;
  }
}

TEST(Blocks, SegmentThenOverlapAddIsIdentity) {
  for (Index L : {17, 32, 100, 1000}) {
    Tensor x = random_tensor({2, 3, L}, static_cast<std::uint64_t>(L), false);
    Tensor r = overlap_add_blocks(segment_blocks(x, 32, 16), 2, L, 16);
    EXPECT_LT((r.data() - x.data()).abs().maxCoeff(), 1e-12);
  }
}

TEST(Blocks, Gradients) {
  auto x = random_tensor({2, 2, 21}, 10);
  expect_gradients([](auto& in) { return probe(segment_blocks(in[0], 8, 4)); }, {x});
  const Index n = block_count(21, 8, 4);
  auto b = random_tensor({2 * n, 2, 8}, 11);
  expect_gradients([](auto& in) { return probe(overlap_add_blocks(in[0], 2, 21, 4)); }, {b});
}

}  // namespace
}  // namespace limuse
