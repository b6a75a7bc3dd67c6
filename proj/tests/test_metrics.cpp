// Copyright 2026 The limuse-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "limuse/metrics.hpp"
#include "test_util.hpp"

namespace limuse {
namespace {

using testing::expect_gradients;
using testing::random_tensor;

std::vector<double> noise(size_t n, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = scale * rng.normal();
  return v;
}

TEST(SiSdr, HandCase) {
  const std::vector<double> ref = {1, 0}, est = {1, 1};
  EXPECT_NEAR(si_sdr(est, ref), 0.0, 1e-9);
}

TEST(SiSdr, PerfectEstimateHitsCap) {
  const auto ref = noise(100, 1);
  std::vector<double> twice(ref);
  for (auto& x : twice) x *= 2.0;
  EXPECT_DOUBLE_EQ(si_sdr(ref, ref), kMetricCapDb);
  EXPECT_DOUBLE_EQ(si_sdr(twice, ref), kMetricCapDb);
  const std::vector<double> z(100, 0.0);
  EXPECT_DOUBLE_EQ(si_sdr(z, ref), -kMetricCapDb);
}

TEST(SiSdr, ScaleInvariant) {
  const auto ref = noise(400, 2);
  auto est = noise(400, 3, 0.7);
  for (size_t i = 0; i < est.size(); ++i) est[i] += ref[i];
  const double base = si_sdr(est, ref);
  for (double a : {0.1, 1.0, 10.0, -3.0}) {
    std::vector<double> s(est);
    for (auto& x : s) x *= a;
    EXPECT_NEAR(si_sdr(s, ref), base, 1e-9) << a;
  }
}

TEST(SiSdr, Errors) {
  const std::vector<double> z = {0, 0}, a = {1, 2}, b = {1};
  EXPECT_THROW(si_sdr(a, z), MetricError);
  EXPECT_THROW(si_sdr(b, a), MetricError);
}

TEST(Improvement, EstimateEqualsMixIsZero) {
  const auto ref = noise(300, 4);
  auto mix = noise(300, 5);
  for (size_t i = 0; i < mix.size(); ++i) mix[i] += ref[i];
  EXPECT_EQ(si_sdr_improvement(mix, ref, mix), 0.0);
  EXPECT_EQ(sdr_improvement(mix, ref, mix), 0.0);
}

TEST(Improvement, HandComputed) {
  // mix = [1, 1] vs ref [1, 0]: 0 dB. est = [1, 0.5]: target 1, noise 0.25.
  const std::vector<double> ref = {1, 0}, mix = {1, 1}, est = {1, 0.5};
  EXPECT_NEAR(si_sdr_improvement(est, ref, mix), 10 * std::log10(4.0), 1e-12);
  // SDR: |s|^2 / |s - est|^2 = 1 / 0.25 vs 1 / 1.
  EXPECT_NEAR(sdr_improvement(est, ref, mix), 10 * std::log10(4.0), 1e-12);
  // Scaling the estimate changes SDR but not SI-SDR improvement.
  const std::vector<double> est2 = {3, 1.5};
  EXPECT_NEAR(si_sdr_improvement(est2, ref, mix), 10 * std::log10(4.0), 1e-12);
}

TEST(Sdr, PlainEnergyRatio) {
  const std::vector<double> ref = {3, 4}, est = {3, 3};
  EXPECT_NEAR(sdr(est, ref), 10 * std::log10(25.0), 1e-12);
}

TEST(Loss, MatchesMetric) {
  Tensor ref = random_tensor({3, 50}, 6, false);
  Tensor est = add(ref, random_tensor({3, 50}, 7, false, 0.5));
  double want = 0.0;
  for (Index r = 0; r < 3; ++r) {
    std::span<const double> e(est.data().data() + r * 50, 50);
    std::span<const double> s(ref.data().data() + r * 50, 50);
    want -= si_sdr(e, s) / 3.0;
  }
  EXPECT_NEAR(si_sdr_loss(est, ref).item(), want, 1e-10);
}

TEST(Loss, Gradient) {
  Tensor ref = random_tensor({2, 30}, 8, false);
  Tensor est = add(ref, random_tensor({2, 30}, 9, false));
  est = Tensor::from(est.shape(), est.data(), true);
  expect_gradients([&ref](auto& in) { return si_sdr_loss(in[0], ref); }, {est}, 1e-6);
}

TEST(Loss, DescentImproves) {
  Tensor ref = random_tensor({1, 64}, 10, false);
  Tensor est = random_tensor({1, 64}, 11, false);
  double first = 0.0, last = 0.0;
  for (int step = 0; step < 50; ++step) {
    Tensor e = Tensor::from(est.shape(), est.data(), true);
    Tensor l = si_sdr_loss(e, ref);
    if (step == 0) first = l.item();
    last = l.item();
    l.backward();
    est = Tensor::from(est.shape(), est.data() - 0.05 * e.grad());
  }
  EXPECT_LT(last, first - 5.0);
}

TEST(Summary, MeanAndStd) {
  const std::vector<double> v = {1, 2, 3, 4};
  const Summary s = summarize(v);
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_NEAR(s.stdev, std::sqrt(1.25), 1e-15);
}

}  // namespace
}  // namespace limuse
