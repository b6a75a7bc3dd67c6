// Copyright 2026 The limuse-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Separation metrics and the training objective.

#pragma once

#include <span>
#include <stdexcept>

#include "limuse/tensor.hpp"

namespace limuse {

class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Metric values are clamped to [-kMetricCapDb, kMetricCapDb]; a perfect
// estimate reports the cap instead of +inf.
inline constexpr double kMetricCapDb = 80.0;

// Scale-invariant SDR in dB (no mean removal).
double si_sdr(std::span<const double> est, std::span<const double> ref);
// Plain energy-ratio SDR, 10 log10(|s|^2 / |s - est|^2).
double sdr(std::span<const double> est, std::span<const double> ref);
double si_sdr_improvement(std::span<const double> est,
                          std::span<const double> ref,
                          std::span<const double> mix);
double sdr_improvement(std::span<const double> est, std::span<const double> ref,
                       std::span<const double> mix);

// Mean over the batch of -SI-SDR. est: B x samples (differentiable),
// ref: B x samples (constant). Rows at the cap contribute no gradient.
Tensor si_sdr_loss(const Tensor& est, const Tensor& ref);

struct Summary {
  double mean = 0.0;
  double stdev = 0.0;  // population standard deviation
};
Summary summarize(std::span<const double> values);

}  // namespace limuse
