// Copyright 2026 The limuse-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Weight quantization with a sigmoid relaxation of a sum of unit steps, and
// min-max linear activation quantization with a clipped straight-through
// gradient.

#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "limuse/tensor.hpp"

namespace limuse::quant {

class QuantError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Ordered integer levels gamma_1 < ... < gamma_{n+1}. Step i (0-based) is
// gamma_{i+1} - gamma_i; offset is half the total span.
class LevelSet {
 public:
  LevelSet() = default;
  explicit LevelSet(std::vector<int> gamma);
  // {-(2^(b-1)-1), ..., 2^(b-1)-1}; 3 bits gives {-3..3}.
  static LevelSet symmetric(int bits);

  const std::vector<int>& gamma() const { return gamma_; }
  int steps() const { return static_cast<int>(gamma_.size()) - 1; }
  int size() const { return static_cast<int>(gamma_.size()); }
  double step(int i) const { return gamma_[i + 1] - gamma_[i]; }
  double offset() const { return offset_; }
  // Output of the unit-step sum when exactly `code` steps are on.
  double level(int code) const { return prefix_[code] - offset_; }

 private:
  std::vector<int> gamma_;
  std::vector<double> prefix_;
  double offset_ = 0.0;
};

struct QuantizerParams {
  LevelSet levels;
  std::vector<double> biases;  // n ascending entries
  double alpha = 1.0;
  double beta = 1.0;
  double temperature = 1.0;
};

// Number of unit steps switched on for input x (an index into levels).
int ideal_code(double x, const QuantizerParams& q);
// alpha * (sum_i s_i * A(beta*x - b_i) - o).
double ideal_quantize(double x, const QuantizerParams& q);
Tensor ideal_quantize(const Tensor& x, const QuantizerParams& q);

// alpha * (sum_i s_i * sigmoid(T*(beta*x - b_i)) - o), differentiable in x,
// alpha and beta (both scalar tensors).
Tensor soft_quantize(const Tensor& x, const Tensor& alpha, const Tensor& beta,
                     const LevelSet& levels, const std::vector<double>& biases,
                     double temperature);
Tensor soft_quantize(const Tensor& x, const QuantizerParams& q);

// 1-D k-means (k-means++ seeding, at most 100 Lloyd iterations, tol 1e-8).
// Returns k ascending centers.
std::vector<double> kmeans_centers(std::span<const double> values, int k,
                                   std::uint64_t seed);

// K-means on the weights with n+1 clusters; biases are the midpoints of
// consecutive centers, beta = 1, alpha maps the level span onto the center
// span.
QuantizerParams init_quantizer(std::span<const double> weights,
                               const LevelSet& levels, std::uint64_t seed = 0);

// Min-max linear activation quantizer state.
struct ActivationQuantizer {
  int bits = 8;
  double momentum = 0.9;
  double running_min = 0.0;
  double running_max = 0.0;
  bool initialized = false;
};

// round-half-to-even((x - lo) / s), clamped to [0, 2^bits - 1].
std::int64_t activation_code(double x, double lo, double hi, int bits);

// Forward: dequantized lo + s * code. Training uses the batch range and folds
// it into the running estimate; inference uses the running estimate. A
// degenerate range passes the input through unchanged. Backward passes the
// gradient where lo <= x <= hi and zeroes it elsewhere.
Tensor quantize_activations(const Tensor& x, ActivationQuantizer& aq,
                            bool training);

// Little-endian bit stream: code i occupies bits [i*bits, (i+1)*bits),
// least significant bit first; the tail byte is zero padded.
std::vector<std::uint8_t> pack_weights(std::span<const std::uint32_t> codes,
                                       int bits);
std::vector<std::uint32_t> unpack_weights(std::span<const std::uint8_t> bytes,
                                          int bits, std::size_t count);

// Temperature at a 1-based epoch: increment * epoch.
struct TemperatureSchedule {
  double increment = 5.0;
  double at(int epoch) const;
};

}  // namespace limuse::quant
