// Copyright 2026 The limuse-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Parameterised layers shared by every block of the network.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "limuse/ops.hpp"
#include "limuse/quantization.hpp"
#include "limuse/rng.hpp"

namespace limuse::nn {

enum class QuantMode {
  kOff,   // full-precision weights and activations
  kSoft,  // sigmoid-relaxed weights, quantized activations (training)
  kHard,  // unit-step weights, quantized activations (inference)
};

struct ForwardContext {
  QuantMode quant = QuantMode::kOff;
  bool training = false;
  double temperature = 1.0;
};

enum class ParamKind { kWeight, kBias, kPReLU, kNorm, kQuantScale };

struct Param {
  std::string name;
  Tensor tensor;  // shares storage with the owning layer
  ParamKind kind;
};
using ParamList = std::vector<Param>;

// Quantizer state attached to one convolution / fully connected layer.
struct LayerQuant {
  quant::LevelSet levels;
  std::vector<double> biases;
  Tensor log_alpha;  // scalar, alpha = exp(log_alpha)
  Tensor log_beta;   // scalar, beta = exp(log_beta)
  quant::ActivationQuantizer act;
  // Set once the weights have been replaced by their quantized values
  // (exported or loaded inference model).
  bool frozen = false;
  std::vector<std::uint32_t> codes;  // level index per weight once frozen

  double alpha() const;
  double beta() const;
  quant::QuantizerParams params(double temperature = 1.0) const;
};

// 1-D convolution; a fully connected layer is the k = 1 case applied per
// time step. Weight layout Cout x (Cin/groups) x k.
class Conv {
 public:
  Conv() = default;
  Conv(std::string name, Index cin, Index cout, Index kernel, ConvOptions opt,
       bool bias, bool quantizable, Rng& rng);

  Tensor forward(const Tensor& x, const ForwardContext& ctx);
  // Weight actually used by forward() under `ctx`.
  Tensor effective_weight(const ForwardContext& ctx) const;

  // K-means initialisation of the quantizer from the current weights.
  void attach_quantizer(const quant::LevelSet& levels, int activation_bits,
                        std::uint64_t seed);
  // Replace the weights by their unit-step quantized values.
  void freeze_quantized();
  // Integer level index per weight (requires a quantizer).
  std::vector<std::uint32_t> weight_codes() const;

  void collect(ParamList& out) const;

  const std::string& name() const { return name_; }
  Index in_channels() const { return cin_; }
  Index out_channels() const { return cout_; }
  Index kernel() const { return k_; }
  const ConvOptions& options() const { return opt_; }
  bool quantizable() const { return quantizable_; }
  bool has_bias() const { return bias_.defined(); }

  Tensor& weight() { return weight_; }
  const Tensor& weight() const { return weight_; }
  Tensor& bias() { return bias_; }
  const Tensor& bias() const { return bias_; }
  std::optional<LayerQuant>& quantizer() { return quant_; }
  const std::optional<LayerQuant>& quantizer() const { return quant_; }

 private:
  std::string name_;
  Index cin_ = 0, cout_ = 0, k_ = 0;
  ConvOptions opt_;
  bool quantizable_ = false;
  Tensor weight_, bias_;
  std::optional<LayerQuant> quant_;
};

// Transposed convolution used by the waveform decoder; never quantized.
class ConvTranspose {
 public:
  ConvTranspose() = default;
  ConvTranspose(std::string name, Index cin, Index cout, Index kernel,
                Index stride, Rng& rng);
  Tensor forward(const Tensor& x) const;
  void collect(ParamList& out) const;

  const std::string& name() const { return name_; }
  Index stride() const { return stride_; }
  Tensor& weight() { return weight_; }
  const Tensor& weight() const { return weight_; }

 private:
  std::string name_;
  Index stride_ = 1;
  Tensor weight_;
};

class PReLU {
 public:
  PReLU() = default;
  PReLU(std::string name, Index channels);
  Tensor forward(const Tensor& x) const { return prelu(x, slope_); }
  void collect(ParamList& out) const;
  Tensor& slope() { return slope_; }

 private:
  std::string name_;
  Tensor slope_;
};

class Norm {
 public:
  Norm() = default;
  Norm(std::string name, Index channels, NormMode mode);
  Tensor forward(const Tensor& x) const {
    return layer_norm(x, mode_, gain_, bias_);
  }
  void collect(ParamList& out) const;
  NormMode mode() const { return mode_; }

 private:
  std::string name_;
  NormMode mode_ = NormMode::kGlobal;
  Tensor gain_, bias_;
};

}  // namespace limuse::nn
