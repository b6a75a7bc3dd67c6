// Copyright 2026 The limuse-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "limuse/layers.hpp"

#include <cmath>

namespace limuse::nn {

namespace {

Tensor uniform_tensor(const Shape& shape, double bound, Rng& rng) {
  Array a(numel_of(shape));
  for (Index i = 0; i < a.size(); ++i) a[i] = rng.uniform(-bound, bound);
  return Tensor::from(shape, std::move(a), true);
}

}  // namespace

double LayerQuant::alpha() const { return std::exp(log_alpha.item()); }
double LayerQuant::beta() const { return std::exp(log_beta.item()); }

quant::QuantizerParams LayerQuant::params(double temperature) const {
  quant::QuantizerParams q;
  q.levels = levels;
  q.biases = biases;
  q.alpha = alpha();
  q.beta = beta();
  q.temperature = temperature;
  return q;
}

Conv::Conv(std::string name, Index cin, Index cout, Index kernel,
           ConvOptions opt, bool bias, bool quantizable, Rng& rng)
    : name_(std::move(name)),
      cin_(cin),
      cout_(cout),
      k_(kernel),
      opt_(opt),
      quantizable_(quantizable) {
  if (cin % opt.groups != 0 || cout % opt.groups != 0) {
    throw DimensionError(name_ + ": channels not divisible by groups");
  }
  const Index fan_in = (cin / opt.groups) * kernel;
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  weight_ = uniform_tensor({cout, cin / opt.groups, kernel}, bound, rng);
  if (bias) bias_ = uniform_tensor({cout}, bound, rng);
}

Tensor Conv::effective_weight(const ForwardContext& ctx) const {
  if (!quant_ || ctx.quant == QuantMode::kOff || quant_->frozen) return weight_;
  if (ctx.quant == QuantMode::kSoft) {
    return quant::soft_quantize(weight_, exp(quant_->log_alpha),
                                exp(quant_->log_beta), quant_->levels,
                                quant_->biases, ctx.temperature);
  }
  return quant::ideal_quantize(weight_, quant_->params());
}

Tensor Conv::forward(const Tensor& x, const ForwardContext& ctx) {
  Tensor in = x;
  if (quant_ && ctx.quant != QuantMode::kOff) {
    in = quant::quantize_activations(x, quant_->act, ctx.training);
  }
  return conv1d(in, effective_weight(ctx), bias_, opt_);
}

void Conv::attach_quantizer(const quant::LevelSet& levels, int activation_bits,
                            std::uint64_t seed) {
  if (!quantizable_) {
    throw quant::QuantError("layer " + name_ + " is excluded from quantization");
  }
  const Array& w = weight_.data();
  quant::QuantizerParams q = quant::init_quantizer(
      std::span<const double>(w.data(), static_cast<size_t>(w.size())), levels,
      seed);
  LayerQuant lq;
  lq.levels = levels;
  lq.biases = q.biases;
  lq.log_alpha = Tensor::scalar(std::log(q.alpha), true);
  lq.log_beta = Tensor::scalar(std::log(q.beta), true);
  lq.act.bits = activation_bits;
  quant_ = std::move(lq);
}

std::vector<std::uint32_t> Conv::weight_codes() const {
  if (!quant_) throw quant::QuantError("layer " + name_ + " has no quantizer");
  if (quant_->frozen) return quant_->codes;
  const quant::QuantizerParams q = quant_->params();
  std::vector<std::uint32_t> codes(weight_.numel());
  for (Index i = 0; i < weight_.numel(); ++i) {
    codes[i] = static_cast<std::uint32_t>(quant::ideal_code(weight_.data()[i], q));
  }
  return codes;
}

void Conv::freeze_quantized() {
  if (!quant_) throw quant::QuantError("layer " + name_ + " has no quantizer");
  if (quant_->frozen) return;
  std::vector<std::uint32_t> codes = weight_codes();
  // Stored scales are float32; use the stored value so a reloaded model
  // matches this one exactly.
  const double a = static_cast<float>(quant_->alpha());
  Array& w = weight_.mutable_data();
  for (Index i = 0; i < w.size(); ++i) w[i] = a * quant_->levels.level(codes[i]);
  quant_->codes = std::move(codes);
  quant_->frozen = true;
}

void Conv::collect(ParamList& out) const {
  out.push_back({name_ + ".weight", weight_, ParamKind::kWeight});
  if (bias_.defined()) out.push_back({name_ + ".bias", bias_, ParamKind::kBias});
  if (quant_ && !quant_->frozen) {
    out.push_back({name_ + ".log_alpha", quant_->log_alpha, ParamKind::kQuantScale});
    out.push_back({name_ + ".log_beta", quant_->log_beta, ParamKind::kQuantScale});
  }
}

ConvTranspose::ConvTranspose(std::string name, Index cin, Index cout,
                             Index kernel, Index stride, Rng& rng)
    : name_(std::move(name)), stride_(stride) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(cout * kernel));
  weight_ = uniform_tensor({cin, cout, kernel}, bound, rng);
}

Tensor ConvTranspose::forward(const Tensor& x) const {
  return conv_transpose1d(x, weight_, Tensor(), stride_);
}

void ConvTranspose::collect(ParamList& out) const {
  out.push_back({name_ + ".weight", weight_, ParamKind::kWeight});
}

PReLU::PReLU(std::string name, Index channels)
    : name_(std::move(name)), slope_(Tensor::full({channels}, 0.25, true)) {}

void PReLU::collect(ParamList& out) const {
  out.push_back({name_ + ".slope", slope_, ParamKind::kPReLU});
}

Norm::Norm(std::string name, Index channels, NormMode mode)
    : name_(std::move(name)),
      mode_(mode),
      gain_(Tensor::ones({channels}, true)),
      bias_(Tensor::zeros({channels}, true)) {}

void Norm::collect(ParamList& out) const {
  out.push_back({name_ + ".gain", gain_, ParamKind::kNorm});
  out.push_back({name_ + ".bias", bias_, ParamKind::kNorm});
}

}  // namespace limuse::nn
