// Copyright 2026 The limuse-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "limuse/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "limuse/rng.hpp"

namespace limuse {

namespace {

Index parse_index(const std::string& k, const std::string& v) {
  try {
    size_t pos = 0;
    const long long x = std::stoll(v, &pos);
    if (pos == v.size()) return x;
  } catch (const std::exception&) {
  }
  throw ConfigError(k + ": expected an integer, got '" + v + "'");
}

double parse_real(const std::string& k, const std::string& v) {
  try {
    size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos == v.size()) return x;
  } catch (const std::exception&) {
  }
  throw ConfigError(k + ": expected a number, got '" + v + "'");
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

// Parameter values and activation ranges of the best epoch so far.
struct Snapshot {
  std::vector<Array> values;
  std::vector<quant::ActivationQuantizer> act;

  void take(const nn::ParamList& params, LiMuSE& model) {
    values.clear();
    for (const auto& p : params) values.push_back(p.tensor.data());
    act.clear();
    for (nn::Conv* c : model.quantizable_layers()) {
      act.push_back(c->quantizer() ? c->quantizer()->act : quant::ActivationQuantizer{});
    }
  }
  void restore(const nn::ParamList& params, LiMuSE& model) const {
    if (values.empty()) return;
    for (size_t i = 0; i < params.size(); ++i) {
      Tensor t = params[i].tensor;
      t.mutable_data() = values[i];
    }
    size_t i = 0;
    for (nn::Conv* c : model.quantizable_layers()) {
      if (c->quantizer()) c->quantizer()->act = act[i];
      ++i;
    }
  }
};

}  // namespace

void TrainConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  need(lr > 0.0, "lr must be positive");
  need(epochs >= 1, "epochs must be >= 1");
  need(patience_halve >= 1, "patience_halve must be >= 1");
  need(patience_stop >= patience_halve, "patience_stop must be >= patience_halve");
  need(clip_norm > 0.0, "clip_norm must be positive");
  need(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0,
       "Adam betas must be in [0, 1)");
  need(eps > 0.0, "adam_eps must be positive");
  need(batch_size >= 1, "batch_size must be >= 1");
  need(time_budget_s >= 0.0, "time_budget_s must be >= 0");
}

std::map<std::string, std::string> TrainConfig::to_map() const {
  return {{"lr", fmt(lr)},
          {"epochs", std::to_string(epochs)},
          {"patience_halve", std::to_string(patience_halve)},
          {"patience_stop", std::to_string(patience_stop)},
          {"clip_norm", fmt(clip_norm)},
          {"adam_beta1", fmt(beta1)},
          {"adam_beta2", fmt(beta2)},
          {"adam_eps", fmt(eps)},
          {"batch_size", std::to_string(batch_size)},
          {"seed", std::to_string(seed)},
          {"time_budget_s", fmt(time_budget_s)},
          {"verbose", verbose ? "true" : "false"},
          {"data_dir", data_dir}};
}

std::vector<std::string> TrainConfig::apply(const std::map<std::string, std::string>& kv) {
  std::vector<std::string> unknown;
  for (const auto& [k, v] : kv) {
    if (k == "lr") lr = parse_real(k, v);
    else if (k == "epochs") epochs = static_cast<int>(parse_index(k, v));
    else if (k == "patience_halve") patience_halve = static_cast<int>(parse_index(k, v));
    else if (k == "patience_stop") patience_stop = static_cast<int>(parse_index(k, v));
    else if (k == "clip_norm") clip_norm = parse_real(k, v);
    else if (k == "adam_beta1") beta1 = parse_real(k, v);
    else if (k == "adam_beta2") beta2 = parse_real(k, v);
    else if (k == "adam_eps") eps = parse_real(k, v);
    else if (k == "batch_size") batch_size = static_cast<int>(parse_index(k, v));
    else if (k == "seed") seed = static_cast<std::uint64_t>(parse_index(k, v));
    else if (k == "time_budget_s") time_budget_s = parse_real(k, v);
    else if (k == "data_dir") data_dir = v;
    else if (k == "verbose") {
      if (v == "true" || v == "1") verbose = true;
      else if (v == "false" || v == "0") verbose = false;
      else throw ConfigError("verbose: expected a boolean, got '" + v + "'");
    } else {
      unknown.push_back(k);
    }
  }
  return unknown;
}

Adam::Adam(nn::ParamList params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    moments_.push_back({Array::Zero(p.tensor.numel()), Array::Zero(p.tensor.numel())});
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor p = params_[i].tensor;
    if (!p.has_grad()) continue;
    const Array& g = p.grad();
    Moments& m = moments_[i];
    m.m = b1_ * m.m + (1.0 - b1_) * g;
    m.v = b2_ * m.v + (1.0 - b2_) * g.square();
    p.mutable_data() -= lr_ * (m.m / c1) / ((m.v / c2).sqrt() + eps_);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
}

std::map<std::string, Adam::Moments> Adam::state() const {
  std::map<std::string, Moments> s;
  for (size_t i = 0; i < params_.size(); ++i) s[params_[i].name] = moments_[i];
  return s;
}

void Adam::load_state(const std::map<std::string, Moments>& s, std::int64_t steps) {
  for (size_t i = 0; i < params_.size(); ++i) {
    auto it = s.find(params_[i].name);
    if (it == s.end()) continue;
    if (it->second.m.size() != params_[i].tensor.numel()) {
      throw NumericError("optimizer state for " + params_[i].name + " has the wrong size");
    }
    moments_[i] = it->second;
  }
  t_ = steps;
}

double clip_grad_norm(const nn::ParamList& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (p.tensor.has_grad()) sq += p.tensor.grad().square().sum();
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && std::isfinite(norm)) {
    const double s = max_norm / norm;
    for (const auto& p : params) {
      if (!p.tensor.has_grad()) continue;
      Tensor t = p.tensor;
      t.node()->grad *= s;
    }
  }
  return norm;
}

PlateauSchedule::Decision PlateauSchedule::observe(double metric) {
  Decision d;
  if (metric > best_) {
    best_ = metric;
    bad_ = 0;
    d.improved = true;
    return d;
  }
  ++bad_;
  d.halve = bad_ % halve_ == 0;
  d.stop = bad_ >= stop_;
  return d;
}

std::string first_nonfinite(const nn::ParamList& params) {
  for (const auto& p : params) {
    if (!p.tensor.data().isFinite().all()) return p.name + " (value)";
  }
  for (const auto& p : params) {
    if (p.tensor.has_grad() && !p.tensor.grad().isFinite().all()) return p.name + " (gradient)";
  }
  return "";
}

nn::ForwardContext eval_context(const LiMuSE& model) {
  nn::ForwardContext ctx;
  ctx.quant = model.quantized() ? nn::QuantMode::kHard : nn::QuantMode::kOff;
  ctx.training = false;
  return ctx;
}

EvalResult evaluate(LiMuSE& model, const std::vector<data::MixtureSample>& set,
                    const nn::ForwardContext& ctx, int batch_size, StreamMask streams) {
  EvalResult r;
  NoGradGuard ng;
  std::vector<std::size_t> order(set.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t first = 0; first < set.size(); first += batch_size) {
    const std::size_t count = std::min<std::size_t>(batch_size, set.size() - first);
    data::Batch b = data::make_batch(set, order, first, count);
    if (!streams.voiceprint) b.voiceprint = Tensor::zeros(b.voiceprint.shape());
    if (!streams.visual) b.visual = Tensor::zeros(b.visual.shape());
    const ModelOutput out = model.forward(b.mixture, b.voiceprint, b.visual, ctx);
    const Index n = b.target.dim(1);
    for (std::size_t i = 0; i < count; ++i) {
      const data::MixtureSample& s = set[first + i];
      std::span<const double> est(out.estimate.data().data() + i * n, n);
      std::span<const double> ref(s.target.data(), n);
      std::span<const double> mix(s.mixture.data(), n);  // channel 0
      r.si_sdr.push_back(si_sdr(est, ref));
      r.si_sdri.push_back(si_sdr_improvement(est, ref, mix));
      r.sdr.push_back(sdr(est, ref));
      r.sdri.push_back(sdr_improvement(est, ref, mix));
    }
  }
  r.si_sdr_s = summarize(r.si_sdr);
  r.si_sdri_s = summarize(r.si_sdri);
  r.sdr_s = summarize(r.sdr);
  r.sdri_s = summarize(r.sdri);
  return r;
}

namespace {

// Every step allocates and frees the same multi-megabyte activations. glibc
// would otherwise mmap and unmap them each time, paying page faults on every
// touch.
void keep_large_blocks() {
#if defined(__GLIBC__)
  static const bool once = [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return true;
  }();
  (void)once;
#endif
}

}  // namespace

TrainResult train_stage(LiMuSE& model, const std::vector<data::MixtureSample>& train,
                        const std::vector<data::MixtureSample>& val,
                        const TrainConfig& cfg, Stage stage,
                        const EpochCallback& on_epoch) {
  cfg.validate();
  keep_large_blocks();
  if (train.empty() || val.empty()) throw data::DataError("training needs train and validation samples");
  if (stage == Stage::kQat && !model.quantized()) {
    throw quant::QuantError("QAT stage needs quantizers attached to the model");
  }
  const nn::ParamList params = model.parameters();
  Adam adam(params, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
  PlateauSchedule sched(cfg.patience_halve, cfg.patience_stop);
  const quant::TemperatureSchedule temp{model.config().T0};
  Snapshot best;
  TrainResult result;
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    nn::ForwardContext ctx;
    ctx.training = true;
    if (stage == Stage::kQat) {
      ctx.quant = nn::QuantMode::kSoft;
      ctx.temperature = temp.at(epoch);
    }
    // Seeded Fisher-Yates shuffle.
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(Rng::derive(cfg.seed, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.below(i)]);
    }

    double loss_sum = 0.0;
    int steps = 0;
    for (std::size_t first = 0; first < order.size(); first += bs) {
      const std::size_t count = std::min(bs, order.size() - first);
      const data::Batch b = data::make_batch(train, order, first, count);
      adam.zero_grad();
      const ModelOutput out = model.forward(b.mixture, b.voiceprint, b.visual, ctx);
      Tensor loss = si_sdr_loss(out.estimate, b.target);
      const double lv = loss.item();
      if (!std::isfinite(lv)) {
        const std::string where = first_nonfinite(params);
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(steps + 1) + "; first non-finite parameter: " +
                           (where.empty() ? "none (activations overflowed)" : where));
      }
      loss.backward();
      const double norm = clip_grad_norm(params, cfg.clip_norm);
      if (!std::isfinite(norm)) {
        throw NumericError("non-finite gradient at epoch " + std::to_string(epoch) +
                           ", step " + std::to_string(steps + 1) + " in " +
                           first_nonfinite(params));
      }
      adam.step();
      loss_sum += lv;
      ++steps;
    }

    const EvalResult ev = evaluate(model, val, eval_context(model), 8);
    EpochLog log;
    log.epoch = epoch;
    log.train_loss = loss_sum / steps;
    log.val_si_sdr = ev.si_sdr_s.mean;
    log.lr = adam.lr();
    log.temperature = ctx.temperature;
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(log);
    if (cfg.verbose) {
      std::fprintf(stderr, "epoch %3d  loss %9.4f  val SI-SDR %8.4f dB  lr %.3g  T %.0f  %.1fs\n",
                   epoch, log.train_loss, log.val_si_sdr, log.lr, log.temperature, log.seconds);
    }
    if (on_epoch) on_epoch(log);

    const PlateauSchedule::Decision d = sched.observe(log.val_si_sdr);
    if (d.improved) {
      best.take(params, model);
      result.best_epoch = epoch;
      result.best_val = log.val_si_sdr;
    }
    result.state.epoch = epoch;
    if (d.stop) break;
    if (d.halve) adam.set_lr(adam.lr() * 0.5);
    // Stop when another epoch of the same length would overrun the budget.
    const double last = log.seconds - (result.history.size() > 1
                                           ? result.history[result.history.size() - 2].seconds
                                           : 0.0);
    if (cfg.time_budget_s > 0.0 && log.seconds + last > cfg.time_budget_s) break;
  }

  best.restore(params, model);
  model.round_to_f32();
  result.state.best_metric = result.best_val;
  result.state.lr = adam.lr();
  result.state.bad_epochs = sched.bad_epochs();
  result.state.stage = stage == Stage::kQat ? "qat" : "full";
  result.state.adam_steps = adam.steps();
  result.state.moments = adam.state();
  return result;
}

TrainResult quantize_stage(LiMuSE& model, const std::vector<data::MixtureSample>& train,
                           const std::vector<data::MixtureSample>& val,
                           const TrainConfig& cfg, const EpochCallback& on_epoch) {
  if (!model.quantized()) model.attach_quantizers();
  TrainResult r = train_stage(model, train, val, cfg, Stage::kQat, on_epoch);
  model.freeze_quantized();
  return r;
}

}  // namespace limuse
