// Copyright 2026 The limuse-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Optimiser, schedules and the two training stages.

#pragma once

#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "limuse/data.hpp"
#include "limuse/metrics.hpp"
#include "limuse/model.hpp"

namespace limuse {

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Stage { kFull, kQat };

struct TrainConfig {
  double lr = 1e-3;
  int epochs = 50;
  int patience_halve = 4;
  int patience_stop = 6;
  double clip_norm = 5.0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  int batch_size = 4;
  std::uint64_t seed = 1;
  double time_budget_s = 0.0;  // 0: unlimited; stops before an epoch that would overrun
  bool verbose = false;
  std::string data_dir;        // used when the CLI gets no --data

  void validate() const;
  std::map<std::string, std::string> to_map() const;
  std::vector<std::string> apply(const std::map<std::string, std::string>& kv);
};

class Adam {
 public:
  struct Moments {
    Array m, v;
  };

  Adam(nn::ParamList params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);
  void step();
  void zero_grad();
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  std::int64_t steps() const { return t_; }

  std::map<std::string, Moments> state() const;
  void load_state(const std::map<std::string, Moments>& s, std::int64_t steps);

 private:
  nn::ParamList params_;
  std::vector<Moments> moments_;
  double lr_, b1_, b2_, eps_;
  std::int64_t t_ = 0;
};

// Global L2 clipping; returns the norm before clipping.
double clip_grad_norm(const nn::ParamList& params, double max_norm);

// Halve the learning rate after every `halve` consecutive epochs without a
// strict improvement; stop after `stop` such epochs.
class PlateauSchedule {
 public:
  struct Decision {
    bool improved = false;
    bool halve = false;
    bool stop = false;
  };
  PlateauSchedule(int halve, int stop) : halve_(halve), stop_(stop) {}
  Decision observe(double metric);
  double best() const { return best_; }
  int bad_epochs() const { return bad_; }
  void restore(double best, int bad) {
    best_ = best;
    bad_ = bad;
  }

 private:
  int halve_, stop_;
  double best_ = -std::numeric_limits<double>::infinity();
  int bad_ = 0;
};

struct TrainState {
  int epoch = 0;
  double best_metric = -std::numeric_limits<double>::infinity();
  double lr = 1e-3;
  int bad_epochs = 0;
  std::string stage = "full";
  std::int64_t adam_steps = 0;
  std::map<std::string, Adam::Moments> moments;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_si_sdr = 0.0;
  double lr = 0.0;
  double temperature = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> history;
  int best_epoch = 0;
  double best_val = -std::numeric_limits<double>::infinity();
  TrainState state;
};

struct EvalResult {
  std::vector<double> si_sdr, si_sdri, sdr, sdri;
  Summary si_sdr_s, si_sdri_s, sdr_s, sdri_s;
};

// Which cue streams reach the model during evaluation.
struct StreamMask {
  bool voiceprint = true;
  bool visual = true;
};

nn::ForwardContext eval_context(const LiMuSE& model);

EvalResult evaluate(LiMuSE& model, const std::vector<data::MixtureSample>& set,
                    const nn::ForwardContext& ctx, int batch_size = 8,
                    StreamMask streams = {});

using EpochCallback = std::function<void(const EpochLog&)>;

// One stage of training. Keeps the parameters of the best validation epoch
// (ties go to the earlier epoch) and restores them before returning.
TrainResult train_stage(LiMuSE& model, const std::vector<data::MixtureSample>& train,
                        const std::vector<data::MixtureSample>& val,
                        const TrainConfig& cfg, Stage stage,
                        const EpochCallback& on_epoch = {});

// Attach k-means initialised quantizers, run QAT, then freeze the quantized
// weights for export.
TrainResult quantize_stage(LiMuSE& model, const std::vector<data::MixtureSample>& train,
                           const std::vector<data::MixtureSample>& val,
                           const TrainConfig& cfg, const EpochCallback& on_epoch = {});

// Name of the first parameter (in model order) whose value or gradient is
// not finite, or an empty string.
std::string first_nonfinite(const nn::ParamList& params);

}  // namespace limuse
