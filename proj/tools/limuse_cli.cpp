// Copyright 2026 The limuse-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// limuse: synthetic data, two-stage training, evaluation and accounting.
//
// Exit codes: 0 ok, 1 internal error, 2 usage, 3 config, 4 data, 5 numeric.

#include <cmath>
#include <cstdio>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "limuse/accounting.hpp"
#include "limuse/checkpoint.hpp"
#include "limuse/config.hpp"

namespace {

using namespace limuse;

enum Exit { kOk = 0, kInternal = 1, kUsage = 2, kConfig = 3, kData = 4, kNumeric = 5 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void print_epoch(const EpochLog& e) {
  std::fprintf(stderr, "epoch %3d  loss %9.4f  val SI-SDR %8.4f dB  lr %.3g", e.epoch,
               e.train_loss, e.val_si_sdr, e.lr);
  if (e.temperature > 1.0) std::fprintf(stderr, "  T %.0f", e.temperature);
  std::fprintf(stderr, "  %.1fs\n", e.seconds);
}

std::string resolve_data(const std::string& flag, const TrainConfig& cfg) {
  if (!flag.empty()) return flag;
  if (!cfg.data_dir.empty()) return cfg.data_dir;
  throw UsageError("no data directory: pass --data or set data_dir in the config");
}

int cmd_synth(const std::string& out, int speakers, double hours, std::uint64_t seed,
              double clip) {
  if (speakers < 10) throw UsageError("--speakers must be >= 10 (2 per held-out split)");
  if (!(hours > 0.0) || !(clip > 0.0)) throw UsageError("--hours and --clip-seconds must be positive");
  data::DatasetSpec spec;
  spec.speakers = speakers;
  spec.seed = seed;
  spec.synth.seconds = clip;
  const int total = std::max(3, static_cast<int>(std::llround(hours * 3600.0 / clip)));
  spec.validation = std::max(1, total / 10);
  spec.test = std::max(1, total / 10);
  spec.train = std::max(1, total - spec.validation - spec.test);
  data::write_dataset(spec, out);
  std::printf("wrote %d train, %d val, %d test mixtures (%d speakers, %.2f s clips) to %s\n",
              spec.train, spec.validation, spec.test, speakers, clip, out.c_str());
  return kOk;
}

int cmd_train(const std::string& config, const std::string& data_flag, const std::string& out) {
  RunConfig rc = load_run_config(config);
  const std::string dir = resolve_data(data_flag, rc.train);
  const auto train = data::load_split(dir, data::Split::kTrain);
  const auto val = data::load_split(dir, data::Split::kValidation);
  LiMuSE model(rc.model);
  TrainResult r = train_stage(model, train, val, rc.train, Stage::kFull, print_epoch);
  save_checkpoint(out, model, &r.state);
  std::printf("best epoch %d, validation SI-SDR %.4f dB, saved %s\n", r.best_epoch, r.best_val,
              out.c_str());
  return kOk;
}

int cmd_quantize(const std::string& from, const std::string& config,
                 const std::string& data_flag, const std::string& out) {
  const RunConfig rc = load_run_config(config);
  const std::string dir = resolve_data(data_flag, rc.train);
  LoadedCheckpoint ck = load_checkpoint(from);
  if (ck.model->quantized()) throw ConfigError(from + " is already quantized");
  const auto train = data::load_split(dir, data::Split::kTrain);
  const auto val = data::load_split(dir, data::Split::kValidation);
  TrainResult r = quantize_stage(*ck.model, train, val, rc.train, print_epoch);
  save_checkpoint(out, *ck.model, &r.state);
  std::printf("best QAT epoch %d, validation SI-SDR %.4f dB, saved %s\n", r.best_epoch,
              r.best_val, out.c_str());
  return kOk;
}

int cmd_eval(const std::string& ckpt, const std::string& dir, bool quantized, bool json,
             const std::string& split_name, bool no_vp, bool no_vis) {
  data::Split split = data::Split::kTest;
  if (split_name == "val") split = data::Split::kValidation;
  else if (split_name == "train") split = data::Split::kTrain;
  else if (split_name != "test") throw UsageError("--split must be train, val or test");
  LoadedCheckpoint ck = load_checkpoint(ckpt);
  if (quantized && !ck.model->quantized()) {
    throw ConfigError(ckpt + " has no quantizers; run `limuse quantize` first");
  }
  const auto set = data::load_split(dir, split);
  nn::ForwardContext ctx;
  ctx.quant = quantized ? nn::QuantMode::kHard : nn::QuantMode::kOff;
  const EvalResult r = evaluate(*ck.model, set, ctx, 8, StreamMask{!no_vp, !no_vis});
  if (json) {
    nlohmann::ordered_json j;
    j["samples"] = set.size();
    j["quantized"] = quantized;
    j["si_sdr_mean"] = r.si_sdr_s.mean;
    j["si_sdr_std"] = r.si_sdr_s.stdev;
    j["si_sdri_mean"] = r.si_sdri_s.mean;
    j["si_sdri_std"] = r.si_sdri_s.stdev;
    j["sdr_mean"] = r.sdr_s.mean;
    j["sdr_std"] = r.sdr_s.stdev;
    j["sdri_mean"] = r.sdri_s.mean;
    j["sdri_std"] = r.sdri_s.stdev;
    std::cout << j.dump(2) << "\n";
  } else {
    std::printf("%zu %s samples%s\n", set.size(), split_name.c_str(),
                quantized ? " (quantized inference)" : "");
    std::printf("  SI-SDR   %8.3f +- %.3f dB\n", r.si_sdr_s.mean, r.si_sdr_s.stdev);
    std::printf("  SI-SDRi  %8.3f +- %.3f dB\n", r.si_sdri_s.mean, r.si_sdri_s.stdev);
    std::printf("  SDR      %8.3f +- %.3f dB\n", r.sdr_s.mean, r.sdr_s.stdev);
    std::printf("  SDRi     %8.3f +- %.3f dB\n", r.sdri_s.mean, r.sdri_s.stdev);
  }
  return kOk;
}

int cmd_report(const std::string& ckpt, const std::string& config, double seconds, bool csv) {
  ModelConfig cfg;
  int bits = 32;
  if (!ckpt.empty()) {
    LoadedCheckpoint ck = load_checkpoint(ckpt);
    cfg = ck.model->config();
    if (ck.model->quantized()) bits = cfg.W_q;
  } else if (!config.empty()) {
    cfg = load_run_config(config).model;
  } else {
    throw UsageError("report needs --ckpt or --config");
  }
  const AccountingReport r = account(cfg, seconds, bits);
  if (csv) {
    write_csv(r, std::cout);
  } else {
    write_table(r, std::cout);
    const std::int64_t ref = model_size(ModelConfig::vanilla(), 32);
    std::printf("compression vs 32-bit plain TCN baseline (%.2f MB): %.1fx\n", ref / 1e6,
                static_cast<double>(ref) / static_cast<double>(r.total_bytes()));
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LiMuSE speaker extraction: data, training, quantization, evaluation"};
  app.require_subcommand(1);

  std::string out, data_dir, config, from, ckpt, split = "test";
  int speakers = 10;
  double hours = 0.1, clip = 1.0, seconds = 3.0;
  std::uint64_t seed = 1;
  bool quantized = false, json = false, csv = false, no_vp = false, no_vis = false;

  auto* synth = app.add_subcommand("synth-data", "generate a synthetic mixture dataset");
  synth->add_option("--out", out, "output directory")->required();
  synth->add_option("--speakers", speakers, "number of synthetic speakers (>= 10)");
  synth->add_option("--hours", hours, "total audio across all splits");
  synth->add_option("--seed", seed, "master seed");
  synth->add_option("--clip-seconds", clip, "length of each mixture");

  auto* train = app.add_subcommand("train", "full-precision training");
  train->add_option("--config", config, "key = value config file")->required();
  train->add_option("--data", data_dir, "dataset directory");
  train->add_option("--out", out, "checkpoint to write")->required();

  auto* quant = app.add_subcommand("quantize", "quantization-aware training and export");
  quant->add_option("--from", from, "full-precision checkpoint")->required();
  quant->add_option("--config", config, "key = value config file")->required();
  quant->add_option("--data", data_dir, "dataset directory");
  quant->add_option("--out", out, "quantized checkpoint to write")->required();

  auto* eval = app.add_subcommand("eval", "SI-SDR / SDR evaluation");
  eval->add_option("--ckpt", ckpt, "checkpoint")->required();
  eval->add_option("--data", data_dir, "dataset directory")->required();
  eval->add_flag("--quantized", quantized, "quantized inference (hard weights, 8-bit activations)");
  eval->add_flag("--json", json, "print a flat JSON object");
  eval->add_option("--split", split, "train, val or test");
  eval->add_flag("--no-voiceprint", no_vp, "zero the voiceprint stream");
  eval->add_flag("--no-visual", no_vis, "zero the visual stream");

  auto* report = app.add_subcommand("report", "parameter / MACs / model size accounting");
  report->add_option("--ckpt", ckpt, "checkpoint");
  report->add_option("--config", config, "config file (instead of a checkpoint)");
  report->add_option("--seconds", seconds, "input length for MACs");
  report->add_flag("--csv", csv, "CSV instead of a table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kUsage;
  }

  try {
    if (*synth) return cmd_synth(out, speakers, hours, seed, clip);
    if (*train) return cmd_train(config, data_dir, out);
    if (*quant) return cmd_quantize(from, config, data_dir, out);
    if (*eval) return cmd_eval(ckpt, data_dir, quantized, json, split, no_vp, no_vis);
    if (*report) return cmd_report(ckpt, config, seconds, csv);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n" << app.help();
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const data::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kData;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInternal;
  }
  return kUsage;
}
