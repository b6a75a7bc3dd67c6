// Copyright 2026 The limuse-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Closed-form parameter, MAC and storage accounting.
//
// Rows are per parameter tensor and are named exactly like the runtime
// parameters of LiMuSE ("<layer>.<name>"), so both can be cross-checked.
// MACs are per batch item and are attributed to the weight row.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "limuse/model.hpp"

namespace limuse {

struct AccountingRow {
  std::string layer;
  std::string name;
  std::int64_t params = 0;
  std::int64_t macs = 0;
  std::int64_t bytes = 0;
  bool quantized = false;  // stored as packed codes + quantizer metadata
};

struct AccountingReport {
  std::vector<AccountingRow> rows;
  int weight_bits = 32;
  double seconds = 0.0;

  std::int64_t total_params() const;
  std::int64_t total_macs() const;
  std::int64_t total_bytes() const;
};

// Bytes of quantizer metadata stored with each quantized weight tensor:
// alpha, beta, activation min/max, n biases and n+1 levels, 4 bytes each.
std::int64_t quantizer_metadata_bytes(int weight_bits);
// Bytes of one weight tensor stored at `bits` (32: plain float32).
std::int64_t weight_bytes(std::int64_t params, int bits);

// Full report. weight_bits applies to quantizable layers; everything else
// (decoder, biases, PReLU, normalisation) is stored at 32 bits.
AccountingReport account(const ModelConfig& cfg, double seconds = 0.0,
                         int weight_bits = 32);
std::int64_t count_params(const ModelConfig& cfg);
std::int64_t count_macs(const ModelConfig& cfg, double seconds);
std::int64_t model_size(const ModelConfig& cfg, int weight_bits);

// Instrumented counts on a live model.
std::int64_t runtime_param_count(const LiMuSE& model);
std::int64_t runtime_macs(LiMuSE& model, double seconds);

void write_csv(const AccountingReport& r, std::ostream& os);
void write_table(const AccountingReport& r, std::ostream& os);

}  // namespace limuse
