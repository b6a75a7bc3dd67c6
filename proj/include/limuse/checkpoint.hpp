// Copyright 2026 The limuse-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// LMSE-CKPT container.
//
//   "LMSE-CKPT" u32 version
//   config      u32 length + `key = value` lines
//   quantizers  u32 count, per layer: name, levels, alpha, beta, biases,
//               activation bits / range, frozen flag
//   tensors     u32 count, per tensor: name, dtype (0 f32, 1 packed codes +
//               bit width), u32 ndim, u32 dims, payload
//   training    u8 present, epoch, best metric, lr, Adam step and moments
//
// All integers and floats are little-endian.

#pragma once

#include <filesystem>
#include <memory>
#include <optional>

#include "limuse/train.hpp"

namespace limuse {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LoadedCheckpoint {
  std::unique_ptr<LiMuSE> model;
  std::optional<TrainState> state;
};

// Frozen quantized weights are written as packed codes; every other value
// as float32. Call LiMuSE::round_to_f32 first for a bit-exact round trip.
void save_checkpoint(const std::filesystem::path& path, LiMuSE& model,
                     const TrainState* state = nullptr);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace limuse
