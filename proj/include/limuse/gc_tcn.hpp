// Copyright 2026 The limuse-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Group-communication TCN blocks and the context codec built from them.
//
// A B x C x T feature is viewed as K contiguous channel groups of width C/K.
// Because the layout is row-major, B x C x T is bit-identical to
// (B*K) x (C/K) x T, so every group-shared layer runs as one batched call.

#pragma once

#include <optional>
#include <vector>

#include "limuse/layers.hpp"

namespace limuse::nn {

// Transform-average-concatenate exchange between groups, one parameter set
// shared by all groups:
//   f_i = PReLU(FC1 g_i), fbar = mean_i f_i, fhat = PReLU(FC2 fbar),
//   out_i = g_i + PReLU(FC3 [f_i; fhat]).
class Tac {
 public:
  Tac() = default;
  Tac(const std::string& name, Index width, Index hidden, Rng& rng);

  // g: (B*K) x width x T.
  Tensor forward(const Tensor& g, Index batch, Index groups,
                 const ForwardContext& ctx);
  void collect(ParamList& out) const;
  std::vector<Conv*> convs() { return {&fc1_, &fc2_, &fc3_}; }

  Index width() const { return width_; }
  Index hidden() const { return hidden_; }

 private:
  Index width_ = 0, hidden_ = 0;
  Conv fc1_, fc2_, fc3_;
  PReLU act1_, act2_, act3_;
};

// Depthwise-separable dilated TCN block with a residual connection:
// 1x1 -> PReLU -> norm -> depthwise(P, d) -> PReLU -> norm -> 1x1.
class TcnBlock {
 public:
  TcnBlock() = default;
  TcnBlock(const std::string& name, Index width, Index hidden, Index kernel,
           Index dilation, bool causal, Rng& rng);

  Tensor forward(const Tensor& x, const ForwardContext& ctx);
  void collect(ParamList& out) const;
  std::vector<Conv*> convs() { return {&in_, &depthwise_, &out_}; }

 private:
  Conv in_, depthwise_, out_;
  PReLU act1_, act2_;
  Norm norm1_, norm2_;
};

struct GcTcnOptions {
  Index channels = 0;
  Index groups = 1;
  bool group_comm = true;  // false: plain TCN block at full width
  Index kernel = 3;
  Index dilation = 1;
  bool causal = false;
};

// GC-equipped TCN block: split into groups, TAC, shared TCN, regroup.
class GcTcnBlock {
 public:
  GcTcnBlock() = default;
  GcTcnBlock(const std::string& name, const GcTcnOptions& opt, Rng& rng);

  // x: B x C x T -> B x C x T.
  Tensor forward(const Tensor& x, const ForwardContext& ctx);
  void collect(ParamList& out) const;
  std::vector<Conv*> convs();

  const GcTcnOptions& options() const { return opt_; }
  Tac* tac() { return tac_ ? &*tac_ : nullptr; }
  TcnBlock& tcn() { return tcn_; }

  // Hidden widths: TAC 3*(C/K), TCN bottleneck 2*(C/K).
  static Index tac_hidden(Index group_width) { return 3 * group_width; }
  static Index tcn_hidden(Index group_width) { return 2 * group_width; }

 private:
  GcTcnOptions opt_;
  std::optional<Tac> tac_;
  TcnBlock tcn_;
};

// Result of the context encoder.
struct ContextEncoding {
  Tensor summary;  // B x C x nblk, mean of each processed block
  Tensor blocks;   // (B*nblk) x C x S, the raw (unprocessed) blocks
  Index batch = 0;
  Index length = 0;  // frames before padding
};

// Context codec: 50%-overlap blocks of S frames, summarised by a GC-TCN
// stack + mean, decoded by broadcast-add + GC-TCN stack + overlap-add.
class ContextCodec {
 public:
  ContextCodec() = default;
  // encoder_channels: width of the encoded stream; decoder_channels: width
  // of the blocks handed to decode().
  ContextCodec(const std::string& name, Index context, Index encoder_channels,
               Index decoder_channels, Index groups, bool group_comm,
               Index depth, Index kernel, bool causal, Rng& rng);

  Index context() const { return context_; }
  Index hop() const { return context_ / 2; }

  ContextEncoding encode(const Tensor& h, const ForwardContext& ctx);
  // Blocks of an auxiliary stream on the same grid as encode().
  Tensor segment(const Tensor& h) const;
  // Mean over each block, B x C x nblk.
  Tensor summarize(const Tensor& blocks, Index batch) const;
  // processed: B x C x nblk; blocks: (B*nblk) x C x S.
  // In causal mode block i receives processed[i - 2], the newest summary
  // whose frames all precede block i.
  Tensor decode(const Tensor& processed, const Tensor& blocks, Index batch,
                Index length, const ForwardContext& ctx);

  void collect(ParamList& out) const;
  std::vector<Conv*> convs();
  std::vector<GcTcnBlock>& encoder_stack() { return enc_; }
  std::vector<GcTcnBlock>& decoder_stack() { return dec_; }

 private:
  Index context_ = 32;
  bool causal_ = false;
  std::vector<GcTcnBlock> enc_, dec_;
};

}  // namespace limuse::nn
