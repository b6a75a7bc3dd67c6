// Copyright 2026 The limuse-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "limuse/gc_tcn.hpp"

namespace limuse::nn {

namespace {
ConvOptions pointwise() { return ConvOptions{}; }
}  // namespace

Tac::Tac(const std::string& name, Index width, Index hidden, Rng& rng)
    : width_(width),
      hidden_(hidden),
      fc1_(name + ".fc1", width, hidden, 1, pointwise(), true, true, rng),
      fc2_(name + ".fc2", hidden, hidden, 1, pointwise(), true, true, rng),
      fc3_(name + ".fc3", 2 * hidden, width, 1, pointwise(), true, true, rng),
      act1_(name + ".act1", hidden),
      act2_(name + ".act2", hidden),
      act3_(name + ".act3", width) {}

Tensor Tac::forward(const Tensor& g, Index batch, Index groups,
                    const ForwardContext& ctx) {
  if (g.ndim() != 3 || g.dim(1) != width_ || g.dim(0) != batch * groups) {
    throw DimensionError("tac: expected (" + std::to_string(batch * groups) +
                         ")x" + std::to_string(width_) + "xT groups, got " +
                         shape_str(g.shape()));
  }
  const Index t = g.dim(2);
  Tensor f = act1_.forward(fc1_.forward(g, ctx));
  Tensor fbar = mean(reshape(f, {batch, groups, hidden_, t}), 1);
  Tensor fhat = act2_.forward(fc2_.forward(fbar, ctx));
  Tensor fhat_all = reshape(
      broadcast_to(reshape(fhat, {batch, 1, hidden_, t}), {batch, groups, hidden_, t}),
      {batch * groups, hidden_, t});
  Tensor mixed = act3_.forward(fc3_.forward(concat({f, fhat_all}, 1), ctx));
  return g + mixed;
}

void Tac::collect(ParamList& out) const {
  fc1_.collect(out);
  act1_.collect(out);
  fc2_.collect(out);
  act2_.collect(out);
  fc3_.collect(out);
  act3_.collect(out);
}

TcnBlock::TcnBlock(const std::string& name, Index width, Index hidden,
                   Index kernel, Index dilation, bool causal, Rng& rng) {
  ConvOptions dw;
  dw.dilation = dilation;
  dw.groups = hidden;
  dw.pad = causal ? PadMode::kCausal : PadMode::kSame;
  const NormMode nm = causal ? NormMode::kCumulative : NormMode::kGlobal;
  in_ = Conv(name + ".in", width, hidden, 1, pointwise(), true, true, rng);
  act1_ = PReLU(name + ".act1", hidden);
  norm1_ = Norm(name + ".norm1", hidden, nm);
  depthwise_ = Conv(name + ".dconv", hidden, hidden, kernel, dw, true, true, rng);
  act2_ = PReLU(name + ".act2", hidden);
  norm2_ = Norm(name + ".norm2", hidden, nm);
  out_ = Conv(name + ".out", hidden, width, 1, pointwise(), true, true, rng);
}

Tensor TcnBlock::forward(const Tensor& x, const ForwardContext& ctx) {
  Tensor y = norm1_.forward(act1_.forward(in_.forward(x, ctx)));
  y = norm2_.forward(act2_.forward(depthwise_.forward(y, ctx)));
  return x + out_.forward(y, ctx);
}

void TcnBlock::collect(ParamList& out) const {
  in_.collect(out);
  act1_.collect(out);
  norm1_.collect(out);
  depthwise_.collect(out);
  act2_.collect(out);
  norm2_.collect(out);
  out_.collect(out);
}

GcTcnBlock::GcTcnBlock(const std::string& name, const GcTcnOptions& opt,
                       Rng& rng)
    : opt_(opt) {
  if (!opt_.group_comm) opt_.groups = 1;
  if (opt_.groups < 1 || opt_.channels % opt_.groups != 0) {
    throw DimensionError(name + ": " + std::to_string(opt_.channels) +
                         " channels not divisible into " +
                         std::to_string(opt_.groups) + " groups");
  }
  const Index w = opt_.channels / opt_.groups;
  if (opt_.group_comm) tac_.emplace(name + ".tac", w, tac_hidden(w), rng);
  tcn_ = TcnBlock(name + ".tcn", w, tcn_hidden(w), opt_.kernel, opt_.dilation,
                  opt_.causal, rng);
}

Tensor GcTcnBlock::forward(const Tensor& x, const ForwardContext& ctx) {
  if (x.ndim() != 3 || x.dim(1) != opt_.channels) {
    throw DimensionError("gc-tcn block expects Bx" +
                         std::to_string(opt_.channels) + "xT, got " +
                         shape_str(x.shape()));
  }
  const Index b = x.dim(0), t = x.dim(2);
  const Index k = opt_.groups, w = opt_.channels / k;
  Tensor g = reshape(x, {b * k, w, t});
  if (tac_) g = tac_->forward(g, b, k, ctx);
  g = tcn_.forward(g, ctx);
  return reshape(g, {b, opt_.channels, t});
}

void GcTcnBlock::collect(ParamList& out) const {
  if (tac_) tac_->collect(out);
  tcn_.collect(out);
}

std::vector<Conv*> GcTcnBlock::convs() {
  std::vector<Conv*> out;
  if (tac_) out = tac_->convs();
  for (Conv* c : tcn_.convs()) out.push_back(c);
  return out;
}

ContextCodec::ContextCodec(const std::string& name, Index context,
                           Index encoder_channels, Index decoder_channels,
                           Index groups, bool group_comm, Index depth,
                           Index kernel, bool causal, Rng& rng)
    : context_(context), causal_(causal) {
  if (context < 2 || context % 2 != 0) {
    throw DimensionError("context size must be even and >= 2");
  }
  for (Index i = 0; i < depth; ++i) {
    GcTcnOptions o{encoder_channels, groups, group_comm, kernel, 1, causal};
    enc_.emplace_back(name + ".enc" + std::to_string(i), o, rng);
  }
  for (Index i = 0; i < depth; ++i) {
    GcTcnOptions o{decoder_channels, groups, group_comm, kernel, 1, causal};
    dec_.emplace_back(name + ".dec" + std::to_string(i), o, rng);
  }
}

Tensor ContextCodec::segment(const Tensor& h) const {
  return segment_blocks(h, context_, hop());
}

Tensor ContextCodec::summarize(const Tensor& blocks, Index batch) const {
  const Index nblk = blocks.dim(0) / batch, ch = blocks.dim(1);
  return permute(reshape(mean(blocks, 2), {batch, nblk, ch}), {0, 2, 1});
}

ContextEncoding ContextCodec::encode(const Tensor& h,
                                     const ForwardContext& ctx) {
  if (h.ndim() != 3) throw DimensionError("context encoder expects BxCxL");
  ContextEncoding e;
  e.batch = h.dim(0);
  e.length = h.dim(2);
  e.blocks = segment(h);
  Tensor processed = e.blocks;
  for (auto& blk : enc_) processed = blk.forward(processed, ctx);
  e.summary = summarize(processed, e.batch);
  return e;
}

Tensor ContextCodec::decode(const Tensor& processed, const Tensor& blocks,
                            Index batch, Index length,
                            const ForwardContext& ctx) {
  const Index nblk = block_count(length, context_, hop());
  if (processed.ndim() != 3 || processed.dim(0) != batch ||
      processed.dim(2) != nblk || blocks.dim(0) != batch * nblk ||
      processed.dim(1) != blocks.dim(1)) {
    throw DimensionError("context decoder: summaries " +
                         shape_str(processed.shape()) + " do not match blocks " +
                         shape_str(blocks.shape()));
  }
  const Index ch = processed.dim(1);
  Tensor p = processed;
  if (causal_) p = slice(pad(p, 2, 2, 0), 2, 0, nblk);
  Tensor pb = reshape(permute(p, {0, 2, 1}), {batch * nblk, ch, 1});
  Tensor d = blocks + pb;
  for (auto& blk : dec_) d = blk.forward(d, ctx);
  return overlap_add_blocks(d, batch, length, hop());
}

void ContextCodec::collect(ParamList& out) const {
  for (const auto& b : enc_) b.collect(out);
  for (const auto& b : dec_) b.collect(out);
}

std::vector<Conv*> ContextCodec::convs() {
  std::vector<Conv*> out;
  for (auto& b : enc_) {
    for (Conv* c : b.convs()) out.push_back(c);
  }
  for (auto& b : dec_) {
    for (Conv* c : b.convs()) out.push_back(c);
  }
  return out;
}

}  // namespace limuse::nn
