// Copyright 2026 The limuse-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "limuse/model.hpp"

#include <cmath>
#include <sstream>

namespace limuse {

namespace {

std::string str(bool b) { return b ? "true" : "false"; }

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

Index parse_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const long long x = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

ConvOptions pointwise() { return ConvOptions{}; }

}  // namespace

void ModelConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  need(N > 0 && L > 0 && P > 0 && X > 0 && R_a > 0 && R_f > 0,
       "N, L, P, X, R_a and R_f must be positive");
  need(stride > 0 && L % stride == 0, "encoder stride must divide L");
  need(S >= 2 && S % 2 == 0, "context size S must be even and >= 2");
  need(W_q >= 2 && W_q <= 16, "W_q must be in [2, 16]");
  need(A_q >= 2 && A_q <= 16, "A_q must be in [2, 16]");
  need(T0 > 0.0, "T0 must be positive");
  need(mics > 0 && U > 0 && D_face > 0 && fps > 0 && sample_rate > 0,
       "mics, U, D_face, fps and sample_rate must be positive");
  need(codec_depth >= 0, "codec_depth must be >= 0");
  if (group_comm) {
    need(K >= 1, "K must be >= 1");
    need(N % K == 0, "N = " + std::to_string(N) + " is not divisible by K = " +
                         std::to_string(K));
    need((3 * N) % K == 0, "3N is not divisible by K");
  }
}

Index ModelConfig::frames(Index samples) const {
  if (samples < L) {
    throw DimensionError("clip of " + std::to_string(samples) +
                         " samples is shorter than one encoder filter (" +
                         std::to_string(L) + ")");
  }
  return (samples + lead() - L + stride - 1) / stride + 1;
}

ModelConfig ModelConfig::reference(Index groups) {
  ModelConfig c;
  c.K = groups;
  return c;
}

ModelConfig ModelConfig::vanilla() {
  ModelConfig c;
  c.K = 1;
  c.group_comm = false;
  c.context_codec = false;
  return c;
}

std::map<std::string, std::string> ModelConfig::to_map() const {
  std::map<std::string, std::string> m;
  auto d = [](double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  };
  m["N"] = std::to_string(N);
  m["L"] = std::to_string(L);
  m["P"] = std::to_string(P);
  m["R_a"] = std::to_string(R_a);
  m["R_f"] = std::to_string(R_f);
  m["S"] = std::to_string(S);
  m["W_q"] = std::to_string(W_q);
  m["A_q"] = std::to_string(A_q);
  m["T0"] = d(T0);
  m["K"] = std::to_string(K);
  m["X"] = std::to_string(X);
  m["mics"] = std::to_string(mics);
  m["U"] = std::to_string(U);
  m["D_face"] = std::to_string(D_face);
  m["fps"] = std::to_string(fps);
  m["sample_rate"] = std::to_string(sample_rate);
  m["stride"] = std::to_string(stride);
  m["causal"] = str(causal);
  m["group_comm"] = str(group_comm);
  m["context_codec"] = str(context_codec);
  m["codec_depth"] = std::to_string(codec_depth);
  m["model_seed"] = std::to_string(seed);
  return m;
}

std::vector<std::string> ModelConfig::apply(
    const std::map<std::string, std::string>& kv) {
  std::vector<std::string> unknown;
  for (const auto& [k, v] : kv) {
    if (k == "N") N = parse_int(k, v);
    else if (k == "L") L = parse_int(k, v);
    else if (k == "P") P = parse_int(k, v);
    else if (k == "R_a") R_a = parse_int(k, v);
    else if (k == "R_f") R_f = parse_int(k, v);
    else if (k == "S") S = parse_int(k, v);
    else if (k == "W_q") W_q = static_cast<int>(parse_int(k, v));
    else if (k == "A_q") A_q = static_cast<int>(parse_int(k, v));
    else if (k == "T0") T0 = parse_double(k, v);
    else if (k == "K") K = parse_int(k, v);
    else if (k == "X") X = parse_int(k, v);
    else if (k == "mics") mics = parse_int(k, v);
    else if (k == "U") U = parse_int(k, v);
    else if (k == "D_face") D_face = parse_int(k, v);
    else if (k == "fps") fps = parse_int(k, v);
    else if (k == "sample_rate") sample_rate = parse_int(k, v);
    else if (k == "stride") stride = parse_int(k, v);
    else if (k == "causal") causal = parse_bool(k, v);
    else if (k == "group_comm") group_comm = parse_bool(k, v);
    else if (k == "context_codec") context_codec = parse_bool(k, v);
    else if (k == "codec_depth") codec_depth = parse_int(k, v);
    else if (k == "model_seed") seed = static_cast<std::uint64_t>(parse_int(k, v));
    else unknown.push_back(k);
  }
  return unknown;
}

LiMuSE::LiMuSE(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(cfg_.seed);
  const Index n = cfg_.N, k = cfg_.groups();
  ConvOptions enc;
  enc.stride = cfg_.stride;
  encoder_ = nn::Conv("encoder", cfg_.mics, n, cfg_.L, enc, false, true, rng);
  voice_fc_ = nn::Conv("voiceprint_fc", cfg_.U, n, 1, pointwise(), true, true, rng);
  visual_fc_ = nn::Conv("visual_fc", cfg_.D_face, n, 1, pointwise(), true, true, rng);
  if (cfg_.context_codec) {
    codec_.emplace("codec", cfg_.S, n, 3 * n, k, cfg_.group_comm,
                   cfg_.codec_depth, cfg_.P, cfg_.causal, rng);
  }
  for (Index r = 0; r < cfg_.R_a; ++r) {
    for (Index j = 0; j < cfg_.X; ++j) {
      nn::GcTcnOptions o{n, k, cfg_.group_comm, cfg_.P, Index{1} << j, cfg_.causal};
      audio_blocks_.emplace_back(
          "audio." + std::to_string(r) + "." + std::to_string(j), o, rng);
    }
  }
  for (Index r = 0; r < cfg_.R_f; ++r) {
    for (Index j = 0; j < cfg_.X; ++j) {
      nn::GcTcnOptions o{3 * n, k, cfg_.group_comm, cfg_.P, Index{1} << j,
                         cfg_.causal};
      fusion_blocks_.emplace_back(
          "fusion." + std::to_string(r) + "." + std::to_string(j), o, rng);
    }
  }
  mask_conv_ = nn::Conv("mask", 3 * n, n, 1, pointwise(), true, true, rng);
  decoder_ = nn::ConvTranspose("decoder", n, 1, cfg_.L, cfg_.stride, rng);
}

Tensor LiMuSE::encode_audio(const Tensor& mix, const nn::ForwardContext& ctx) {
  if (mix.ndim() != 3 || mix.dim(1) != cfg_.mics) {
    throw DimensionError("mixture must be B x " + std::to_string(cfg_.mics) +
                         " x samples, got " + shape_str(mix.shape()));
  }
  const Index samples = mix.dim(2);
  const Index t = cfg_.frames(samples);
  Tensor x = mix;
  const Index extra = cfg_.padded_samples(t) - samples - cfg_.lead();
  if (extra > 0 || cfg_.lead() > 0) x = pad(x, 2, cfg_.lead(), extra);
  return encoder_.forward(x, ctx);
}

Tensor LiMuSE::encode_voiceprint(const Tensor& voiceprint, Index frames,
                                 const nn::ForwardContext& ctx) {
  if (voiceprint.ndim() != 2 || voiceprint.dim(1) != cfg_.U) {
    throw DimensionError("voiceprint must be B x " + std::to_string(cfg_.U) +
                         ", got " + shape_str(voiceprint.shape()));
  }
  const Index b = voiceprint.dim(0);
  Tensor v = voice_fc_.forward(reshape(voiceprint, {b, cfg_.U, 1}), ctx);
  return broadcast_to(v, {b, cfg_.N, frames});
}

Tensor LiMuSE::encode_visual(const Tensor& visual, Index frames,
                             const nn::ForwardContext& ctx) {
  if (visual.ndim() != 3 || visual.dim(1) != cfg_.D_face || visual.dim(2) < 1) {
    throw DimensionError("face embeddings must be B x " +
                         std::to_string(cfg_.D_face) + " x E with E >= 1, got " +
                         shape_str(visual.shape()));
  }
  return upsample_nearest(visual_fc_.forward(visual, ctx), frames);
}

Tensor LiMuSE::estimate_mask(const Tensor& audio, const Tensor& voiceprint,
                             const Tensor& visual,
                             const nn::ForwardContext& ctx) {
  const Index b = audio.dim(0), t = audio.dim(2);
  if (voiceprint.shape() != audio.shape() || visual.shape() != audio.shape()) {
    throw DimensionError("streams are not time-synchronised: " +
                         shape_str(audio.shape()) + ", " +
                         shape_str(voiceprint.shape()) + ", " +
                         shape_str(visual.shape()));
  }
  Tensor fused;
  if (codec_) {
    nn::ContextEncoding enc = codec_->encode(audio, ctx);
    Tensor a = enc.summary;
    for (auto& blk : audio_blocks_) a = blk.forward(a, ctx);
    Tensor vp_blocks = codec_->segment(voiceprint);
    Tensor vis_blocks = codec_->segment(visual);
    Tensor f = concat({a, codec_->summarize(vp_blocks, b),
                       codec_->summarize(vis_blocks, b)}, 1);
    for (auto& blk : fusion_blocks_) f = blk.forward(f, ctx);
    Tensor blocks = concat({enc.blocks, vp_blocks, vis_blocks}, 1);
    fused = codec_->decode(f, blocks, b, t, ctx);
  } else {
    Tensor a = audio;
    for (auto& blk : audio_blocks_) a = blk.forward(a, ctx);
    fused = concat({a, voiceprint, visual}, 1);
    for (auto& blk : fusion_blocks_) fused = blk.forward(fused, ctx);
  }
  return relu(mask_conv_.forward(fused, ctx));
}

Tensor LiMuSE::decode(const Tensor& masked) const {
  Tensor y = decoder_.forward(masked);
  return reshape(y, {y.dim(0), y.dim(2)});
}

ModelOutput LiMuSE::forward(const Tensor& mix, const Tensor& voiceprint,
                            const Tensor& visual,
                            const nn::ForwardContext& ctx) {
  Tensor audio = encode_audio(mix, ctx);
  const Index t = audio.dim(2);
  if (voiceprint.dim(0) != mix.dim(0) || visual.dim(0) != mix.dim(0)) {
    throw DimensionError("batch sizes of mixture and cues differ");
  }
  Tensor vp = encode_voiceprint(voiceprint, t, ctx);
  Tensor vis = encode_visual(visual, t, ctx);
  ModelOutput out;
  out.mask = estimate_mask(audio, vp, vis, ctx);
  out.estimate = slice(decode(out.mask * audio), 1, 0, mix.dim(2));
  return out;
}

nn::ParamList LiMuSE::parameters() const {
  nn::ParamList out;
  encoder_.collect(out);
  voice_fc_.collect(out);
  visual_fc_.collect(out);
  if (codec_) codec_->collect(out);
  for (const auto& b : audio_blocks_) b.collect(out);
  for (const auto& b : fusion_blocks_) b.collect(out);
  mask_conv_.collect(out);
  decoder_.collect(out);
  return out;
}

std::vector<nn::Conv*> LiMuSE::quantizable_layers() {
  std::vector<nn::Conv*> out{&encoder_, &voice_fc_, &visual_fc_};
  auto append = [&out](std::vector<nn::Conv*> v) {
    out.insert(out.end(), v.begin(), v.end());
  };
  if (codec_) append(codec_->convs());
  for (auto& b : audio_blocks_) append(b.convs());
  for (auto& b : fusion_blocks_) append(b.convs());
  out.push_back(&mask_conv_);
  return out;
}

void LiMuSE::attach_quantizers() {
  const quant::LevelSet levels = quant::LevelSet::symmetric(cfg_.W_q);
  for (nn::Conv* c : quantizable_layers()) {
    c->attach_quantizer(levels, cfg_.A_q, Rng::derive(cfg_.seed, Rng::hash(c->name())));
  }
}

bool LiMuSE::quantized() const {
  return encoder_.quantizer().has_value();
}

void LiMuSE::freeze_quantized() {
  for (nn::Conv* c : quantizable_layers()) c->freeze_quantized();
  round_to_f32();
}

void LiMuSE::round_to_f32() {
  auto snap = [](Array& a) {
    for (Index i = 0; i < a.size(); ++i) a[i] = static_cast<float>(a[i]);
  };
  for (auto& p : parameters()) {
    Tensor t = p.tensor;
    snap(t.mutable_data());
  }
  for (nn::Conv* c : quantizable_layers()) {
    auto& q = c->quantizer();
    if (!q) continue;
    q->act.running_min = round_to_float(q->act.running_min);
    q->act.running_max = round_to_float(q->act.running_max);
    for (double& b : q->biases) b = round_to_float(b);
  }
}

}  // namespace limuse
