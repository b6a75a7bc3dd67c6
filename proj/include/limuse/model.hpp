// Copyright 2026 The limuse-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// The full target-speaker extraction network.
//
//   mixture -> audio encoder -------------------------------> (x) -> decoder
//                  |                                           ^
//                  +-> context encoder -> audio block --+      | mask
//   voiceprint -> FC, tiled ----> block means ----------+-> fusion block
//   face frames -> FC, upsampled -> block means --------+      |
//                                                              v
//             [audio; voiceprint; visual] blocks + summary -> context decoder
//                                                  -> mask conv -> ReLU
//
// Without the context codec the audio and fusion blocks run at frame rate.

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "limuse/gc_tcn.hpp"

namespace limuse {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ModelConfig {
  Index N = 128;            // encoder channels
  Index L = 32;             // encoder filter length in samples
  Index P = 3;              // depthwise kernel
  Index R_a = 2;            // audio block repeats
  Index R_f = 1;            // fusion block repeats
  Index S = 32;             // context size in frames
  int W_q = 3;              // weight bits
  int A_q = 8;              // activation bits
  double T0 = 5.0;          // temperature increment per epoch
  Index K = 16;             // groups
  Index X = 8;              // TCN blocks per repeat
  Index mics = 2;
  Index U = 512;            // voiceprint dimension
  Index D_face = 256;       // face embedding dimension
  Index fps = 25;
  Index sample_rate = 16000;
  Index stride = 16;        // encoder hop
  bool causal = false;
  bool group_comm = true;   // false: plain TCN blocks at full width
  bool context_codec = true;
  Index codec_depth = 2;
  std::uint64_t seed = 1;   // parameter initialisation

  // Throws ConfigError on an inconsistent configuration.
  void validate() const;
  // Effective group count (1 without group communication).
  Index groups() const { return group_comm ? K : 1; }
  // Encoder frames for a clip: ceil((samples + lead - L) / stride) + 1; the
  // clip is zero-padded on the right so every sample is covered.
  Index frames(Index samples) const;
  // Zeros put in front of the clip. Causal models read L - 1 samples of
  // history so decoded sample i only sees mixture samples <= i.
  Index lead() const { return causal ? L - 1 : 0; }
  // Samples spanned by `frames` encoder frames.
  Index padded_samples(Index frames) const { return (frames - 1) * stride + L; }

  static ModelConfig reference(Index groups = 16);
  // Plain TCN baseline: no group communication, no context codec.
  static ModelConfig vanilla();

  std::map<std::string, std::string> to_map() const;
  // Applies recognised keys; returns the keys it did not recognise.
  std::vector<std::string> apply(const std::map<std::string, std::string>& kv);
};

struct ModelOutput {
  Tensor estimate;  // B x samples
  Tensor mask;      // B x N x T_frames
};

class LiMuSE {
 public:
  explicit LiMuSE(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }

  // mix: B x mics x samples -> B x N x T_frames.
  Tensor encode_audio(const Tensor& mix, const nn::ForwardContext& ctx);
  // voiceprint: B x U -> B x N x frames (same column at every frame).
  Tensor encode_voiceprint(const Tensor& voiceprint, Index frames,
                           const nn::ForwardContext& ctx);
  // visual: B x D_face x E -> B x N x frames.
  Tensor encode_visual(const Tensor& visual, Index frames,
                       const nn::ForwardContext& ctx);
  // Mask head on top of the three encoded streams, B x N x T_frames.
  Tensor estimate_mask(const Tensor& audio, const Tensor& voiceprint,
                       const Tensor& visual, const nn::ForwardContext& ctx);
  // masked: B x N x T_frames -> B x samples (untrimmed).
  Tensor decode(const Tensor& masked) const;

  ModelOutput forward(const Tensor& mix, const Tensor& voiceprint,
                      const Tensor& visual, const nn::ForwardContext& ctx);

  nn::ParamList parameters() const;
  // Every convolution / FC layer that carries a weight quantizer in QAT.
  std::vector<nn::Conv*> quantizable_layers();
  nn::ConvTranspose& decoder() { return decoder_; }

  // Attach k-means initialised quantizers to every quantizable layer.
  void attach_quantizers();
  bool quantized() const;
  // Replace quantized weights by alpha * level(code) and drop the scales from
  // the trainable set.
  void freeze_quantized();
  // Round every stored value to float32 precision.
  void round_to_f32();

 private:
  ModelConfig cfg_;
  nn::Conv encoder_, voice_fc_, visual_fc_, mask_conv_;
  std::optional<nn::ContextCodec> codec_;
  std::vector<nn::GcTcnBlock> audio_blocks_, fusion_blocks_;
  nn::ConvTranspose decoder_;
};

}  // namespace limuse
