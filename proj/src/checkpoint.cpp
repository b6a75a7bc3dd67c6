// Copyright 2026 The limuse-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "limuse/checkpoint.hpp"

#include <cmath>
#include <map>
#include <set>

#include "limuse/config.hpp"
#include "limuse/io.hpp"

namespace limuse {

namespace {

constexpr char kMagic[] = "LMSE-CKPT";
constexpr std::size_t kMagicLen = 9;
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kF32 = 0, kPacked = 1;

std::string config_text(const ModelConfig& cfg) {
  std::string s;
  for (const auto& [k, v] : cfg.to_map()) s += k + " = " + v + "\n";
  return s;
}

void write_dims(io::ByteWriter& w, const Shape& shape) {
  w.u32(static_cast<std::uint32_t>(shape.size()));
  for (Index d : shape) w.u32(static_cast<std::uint32_t>(d));
}

Shape read_dims(io::ByteReader& r) {
  const std::uint32_t nd = r.u32("ndim");
  if (nd > 8) throw CheckpointError("tensor with " + std::to_string(nd) + " dimensions");
  Shape s;
  for (std::uint32_t i = 0; i < nd; ++i) s.push_back(r.u32("dims"));
  return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, LiMuSE& model,
                     const TrainState* state) {
  io::ByteWriter w;
  w.raw(std::string_view(kMagic, kMagicLen));
  w.u32(kVersion);
  w.str(config_text(model.config()));

  // Quantizers.
  std::map<std::string, const nn::Conv*> frozen;
  std::vector<nn::Conv*> qlayers;
  for (nn::Conv* c : model.quantizable_layers()) {
    if (c->quantizer()) qlayers.push_back(c);
  }
  w.u32(static_cast<std::uint32_t>(qlayers.size()));
  for (nn::Conv* c : qlayers) {
    const nn::LayerQuant& q = *c->quantizer();
    w.str(c->name());
    w.u32(static_cast<std::uint32_t>(q.levels.size()));
    for (int g : q.levels.gamma()) w.u32(static_cast<std::uint32_t>(g));
    w.f32(static_cast<float>(q.alpha()));
    w.f32(static_cast<float>(q.beta()));
    w.u32(static_cast<std::uint32_t>(q.biases.size()));
    for (double b : q.biases) w.f32(static_cast<float>(b));
    w.u8(static_cast<std::uint8_t>(q.act.bits));
    w.u8(q.act.initialized ? 1 : 0);
    w.f32(static_cast<float>(q.act.running_min));
    w.f32(static_cast<float>(q.act.running_max));
    w.u8(q.frozen ? 1 : 0);
    if (q.frozen) frozen[c->name() + ".weight"] = c;
  }

  // Tensors.
  const nn::ParamList params = model.parameters();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    w.str(p.name);
    auto it = frozen.find(p.name);
    if (it != frozen.end()) {
      const nn::Conv* c = it->second;
      const int bits = model.config().W_q;
      w.u8(kPacked);
      w.u8(static_cast<std::uint8_t>(bits));
      write_dims(w, p.tensor.shape());
      const auto packed = quant::pack_weights(c->quantizer()->codes, bits);
      w.u32(static_cast<std::uint32_t>(packed.size()));
      w.bytes(packed);
    } else {
      w.u8(kF32);
      write_dims(w, p.tensor.shape());
      for (Index i = 0; i < p.tensor.numel(); ++i) w.f32(static_cast<float>(p.tensor.data()[i]));
    }
  }

  // Training state.
  w.u8(state ? 1 : 0);
  if (state) {
    w.u32(static_cast<std::uint32_t>(state->epoch));
    w.f64(state->best_metric);
    w.f64(state->lr);
    w.u32(static_cast<std::uint32_t>(state->bad_epochs));
    w.str(state->stage);
    w.u64(static_cast<std::uint64_t>(state->adam_steps));
    w.u32(static_cast<std::uint32_t>(state->moments.size()));
    for (const auto& [name, m] : state->moments) {
      w.str(name);
      w.u32(static_cast<std::uint32_t>(m.m.size()));
      for (Index i = 0; i < m.m.size(); ++i) w.f64(m.m[i]);
      for (Index i = 0; i < m.v.size(); ++i) w.f64(m.v[i]);
    }
  }
  try {
    io::write_file(path, w.buffer());
  } catch (const io::FormatError& e) {
    throw CheckpointError(e.what());
  }
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::vector<std::uint8_t> buf;
  try {
    buf = io::read_file(path);
  } catch (const io::FormatError& e) {
    throw CheckpointError(e.what());
  }
  io::ByteReader r(buf, "checkpoint " + path.string());
  try {
    if (r.raw(kMagicLen, "magic") != std::string_view(kMagic, kMagicLen)) {
      throw CheckpointError(path.string() + ": not an LMSE-CKPT file");
    }
    const std::uint32_t version = r.u32("version");
    if (version != kVersion) {
      throw CheckpointError(path.string() + ": unsupported checkpoint version " +
                            std::to_string(version));
    }
    ModelConfig cfg;
    const auto kv = parse_key_values(r.str("config"), path.string() + " config");
    const auto unknown = cfg.apply(kv);
    if (!unknown.empty()) {
      throw CheckpointError(path.string() + ": unknown config key '" + unknown[0] + "'");
    }
    LoadedCheckpoint out;
    out.model = std::make_unique<LiMuSE>(cfg);
    LiMuSE& model = *out.model;

    std::map<std::string, nn::Conv*> by_name;
    for (nn::Conv* c : model.quantizable_layers()) by_name[c->name()] = c;
    const std::uint32_t nq = r.u32("quantizer count");
    for (std::uint32_t i = 0; i < nq; ++i) {
      const std::string name = r.str("layer name");
      auto it = by_name.find(name);
      if (it == by_name.end()) {
        throw CheckpointError(path.string() + ": quantizer for unknown layer " + name);
      }
      nn::LayerQuant q;
      const std::uint32_t nl = r.u32("level count");
      std::vector<int> gamma;
      for (std::uint32_t j = 0; j < nl; ++j) gamma.push_back(static_cast<std::int32_t>(r.u32("level")));
      q.levels = quant::LevelSet(gamma);
      const double alpha = r.f32("alpha");
      const double beta = r.f32("beta");
      if (!(alpha > 0.0) || !(beta > 0.0)) {
        throw CheckpointError(path.string() + ": non-positive scale in " + name);
      }
      q.log_alpha = Tensor::scalar(std::log(alpha), true);
      q.log_beta = Tensor::scalar(std::log(beta), true);
      const std::uint32_t nb = r.u32("bias count");
      for (std::uint32_t j = 0; j < nb; ++j) q.biases.push_back(r.f32("bias"));
      q.act.bits = r.u8("activation bits");
      q.act.initialized = r.u8("activation flag") != 0;
      q.act.running_min = r.f32("activation min");
      q.act.running_max = r.f32("activation max");
      q.frozen = r.u8("frozen flag") != 0;
      it->second->quantizer() = std::move(q);
    }

    // Parameter names depend on the quantizer state restored above.
    const nn::ParamList params = model.parameters();
    std::map<std::string, nn::Param> wanted;
    for (const auto& p : params) wanted.emplace(p.name, p);
    std::set<std::string> seen;
    const std::uint32_t nt = r.u32("tensor count");
    for (std::uint32_t i = 0; i < nt; ++i) {
      const std::string name = r.str("tensor name");
      const std::uint8_t dtype = r.u8("dtype");
      int bits = 0;
      if (dtype == kPacked) bits = r.u8("bits");
      else if (dtype != kF32) throw CheckpointError(name + ": unknown dtype " + std::to_string(dtype));
      const Shape shape = read_dims(r);
      auto it = wanted.find(name);
      if (it == wanted.end()) throw CheckpointError(path.string() + ": unexpected tensor " + name);
      Tensor t = it->second.tensor;
      if (t.shape() != shape) {
        throw CheckpointError(name + ": shape " + shape_str(shape) + " in file, model expects " +
                              shape_str(t.shape()));
      }
      Array& dst = t.mutable_data();
      if (dtype == kF32) {
        for (Index j = 0; j < dst.size(); ++j) dst[j] = r.f32("tensor data");
      } else {
        const std::string layer = name.substr(0, name.size() - std::string(".weight").size());
        auto lc = by_name.find(layer);
        if (lc == by_name.end() || !lc->second->quantizer() || !lc->second->quantizer()->frozen) {
          throw CheckpointError(name + ": packed codes without a frozen quantizer");
        }
        nn::LayerQuant& q = *lc->second->quantizer();
        const std::uint32_t nbytes = r.u32("packed size");
        const auto packed = r.bytes(nbytes, "packed codes");
        q.codes = quant::unpack_weights(packed, bits, static_cast<std::size_t>(dst.size()));
        const double a = static_cast<float>(q.alpha());
        for (Index j = 0; j < dst.size(); ++j) {
          if (q.codes[j] >= static_cast<std::uint32_t>(q.levels.size())) {
            throw CheckpointError(name + ": code " + std::to_string(q.codes[j]) + " out of range");
          }
          dst[j] = static_cast<float>(a * q.levels.level(static_cast<int>(q.codes[j])));
        }
      }
      seen.insert(name);
    }
    for (const auto& [name, p] : wanted) {
      if (!seen.count(name)) throw CheckpointError(path.string() + ": missing tensor " + name);
    }

    if (r.u8("state flag")) {
      TrainState s;
      s.epoch = static_cast<int>(r.u32("epoch"));
      s.best_metric = r.f64("best metric");
      s.lr = r.f64("lr");
      s.bad_epochs = static_cast<int>(r.u32("bad epochs"));
      s.stage = r.str("stage");
      s.adam_steps = static_cast<std::int64_t>(r.u64("adam steps"));
      const std::uint32_t nm = r.u32("moment count");
      for (std::uint32_t i = 0; i < nm; ++i) {
        const std::string name = r.str("moment name");
        const std::uint32_t n = r.u32("moment size");
        Adam::Moments m{Array(n), Array(n)};
        for (std::uint32_t j = 0; j < n; ++j) m.m[j] = r.f64("moment");
        for (std::uint32_t j = 0; j < n; ++j) m.v[j] = r.f64("moment");
        s.moments.emplace(name, std::move(m));
      }
      out.state = std::move(s);
    }
    if (!r.done()) throw CheckpointError(path.string() + ": trailing bytes");
    return out;
  } catch (const io::FormatError& e) {
    throw CheckpointError(e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(path.string() + ": bad config block: " + e.what());
  } catch (const quant::QuantError& e) {
    throw CheckpointError(path.string() + ": bad quantizer: " + e.what());
  }
}

}  // namespace limuse
