// Copyright 2026 The limuse-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "limuse/accounting.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

#include "limuse/ops.hpp"

namespace limuse {

namespace {

// Collects rows in the same order as LiMuSE::parameters().
class Builder {
 public:
  Builder(AccountingReport& r, int bits) : r_(r), bits_(bits) {}

  // `runs` is the number of independent sequences of `steps` frames the
  // layer is applied to per batch item.
  void conv(const std::string& layer, Index cin, Index cout, Index k,
            Index groups, bool bias, bool quantizable, Index runs, Index steps) {
    AccountingRow w{layer, "weight", cout * (cin / groups) * k,
                    runs * steps * cout * (cin / groups) * k, 0, false};
    w.quantized = quantizable && bits_ < 32;
    w.bytes = weight_bytes(w.params, w.quantized ? bits_ : 32);
    r_.rows.push_back(w);
    if (bias) plain(layer, "bias", cout);
  }
  void prelu(const std::string& layer, Index ch) { plain(layer, "slope", ch); }
  void norm(const std::string& layer, Index ch) {
    plain(layer, "gain", ch);
    plain(layer, "bias", ch);
  }
  void plain(const std::string& layer, const std::string& name, Index n,
             std::int64_t macs = 0) {
    r_.rows.push_back({layer, name, n, macs, 4 * n, false});
  }

  // One GC-TCN block at width c applied to `runs` sequences of `steps`.
  void gc_block(const std::string& name, const ModelConfig& cfg, Index c,
                Index runs, Index steps) {
    const Index k = cfg.groups(), w = c / k;
    if (cfg.group_comm) {
      const Index h = nn::GcTcnBlock::tac_hidden(w);
      const std::string t = name + ".tac";
      conv(t + ".fc1", w, h, 1, 1, true, true, runs * k, steps);
      prelu(t + ".act1", h);
      conv(t + ".fc2", h, h, 1, 1, true, true, runs, steps);
      prelu(t + ".act2", h);
      conv(t + ".fc3", 2 * h, w, 1, 1, true, true, runs * k, steps);
      prelu(t + ".act3", w);
    }
    const Index h = nn::GcTcnBlock::tcn_hidden(w);
    const std::string t = name + ".tcn";
    conv(t + ".in", w, h, 1, 1, true, true, runs * k, steps);
    prelu(t + ".act1", h);
    norm(t + ".norm1", h);
    conv(t + ".dconv", h, h, cfg.P, h, true, true, runs * k, steps);
    prelu(t + ".act2", h);
    norm(t + ".norm2", h);
    conv(t + ".out", h, w, 1, 1, true, true, runs * k, steps);
  }

 private:
  AccountingReport& r_;
  int bits_;
};

}  // namespace

std::int64_t AccountingReport::total_params() const {
  std::int64_t s = 0;
  for (const auto& r : rows) s += r.params;
  return s;
}
std::int64_t AccountingReport::total_macs() const {
  std::int64_t s = 0;
  for (const auto& r : rows) s += r.macs;
  return s;
}
std::int64_t AccountingReport::total_bytes() const {
  std::int64_t s = 0;
  for (const auto& r : rows) s += r.bytes;
  return s;
}

std::int64_t quantizer_metadata_bytes(int weight_bits) {
  const std::int64_t levels = std::int64_t{1} << (weight_bits - 1);
  const std::int64_t n = 2 * (levels - 1);  // steps of the symmetric level set
  return 4 * (2 + 2 + n + (n + 1));
}

std::int64_t weight_bytes(std::int64_t params, int bits) {
  if (bits >= 32) return 4 * params;
  return (params * bits + 7) / 8 + quantizer_metadata_bytes(bits);
}

AccountingReport account(const ModelConfig& cfg, double seconds, int weight_bits) {
  cfg.validate();
  AccountingReport r;
  r.weight_bits = weight_bits;
  r.seconds = seconds;
  const Index samples = static_cast<Index>(std::llround(seconds * cfg.sample_rate));
  const Index t = samples >= cfg.L ? cfg.frames(samples) : 0;
  const Index e = t > 0 ? std::max<Index>(1, std::llround(seconds * cfg.fps)) : 0;
  const Index one = t > 0 ? 1 : 0;
  const Index n = cfg.N;

  Builder b(r, weight_bits);
  b.conv("encoder", cfg.mics, n, cfg.L, 1, false, true, 1, t);
  b.conv("voiceprint_fc", cfg.U, n, 1, 1, true, true, 1, one);
  b.conv("visual_fc", cfg.D_face, n, 1, 1, true, true, 1, e);

  Index block_runs = 1, block_steps = t;
  if (cfg.context_codec) {
    const Index nblk = t > 0 ? block_count(t, cfg.S, cfg.S / 2) : 0;
    for (Index i = 0; i < cfg.codec_depth; ++i) {
      b.gc_block("codec.enc" + std::to_string(i), cfg, n, nblk, cfg.S);
    }
    for (Index i = 0; i < cfg.codec_depth; ++i) {
      b.gc_block("codec.dec" + std::to_string(i), cfg, 3 * n, nblk, cfg.S);
    }
    block_steps = nblk;
  }
  for (Index rep = 0; rep < cfg.R_a; ++rep) {
    for (Index j = 0; j < cfg.X; ++j) {
      b.gc_block("audio." + std::to_string(rep) + "." + std::to_string(j), cfg,
                 n, block_runs, block_steps);
    }
  }
  for (Index rep = 0; rep < cfg.R_f; ++rep) {
    for (Index j = 0; j < cfg.X; ++j) {
      b.gc_block("fusion." + std::to_string(rep) + "." + std::to_string(j), cfg,
                 3 * n, block_runs, block_steps);
    }
  }
  b.conv("mask", 3 * n, n, 1, 1, true, true, 1, t);
  b.plain("decoder", "weight", n * cfg.L, n * cfg.L * t);
  return r;
}

std::int64_t count_params(const ModelConfig& cfg) {
  return account(cfg).total_params();
}

std::int64_t count_macs(const ModelConfig& cfg, double seconds) {
  return account(cfg, seconds).total_macs();
}

std::int64_t model_size(const ModelConfig& cfg, int weight_bits) {
  return account(cfg, 0.0, weight_bits).total_bytes();
}

std::int64_t runtime_param_count(const LiMuSE& model) {
  std::int64_t n = 0;
  for (const auto& p : model.parameters()) {
    if (p.kind != nn::ParamKind::kQuantScale) n += p.tensor.numel();
  }
  return n;
}

std::int64_t runtime_macs(LiMuSE& model, double seconds) {
  const ModelConfig& c = model.config();
  const Index samples = static_cast<Index>(std::llround(seconds * c.sample_rate));
  if (samples < c.L) return 0;
  const Index e = std::max<Index>(1, std::llround(seconds * c.fps));
  NoGradGuard ng;
  Tensor mix = Tensor::zeros({1, c.mics, samples});
  Tensor vp = Tensor::zeros({1, c.U});
  Tensor vis = Tensor::zeros({1, c.D_face, e});
  MacCounter::reset();
  model.forward(mix, vp, vis, nn::ForwardContext{});
  return MacCounter::value();
}

void write_csv(const AccountingReport& r, std::ostream& os) {
  os << "layer,name,params,macs,bytes\n";
  for (const auto& row : r.rows) {
    os << row.layer << ',' << row.name << ',' << row.params << ',' << row.macs
       << ',' << row.bytes << '\n';
  }
  os << "total,," << r.total_params() << ',' << r.total_macs() << ','
     << r.total_bytes() << '\n';
}

void write_table(const AccountingReport& r, std::ostream& os) {
  size_t wl = 5;
  for (const auto& row : r.rows) wl = std::max(wl, row.layer.size());
  auto line = [&](const std::string& l, const std::string& n, const std::string& p,
                  const std::string& m, const std::string& b) {
    os << std::left << std::setw(static_cast<int>(wl) + 2) << l << std::setw(8) << n
       << std::right << std::setw(12) << p << std::setw(16) << m << std::setw(12)
       << b << '\n';
  };
  line("layer", "name", "params", "macs", "bytes");
  for (const auto& row : r.rows) {
    line(row.layer, row.name, std::to_string(row.params), std::to_string(row.macs),
         std::to_string(row.bytes));
  }
  line("total", "", std::to_string(r.total_params()), std::to_string(r.total_macs()),
       std::to_string(r.total_bytes()));
  os << std::fixed << std::setprecision(4) << "params " << r.total_params() / 1e6
     << " M, MACs " << r.total_macs() / 1e9 << " G over " << r.seconds
     << " s, size " << r.total_bytes() / 1e6 << " MB at " << r.weight_bits
     << "-bit weights\n";
  os.unsetf(std::ios::fixed);
}

}  // namespace limuse
