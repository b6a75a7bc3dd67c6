// Copyright 2026 The limuse-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "limuse/quantization.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "limuse/rng.hpp"

namespace limuse::quant {

namespace {

double stable_sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void check_params(const QuantizerParams& q) {
  if (static_cast<int>(q.biases.size()) != q.levels.steps()) {
    throw QuantError("quantizer has " + std::to_string(q.biases.size()) +
                     " biases for " + std::to_string(q.levels.steps()) + " steps");
  }
}

}  // namespace

LevelSet::LevelSet(std::vector<int> gamma) : gamma_(std::move(gamma)) {
  if (gamma_.size() < 2) throw QuantError("level set needs at least two levels");
  for (size_t i = 1; i < gamma_.size(); ++i) {
    if (gamma_[i] <= gamma_[i - 1]) {
      throw QuantError("level set must be strictly ascending");
    }
  }
  prefix_.assign(gamma_.size(), 0.0);
  for (size_t i = 1; i < gamma_.size(); ++i) {
    prefix_[i] = prefix_[i - 1] + (gamma_[i] - gamma_[i - 1]);
  }
  offset_ = 0.5 * prefix_.back();
}

LevelSet LevelSet::symmetric(int bits) {
  if (bits < 2 || bits > 16) throw QuantError("unsupported weight bit width");
  const int m = (1 << (bits - 1)) - 1;
  std::vector<int> g;
  for (int v = -m; v <= m; ++v) g.push_back(v);
  return LevelSet(std::move(g));
}

int ideal_code(double x, const QuantizerParams& q) {
  check_params(q);
  const double u = q.beta * x;
  int code = 0;
  for (double b : q.biases) code += (u - b >= 0.0) ? 1 : 0;
  return code;
}

double ideal_quantize(double x, const QuantizerParams& q) {
  return q.alpha * q.levels.level(ideal_code(x, q));
}

Tensor ideal_quantize(const Tensor& x, const QuantizerParams& q) {
  Array y(x.numel());
  for (Index i = 0; i < x.numel(); ++i) y[i] = ideal_quantize(x.data()[i], q);
  return Tensor::from(x.shape(), std::move(y));
}

Tensor soft_quantize(const Tensor& x, const Tensor& alpha, const Tensor& beta,
                     const LevelSet& levels, const std::vector<double>& biases,
                     double temperature) {
  if (temperature <= 0.0) throw QuantError("temperature must be positive");
  if (alpha.numel() != 1 || beta.numel() != 1) {
    throw DimensionError("soft_quantize: alpha and beta must be scalars");
  }
  if (static_cast<int>(biases.size()) != levels.steps()) {
    throw QuantError("soft_quantize: bias count does not match level steps");
  }
  const double a = alpha.item(), b = beta.item();
  const int n = levels.steps();
  Array y(x.numel());
  for (Index k = 0; k < x.numel(); ++k) {
    const double u = b * x.data()[k];
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
      s += levels.step(i) * stable_sigmoid(temperature * (u - biases[i]));
    }
    y[k] = a * (s - levels.offset());
  }
  return make_result(
      x.shape(), std::move(y), {x, alpha, beta}, "soft_quantize",
      [levels, biases, temperature](detail::Node& self) {
        const auto& nx = self.inputs[0];
        const auto& na = self.inputs[1];
        const auto& nb = self.inputs[2];
        const double a = na->value[0], b = nb->value[0];
        const int n = levels.steps();
        Array gx(nx->value.size());
        double ga = 0.0, gb = 0.0;
        for (Index k = 0; k < nx->value.size(); ++k) {
          const double xv = nx->value[k];
          const double u = b * xv;
          double s = 0.0, ds = 0.0;  // sum and d(sum)/du
          for (int i = 0; i < n; ++i) {
            const double sg = stable_sigmoid(temperature * (u - biases[i]));
            s += levels.step(i) * sg;
            ds += levels.step(i) * temperature * sg * (1.0 - sg);
          }
          const double g = self.grad[k];
          gx[k] = g * a * ds * b;
          ga += g * (s - levels.offset());
          gb += g * a * ds * xv;
        }
        accumulate_grad(nx, std::move(gx));
        accumulate_grad(na, Array::Constant(1, ga));
        accumulate_grad(nb, Array::Constant(1, gb));
      });
}

Tensor soft_quantize(const Tensor& x, const QuantizerParams& q) {
  return soft_quantize(x, Tensor::scalar(q.alpha), Tensor::scalar(q.beta),
                       q.levels, q.biases, q.temperature);
}

std::vector<double> kmeans_centers(std::span<const double> values, int k,
                                   std::uint64_t seed) {
  if (values.empty()) throw QuantError("k-means on an empty weight tensor");
  if (k < 1) throw QuantError("k-means needs k >= 1");
  std::vector<double> data(values.begin(), values.end());
  std::sort(data.begin(), data.end());
  int uniq = 1;
  for (size_t i = 1; i < data.size(); ++i) uniq += data[i] != data[i - 1] ? 1 : 0;
  if (k > uniq) {
    throw QuantError("k-means needs " + std::to_string(k) +
                     " clusters but the weights have only " +
                     std::to_string(uniq) + " distinct values");
  }
  const size_t n = data.size();

  // k-means++ seeding.
  Rng rng(seed);
  std::vector<double> centers;
  centers.push_back(values[rng.below(n)]);
  std::vector<double> d2(n);
  while (static_cast<int>(centers.size()) < k) {
    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (double c : centers) best = std::min(best, (data[i] - c) * (data[i] - c));
      d2[i] = best;
      total += best;
    }
    double r = rng.uniform() * total;
    size_t pick = n - 1;
    for (size_t i = 0; i < n; ++i) {
      if (d2[i] <= 0.0) continue;
      pick = i;
      if (r < d2[i]) break;
      r -= d2[i];
    }
    centers.push_back(data[pick]);
  }
  std::sort(centers.begin(), centers.end());

  // Lloyd iterations. With sorted data and sorted centers every cluster is a
  // contiguous run of the data.
  std::vector<int> assign(n);
  for (int iter = 0; iter < 100; ++iter) {
    int j = 0;
    for (size_t i = 0; i < n; ++i) {
      while (j + 1 < k && std::abs(data[i] - centers[j + 1]) <= std::abs(data[i] - centers[j])) {
        ++j;
      }
      assign[i] = j;
    }
    std::vector<double> sum(k, 0.0);
    std::vector<size_t> cnt(k, 0);
    for (size_t i = 0; i < n; ++i) {
      sum[assign[i]] += data[i];
      ++cnt[assign[i]];
    }
    double shift = 0.0;
    std::vector<double> next(k);
    for (int c = 0; c < k; ++c) {
      if (cnt[c] > 0) {
        next[c] = sum[c] / static_cast<double>(cnt[c]);
      } else {
        // Re-seed an empty cluster at the worst-served point.
        size_t worst = 0;
        double wd = -1.0;
        for (size_t i = 0; i < n; ++i) {
          const double d = std::abs(data[i] - centers[assign[i]]);
          if (d > wd) {
            wd = d;
            worst = i;
          }
        }
        next[c] = data[worst];
      }
      shift = std::max(shift, std::abs(next[c] - centers[c]));
    }
    std::sort(next.begin(), next.end());
    centers = std::move(next);
    if (shift < 1e-8) break;
  }
  return centers;
}

QuantizerParams init_quantizer(std::span<const double> weights,
                               const LevelSet& levels, std::uint64_t seed) {
  const int k = levels.size();
  std::vector<double> c = kmeans_centers(weights, k, seed);
  QuantizerParams q;
  q.levels = levels;
  q.biases.resize(k - 1);
  for (int i = 0; i + 1 < k; ++i) q.biases[i] = 0.5 * (c[i] + c[i + 1]);
  q.beta = 1.0;
  q.alpha = (c.back() - c.front()) /
            static_cast<double>(levels.gamma().back() - levels.gamma().front());
  if (!(q.alpha > 0.0)) throw QuantError("degenerate weight range for quantizer");
  return q;
}

std::int64_t activation_code(double x, double lo, double hi, int bits) {
  const double qmax = std::ldexp(1.0, bits) - 1.0;
  const double s = (hi - lo) / qmax;
  double c = std::nearbyint((x - lo) / s);
  c = std::clamp(c, 0.0, qmax);
  return static_cast<std::int64_t>(c);
}

Tensor quantize_activations(const Tensor& x, ActivationQuantizer& aq,
                            bool training) {
  if (x.numel() == 0) return x;
  double lo, hi;
  if (training || !aq.initialized) {
    lo = x.data().minCoeff();
    hi = x.data().maxCoeff();
    if (training) {
      if (!aq.initialized) {
        aq.running_min = lo;
        aq.running_max = hi;
        aq.initialized = true;
      } else {
        aq.running_min = aq.momentum * aq.running_min + (1.0 - aq.momentum) * lo;
        aq.running_max = aq.momentum * aq.running_max + (1.0 - aq.momentum) * hi;
      }
    }
  } else {
    lo = aq.running_min;
    hi = aq.running_max;
  }
  if (!(hi > lo)) return x;  // constant tensor: bypass
  const double qmax = std::ldexp(1.0, aq.bits) - 1.0;
  const double s = (hi - lo) / qmax;
  Array y(x.numel());
  for (Index i = 0; i < x.numel(); ++i) {
    double c = std::nearbyint((x.data()[i] - lo) / s);
    c = std::clamp(c, 0.0, qmax);
    y[i] = lo + s * c;
  }
  return make_result(x.shape(), std::move(y), {x}, "quantize_activations",
                     [lo, hi](detail::Node& self) {
                       const auto& in = self.inputs[0];
                       accumulate_grad(in, (in->value >= lo && in->value <= hi)
                                               .select(self.grad, 0.0));
                     });
}

std::vector<std::uint8_t> pack_weights(std::span<const std::uint32_t> codes,
                                       int bits) {
  if (bits < 1 || bits > 32) throw QuantError("pack_weights: bad bit width");
  const std::uint64_t total_bits = static_cast<std::uint64_t>(codes.size()) * bits;
  std::vector<std::uint8_t> out((total_bits + 7) / 8, 0);
  const std::uint64_t limit = bits == 32 ? ~0ull : (1ull << bits);
  std::uint64_t pos = 0;
  for (std::uint32_t c : codes) {
    if (c >= limit) throw QuantError("pack_weights: code does not fit in bit width");
    for (int b = 0; b < bits; ++b, ++pos) {
      if ((c >> b) & 1u) out[pos >> 3] |= static_cast<std::uint8_t>(1u << (pos & 7));
    }
  }
  return out;
}

std::vector<std::uint32_t> unpack_weights(std::span<const std::uint8_t> bytes,
                                          int bits, std::size_t count) {
  if (bits < 1 || bits > 32) throw QuantError("unpack_weights: bad bit width");
  const std::uint64_t need = (static_cast<std::uint64_t>(count) * bits + 7) / 8;
  if (bytes.size() < need) {
    throw QuantError("unpack_weights: " + std::to_string(bytes.size()) +
                     " bytes, need " + std::to_string(need));
  }
  std::vector<std::uint32_t> out(count, 0);
  std::uint64_t pos = 0;
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t c = 0;
    for (int b = 0; b < bits; ++b, ++pos) {
      if ((bytes[pos >> 3] >> (pos & 7)) & 1u) c |= (1u << b);
    }
    out[i] = c;
  }
  return out;
}

double TemperatureSchedule::at(int epoch) const {
  if (epoch < 1) throw QuantError("temperature epochs are 1-based");
  return increment * static_cast<double>(epoch);
}

}  // namespace limuse::quant
