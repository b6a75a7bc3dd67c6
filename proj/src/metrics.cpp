// Copyright 2026 The limuse-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "limuse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace limuse {

namespace {

void check(std::span<const double> est, std::span<const double> ref) {
  if (est.size() != ref.size()) {
    throw MetricError("estimate has " + std::to_string(est.size()) +
                      " samples, reference " + std::to_string(ref.size()));
  }
  double e = 0.0;
  for (double r : ref) e += r * r;
  if (e == 0.0) throw MetricError("reference signal is all zeros");
}

double ratio_db(double num, double den) {
  if (num == 0.0) return -kMetricCapDb;
  if (den == 0.0) return kMetricCapDb;
  return std::clamp(10.0 * std::log10(num / den), -kMetricCapDb, kMetricCapDb);
}

struct Projection {
  double target = 0.0;  // |s_target|^2
  double noise = 0.0;   // |e_noise|^2
  double scale = 0.0;   // <est, ref> / |ref|^2
};

Projection project(const double* est, const double* ref, Index n) {
  double er = 0.0, rr = 0.0;
  for (Index i = 0; i < n; ++i) {
    er += est[i] * ref[i];
    rr += ref[i] * ref[i];
  }
  Projection p;
  p.scale = er / rr;
  for (Index i = 0; i < n; ++i) {
    const double st = p.scale * ref[i];
    const double e = est[i] - st;
    p.target += st * st;
    p.noise += e * e;
  }
  return p;
}

}  // namespace

double si_sdr(std::span<const double> est, std::span<const double> ref) {
  check(est, ref);
  const Projection p = project(est.data(), ref.data(), static_cast<Index>(est.size()));
  return ratio_db(p.target, p.noise);
}

double sdr(std::span<const double> est, std::span<const double> ref) {
  check(est, ref);
  double s = 0.0, e = 0.0;
  for (size_t i = 0; i < ref.size(); ++i) {
    s += ref[i] * ref[i];
    e += (ref[i] - est[i]) * (ref[i] - est[i]);
  }
  return ratio_db(s, e);
}

double si_sdr_improvement(std::span<const double> est,
                          std::span<const double> ref,
                          std::span<const double> mix) {
  return si_sdr(est, ref) - si_sdr(mix, ref);
}

double sdr_improvement(std::span<const double> est, std::span<const double> ref,
                       std::span<const double> mix) {
  return sdr(est, ref) - sdr(mix, ref);
}

Tensor si_sdr_loss(const Tensor& est, const Tensor& ref) {
  if (est.ndim() != 2 || est.shape() != ref.shape()) {
    throw DimensionError("si_sdr_loss expects matching B x samples, got " +
                         shape_str(est.shape()) + " and " + shape_str(ref.shape()));
  }
  const Index b = est.dim(0), n = est.dim(1);
  const double k = 10.0 / std::log(10.0);
  double total = 0.0;
  // Per row: d(si-sdr)/d(est) = k * (2 s_t / |s_t|^2 - 2 e / |e|^2).
  Array grad = Array::Zero(est.numel());
  for (Index r = 0; r < b; ++r) {
    const double* e = est.data().data() + r * n;
    const double* s = ref.data().data() + r * n;
    double rr = 0.0;
    for (Index i = 0; i < n; ++i) rr += s[i] * s[i];
    if (rr == 0.0) throw MetricError("reference row " + std::to_string(r) + " is all zeros");
    const Projection p = project(e, s, n);
    const double noise = p.noise + 1e-20;
    double v = p.target > 0.0 ? k * std::log(p.target / noise)
                              : -std::numeric_limits<double>::infinity();
    if (v >= kMetricCapDb || v <= -kMetricCapDb) {
      total += std::clamp(v, -kMetricCapDb, kMetricCapDb);
      continue;
    }
    total += v;
    for (Index i = 0; i < n; ++i) {
      const double st = p.scale * s[i];
      grad[r * n + i] = k * (2.0 * st / p.target - 2.0 * (e[i] - st) / noise);
    }
  }
  const double inv_b = 1.0 / static_cast<double>(b);
  return make_result({}, Array::Constant(1, -total * inv_b), {est}, "si_sdr_loss",
                     [grad = std::move(grad), inv_b](detail::Node& self) {
                       accumulate_grad(self.inputs[0], grad * (-inv_b * self.grad[0]));
                     });
}

Summary summarize(std::span<const double> values) {
  Summary s;
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - s.mean) * (v - s.mean);
  s.stdev = std::sqrt(var / static_cast<double>(values.size()));
  return s;
}

}  // namespace limuse
