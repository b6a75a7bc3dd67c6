// Copyright 2026 The limuse-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "limuse/ops.hpp"

namespace limuse {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                             Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

struct ConvGeom {
  Index batch, cin, len, cout, cin_g, cout_g, k, groups, stride, dil, pad_l,
      pad_r, lout;
};

// col(ci*k + j, t) = x(ci, t*stride + j*dil - pad_l), zero outside [0, len).
void im2col(const double* x, const ConvGeom& g, double* col) {
  for (Index ci = 0; ci < g.cin_g; ++ci) {
    const double* xr = x + ci * g.len;
    for (Index j = 0; j < g.k; ++j) {
      double* cr = col + (ci * g.k + j) * g.lout;
      const Index off = j * g.dil - g.pad_l;
      for (Index t = 0; t < g.lout; ++t) {
        const Index src = t * g.stride + off;
        cr[t] = (src >= 0 && src < g.len) ? xr[src] : 0.0;
      }
    }
  }
}

void col2im_add(const double* col, const ConvGeom& g, double* x) {
  for (Index ci = 0; ci < g.cin_g; ++ci) {
    double* xr = x + ci * g.len;
    for (Index j = 0; j < g.k; ++j) {
      const double* cr = col + (ci * g.k + j) * g.lout;
      const Index off = j * g.dil - g.pad_l;
      for (Index t = 0; t < g.lout; ++t) {
        const Index src = t * g.stride + off;
        if (src >= 0 && src < g.len) xr[src] += cr[t];
      }
    }
  }
}

// Valid output range [t0, t1) for tap offset `off` so that the source index
// t*stride + off stays inside [0, len).
void tap_range(const ConvGeom& g, Index off, Index& t0, Index& t1) {
  t0 = off >= 0 ? 0 : (-off + g.stride - 1) / g.stride;
  const Index last = g.len - 1 - off;  // need t*stride <= last
  t1 = last < 0 ? 0 : std::min(g.lout, last / g.stride + 1);
  if (t1 < t0) t1 = t0;
}

bool is_depthwise(const ConvGeom& g) { return g.cin_g == 1 && g.cout_g == 1; }
bool is_pointwise(const ConvGeom& g) {
  return g.k == 1 && g.stride == 1 && g.pad_l == 0 && g.pad_r == 0;
}

void conv_forward(const ConvGeom& g, const double* x, const double* w,
                  double* y) {
  if (is_depthwise(g)) {
    for (Index b = 0; b < g.batch; ++b) {
      for (Index c = 0; c < g.cout; ++c) {
        const double* xr = x + (b * g.cin + c) * g.len;
        double* yr = y + (b * g.cout + c) * g.lout;
        std::fill(yr, yr + g.lout, 0.0);
        for (Index j = 0; j < g.k; ++j) {
          const double wj = w[c * g.k + j];
          const Index off = j * g.dil - g.pad_l;
          Index t0, t1;
          tap_range(g, off, t0, t1);
          for (Index t = t0; t < t1; ++t) yr[t] += wj * xr[t * g.stride + off];
        }
      }
    }
    return;
  }
  std::vector<double> col;
  if (!is_pointwise(g)) col.resize(g.cin_g * g.k * g.lout);
  for (Index b = 0; b < g.batch; ++b) {
    for (Index gr = 0; gr < g.groups; ++gr) {
      const double* xb = x + (b * g.cin + gr * g.cin_g) * g.len;
      const double* src = xb;
      if (!is_pointwise(g)) {
        im2col(xb, g, col.data());
        src = col.data();
      }
      MapMat(y + (b * g.cout + gr * g.cout_g) * g.lout, g.cout_g, g.lout)
          .noalias() = CMapMat(w + gr * g.cout_g * g.cin_g * g.k, g.cout_g,
                               g.cin_g * g.k) *
                       CMapMat(src, g.cin_g * g.k, g.lout);
    }
  }
}

void conv_backward(const ConvGeom& g, const double* x, const double* w,
                   const double* gy, double* gx, double* gw) {
  if (is_depthwise(g)) {
    for (Index b = 0; b < g.batch; ++b) {
      for (Index c = 0; c < g.cout; ++c) {
        const double* xr = x + (b * g.cin + c) * g.len;
        const double* gr = gy + (b * g.cout + c) * g.lout;
        double* gxr = gx ? gx + (b * g.cin + c) * g.len : nullptr;
        for (Index j = 0; j < g.k; ++j) {
          const Index off = j * g.dil - g.pad_l;
          Index t0, t1;
          tap_range(g, off, t0, t1);
          const double wj = w[c * g.k + j];
          double acc = 0.0;
          for (Index t = t0; t < t1; ++t) {
            const Index s = t * g.stride + off;
            acc += gr[t] * xr[s];
            if (gxr) gxr[s] += wj * gr[t];
          }
          if (gw) gw[c * g.k + j] += acc;
        }
      }
    }
    return;
  }
  std::vector<double> col, gcol;
  if (!is_pointwise(g)) {
    col.resize(g.cin_g * g.k * g.lout);
    gcol.resize(col.size());
  }
  const Index kk = g.cin_g * g.k;
  for (Index b = 0; b < g.batch; ++b) {
    for (Index gr = 0; gr < g.groups; ++gr) {
      const double* xb = x + (b * g.cin + gr * g.cin_g) * g.len;
      CMapMat gyb(gy + (b * g.cout + gr * g.cout_g) * g.lout, g.cout_g, g.lout);
      CMapMat wg(w + gr * g.cout_g * kk, g.cout_g, kk);
      if (is_pointwise(g)) {
        if (gw) {
          MapMat(gw + gr * g.cout_g * kk, g.cout_g, kk).noalias() +=
              gyb * CMapMat(xb, kk, g.lout).transpose();
        }
        if (gx) {
          MapMat(gx + (b * g.cin + gr * g.cin_g) * g.len, kk, g.lout)
              .noalias() += wg.transpose() * gyb;
        }
        continue;
      }
      if (gw) {
        im2col(xb, g, col.data());
        MapMat(gw + gr * g.cout_g * kk, g.cout_g, kk).noalias() +=
            gyb * CMapMat(col.data(), kk, g.lout).transpose();
      }
      if (gx) {
        MapMat(gcol.data(), kk, g.lout).noalias() = wg.transpose() * gyb;
        col2im_add(gcol.data(), g, gx + (b * g.cin + gr * g.cin_g) * g.len);
      }
    }
  }
}

void add_channel_bias(Array& y, const Array& bias, Index batch, Index ch,
                      Index len) {
  for (Index b = 0; b < batch; ++b) {
    for (Index c = 0; c < ch; ++c) {
      y.segment((b * ch + c) * len, len) += bias[c];
    }
  }
}

Array channel_bias_grad(const Array& g, Index batch, Index ch, Index len) {
  Array gb = Array::Zero(ch);
  for (Index b = 0; b < batch; ++b) {
    for (Index c = 0; c < ch; ++c) gb[c] += g.segment((b * ch + c) * len, len).sum();
  }
  return gb;
}

void require_rank(const Tensor& t, int r, const char* what) {
  if (t.ndim() != r) {
    throw DimensionError(std::string(what) + " must be rank " +
                         std::to_string(r) + ", got " + shape_str(t.shape()));
  }
}

}  // namespace

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias,
              const ConvOptions& opt) {
  require_rank(x, 3, "conv1d input");
  require_rank(w, 3, "conv1d weight");
  ConvGeom g{};
  g.batch = x.dim(0);
  g.cin = x.dim(1);
  g.len = x.dim(2);
  g.cout = w.dim(0);
  g.cin_g = w.dim(1);
  g.k = w.dim(2);
  g.groups = opt.groups;
  g.stride = opt.stride;
  g.dil = opt.dilation;
  if (g.k < 1 || g.stride < 1 || g.dil < 1 || g.groups < 1) {
    throw DimensionError("conv1d: kernel, stride, dilation and groups must be >= 1");
  }
  if (g.cin % g.groups != 0 || g.cout % g.groups != 0) {
    throw DimensionError("conv1d: channels " + std::to_string(g.cin) + "->" +
                         std::to_string(g.cout) + " not divisible by groups " +
                         std::to_string(g.groups));
  }
  if (g.cin / g.groups != g.cin_g) {
    throw DimensionError("conv1d: weight " + shape_str(w.shape()) +
                         " does not match input " + shape_str(x.shape()) +
                         " with groups " + std::to_string(g.groups));
  }
  g.cout_g = g.cout / g.groups;
  const Index span = g.dil * (g.k - 1);
  switch (opt.pad) {
    case PadMode::kSame:
      g.pad_l = span / 2;
      g.pad_r = span - g.pad_l;
      break;
    case PadMode::kCausal:
      g.pad_l = span;
      g.pad_r = 0;
      break;
    case PadMode::kExplicit:
      if (opt.padding < 0) throw DimensionError("conv1d: negative padding");
      g.pad_l = g.pad_r = opt.padding;
      break;
  }
  const Index num = g.len + g.pad_l + g.pad_r - span - 1;
  if (num < 0) {
    throw DimensionError("conv1d: sequence of length " + std::to_string(g.len) +
                         " too short for receptive field " +
                         std::to_string(span + 1));
  }
  g.lout = num / g.stride + 1;
  if (bias.defined() && bias.numel() != g.cout) {
    throw DimensionError("conv1d: bias " + shape_str(bias.shape()) +
                         " does not match " + std::to_string(g.cout) +
                         " output channels");
  }

  Array y(g.batch * g.cout * g.lout);
  conv_forward(g, x.data().data(), w.data().data(), y.data());
  if (bias.defined()) add_channel_bias(y, bias.data(), g.batch, g.cout, g.lout);
  MacCounter::add(g.batch * g.cout * g.cin_g * g.k * g.lout);

  std::vector<Tensor> inputs{x, w};
  if (bias.defined()) inputs.push_back(bias);
  return make_result(
      Shape{g.batch, g.cout, g.lout}, std::move(y), inputs, "conv1d",
      [g](detail::Node& self) {
        const auto& nx = self.inputs[0];
        const auto& nw = self.inputs[1];
        Array gx, gw;
        if (nx->requires_grad) gx = Array::Zero(nx->value.size());
        if (nw->requires_grad) gw = Array::Zero(nw->value.size());
        conv_backward(g, nx->value.data(), nw->value.data(), self.grad.data(),
                      nx->requires_grad ? gx.data() : nullptr,
                      nw->requires_grad ? gw.data() : nullptr);
        if (nx->requires_grad) accumulate_grad(nx, std::move(gx));
        if (nw->requires_grad) accumulate_grad(nw, std::move(gw));
        if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
          accumulate_grad(self.inputs[2],
                          channel_bias_grad(self.grad, g.batch, g.cout, g.lout));
        }
      });
}

Tensor conv_transpose1d(const Tensor& x, const Tensor& w, const Tensor& bias,
                        Index stride) {
  require_rank(x, 3, "conv_transpose1d input");
  require_rank(w, 3, "conv_transpose1d weight");
  if (stride < 1) throw DimensionError("conv_transpose1d: stride must be >= 1");
  const Index batch = x.dim(0), cin = x.dim(1), frames = x.dim(2);
  const Index cout = w.dim(1), k = w.dim(2);
  if (w.dim(0) != cin) {
    throw DimensionError("conv_transpose1d: weight " + shape_str(w.shape()) +
                         " does not match input " + shape_str(x.shape()));
  }
  if (bias.defined() && bias.numel() != cout) {
    throw DimensionError("conv_transpose1d: bias size mismatch");
  }
  if (frames < 1) throw DimensionError("conv_transpose1d: empty input");
  const Index lout = (frames - 1) * stride + k;
  const Index ck = cout * k;
  Array y = Array::Zero(batch * cout * lout);
  std::vector<double> cols(ck * frames);
  CMapMat wm(w.data().data(), cin, ck);
  for (Index b = 0; b < batch; ++b) {
    MapMat(cols.data(), ck, frames).noalias() =
        wm.transpose() * CMapMat(x.data().data() + b * cin * frames, cin, frames);
    for (Index co = 0; co < cout; ++co) {
      double* yr = y.data() + (b * cout + co) * lout;
      for (Index j = 0; j < k; ++j) {
        const double* cr = cols.data() + (co * k + j) * frames;
        for (Index t = 0; t < frames; ++t) yr[t * stride + j] += cr[t];
      }
    }
  }
  if (bias.defined()) add_channel_bias(y, bias.data(), batch, cout, lout);
  MacCounter::add(batch * cin * cout * k * frames);

  std::vector<Tensor> inputs{x, w};
  if (bias.defined()) inputs.push_back(bias);
  return make_result(
      Shape{batch, cout, lout}, std::move(y), inputs, "conv_transpose1d",
      [=](detail::Node& self) {
        const auto& nx = self.inputs[0];
        const auto& nw = self.inputs[1];
        Array gx, gw;
        if (nx->requires_grad) gx = Array::Zero(nx->value.size());
        if (nw->requires_grad) gw = Array::Zero(nw->value.size());
        std::vector<double> gcols(ck * frames);
        CMapMat wv(nw->value.data(), cin, ck);
        for (Index b = 0; b < batch; ++b) {
          for (Index co = 0; co < cout; ++co) {
            const double* gr = self.grad.data() + (b * cout + co) * lout;
            for (Index j = 0; j < k; ++j) {
              double* cr = gcols.data() + (co * k + j) * frames;
              for (Index t = 0; t < frames; ++t) cr[t] = gr[t * stride + j];
            }
          }
          CMapMat gc(gcols.data(), ck, frames);
          if (nx->requires_grad) {
            MapMat(gx.data() + b * cin * frames, cin, frames).noalias() = wv * gc;
          }
          if (nw->requires_grad) {
            MapMat(gw.data(), cin, ck).noalias() +=
                CMapMat(nx->value.data() + b * cin * frames, cin, frames) *
                gc.transpose();
          }
        }
        if (nx->requires_grad) accumulate_grad(nx, std::move(gx));
        if (nw->requires_grad) accumulate_grad(nw, std::move(gw));
        if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
          accumulate_grad(self.inputs[2],
                          channel_bias_grad(self.grad, batch, cout, lout));
        }
      });
}

Tensor prelu(const Tensor& x, const Tensor& slope) {
  if (x.ndim() < 2) throw DimensionError("prelu needs a channel axis");
  const Index batch = x.dim(0), ch = x.dim(1);
  const Index inner = x.numel() / std::max<Index>(1, batch * ch);
  const bool shared = slope.numel() == 1;
  if (!shared && slope.numel() != ch) {
    throw DimensionError("prelu: slope " + shape_str(slope.shape()) +
                         " does not match channels of " + shape_str(x.shape()));
  }
  Array y(x.numel());
  const Array& v = x.data();
  for (Index b = 0; b < batch; ++b) {
    for (Index c = 0; c < ch; ++c) {
      const double a = slope.data()[shared ? 0 : c];
      const Index base = (b * ch + c) * inner;
      const auto xs = v.segment(base, inner);
      y.segment(base, inner) = (xs >= 0.0).select(xs, a * xs);
    }
  }
  return make_result(x.shape(), std::move(y), {x, slope}, "prelu",
                     [=](detail::Node& self) {
                       const auto& nx = self.inputs[0];
                       const auto& na = self.inputs[1];
                       Array gx(nx->value.size());
                       Array ga = Array::Zero(na->value.size());
                       for (Index b = 0; b < batch; ++b) {
                         for (Index c = 0; c < ch; ++c) {
                           const Index ai = shared ? 0 : c;
                           const double a = na->value[ai];
                           const Index base = (b * ch + c) * inner;
                           const auto xs = nx->value.segment(base, inner);
                           const auto gs = self.grad.segment(base, inner);
                           gx.segment(base, inner) = (xs >= 0.0).select(gs, a * gs);
                           ga[ai] += (xs < 0.0).select(gs * xs, 0.0).sum();
                         }
                       }
                       accumulate_grad(nx, std::move(gx));
                       accumulate_grad(na, std::move(ga));
                     });
}

Tensor layer_norm(const Tensor& x, NormMode mode, const Tensor& gain,
                  const Tensor& bias) {
  require_rank(x, 3, "layer_norm input");
  const Index batch = x.dim(0), ch = x.dim(1), len = x.dim(2);
  if (len < 1) throw DimensionError("layer_norm: empty sequence");
  if (gain.numel() != ch || bias.numel() != ch) {
    throw DimensionError("layer_norm: gain/bias must have " +
                         std::to_string(ch) + " entries");
  }
  const Array& v = x.data();
  Array xhat(x.numel());
  // Per-batch (global) or per-(batch, step) (cumulative) inverse std and mean.
  const Index nstat = mode == NormMode::kGlobal ? batch : batch * len;
  Array mu(nstat), rstd(nstat);
  for (Index b = 0; b < batch; ++b) {
    Eigen::Map<const RowMat> xb(v.data() + b * ch * len, ch, len);
    Eigen::Map<RowMat> hb(xhat.data() + b * ch * len, ch, len);
    if (mode == NormMode::kGlobal) {
      const double m = xb.mean();
      const double var = (xb.array() - m).square().mean();
      const double r = 1.0 / std::sqrt(var + kNormEps);
      mu[b] = m;
      rstd[b] = r;
      hb = (xb.array() - m) * r;
    } else {
      double s1 = 0.0, s2 = 0.0;
      for (Index t = 0; t < len; ++t) {
        s1 += xb.col(t).sum();
        s2 += xb.col(t).squaredNorm();
        const double cnt = static_cast<double>(ch * (t + 1));
        const double m = s1 / cnt;
        const double var = std::max(0.0, s2 / cnt - m * m);
        const double r = 1.0 / std::sqrt(var + kNormEps);
        mu[b * len + t] = m;
        rstd[b * len + t] = r;
        hb.col(t) = (xb.col(t).array() - m) * r;
      }
    }
  }
  Array y(x.numel());
  for (Index b = 0; b < batch; ++b) {
    for (Index c = 0; c < ch; ++c) {
      const Index base = (b * ch + c) * len;
      y.segment(base, len) = xhat.segment(base, len) * gain.data()[c] + bias.data()[c];
    }
  }
  return make_result(
      x.shape(), std::move(y), {x, gain, bias}, "layer_norm",
      [=, xhat = std::move(xhat), mu = std::move(mu),
       rstd = std::move(rstd)](detail::Node& self) {
        const auto& nx = self.inputs[0];
        const auto& ng = self.inputs[1];
        const auto& nb = self.inputs[2];
        const Array& g = self.grad;
        Array gg = Array::Zero(ch), gbias = Array::Zero(ch);
        Array dxhat(g.size());
        for (Index b = 0; b < batch; ++b) {
          for (Index c = 0; c < ch; ++c) {
            const Index base = (b * ch + c) * len;
            gg[c] += (g.segment(base, len) * xhat.segment(base, len)).sum();
            gbias[c] += g.segment(base, len).sum();
            dxhat.segment(base, len) = g.segment(base, len) * ng->value[c];
          }
        }
        if (ng->requires_grad) accumulate_grad(ng, std::move(gg));
        if (nb->requires_grad) accumulate_grad(nb, std::move(gbias));
        if (!nx->requires_grad) return;
        Array gx(g.size());
        for (Index b = 0; b < batch; ++b) {
          Eigen::Map<const RowMat> dh(dxhat.data() + b * ch * len, ch, len);
          Eigen::Map<const RowMat> hb(xhat.data() + b * ch * len, ch, len);
          Eigen::Map<RowMat> gxb(gx.data() + b * ch * len, ch, len);
          if (mode == NormMode::kGlobal) {
            const double m1 = dh.mean();
            const double m2 = (dh.array() * hb.array()).mean();
            gxb = rstd[b] * (dh.array() - m1 - hb.array() * m2);
          } else {
            Eigen::Map<const RowMat> xb(nx->value.data() + b * ch * len, ch, len);
            // Gradients w.r.t. the per-step mean and second moment, then
            // spread over every earlier step via suffix sums.
            Array dmean(len), dsq(len);
            for (Index t = 0; t < len; ++t) {
              const double r = rstd[b * len + t];
              const double m = mu[b * len + t];
              const double sum_dh = dh.col(t).sum();
              const double dr = (dh.col(t).array() * (xb.col(t).array() - m)).sum();
              const double dvar = -0.5 * r * r * r * dr;
              const double cnt = static_cast<double>(ch * (t + 1));
              // var = E[x^2] - m^2
              dmean[t] = (-r * sum_dh - 2.0 * m * dvar) / cnt;
              dsq[t] = dvar / cnt;
            }
            double acc_m = 0.0, acc_s = 0.0;
            for (Index t = len - 1; t >= 0; --t) {
              acc_m += dmean[t];
              acc_s += dsq[t];
              gxb.col(t) = dh.col(t).array() * rstd[b * len + t] + acc_m +
                           2.0 * acc_s * xb.col(t).array();
            }
          }
        }
        accumulate_grad(nx, std::move(gx));
      });
}

Index block_count(Index length, Index size, Index hop) {
  if (size < 1 || hop < 1) throw DimensionError("block size and hop must be >= 1");
  if (length <= size) return 1;
  return (length - size + hop - 1) / hop + 1;
}

Tensor segment_blocks(const Tensor& x, Index size, Index hop) {
  require_rank(x, 3, "segment_blocks input");
  const Index batch = x.dim(0), ch = x.dim(1), len = x.dim(2);
  if (len < 1) throw DimensionError("segment_blocks: empty sequence");
  const Index nblk = block_count(len, size, hop);
  Array y = Array::Zero(batch * nblk * ch * size);
  const Array& v = x.data();
  for (Index b = 0; b < batch; ++b) {
    for (Index i = 0; i < nblk; ++i) {
      const Index start = i * hop;
      const Index n = std::min(size, len - start);
      for (Index c = 0; c < ch; ++c) {
        y.segment(((b * nblk + i) * ch + c) * size, n) =
            v.segment((b * ch + c) * len + start, n);
      }
    }
  }
  return make_result(Shape{batch * nblk, ch, size}, std::move(y), {x},
                     "segment_blocks", [=](detail::Node& self) {
                       Array g = Array::Zero(batch * ch * len);
                       for (Index b = 0; b < batch; ++b) {
                         for (Index i = 0; i < nblk; ++i) {
                           const Index start = i * hop;
                           const Index n = std::min(size, len - start);
                           for (Index c = 0; c < ch; ++c) {
                             g.segment((b * ch + c) * len + start, n) +=
                                 self.grad.segment(((b * nblk + i) * ch + c) * size, n);
                           }
                         }
                       }
                       accumulate_grad(self.inputs[0], std::move(g));
                     });
}

Tensor overlap_add_blocks(const Tensor& blocks, Index batch, Index length,
                          Index hop) {
  require_rank(blocks, 3, "overlap_add_blocks input");
  if (batch < 1 || blocks.dim(0) % batch != 0) {
    throw DimensionError("overlap_add_blocks: " + std::to_string(blocks.dim(0)) +
                         " blocks not divisible by batch " + std::to_string(batch));
  }
  const Index nblk = blocks.dim(0) / batch, ch = blocks.dim(1),
              size = blocks.dim(2);
  if (block_count(length, size, hop) != nblk) {
    throw DimensionError("overlap_add_blocks: " + std::to_string(nblk) +
                         " blocks do not match length " + std::to_string(length));
  }
  Array count = Array::Zero(length);
  for (Index i = 0; i < nblk; ++i) {
    const Index start = i * hop;
    const Index n = std::min(size, length - start);
    count.segment(start, n) += 1.0;
  }
  Array inv = count.inverse();
  Array y = Array::Zero(batch * ch * length);
  const Array& v = blocks.data();
  for (Index b = 0; b < batch; ++b) {
    for (Index i = 0; i < nblk; ++i) {
      const Index start = i * hop;
      const Index n = std::min(size, length - start);
      for (Index c = 0; c < ch; ++c) {
        y.segment((b * ch + c) * length + start, n) +=
            v.segment(((b * nblk + i) * ch + c) * size, n);
      }
    }
    for (Index c = 0; c < ch; ++c) y.segment((b * ch + c) * length, length) *= inv;
  }
  return make_result(Shape{batch, ch, length}, std::move(y), {blocks},
                     "overlap_add_blocks", [=](detail::Node& self) {
                       Array g = Array::Zero(batch * nblk * ch * size);
                       for (Index b = 0; b < batch; ++b) {
                         for (Index i = 0; i < nblk; ++i) {
                           const Index start = i * hop;
                           const Index n = std::min(size, length - start);
                           for (Index c = 0; c < ch; ++c) {
                             g.segment(((b * nblk + i) * ch + c) * size, n) =
                                 self.grad.segment((b * ch + c) * length + start, n) *
                                 inv.segment(start, n);
                           }
                         }
                       }
                       accumulate_grad(self.inputs[0], std::move(g));
                     });
}

}  // namespace limuse
