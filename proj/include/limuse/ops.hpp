// Copyright 2026 The limuse-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Differentiable primitives over Tensor. All functions are free functions
// returning new tensors; none mutate their arguments.

#pragma once

#include "limuse/tensor.hpp"

#include <vector>

namespace limuse {

// ---- elementwise -----------------------------------------------------------
// Binary ops broadcast over trailing dimensions: shapes are right-aligned and
// each pair of extents must be equal or one of them 1.
Shape broadcast_shape(const Shape& a, const Shape& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double b);
Tensor mul(const Tensor& a, double b);

Tensor neg(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor clamp(const Tensor& x, double lo, double hi);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor square(const Tensor& x);
Tensor sqrt(const Tensor& x);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator*(const Tensor& a, double b) { return mul(a, b); }
inline Tensor operator*(double b, const Tensor& a) { return mul(a, b); }
inline Tensor operator+(const Tensor& a, double b) { return add(a, b); }

// ---- reductions ------------------------------------------------------------
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum(const Tensor& x, int axis, bool keepdim = false);
Tensor mean(const Tensor& x, int axis, bool keepdim = false);
Tensor dot(const Tensor& a, const Tensor& b);  // over all elements
Tensor l2_norm(const Tensor& x);               // over all elements

// ---- shape -----------------------------------------------------------------
Tensor reshape(const Tensor& x, const Shape& shape);
Tensor permute(const Tensor& x, const std::vector<int>& axes);
Tensor transpose(const Tensor& x, int a0, int a1);
Tensor broadcast_to(const Tensor& x, const Shape& shape);
Tensor concat(const std::vector<Tensor>& xs, int axis);
std::vector<Tensor> split(const Tensor& x, int axis,
                          const std::vector<Index>& sizes);
Tensor slice(const Tensor& x, int axis, Index start, Index length);
Tensor pad(const Tensor& x, int axis, Index left, Index right);
// Nearest-neighbour resampling of the last axis: out[t] = in[floor(t*E/T)].
Tensor upsample_nearest(const Tensor& x, Index length);

// ---- linear algebra --------------------------------------------------------
Tensor matmul(const Tensor& a, const Tensor& b);

// ---- neural-network primitives ---------------------------------------------
enum class PadMode { kSame, kCausal, kExplicit };

struct ConvOptions {
  Index stride = 1;
  Index dilation = 1;
  Index groups = 1;
  PadMode pad = PadMode::kExplicit;
  Index padding = 0;  // per side, kExplicit only
};

// x: B x Cin x L, w: Cout x (Cin/groups) x k, bias: Cout or undefined.
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias,
              const ConvOptions& opt = {});
// x: B x Cin x T, w: Cin x Cout x k. Output B x Cout x ((T-1)*stride + k).
Tensor conv_transpose1d(const Tensor& x, const Tensor& w, const Tensor& bias,
                        Index stride);

// Per-channel slope over axis 1 (slope has C entries, or 1 shared entry).
Tensor prelu(const Tensor& x, const Tensor& slope);

enum class NormMode { kGlobal, kCumulative };
inline constexpr double kNormEps = 1e-8;
// x: B x C x L; gain and bias have C entries.
Tensor layer_norm(const Tensor& x, NormMode mode, const Tensor& gain,
                  const Tensor& bias);

// Number of 50%-style blocks of length `size` with step `hop` after minimal
// right zero-padding of `length` frames.
Index block_count(Index length, Index size, Index hop);
// x: B x C x L -> (B*nblk) x C x size, block i of batch b at row b*nblk+i.
Tensor segment_blocks(const Tensor& x, Index size, Index hop);
// Inverse of segment_blocks: overlap-add, divide by per-frame block count,
// trim to `length`. blocks: (B*nblk) x C x size.
Tensor overlap_add_blocks(const Tensor& blocks, Index batch, Index length,
                          Index hop);

}  // namespace limuse
