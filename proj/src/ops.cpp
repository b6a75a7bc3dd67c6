// Copyright 2026 The limuse-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "limuse/ops.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace limuse {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                             Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

int norm_axis(int axis, int nd, const Shape& s) {
  if (axis < 0) axis += nd;
  if (axis < 0 || axis >= nd) {
    throw DimensionError("axis out of range for " + shape_str(s));
  }
  return axis;
}

// (outer, extent, inner) factorisation of a shape around `axis`.
struct AxisSplit {
  Index outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, int axis) {
  AxisSplit r;
  for (int i = 0; i < axis; ++i) r.outer *= s[i];
  r.extent = s[axis];
  for (size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

// Flat index into `in` for every element of `out` under trailing broadcast.
std::vector<Index> broadcast_map(const Shape& out, const Shape& in) {
  const int no = static_cast<int>(out.size());
  const int ni = static_cast<int>(in.size());
  std::vector<Index> stride(no, 0);
  Index s = 1;
  for (int i = ni - 1; i >= 0; --i) {
    const int o = no - ni + i;
    stride[o] = in[i] == 1 ? 0 : s;
    s *= in[i];
  }
  const Index n = numel_of(out);
  std::vector<Index> map(n);
  std::vector<Index> idx(no, 0);
  Index flat = 0;
  for (Index k = 0; k < n; ++k) {
    map[k] = flat;
    for (int d = no - 1; d >= 0; --d) {
      ++idx[d];
      flat += stride[d];
      if (idx[d] < out[d]) break;
      flat -= stride[d] * out[d];
      idx[d] = 0;
    }
  }
  return map;
}

// How one operand of a broadcast maps onto the output. The output is cut into
// chunks of `run` elements; chunk k copies input[src[k]*run, +run) (copy mode)
// or repeats input[src[k]] (repeat mode).
struct Expand {
  bool identity = true;
  bool repeat = false;
  Index run = 1;
  Index n_in = 0;
  std::vector<Index> src;

  Array apply(const Array& v) const {
    if (identity) return v;
    Array y(static_cast<Index>(src.size()) * run);
    for (size_t k = 0; k < src.size(); ++k) {
      if (repeat) {
        y.segment(k * run, run).setConstant(v[src[k]]);
      } else {
        y.segment(k * run, run) = v.segment(src[k] * run, run);
      }
    }
    return y;
  }
  // y += sign * expand(v)
  void add_into(Array& y, const Array& v, double sign) const {
    if (identity) {
      y += sign * v;
      return;
    }
    for (size_t k = 0; k < src.size(); ++k) {
      if (repeat) {
        y.segment(k * run, run) += sign * v[src[k]];
      } else {
        y.segment(k * run, run) += sign * v.segment(src[k] * run, run);
      }
    }
  }
  // Sum a gradient over the broadcast copies.
  Array reduce(const Array& g) const {
    if (identity) return g;
    Array r = Array::Zero(n_in);
    for (size_t k = 0; k < src.size(); ++k) {
      if (repeat) {
        r[src[k]] += g.segment(k * run, run).sum();
      } else {
        r.segment(src[k] * run, run) += g.segment(k * run, run);
      }
    }
    return r;
  }
};

Expand make_expand(const Shape& out, const Shape& in) {
  Expand e;
  e.n_in = numel_of(in);
  if (in == out) return e;
  e.identity = false;
  const size_t no = out.size();
  Shape full(no - in.size(), 1);
  full.insert(full.end(), in.begin(), in.end());
  size_t cut = no;
  while (cut > 0 && full[cut - 1] == out[cut - 1]) --cut;
  if (cut == no) {
    e.repeat = true;
    while (cut > 0 && full[cut - 1] == 1) --cut;
  }
  for (size_t d = cut; d < no; ++d) e.run *= out[d];
  e.src = broadcast_map(Shape(out.begin(), out.begin() + cut),
                        Shape(full.begin(), full.begin() + cut));
  return e;
}

struct Broadcast {
  Shape out;
  Expand a, b;
};

std::shared_ptr<Broadcast> make_broadcast(const Tensor& x, const Tensor& y) {
  auto bc = std::make_shared<Broadcast>();
  bc->out = broadcast_shape(x.shape(), y.shape());
  bc->a = make_expand(bc->out, x.shape());
  bc->b = make_expand(bc->out, y.shape());
  return bc;
}

template <class Fwd, class Bwd>
Tensor unary(const Tensor& x, const char* op, Fwd fwd, Bwd bwd) {
  Array y = fwd(x.data());
  return make_result(x.shape(), std::move(y), {x}, op,
                     [bwd](detail::Node& self) {
                       const auto& in = self.inputs[0];
                       accumulate_grad(in, bwd(in->value, self.value, self.grad));
                     });
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const size_t n = std::max(a.size(), b.size());
  Shape out(n);
  for (size_t i = 0; i < n; ++i) {
    const Index da = i < n - a.size() ? 1 : a[i - (n - a.size())];
    const Index db = i < n - b.size() ? 1 : b[i - (n - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw DimensionError("cannot broadcast " + shape_str(a) + " with " +
                           shape_str(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  auto bc = make_broadcast(a, b);
  Array y = bc->a.apply(a.data());
  bc->b.add_into(y, b.data(), 1.0);
  return make_result(bc->out, std::move(y), {a, b}, "add",
                     [bc](detail::Node& self) {
                       accumulate_grad(self.inputs[0], bc->a.reduce(self.grad));
                       accumulate_grad(self.inputs[1], bc->b.reduce(self.grad));
                     });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  auto bc = make_broadcast(a, b);
  Array y = bc->a.apply(a.data());
  bc->b.add_into(y, b.data(), -1.0);
  return make_result(bc->out, std::move(y), {a, b}, "sub",
                     [bc](detail::Node& self) {
                       accumulate_grad(self.inputs[0], bc->a.reduce(self.grad));
                       if (self.inputs[1]->requires_grad) {
                         accumulate_grad(self.inputs[1], bc->b.reduce(-self.grad));
                       }
                     });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  auto bc = make_broadcast(a, b);
  Array y = bc->a.apply(a.data()) * bc->b.apply(b.data());
  return make_result(bc->out, std::move(y), {a, b}, "mul",
                     [bc](detail::Node& self) {
                       const auto& na = self.inputs[0];
                       const auto& nb = self.inputs[1];
                       if (na->requires_grad) {
                         accumulate_grad(na, bc->a.reduce(self.grad * bc->b.apply(nb->value)));
                       }
                       if (nb->requires_grad) {
                         accumulate_grad(nb, bc->b.reduce(self.grad * bc->a.apply(na->value)));
                       }
                     });
}

Tensor div(const Tensor& a, const Tensor& b) {
  auto bc = make_broadcast(a, b);
  Array y = bc->a.apply(a.data()) / bc->b.apply(b.data());
  return make_result(bc->out, std::move(y), {a, b}, "div",
                     [bc](detail::Node& self) {
                       const auto& na = self.inputs[0];
                       const auto& nb = self.inputs[1];
                       const Array eb = bc->b.apply(nb->value);
                       if (na->requires_grad) {
                         accumulate_grad(na, bc->a.reduce(self.grad / eb));
                       }
                       if (nb->requires_grad) {
                         // d(a/b)/db = -(a/b)/b
                         accumulate_grad(nb, bc->b.reduce(-self.grad * self.value / eb));
                       }
                     });
}

Tensor add(const Tensor& a, double b) {
  return unary(a, "add_scalar", [b](const Array& x) -> Array { return x + b; },
               [](const Array&, const Array&, const Array& g) -> Array { return g; });
}

Tensor mul(const Tensor& a, double b) {
  return unary(a, "mul_scalar", [b](const Array& x) -> Array { return x * b; },
               [b](const Array&, const Array&, const Array& g) -> Array {
                 return g * b;
               });
}

Tensor neg(const Tensor& x) { return mul(x, -1.0); }

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, "sigmoid",
      [](const Array& v) -> Array { return 1.0 / (1.0 + (-v).exp()); },
      [](const Array&, const Array& y, const Array& g) -> Array {
        return g * y * (1.0 - y);
      });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, "relu", [](const Array& v) -> Array { return v.max(0.0); },
      [](const Array& v, const Array&, const Array& g) -> Array {
        return (v > 0.0).select(g, 0.0);
      });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  return unary(
      x, "clamp", [lo, hi](const Array& v) -> Array { return v.max(lo).min(hi); },
      [lo, hi](const Array& v, const Array&, const Array& g) -> Array {
        return (v >= lo && v <= hi).select(g, 0.0);
      });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, "exp", [](const Array& v) -> Array { return v.exp(); },
      [](const Array&, const Array& y, const Array& g) -> Array { return g * y; });
}

Tensor log(const Tensor& x) {
  return unary(
      x, "log", [](const Array& v) -> Array { return v.log(); },
      [](const Array& v, const Array&, const Array& g) -> Array { return g / v; });
}

Tensor square(const Tensor& x) {
  return unary(
      x, "square", [](const Array& v) -> Array { return v.square(); },
      [](const Array& v, const Array&, const Array& g) -> Array {
        return 2.0 * g * v;
      });
}

Tensor sqrt(const Tensor& x) {
  return unary(
      x, "sqrt", [](const Array& v) -> Array { return v.sqrt(); },
      [](const Array&, const Array& y, const Array& g) -> Array {
        return g / (2.0 * y);
      });
}

// ---- reductions ------------------------------------------------------------

Tensor sum(const Tensor& x) {
  return make_result(Shape{}, Array::Constant(1, x.data().sum()), {x}, "sum",
                     [](detail::Node& self) {
                       const auto& in = self.inputs[0];
                       accumulate_grad(in, Array::Constant(in->value.size(),
                                                           self.grad[0]));
                     });
}

Tensor mean(const Tensor& x) {
  const double n = static_cast<double>(x.numel());
  return mul(sum(x), 1.0 / n);
}

Tensor sum(const Tensor& x, int axis, bool keepdim) {
  axis = norm_axis(axis, x.ndim(), x.shape());
  const AxisSplit sp = split_at(x.shape(), axis);
  Shape out_shape = x.shape();
  if (keepdim) {
    out_shape[axis] = 1;
  } else {
    out_shape.erase(out_shape.begin() + axis);
  }
  Array y = Array::Zero(sp.outer * sp.inner);
  const Array& v = x.data();
  for (Index o = 0; o < sp.outer; ++o) {
    for (Index e = 0; e < sp.extent; ++e) {
      y.segment(o * sp.inner, sp.inner) +=
          v.segment((o * sp.extent + e) * sp.inner, sp.inner);
    }
  }
  return make_result(out_shape, std::move(y), {x}, "sum_axis",
                     [sp](detail::Node& self) {
                       Array g(sp.outer * sp.extent * sp.inner);
                       for (Index o = 0; o < sp.outer; ++o) {
                         for (Index e = 0; e < sp.extent; ++e) {
                           g.segment((o * sp.extent + e) * sp.inner, sp.inner) =
                               self.grad.segment(o * sp.inner, sp.inner);
                         }
                       }
                       accumulate_grad(self.inputs[0], std::move(g));
                     });
}

Tensor mean(const Tensor& x, int axis, bool keepdim) {
  const Index n = x.dim(axis);
  return mul(sum(x, axis, keepdim), 1.0 / static_cast<double>(n));
}

Tensor dot(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("dot: shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
  const double v = (a.data() * b.data()).sum();
  return make_result(Shape{}, Array::Constant(1, v), {a, b}, "dot",
                     [](detail::Node& self) {
                       const double g = self.grad[0];
                       const auto& na = self.inputs[0];
                       const auto& nb = self.inputs[1];
                       if (na->requires_grad) accumulate_grad(na, g * nb->value);
                       if (nb->requires_grad) accumulate_grad(nb, g * na->value);
                     });
}

Tensor l2_norm(const Tensor& x) {
  const double n = std::sqrt(x.data().square().sum());
  return make_result(Shape{}, Array::Constant(1, n), {x}, "l2_norm",
                     [](detail::Node& self) {
                       const double nrm = self.value[0];
                       const auto& in = self.inputs[0];
                       if (nrm == 0.0) {
                         accumulate_grad(in, Array::Zero(in->value.size()));
                       } else {
                         accumulate_grad(in, (self.grad[0] / nrm) * in->value);
                       }
                     });
}

// ---- shape -----------------------------------------------------------------

Tensor reshape(const Tensor& x, const Shape& shape) {
  if (numel_of(shape) != x.numel()) {
    throw DimensionError("reshape " + shape_str(x.shape()) + " -> " +
                         shape_str(shape) + " changes element count");
  }
  return make_result(shape, x.data(), {x}, "reshape", [](detail::Node& self) {
    accumulate_grad(self.inputs[0], std::move(self.grad));
  });
}

Tensor permute(const Tensor& x, const std::vector<int>& axes) {
  const int nd = x.ndim();
  if (static_cast<int>(axes.size()) != nd) {
    throw DimensionError("permute: rank mismatch for " + shape_str(x.shape()));
  }
  std::vector<int> check(axes);
  std::sort(check.begin(), check.end());
  for (int i = 0; i < nd; ++i) {
    if (check[i] != i) throw DimensionError("permute: invalid axis list");
  }
  Shape out(nd);
  std::vector<Index> in_stride(nd);
  Index s = 1;
  for (int i = nd - 1; i >= 0; --i) {
    in_stride[i] = s;
    s *= x.shape()[i];
  }
  for (int i = 0; i < nd; ++i) out[i] = x.shape()[axes[i]];
  // map[k] = source flat index of output element k
  auto map = std::make_shared<std::vector<Index>>(x.numel());
  std::vector<Index> idx(nd, 0);
  Index flat = 0;
  for (Index k = 0; k < x.numel(); ++k) {
    (*map)[k] = flat;
    for (int d = nd - 1; d >= 0; --d) {
      ++idx[d];
      flat += in_stride[axes[d]];
      if (idx[d] < out[d]) break;
      flat -= in_stride[axes[d]] * out[d];
      idx[d] = 0;
    }
  }
  Array y(x.numel());
  const Array& v = x.data();
  for (Index k = 0; k < x.numel(); ++k) y[k] = v[(*map)[k]];
  return make_result(out, std::move(y), {x}, "permute", [map](detail::Node& self) {
    Array g(self.grad.size());
    for (size_t k = 0; k < map->size(); ++k) g[(*map)[k]] = self.grad[k];
    accumulate_grad(self.inputs[0], std::move(g));
  });
}

Tensor transpose(const Tensor& x, int a0, int a1) {
  const int nd = x.ndim();
  a0 = norm_axis(a0, nd, x.shape());
  a1 = norm_axis(a1, nd, x.shape());
  std::vector<int> axes(nd);
  std::iota(axes.begin(), axes.end(), 0);
  std::swap(axes[a0], axes[a1]);
  return permute(x, axes);
}

Tensor broadcast_to(const Tensor& x, const Shape& shape) {
  if (broadcast_shape(x.shape(), shape) != shape) {
    throw DimensionError("cannot broadcast " + shape_str(x.shape()) + " to " +
                         shape_str(shape));
  }
  if (x.shape() == shape) return x;
  auto e = std::make_shared<Expand>(make_expand(shape, x.shape()));
  return make_result(shape, e->apply(x.data()), {x}, "broadcast_to",
                     [e](detail::Node& self) {
                       accumulate_grad(self.inputs[0], e->reduce(self.grad));
                     });
}

Tensor concat(const std::vector<Tensor>& xs, int axis) {
  if (xs.empty()) throw DimensionError("concat of zero tensors");
  const Shape& s0 = xs[0].shape();
  axis = norm_axis(axis, static_cast<int>(s0.size()), s0);
  Shape out = s0;
  out[axis] = 0;
  std::vector<Index> extents;
  for (const auto& t : xs) {
    Shape a = t.shape(), b = s0;
    if (a.size() != b.size()) {
      throw DimensionError("concat: rank mismatch " + shape_str(a) + " vs " +
                           shape_str(b));
    }
    a[axis] = b[axis] = 0;
    if (a != b) {
      throw DimensionError("concat: shape mismatch " + shape_str(t.shape()) +
                           " vs " + shape_str(s0));
    }
    extents.push_back(t.shape()[axis]);
    out[axis] += t.shape()[axis];
  }
  const AxisSplit sp = split_at(out, axis);
  Array y(numel_of(out));
  Index offset = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    const Index w = extents[i] * sp.inner;
    for (Index o = 0; o < sp.outer; ++o) {
      y.segment(o * sp.extent * sp.inner + offset * sp.inner, w) =
          xs[i].data().segment(o * w, w);
    }
    offset += extents[i];
  }
  return make_result(out, std::move(y), xs, "concat",
                     [sp, extents](detail::Node& self) {
                       Index off = 0;
                       for (size_t i = 0; i < extents.size(); ++i) {
                         const Index w = extents[i] * sp.inner;
                         const auto& in = self.inputs[i];
                         if (in->requires_grad) {
                           Array g(sp.outer * w);
                           for (Index o = 0; o < sp.outer; ++o) {
                             g.segment(o * w, w) = self.grad.segment(
                                 o * sp.extent * sp.inner + off * sp.inner, w);
                           }
                           accumulate_grad(in, std::move(g));
                         }
                         off += extents[i];
                       }
                     });
}

Tensor slice(const Tensor& x, int axis, Index start, Index length) {
  axis = norm_axis(axis, x.ndim(), x.shape());
  if (start < 0 || length < 0 || start + length > x.shape()[axis]) {
    throw DimensionError("slice [" + std::to_string(start) + ", +" +
                         std::to_string(length) + ") out of range for " +
                         shape_str(x.shape()));
  }
  const AxisSplit sp = split_at(x.shape(), axis);
  Shape out = x.shape();
  out[axis] = length;
  const Index w = length * sp.inner;
  Array y(sp.outer * w);
  for (Index o = 0; o < sp.outer; ++o) {
    y.segment(o * w, w) =
        x.data().segment((o * sp.extent + start) * sp.inner, w);
  }
  return make_result(out, std::move(y), {x}, "slice",
                     [sp, start, w](detail::Node& self) {
                       Array g = Array::Zero(sp.outer * sp.extent * sp.inner);
                       for (Index o = 0; o < sp.outer; ++o) {
                         g.segment((o * sp.extent + start) * sp.inner, w) =
                             self.grad.segment(o * w, w);
                       }
                       accumulate_grad(self.inputs[0], std::move(g));
                     });
}

std::vector<Tensor> split(const Tensor& x, int axis,
                          const std::vector<Index>& sizes) {
  axis = norm_axis(axis, x.ndim(), x.shape());
  const Index total = std::accumulate(sizes.begin(), sizes.end(), Index{0});
  if (total != x.shape()[axis]) {
    throw DimensionError("split sizes sum to " + std::to_string(total) +
                         ", axis extent is " + std::to_string(x.shape()[axis]));
  }
  std::vector<Tensor> out;
  Index start = 0;
  for (Index s : sizes) {
    out.push_back(slice(x, axis, start, s));
    start += s;
  }
  return out;
}

Tensor pad(const Tensor& x, int axis, Index left, Index right) {
  axis = norm_axis(axis, x.ndim(), x.shape());
  if (left < 0 || right < 0) throw DimensionError("negative padding");
  const AxisSplit sp = split_at(x.shape(), axis);
  Shape out = x.shape();
  out[axis] += left + right;
  const Index ext = out[axis];
  const Index w = sp.extent * sp.inner;
  Array y = Array::Zero(numel_of(out));
  for (Index o = 0; o < sp.outer; ++o) {
    y.segment((o * ext + left) * sp.inner, w) = x.data().segment(o * w, w);
  }
  return make_result(out, std::move(y), {x}, "pad",
                     [sp, ext, left, w](detail::Node& self) {
                       Array g(sp.outer * w);
                       for (Index o = 0; o < sp.outer; ++o) {
                         g.segment(o * w, w) = self.grad.segment(
                             (o * ext + left) * sp.inner, w);
                       }
                       accumulate_grad(self.inputs[0], std::move(g));
                     });
}

Tensor upsample_nearest(const Tensor& x, Index length) {
  if (x.ndim() < 1) throw DimensionError("upsample_nearest needs rank >= 1");
  const Index e = x.shape().back();
  if (e < 1) throw DimensionError("upsample_nearest: empty source axis");
  if (length < 1) throw DimensionError("upsample_nearest: empty target axis");
  const Index rows = x.numel() / e;
  std::vector<Index> src(length);
  for (Index t = 0; t < length; ++t) src[t] = (t * e) / length;
  Shape out = x.shape();
  out.back() = length;
  Array y(rows * length);
  for (Index r = 0; r < rows; ++r) {
    for (Index t = 0; t < length; ++t) y[r * length + t] = x.data()[r * e + src[t]];
  }
  return make_result(out, std::move(y), {x}, "upsample_nearest",
                     [src, rows, e, length](detail::Node& self) {
                       Array g = Array::Zero(rows * e);
                       for (Index r = 0; r < rows; ++r) {
                         for (Index t = 0; t < length; ++t) {
                           g[r * e + src[t]] += self.grad[r * length + t];
                         }
                       }
                       accumulate_grad(self.inputs[0], std::move(g));
                     });
}

// ---- linear algebra --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2) {
    throw DimensionError("matmul needs 2-D operands, got " +
                         shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const Index m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul inner dimensions differ: " +
                         shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  Array y(m * n);
  MapMat(y.data(), m, n).noalias() =
      CMapMat(a.data().data(), m, k) * CMapMat(b.data().data(), k, n);
  MacCounter::add(m * k * n);
  return make_result(Shape{m, n}, std::move(y), {a, b}, "matmul",
                     [m, k, n](detail::Node& self) {
                       const auto& na = self.inputs[0];
                       const auto& nb = self.inputs[1];
                       CMapMat g(self.grad.data(), m, n);
                       if (na->requires_grad) {
                         Array ga(m * k);
                         MapMat(ga.data(), m, k).noalias() =
                             g * CMapMat(nb->value.data(), k, n).transpose();
                         accumulate_grad(na, std::move(ga));
                       }
                       if (nb->requires_grad) {
                         Array gb(k * n);
                         MapMat(gb.data(), k, n).noalias() =
                             CMapMat(na->value.data(), m, k).transpose() * g;
                         accumulate_grad(nb, std::move(gb));
                       }
                     });
}

}  // namespace limuse
