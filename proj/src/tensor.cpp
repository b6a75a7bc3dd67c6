// Copyright 2026 The limuse-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "limuse/tensor.hpp"

#include <sstream>
#include <unordered_set>

namespace limuse {

namespace {
thread_local bool g_grad_enabled = true;
thread_local std::int64_t g_macs = 0;
}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

double round_to_float(double v) { return static_cast<float>(v); }

Index numel_of(const Shape& s) {
  Index n = 1;
  for (Index d : s) {
    if (d < 0) throw DimensionError("negative extent in shape " + shape_str(s));
    n *= d;
  }
  return n;
}

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
  return from(shape, Array::Zero(numel_of(shape)), requires_grad);
}

Tensor Tensor::ones(const Shape& shape, bool requires_grad) {
  return from(shape, Array::Ones(numel_of(shape)), requires_grad);
}

Tensor Tensor::full(const Shape& shape, double value, bool requires_grad) {
  return from(shape, Array::Constant(numel_of(shape), value), requires_grad);
}

Tensor Tensor::from(const Shape& shape, Array values, bool requires_grad) {
  if (numel_of(shape) != values.size()) {
    throw DimensionError("shape " + shape_str(shape) + " holds " +
                         std::to_string(numel_of(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  auto n = std::make_shared<detail::Node>();
  n->shape = shape;
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::from(const Shape& shape, std::initializer_list<double> values,
                    bool requires_grad) {
  Array a(static_cast<Index>(values.size()));
  Index i = 0;
  for (double v : values) a[i++] = v;
  return from(shape, std::move(a), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from(Shape{}, Array::Constant(1, value), requires_grad);
}

Index Tensor::dim(int axis) const {
  const int nd = ndim();
  if (axis < 0) axis += nd;
  if (axis < 0 || axis >= nd) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " +
                         shape_str(shape()));
  }
  return node_->shape[axis];
}

double Tensor::item() const {
  if (numel() != 1) {
    throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  }
  return node_->value[0];
}

double Tensor::at(std::initializer_list<Index> idx) const {
  if (static_cast<int>(idx.size()) != ndim()) {
    throw DimensionError("index rank mismatch for " + shape_str(shape()));
  }
  Index flat = 0;
  int a = 0;
  for (Index i : idx) {
    if (i < 0 || i >= node_->shape[a]) {
      throw DimensionError("index out of range for " + shape_str(shape()));
    }
    flat = flat * node_->shape[a] + i;
    ++a;
  }
  return node_->value[flat];
}

void Tensor::set_requires_grad(bool on) {
  if (!node_->leaf) throw GradError("requires_grad can only be set on leaves");
  node_->requires_grad = on;
}

const Array& Tensor::grad() const {
  if (!has_grad()) throw GradError("tensor has no gradient");
  return node_->grad;
}

Tensor Tensor::detach() const {
  return from(shape(), node_->value, false);
}

Tensor Tensor::clone() const {
  return from(shape(), node_->value, node_->requires_grad && node_->leaf);
}

void Tensor::backward() {
  if (numel() != 1) {
    throw GradError("backward() needs a scalar, got " + shape_str(shape()));
  }
  if (node_->backward_done) {
    throw GradError("backward() called twice on the same graph");
  }
  if (!node_->requires_grad) {
    throw GradError("backward() on a tensor that does not require grad");
  }

  // Iterative post-order DFS: `order` ends up topologically sorted with the
  // root last.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      detail::Node* child = n->inputs[next++].get();
      if (child->requires_grad && !seen.count(child)) {
        seen.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->grad_buffer().setOnes();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->leaf) {
      n->grad_buffer();
      continue;
    }
    if (n->backward && n->grad.size() == n->value.size()) n->backward(*n);
    if (n != node_.get()) n->grad.resize(0);
  }

  // Release the graph. Intermediate gradients are dropped as well.
  for (detail::Node* n : order) {
    if (n->leaf) continue;
    n->backward = nullptr;
    n->inputs.clear();
    if (n != node_.get()) n->grad.resize(0);
  }
  node_->backward_done = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Tensor make_result(Shape shape, Array value, std::vector<Tensor> inputs,
                   const char* op,
                   std::function<void(detail::Node&)> backward) {
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->op = op;
  n->leaf = false;
  bool track = false;
  if (g_grad_enabled) {
    for (const auto& t : inputs) track = track || t.requires_grad();
  }
  if (track) {
    n->requires_grad = true;
    n->inputs.reserve(inputs.size());
    for (const auto& t : inputs) n->inputs.push_back(t.node());
    n->backward = std::move(backward);
  }
  return Tensor(std::move(n));
}

void accumulate_grad(const detail::NodePtr& t, const Array& g) {
  if (!t->requires_grad) return;
  if (t->grad.size() == 0 && g.size() == t->value.size()) {
    t->grad = g;
  } else {
    t->grad_buffer() += g;
  }
}

void accumulate_grad(const detail::NodePtr& t, Array&& g) {
  if (!t->requires_grad) return;
  if (t->grad.size() == 0 && g.size() == t->value.size()) {
    t->grad = std::move(g);
  } else {
    t->grad_buffer() += g;
  }
}

void MacCounter::reset() { g_macs = 0; }
std::int64_t MacCounter::value() { return g_macs; }
void MacCounter::add(std::int64_t macs) { g_macs += macs; }

}  // namespace limuse
