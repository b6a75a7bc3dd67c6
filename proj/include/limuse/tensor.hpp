// Copyright 2026 The limuse-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Dense N-D tensor with a reverse-mode gradient tape.
//
// Values are stored row-major in an Eigen::ArrayXd. A tensor produced by an
// op while grad mode is enabled and at least one input requires grad keeps a
// pointer to its inputs together with a closure that pushes its gradient back
// to them. backward() on a scalar replays these closures in reverse
// topological order.

#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace limuse {

using Index = std::int64_t;
using Shape = std::vector<Index>;
using Array = Eigen::ArrayXd;

std::string shape_str(const Shape& s);
Index numel_of(const Shape& s);
// Nearest float32 value. Kept out of line: g++ 11 at -O3 drops adjacent
// double->float->double round trips on struct members.
double round_to_float(double v);

class DimensionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GradError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

struct Node {
  Shape shape;
  Array value;
  Array grad;  // empty until populated
  bool requires_grad = false;
  bool leaf = true;
  bool backward_done = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  // Zero-initialised gradient buffer, allocated on first use.
  Array& grad_buffer() {
    if (grad.size() != value.size()) grad = Array::Zero(value.size());
    return grad;
  }
};

using NodePtr = std::shared_ptr<Node>;

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(detail::NodePtr node) : node_(std::move(node)) {}

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor ones(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, double value,
                     bool requires_grad = false);
  static Tensor from(const Shape& shape, Array values,
                     bool requires_grad = false);
  static Tensor from(const Shape& shape, std::initializer_list<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  int ndim() const { return static_cast<int>(node_->shape.size()); }
  Index dim(int axis) const;
  Index numel() const { return node_->value.size(); }

  const Array& data() const { return node_->value; }
  // Mutable access bypasses the tape; only use on leaves or outside
  // a recorded computation.
  Array& mutable_data() { return node_->value; }
  double item() const;
  double at(std::initializer_list<Index> idx) const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on);
  bool is_leaf() const { return node_->leaf; }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  const Array& grad() const;
  void zero_grad() { node_->grad.resize(0); }

  // Reverse pass from a scalar. Every reachable leaf that requires grad ends
  // with a populated gradient (accumulated into any existing one). The graph
  // below this tensor is released afterwards; a second call throws.
  void backward();

  // Same values, no tape history, requires_grad off.
  Tensor detach() const;
  Tensor clone() const;

  const char* op_name() const { return node_->op; }
  const detail::NodePtr& node() const { return node_; }

 private:
  detail::NodePtr node_;
};

// Grad mode is thread-local; ops built while it is off record nothing.
bool grad_enabled();
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Building block for new primitives. `inputs` are the differentiable
// arguments; `backward` receives the output node (whose grad is populated)
// and must push gradients into the inputs that require them.
Tensor make_result(Shape shape, Array value, std::vector<Tensor> inputs,
                   const char* op, std::function<void(detail::Node&)> backward);

// Accumulate `g` into the gradient of `t` when it participates in the tape.
void accumulate_grad(const detail::NodePtr& t, const Array& g);
void accumulate_grad(const detail::NodePtr& t, Array&& g);

// Multiply-accumulate counter for the matmul/convolution primitives.
// Thread-local; used by the runtime MACs cross-check.
struct MacCounter {
  static void reset();
  static std::int64_t value();
  static void add(std::int64_t macs);
};

}  // namespace limuse
