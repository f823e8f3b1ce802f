#pragma once

// Reverse-mode automatic differentiation over Tensor values.
//
// A Var is a shared handle to a graph node. Leaves are created with
// parameter() (gradient tracked) or constant(). Every op returns a new Var
// whose node remembers its parents and a local backward rule. backward()
// walks the graph in reverse topological order.
//
// Gradient contract: leaf gradients accumulate across backward() calls until
// zero_grad() is called. Intermediate gradients are reset at the start of
// every backward().

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "rehab/kernels.hpp"
#include "rehab/tensor.hpp"

namespace rehab {

class Node;

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Tensor& value() const;
  Tensor& value();
  const Tensor& grad() const;
  Tensor& grad();
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

  Node* node() const noexcept { return node_.get(); }
  explicit operator bool() const noexcept { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

class Node {
 public:
  using BackwardFn = std::function<void(Node&)>;

  Tensor value;
  /// Same shape as value once allocated; empty until a gradient reaches this node.
  Tensor grad;
  std::vector<Var> parents;
  BackwardFn backward_fn;
  bool requires_grad = false;

  bool is_leaf() const noexcept { return !backward_fn; }
  bool parent_needs_grad(std::size_t i) const { return parents[i].requires_grad(); }
  /// The i-th parent's gradient buffer, zero-allocated on first use.
  Tensor& parent_grad(std::size_t i);
  void ensure_grad();
};

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

Var parameter(Tensor value);
Var constant(Tensor value);

/// Builds an op node. Parents and the rule are dropped when no parent needs a gradient.
Var make_op(Tensor value, std::vector<Var> parents, Node::BackwardFn fn);

/// Backpropagates from a scalar (single-element) loss.
void backward(const Var& loss);
void zero_grad(std::span<Var> params);

// Elementwise ops broadcast numpy-style.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);

Var matmul(const Var& a, const Var& b);
Var permute(const Var& a, std::vector<std::size_t> axes);
Var transpose_last(const Var& a);
Var reshape(const Var& a, Shape shape);
Var concat(std::span<const Var> parts, std::size_t axis);

Var sum(const Var& a);
Var sum(const Var& a, std::size_t axis, bool keepdim = false);
Var mean(const Var& a, std::size_t axis, bool keepdim = false);

Var softmax(const Var& a, std::size_t axis);
Var log_softmax(const Var& a, std::size_t axis);
Var relu(const Var& a);

/// x [N,Cin,H,W], kernel [Cout,Cin,kh,kw], optional bias [Cout].
Var conv2d(const Var& x, const Var& kernel, const Var& bias, const kernel::Conv2dOptions& opts = {});
Var max_pool2d(const Var& x, const kernel::Pool2dOptions& opts);

/// Running statistics owned by the model; updated in training mode.
struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
};

/// Normalizes over every axis except axis 1 (channels).
Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BatchNormState& state, bool training,
               double momentum = 0.1, double eps = 1e-5);

/// out[h, i, j] = table[h, index[i * cols + j]] for table [H,K]; index has rows*cols entries.
Var lookup(const Var& table, std::span<const std::size_t> index, std::size_t rows, std::size_t cols);

}  // namespace rehab
