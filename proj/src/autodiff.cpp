#include "rehab/autodiff.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_set>

namespace rehab {
namespace {

thread_local bool g_grad_enabled = true;

void accumulate(Tensor& dst, const Tensor& src) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

}  // namespace

const Tensor& Var::value() const { return node_->value; }
Tensor& Var::value() { return node_->value; }

const Tensor& Var::grad() const {
  node_->ensure_grad();
  return node_->grad;
}

Tensor& Var::grad() {
  node_->ensure_grad();
  return node_->grad;
}

bool Var::requires_grad() const { return node_ && node_->requires_grad; }

void Node::ensure_grad() {
  if (grad.empty()) grad = Tensor(value.shape());
}

Tensor& Node::parent_grad(std::size_t i) {
  Node* p = parents[i].node();
  p->ensure_grad();
  return p->grad;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Var parameter(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  node->ensure_grad();
  return Var(std::move(node));
}

Var constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var make_op(Tensor value, std::vector<Var> parents, Node::BackwardFn fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& p : parents) needs = needs || p.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(fn);
  }
  return Var(std::move(node));
}

void backward(const Var& loss) {
  if (!loss) throw std::invalid_argument("backward on an empty Var");
  if (loss.value().size() != 1) {
    throw std::invalid_argument("backward requires a scalar loss, got shape " + to_string(loss.shape()));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS; `order` ends up with parents before children.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node(), 0}};
  visited.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].node();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (!n->is_leaf()) n->grad = Tensor();
  }
  Node* root = loss.node();
  root->ensure_grad();
  root->grad[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->is_leaf() || n->grad.empty()) continue;
    n->backward_fn(*n);
  }
}

void zero_grad(std::span<Var> params) {
  for (auto& p : params) p.grad().fill(0.0);
}

Var add(const Var& a, const Var& b) {
  return make_op(kernel::add(a.value(), b.value()), {a, b}, [](Node& self) {
    for (std::size_t i = 0; i < 2; ++i) {
      if (self.parent_needs_grad(i)) {
        accumulate(self.parent_grad(i), kernel::reduce_to_shape(self.grad, self.parents[i].shape()));
      }
    }
  });
}

Var sub(const Var& a, const Var& b) {
  return make_op(kernel::sub(a.value(), b.value()), {a, b}, [](Node& self) {
    if (self.parent_needs_grad(0)) {
      accumulate(self.parent_grad(0), kernel::reduce_to_shape(self.grad, self.parents[0].shape()));
    }
    if (self.parent_needs_grad(1)) {
      accumulate(self.parent_grad(1),
                 kernel::scale(kernel::reduce_to_shape(self.grad, self.parents[1].shape()), -1.0));
    }
  });
}

Var mul(const Var& a, const Var& b) {
  return make_op(kernel::mul(a.value(), b.value()), {a, b}, [](Node& self) {
    const Tensor& x = self.parents[0].value();
    const Tensor& y = self.parents[1].value();
    if (self.parent_needs_grad(0)) {
      accumulate(self.parent_grad(0), kernel::reduce_to_shape(kernel::mul(self.grad, y), x.shape()));
    }
    if (self.parent_needs_grad(1)) {
      accumulate(self.parent_grad(1), kernel::reduce_to_shape(kernel::mul(self.grad, x), y.shape()));
    }
  });
}

Var scale(const Var& a, double factor) {
  return make_op(kernel::scale(a.value(), factor), {a}, [factor](Node& self) {
    Tensor& g = self.parent_grad(0);
    auto d = g.data();
    auto s = self.grad.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += factor * s[i];
  });
}

Var operator+(const Var& a, const Var& b) { return add(a, b); }
Var operator-(const Var& a, const Var& b) { return sub(a, b); }
Var operator*(const Var& a, const Var& b) { return mul(a, b); }

Var matmul(const Var& a, const Var& b) {
  return make_op(kernel::matmul(a.value(), b.value()), {a, b}, [](Node& self) {
    const bool ga = self.parent_needs_grad(0);
    const bool gb = self.parent_needs_grad(1);
    Tensor da, db;
    kernel::matmul_backward(self.parents[0].value(), self.parents[1].value(), self.grad, ga ? &da : nullptr,
                            gb ? &db : nullptr);
    if (ga) accumulate(self.parent_grad(0), da);
    if (gb) accumulate(self.parent_grad(1), db);
  });
}

Var permute(const Var& a, std::vector<std::size_t> axes) {
  Tensor out = kernel::permute(a.value(), axes);
  return make_op(std::move(out), {a}, [axes = std::move(axes)](Node& self) {
    const auto inv = kernel::inverse_permutation(axes);
    accumulate(self.parent_grad(0), kernel::permute(self.grad, inv));
  });
}

Var transpose_last(const Var& a) {
  if (a.value().rank() < 2) throw ShapeError("transpose needs rank >= 2, got " + to_string(a.shape()));
  std::vector<std::size_t> axes(a.value().rank());
  std::iota(axes.begin(), axes.end(), std::size_t{0});
  std::swap(axes[axes.size() - 1], axes[axes.size() - 2]);
  return permute(a, std::move(axes));
}

Var reshape(const Var& a, Shape shape) {
  return make_op(a.value().reshaped(std::move(shape)), {a}, [](Node& self) {
    Tensor& g = self.parent_grad(0);
    auto d = g.data();
    auto s = self.grad.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
  });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  std::vector<Tensor> values;
  values.reserve(parts.size());
  for (const auto& p : parts) values.push_back(p.value());
  Tensor out = kernel::concat(values, axis);
  std::vector<Var> parents(parts.begin(), parts.end());
  return make_op(std::move(out), std::move(parents), [axis](Node& self) {
    const Shape& s = self.value.shape();
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    const std::size_t row = s[axis] * inner;
    std::size_t offset = 0;
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      const std::size_t chunk = self.parents[k].shape()[axis] * inner;
      if (self.parent_needs_grad(k)) {
        auto d = self.parent_grad(k).data();
        for (std::size_t a = 0; a < outer; ++a) {
          for (std::size_t c = 0; c < chunk; ++c) d[a * chunk + c] += self.grad[a * row + offset + c];
        }
      }
      offset += chunk;
    }
  });
}

Var sum(const Var& a) {
  return make_op(Tensor::scalar(kernel::sum_all(a.value())), {a}, [](Node& self) {
    const double g = self.grad[0];
    for (auto& v : self.parent_grad(0).data()) v += g;
  });
}

Var sum(const Var& a, std::size_t axis, bool keepdim) {
  return make_op(kernel::sum(a.value(), axis, keepdim), {a}, [axis](Node& self) {
    Shape kept = self.parents[0].shape();
    kept[axis] = 1;
    const Tensor g = self.grad.reshaped(kept);
    Tensor& pg = self.parent_grad(0);
    pg = kernel::add(pg, g);
  });
}

Var mean(const Var& a, std::size_t axis, bool keepdim) {
  const double n = static_cast<double>(a.value().dim(axis));
  return scale(sum(a, axis, keepdim), 1.0 / n);
}

Var softmax(const Var& a, std::size_t axis) {
  return make_op(kernel::softmax(a.value(), axis), {a}, [axis](Node& self) {
    // dx = y * (g - sum(g * y))
    const Tensor& y = self.value;
    const Tensor gy = kernel::mul(self.grad, y);
    const Tensor dot = kernel::sum(gy, axis, true);
    accumulate(self.parent_grad(0), kernel::sub(gy, kernel::mul(y, dot)));
  });
}

Var log_softmax(const Var& a, std::size_t axis) {
  return make_op(kernel::log_softmax(a.value(), axis), {a}, [axis](Node& self) {
    // dx = g - softmax * sum(g)
    Tensor p = self.value;
    for (auto& v : p.data()) v = std::exp(v);
    const Tensor total = kernel::sum(self.grad, axis, true);
    accumulate(self.parent_grad(0), kernel::sub(self.grad, kernel::mul(p, total)));
  });
}

Var relu(const Var& a) {
  return make_op(kernel::relu(a.value()), {a}, [](Node& self) {
    auto d = self.parent_grad(0).data();
    const auto& y = self.value;
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (y[i] > 0.0) d[i] += self.grad[i];
    }
  });
}

Var conv2d(const Var& x, const Var& kernel, const Var& bias, const kernel::Conv2dOptions& opts) {
  Tensor out = kernel::conv2d(x.value(), kernel.value(), opts);
  std::vector<Var> parents{x, kernel};
  if (bias) {
    const std::size_t cout = kernel.value().dim(0);
    if (bias.value().size() != cout) {
      throw ShapeError("conv2d bias " + to_string(bias.shape()) + " for kernel " + to_string(kernel.shape()));
    }
    const std::size_t plane = out.dim(2) * out.dim(3);
    for (std::size_t n = 0; n < out.dim(0); ++n) {
      for (std::size_t c = 0; c < cout; ++c) {
        double* dst = out.data().data() + (n * cout + c) * plane;
        for (std::size_t p = 0; p < plane; ++p) dst[p] += bias.value()[c];
      }
    }
    parents.push_back(bias);
  }
  return make_op(std::move(out), std::move(parents), [opts](Node& self) {
    const bool gx = self.parent_needs_grad(0);
    const bool gk = self.parent_needs_grad(1);
    if (gx || gk) {
      Tensor dx, dk;
      kernel::conv2d_backward(self.parents[0].value(), self.parents[1].value(), self.grad, opts,
                              gx ? &dx : nullptr, gk ? &dk : nullptr);
      if (gx) accumulate(self.parent_grad(0), dx);
      if (gk) accumulate(self.parent_grad(1), dk);
    }
    if (self.parents.size() > 2 && self.parent_needs_grad(2)) {
      const Shape& s = self.value.shape();
      const std::size_t plane = s[2] * s[3];
      auto db = self.parent_grad(2).data();
      for (std::size_t n = 0; n < s[0]; ++n) {
        for (std::size_t c = 0; c < s[1]; ++c) {
          const double* g = self.grad.data().data() + (n * s[1] + c) * plane;
          double acc = 0.0;
          for (std::size_t p = 0; p < plane; ++p) acc += g[p];
          db[c] += acc;
        }
      }
    }
  });
}

Var max_pool2d(const Var& x, const kernel::Pool2dOptions& opts) {
  std::vector<std::size_t> argmax;
  Tensor out = kernel::max_pool2d(x.value(), opts, &argmax);
  return make_op(std::move(out), {x}, [argmax = std::move(argmax)](Node& self) {
    auto d = self.parent_grad(0).data();
    for (std::size_t i = 0; i < argmax.size(); ++i) d[argmax[i]] += self.grad[i];
  });
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BatchNormState& state, bool training,
               double momentum, double eps) {
  const Tensor& in = x.value();
  if (in.rank() < 2) throw ShapeError("batch_norm expects [N,C,...], got " + to_string(in.shape()));
  const std::size_t n = in.dim(0);
  const std::size_t c = in.dim(1);
  const std::size_t inner = in.size() / (n * c);
  const std::size_t count = n * inner;
  if (gamma.value().size() != c || beta.value().size() != c || state.running_mean.size() != c ||
      state.running_var.size() != c) {
    throw ShapeError("batch_norm parameters do not match channels of " + to_string(in.shape()));
  }

  std::vector<double> mu(c, 0.0), inv_std(c, 0.0);
  if (training) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const double* p = in.data().data() + (b * c + ch) * inner;
        for (std::size_t i = 0; i < inner; ++i) s += p[i];
      }
      const double m = s / static_cast<double>(count);
      double v = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const double* p = in.data().data() + (b * c + ch) * inner;
        for (std::size_t i = 0; i < inner; ++i) v += (p[i] - m) * (p[i] - m);
      }
      const double biased = v / static_cast<double>(count);
      const double unbiased = count > 1 ? v / static_cast<double>(count - 1) : biased;
      mu[ch] = m;
      inv_std[ch] = 1.0 / std::sqrt(biased + eps);
      state.running_mean[ch] = (1.0 - momentum) * state.running_mean[ch] + momentum * m;
      state.running_var[ch] = (1.0 - momentum) * state.running_var[ch] + momentum * unbiased;
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mu[ch] = state.running_mean[ch];
      inv_std[ch] = 1.0 / std::sqrt(state.running_var[ch] + eps);
    }
  }

  Tensor out(in.shape());
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (b * c + ch) * inner;
      const double g = gamma.value()[ch];
      const double bt = beta.value()[ch];
      for (std::size_t i = 0; i < inner; ++i) out[base + i] = g * (in[base + i] - mu[ch]) * inv_std[ch] + bt;
    }
  }

  return make_op(std::move(out), {x, gamma, beta},
                 [mu = std::move(mu), inv_std = std::move(inv_std), training, n, c, inner, count](Node& self) {
                   const Tensor& xin = self.parents[0].value();
                   const Tensor& gam = self.parents[1].value();
                   const Tensor& g = self.grad;
                   std::vector<double> sum_g(c, 0.0), sum_gx(c, 0.0);
                   for (std::size_t b = 0; b < n; ++b) {
                     for (std::size_t ch = 0; ch < c; ++ch) {
                       const std::size_t base = (b * c + ch) * inner;
                       for (std::size_t i = 0; i < inner; ++i) {
                         const double xhat = (xin[base + i] - mu[ch]) * inv_std[ch];
                         sum_g[ch] += g[base + i];
                         sum_gx[ch] += g[base + i] * xhat;
                       }
                     }
                   }
                   if (self.parent_needs_grad(1)) {
                     auto d = self.parent_grad(1).data();
                     for (std::size_t ch = 0; ch < c; ++ch) d[ch] += sum_gx[ch];
                   }
                   if (self.parent_needs_grad(2)) {
                     auto d = self.parent_grad(2).data();
                     for (std::size_t ch = 0; ch < c; ++ch) d[ch] += sum_g[ch];
                   }
                   if (self.parent_needs_grad(0)) {
                     auto d = self.parent_grad(0).data();
                     const double m = static_cast<double>(count);
                     for (std::size_t b = 0; b < n; ++b) {
                       for (std::size_t ch = 0; ch < c; ++ch) {
                         const std::size_t base = (b * c + ch) * inner;
                         const double k = gam[ch] * inv_std[ch];
                         for (std::size_t i = 0; i < inner; ++i) {
                           if (training) {
                             const double xhat = (xin[base + i] - mu[ch]) * inv_std[ch];
                             d[base + i] += k * (g[base + i] - sum_g[ch] / m - xhat * sum_gx[ch] / m);
                           } else {
                             d[base + i] += k * g[base + i];
                           }
                         }
                       }
                     }
                   }
                 });
}

Var lookup(const Var& table, std::span<const std::size_t> index, std::size_t rows, std::size_t cols) {
  const Tensor& t = table.value();
  if (t.rank() != 2) throw ShapeError("lookup table must be [H,K], got " + to_string(t.shape()));
  if (index.size() != rows * cols) throw ShapeError("lookup index size does not match rows x cols");
  const std::size_t heads = t.dim(0);
  const std::size_t k = t.dim(1);
  for (auto i : index) {
    if (i >= k) {
      throw std::out_of_range("lookup index " + std::to_string(i) + " exceeds table width " + std::to_string(k));
    }
  }
  Tensor out({heads, rows, cols});
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t p = 0; p < rows * cols; ++p) out[h * rows * cols + p] = t[h * k + index[p]];
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return make_op(std::move(out), {table}, [idx = std::move(idx), heads, k](Node& self) {
    auto d = self.parent_grad(0).data();
    const std::size_t cells = idx.size();
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t p = 0; p < cells; ++p) d[h * k + idx[p]] += self.grad[h * cells + p];
    }
  });
}

}  // namespace rehab
