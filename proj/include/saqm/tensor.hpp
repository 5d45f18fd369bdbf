// Copyright (c) 2026 The SAQM Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense tensor engine with reverse-mode automatic differentiation.
// Tensors are handles onto shared nodes; each op records its parents and a
// backward closure, and backward() replays the recorded graph in reverse
// topological order. Gradients accumulate until explicitly zeroed.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "saqm/error.hpp"

namespace saqm {

namespace detail {
inline thread_local bool grad_mode = true;
}

inline bool grad_enabled() { return detail::grad_mode; }

// Disables graph recording for its scope (inference / finite-difference probes).
struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(detail::grad_mode) { detail::grad_mode = false; }
  ~NoGradGuard() { detail::grad_mode = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

template <typename T>
struct TensorNode {
  std::vector<std::size_t> shape;
  std::vector<T> values;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void()> backward;

  std::size_t numel() const { return values.size(); }

  // Zero-initialised gradient buffer, allocated on first use.
  std::vector<T>& grad_buf() {
    if (grad.empty()) grad.assign(values.size(), T(0));
    return grad;
  }
};

inline std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

template <typename T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false) {
    return full(std::move(shape), T(0), requires_grad);
  }

  static Tensor full(std::vector<std::size_t> shape, T value, bool requires_grad = false) {
    std::vector<T> values(shape_numel(shape), value);
    return from(std::move(values), std::move(shape), requires_grad);
  }

  static Tensor from(std::vector<T> values, std::vector<std::size_t> shape,
                     bool requires_grad = false) {
    if (values.size() != shape_numel(shape))
      throw ContractError("tensor: " + std::to_string(values.size()) +
                          " values do not fill shape of " +
                          std::to_string(shape_numel(shape)) + " elements");
    auto node = std::make_shared<TensorNode<T>>();
    node->shape = std::move(shape);
    node->values = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor scalar(T value, bool requires_grad = false) {
    return from({value}, {1}, requires_grad);
  }

  bool defined() const { return static_cast<bool>(node_); }
  const std::vector<std::size_t>& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape[i]; }
  std::size_t numel() const { return node_->values.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }

  std::vector<T>& values() { return node_->values; }
  const std::vector<T>& values() const { return node_->values; }

  // Empty until a backward pass has accumulated into this tensor.
  const std::vector<T>& grad() const { return node_->grad; }
  std::vector<T>& grad_buf() { return node_->grad_buf(); }

  T item() const {
    if (numel() != 1)
      throw ContractError("item: tensor has " + std::to_string(numel()) + " elements, expected 1");
    return node_->values[0];
  }

  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
  }

  // Reverse-mode sweep from a scalar root. Leaf gradients accumulate across
  // calls until zero_grad().
  void backward() const {
    if (numel() != 1) throw ContractError("backward: loss must be scalar, got " +
                                          std::to_string(numel()) + " elements");
    if (!node_->requires_grad)
      throw ContractError("backward: loss does not require grad (no recorded graph)");

    // Iterative post-order DFS over parent edges.
    std::vector<TensorNode<T>*> topo;
    std::unordered_set<TensorNode<T>*> visited;
    std::vector<std::pair<TensorNode<T>*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    visited.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->parents.size()) {
        TensorNode<T>* p = n->parents[next++].get();
        if (visited.insert(p).second) stack.emplace_back(p, 0);
      } else {
        topo.push_back(n);
        stack.pop_back();
      }
    }

    node_->grad_buf()[0] += T(1);
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
      if ((*it)->backward) (*it)->backward();
    }
  }

  std::shared_ptr<TensorNode<T>> node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<TensorNode<T>> node) : node_(std::move(node)) {}
  std::shared_ptr<TensorNode<T>> node_;
};

namespace detail {

template <typename T>
Tensor<T> make_result(std::vector<T> values, std::vector<std::size_t> shape) {
  return Tensor<T>::from(std::move(values), std::move(shape), false);
}

// Wires the output node into the graph when recording is active. The builder
// receives the raw output node and returns the backward closure.
template <typename T, typename BackwardBuilder>
void record(Tensor<T>& out, std::initializer_list<Tensor<T>> inputs, BackwardBuilder&& build) {
  if (!grad_mode) return;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return;
  auto node = out.node();
  node->requires_grad = true;
  for (const auto& in : inputs)
    if (in.requires_grad()) node->parents.push_back(in.node());
  node->backward = build(node.get());
}

template <typename T>
void check_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw ContractError(std::string(op) + ": shape mismatch between operands");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and reduction ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape("add", a, b);
  std::vector<T> v(a.numel());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] + bv[i];
  auto out = detail::make_result(std::move(v), a.shape());
  detail::record(out, {a, b}, [an = a.node(), bn = b.node()](TensorNode<T>* o) {
    return [an, bn, o] {
      if (o->grad.empty()) return;
      if (an->requires_grad) {
        auto& g = an->grad_buf();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
      }
      if (bn->requires_grad) {
        auto& g = bn->grad_buf();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
      }
    };
  });
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape("sub", a, b);
  std::vector<T> v(a.numel());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] - bv[i];
  auto out = detail::make_result(std::move(v), a.shape());
  detail::record(out, {a, b}, [an = a.node(), bn = b.node()](TensorNode<T>* o) {
    return [an, bn, o] {
      if (o->grad.empty()) return;
      if (an->requires_grad) {
        auto& g = an->grad_buf();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
      }
      if (bn->requires_grad) {
        auto& g = bn->grad_buf();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o->grad[i];
      }
    };
  });
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape("mul", a, b);
  std::vector<T> v(a.numel());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] * bv[i];
  auto out = detail::make_result(std::move(v), a.shape());
  detail::record(out, {a, b}, [an = a.node(), bn = b.node()](TensorNode<T>* o) {
    return [an, bn, o] {
      if (o->grad.empty()) return;
      if (an->requires_grad) {
        auto& g = an->grad_buf();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * bn->values[i];
      }
      if (bn->requires_grad) {
        auto& g = bn->grad_buf();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * an->values[i];
      }
    };
  });
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
  std::vector<T> v(a.numel());
  const auto& av = a.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] * c;
  auto out = detail::make_result(std::move(v), a.shape());
  detail::record(out, {a}, [an = a.node(), c](TensorNode<T>* o) {
    return [an, c, o] {
      if (o->grad.empty()) return;
      auto& g = an->grad_buf();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * c;
    };
  });
  return out;
}

// Broadcast-multiply by a learnable 1-element tensor.
template <typename T>
Tensor<T> scalar_scale(const Tensor<T>& x, const Tensor<T>& s) {
  if (s.numel() != 1) throw ContractError("scalar_scale: scale tensor must have 1 element");
  const T c = s.values()[0];
  std::vector<T> v(x.numel());
  const auto& xv = x.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = xv[i] * c;
  auto out = detail::make_result(std::move(v), x.shape());
  detail::record(out, {x, s}, [xn = x.node(), sn = s.node(), c](TensorNode<T>* o) {
    return [xn, sn, c, o] {
      if (o->grad.empty()) return;
      if (xn->requires_grad) {
        auto& g = xn->grad_buf();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * c;
      }
      if (sn->requires_grad) {
        T acc = 0;
        for (std::size_t i = 0; i < o->grad.size(); ++i) acc += o->grad[i] * xn->values[i];
        sn->grad_buf()[0] += acc;
      }
    };
  });
  return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T acc = 0;
  for (T v : a.values()) acc += v;
  auto out = Tensor<T>::scalar(acc);
  detail::record(out, {a}, [an = a.node()](TensorNode<T>* o) {
    return [an, o] {
      if (o->grad.empty()) return;
      const T g0 = o->grad[0];
      auto& g = an->grad_buf();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += g0;
    };
  });
  return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> v(x.numel());
  const auto& xv = x.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = xv[i] > T(0) ? xv[i] : T(0);
  auto out = detail::make_result(std::move(v), x.shape());
  detail::record(out, {x}, [xn = x.node()](TensorNode<T>* o) {
    return [xn, o] {
      if (o->grad.empty()) return;
      auto& g = xn->grad_buf();
      for (std::size_t i = 0; i < g.size(); ++i)
        if (xn->values[i] > T(0)) g[i] += o->grad[i];
    };
  });
  return out;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  std::vector<T> v(x.numel());
  const auto& xv = x.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    // Branch on sign so exp never overflows.
    if (xv[i] >= T(0)) {
      const T e = std::exp(-xv[i]);
      v[i] = T(1) / (T(1) + e);
    } else {
      const T e = std::exp(xv[i]);
      v[i] = e / (T(1) + e);
    }
  }
  auto out = detail::make_result(std::move(v), x.shape());
  detail::record(out, {x}, [xn = x.node()](TensorNode<T>* o) {
    return [xn, o] {
      if (o->grad.empty()) return;
      auto& g = xn->grad_buf();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const T s = o->values[i];
        g[i] += o->grad[i] * s * (T(1) - s);
      }
    };
  });
  return out;
}

// Identity forward; backward multiplies the upstream gradient by -lambda.
template <typename T>
Tensor<T> grad_reverse(const Tensor<T>& x, T lambda = T(1)) {
  auto out = detail::make_result(std::vector<T>(x.values()), x.shape());
  detail::record(out, {x}, [xn = x.node(), lambda](TensorNode<T>* o) {
    return [xn, lambda, o] {
      if (o->grad.empty()) return;
      auto& g = xn->grad_buf();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= lambda * o->grad[i];
    };
  });
  return out;
}

// Binary cross entropy between a predicted probability and a fixed target.
// p is clamped away from {0,1} before the logs.
template <typename T>
Tensor<T> bce(const Tensor<T>& p, T target) {
  if (p.numel() != 1) throw ContractError("bce: prediction must be scalar");
  if (!(target >= T(0) && target <= T(1)))
    throw ContractError("bce: target " + std::to_string(target) + " outside [0,1]");
  constexpr T kClamp = T(1e-7);
  const T pc = std::clamp(p.values()[0], kClamp, T(1) - kClamp);
  const T loss = -(target * std::log(pc) + (T(1) - target) * std::log(T(1) - pc));
  auto out = Tensor<T>::scalar(loss);
  detail::record(out, {p}, [pn = p.node(), pc, target](TensorNode<T>* o) {
    return [pn, pc, target, o] {
      if (o->grad.empty()) return;
      // d/dp of the clamped loss; zero outside the clamp interval.
      const T raw = pn->values[0];
      if (raw > T(1e-7) && raw < T(1) - T(1e-7))
        pn->grad_buf()[0] += o->grad[0] * ((T(1) - target) / (T(1) - pc) - target / pc);
    };
  });
  return out;
}

// Binary cross entropy evaluated from the pre-sigmoid logit:
// loss = max(z,0) - z*t + log(1 + exp(-|z|)). Equivalent to
// bce(sigmoid(z), t) but the gradient sigmoid(z) - t survives saturation.
template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& z, T target) {
  if (z.numel() != 1) throw ContractError("bce_with_logits: logit must be scalar");
  if (!(target >= T(0) && target <= T(1)))
    throw ContractError("bce_with_logits: target " + std::to_string(target) +
                        " outside [0,1]");
  const T zv = z.values()[0];
  const T loss = std::max(zv, T(0)) - zv * target + std::log1p(std::exp(-std::abs(zv)));
  auto out = Tensor<T>::scalar(loss);
  detail::record(out, {z}, [zn = z.node(), target](TensorNode<T>* o) {
    return [zn, target, o] {
      if (o->grad.empty()) return;
      const T zv = zn->values[0];
      const T s = zv >= T(0) ? T(1) / (T(1) + std::exp(-zv))
                             : std::exp(zv) / (T(1) + std::exp(zv));
      zn->grad_buf()[0] += o->grad[0] * (s - target);
    };
  });
  return out;
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, std::vector<std::size_t> new_shape) {
  if (shape_numel(new_shape) != x.numel())
    throw ContractError("reshape: new shape holds " + std::to_string(shape_numel(new_shape)) +
                        " elements, tensor has " + std::to_string(x.numel()));
  auto out = detail::make_result(std::vector<T>(x.values()), std::move(new_shape));
  detail::record(out, {x}, [xn = x.node()](TensorNode<T>* o) {
    return [xn, o] {
      if (o->grad.empty()) return;
      auto& g = xn->grad_buf();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
    };
  });
  return out;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.rank() != 2) throw ContractError("transpose: expected rank-2 tensor, got rank " +
                                         std::to_string(a.rank()));
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<T> v(m * n);
  const auto& av = a.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) v[j * m + i] = av[i * n + j];
  auto out = detail::make_result(std::move(v), {n, m});
  detail::record(out, {a}, [an = a.node(), m, n](TensorNode<T>* o) {
    return [an, m, n, o] {
      if (o->grad.empty()) return;
      auto& g = an->grad_buf();
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < m; ++i) g[i * n + j] += o->grad[j * m + i];
    };
  });
  return out;
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw ContractError("matmul: expected rank-2 operands");
  const std::size_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2)
    throw ContractError("matmul: inner dimensions " + std::to_string(k) + " and " +
                        std::to_string(k2) + " disagree");
  std::vector<T> v(m * n, T(0));
  const T* av = a.values().data();
  const T* bv = b.values().data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = av[i * k + p];
      const T* brow = bv + p * n;
      T* vrow = v.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) vrow[j] += aip * brow[j];
    }
  auto out = detail::make_result(std::move(v), {m, n});
  detail::record(out, {a, b}, [an = a.node(), bn = b.node(), m, k, n](TensorNode<T>* o) {
    return [an, bn, m, k, n, o] {
      if (o->grad.empty()) return;
      const T* g = o->grad.data();
      if (an->requires_grad) {  // dA = G * B^T
        T* ga = an->grad_buf().data();
        const T* bv = bn->values.data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            T acc = 0;
            const T* grow = g + i * n;
            const T* brow = bv + p * n;
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            ga[i * k + p] += acc;
          }
      }
      if (bn->requires_grad) {  // dB = A^T * G
        T* gb = bn->grad_buf().data();
        const T* av = an->values.data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const T aip = av[i * k + p];
            const T* grow = g + i * n;
            T* gbrow = gb + p * n;
            for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
          }
      }
    };
  });
  return out;
}

// y = W x + b for a rank-1 input.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (x.rank() != 1) throw ContractError("linear: input must be rank-1");
  if (weight.rank() != 2) throw ContractError("linear: weight must be rank-2");
  const std::size_t out_dim = weight.dim(0), in_dim = weight.dim(1);
  if (x.dim(0) != in_dim)
    throw ContractError("linear: input size " + std::to_string(x.dim(0)) +
                        " != weight in-features " + std::to_string(in_dim));
  if (bias.rank() != 1 || bias.dim(0) != out_dim)
    throw ContractError("linear: bias size != weight out-features " + std::to_string(out_dim));
  std::vector<T> v(out_dim);
  const T* xv = x.values().data();
  const T* wv = weight.values().data();
  const T* bv = bias.values().data();
  for (std::size_t i = 0; i < out_dim; ++i) {
    T acc = bv[i];
    const T* wrow = wv + i * in_dim;
    for (std::size_t j = 0; j < in_dim; ++j) acc += wrow[j] * xv[j];
    v[i] = acc;
  }
  auto out = detail::make_result(std::move(v), {out_dim});
  detail::record(out, {x, weight, bias},
                 [xn = x.node(), wn = weight.node(), bn = bias.node(), out_dim,
                  in_dim](TensorNode<T>* o) {
    return [xn, wn, bn, out_dim, in_dim, o] {
      if (o->grad.empty()) return;
      const T* g = o->grad.data();
      if (xn->requires_grad) {
        T* gx = xn->grad_buf().data();
        const T* wv = wn->values.data();
        for (std::size_t i = 0; i < out_dim; ++i) {
          const T gi = g[i];
          const T* wrow = wv + i * in_dim;
          for (std::size_t j = 0; j < in_dim; ++j) gx[j] += gi * wrow[j];
        }
      }
      if (wn->requires_grad) {
        T* gw = wn->grad_buf().data();
        const T* xv = xn->values.data();
        for (std::size_t i = 0; i < out_dim; ++i) {
          const T gi = g[i];
          T* gwrow = gw + i * in_dim;
          for (std::size_t j = 0; j < in_dim; ++j) gwrow[j] += gi * xv[j];
        }
      }
      if (bn->requires_grad) {
        T* gb = bn->grad_buf().data();
        for (std::size_t i = 0; i < out_dim; ++i) gb[i] += g[i];
      }
    };
  });
  return out;
}

// ---------------------------------------------------------------------------
// Convolutions (stride 1)
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
void check_conv_shapes(const char* op, const Tensor<T>& input, const Tensor<T>& weight,
                       const Tensor<T>& bias, std::size_t kernel) {
  if (input.rank() != 3)
    throw ContractError(std::string(op) + ": input must be C x H x W, got rank " +
                        std::to_string(input.rank()));
  if (weight.rank() != 4)
    throw ContractError(std::string(op) + ": weight must be Cout x Cin x k x k");
  if (weight.dim(2) != kernel || weight.dim(3) != kernel)
    throw ContractError(std::string(op) + ": kernel is " + std::to_string(weight.dim(2)) + "x" +
                        std::to_string(weight.dim(3)) + ", expected " + std::to_string(kernel) +
                        "x" + std::to_string(kernel));
  if (weight.dim(1) != input.dim(0))
    throw ContractError(std::string(op) + ": input channels " + std::to_string(input.dim(0)) +
                        " != weight in-channels " + std::to_string(weight.dim(1)));
  if (bias.rank() != 1 || bias.dim(0) != weight.dim(0))
    throw ContractError(std::string(op) + ": bias size != out-channels " +
                        std::to_string(weight.dim(0)));
}

}  // namespace detail

// 3x3 convolution, stride 1, zero padding 1: output spatial size equals input.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
  detail::check_conv_shapes("conv2d", input, weight, bias, 3);
  const std::size_t ci = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t co = weight.dim(0);
  std::vector<T> v(co * h * w);
  const T* in = input.values().data();
  const T* wt = weight.values().data();
  const T* bs = bias.values().data();
  for (std::size_t o = 0; o < co; ++o)
    std::fill(v.begin() + o * h * w, v.begin() + (o + 1) * h * w, bs[o]);
  for (std::size_t o = 0; o < co; ++o) {
    T* outp = v.data() + o * h * w;
    for (std::size_t i = 0; i < ci; ++i) {
      const T* inp = in + i * h * w;
      const T* wk = wt + (o * ci + i) * 9;
      for (std::size_t ky = 0; ky < 3; ++ky) {
        const std::size_t y0 = ky == 0 ? 1 : 0;
        const std::size_t y1 = ky == 2 ? h - 1 : h;
        for (std::size_t kx = 0; kx < 3; ++kx) {
          const T wv = wk[ky * 3 + kx];
          if (wv == T(0)) continue;
          const std::size_t x0 = kx == 0 ? 1 : 0;
          const std::size_t x1 = kx == 2 ? w - 1 : w;
          for (std::size_t y = y0; y < y1; ++y) {
            T* orow = outp + y * w;
            const T* irow = inp + (y + ky - 1) * w + kx - 1;
            for (std::size_t x = x0; x < x1; ++x) orow[x] += wv * irow[x];
          }
        }
      }
    }
  }
  auto out = detail::make_result(std::move(v), {co, h, w});
  detail::record(out, {input, weight, bias},
                 [in_n = input.node(), w_n = weight.node(), b_n = bias.node(), ci, co, h,
                  w](TensorNode<T>* o) {
    return [in_n, w_n, b_n, ci, co, h, w, o] {
      if (o->grad.empty()) return;
      const T* g = o->grad.data();
      if (b_n->requires_grad) {
        T* gb = b_n->grad_buf().data();
        for (std::size_t oc = 0; oc < co; ++oc) {
          T acc = 0;
          const T* grow = g + oc * h * w;
          for (std::size_t p = 0; p < h * w; ++p) acc += grow[p];
          gb[oc] += acc;
        }
      }
      if (w_n->requires_grad) {
        T* gw = w_n->grad_buf().data();
        const T* in = in_n->values.data();
        for (std::size_t oc = 0; oc < co; ++oc) {
          const T* gout = g + oc * h * w;
          for (std::size_t i = 0; i < ci; ++i) {
            const T* inp = in + i * h * w;
            T* gwk = gw + (oc * ci + i) * 9;
            for (std::size_t ky = 0; ky < 3; ++ky) {
              const std::size_t y0 = ky == 0 ? 1 : 0;
              const std::size_t y1 = ky == 2 ? h - 1 : h;
              for (std::size_t kx = 0; kx < 3; ++kx) {
                const std::size_t x0 = kx == 0 ? 1 : 0;
                const std::size_t x1 = kx == 2 ? w - 1 : w;
                T acc = 0;
                for (std::size_t y = y0; y < y1; ++y) {
                  const T* grow = gout + y * w;
                  const T* irow = inp + (y + ky - 1) * w + kx - 1;
                  for (std::size_t x = x0; x < x1; ++x) acc += grow[x] * irow[x];
                }
                gwk[ky * 3 + kx] += acc;
              }
            }
          }
        }
      }
      if (in_n->requires_grad) {
        T* gi = in_n->grad_buf().data();
        const T* wt = w_n->values.data();
        for (std::size_t oc = 0; oc < co; ++oc) {
          const T* gout = g + oc * h * w;
          for (std::size_t i = 0; i < ci; ++i) {
            T* gin = gi + i * h * w;
            const T* wk = wt + (oc * ci + i) * 9;
            for (std::size_t ky = 0; ky < 3; ++ky) {
              const std::size_t y0 = ky == 0 ? 1 : 0;
              const std::size_t y1 = ky == 2 ? h - 1 : h;
              for (std::size_t kx = 0; kx < 3; ++kx) {
                const T wv = wk[ky * 3 + kx];
                if (wv == T(0)) continue;
                const std::size_t x0 = kx == 0 ? 1 : 0;
                const std::size_t x1 = kx == 2 ? w - 1 : w;
                for (std::size_t y = y0; y < y1; ++y) {
                  const T* grow = gout + y * w;
                  T* girow = gin + (y + ky - 1) * w + kx - 1;
                  for (std::size_t x = x0; x < x1; ++x) girow[x] += wv * grow[x];
                }
              }
            }
          }
        }
      }
    };
  });
  return out;
}

// Pointwise 1x1 convolution: a per-pixel linear map across channels.
template <typename T>
Tensor<T> conv1x1(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
  detail::check_conv_shapes("conv1x1", input, weight, bias, 1);
  const std::size_t ci = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t co = weight.dim(0), hw = h * w;
  std::vector<T> v(co * hw);
  const T* in = input.values().data();
  const T* wt = weight.values().data();
  const T* bs = bias.values().data();
  for (std::size_t o = 0; o < co; ++o) {
    T* outp = v.data() + o * hw;
    std::fill(outp, outp + hw, bs[o]);
    for (std::size_t i = 0; i < ci; ++i) {
      const T wv = wt[o * ci + i];
      const T* inp = in + i * hw;
      for (std::size_t p = 0; p < hw; ++p) outp[p] += wv * inp[p];
    }
  }
  auto out = detail::make_result(std::move(v), {co, h, w});
  detail::record(out, {input, weight, bias},
                 [in_n = input.node(), w_n = weight.node(), b_n = bias.node(), ci, co,
                  hw](TensorNode<T>* o) {
    return [in_n, w_n, b_n, ci, co, hw, o] {
      if (o->grad.empty()) return;
      const T* g = o->grad.data();
      if (b_n->requires_grad) {
        T* gb = b_n->grad_buf().data();
        for (std::size_t oc = 0; oc < co; ++oc) {
          T acc = 0;
          const T* grow = g + oc * hw;
          for (std::size_t p = 0; p < hw; ++p) acc += grow[p];
          gb[oc] += acc;
        }
      }
      if (w_n->requires_grad) {
        T* gw = w_n->grad_buf().data();
        const T* in = in_n->values.data();
        for (std::size_t oc = 0; oc < co; ++oc) {
          const T* grow = g + oc * hw;
          for (std::size_t i = 0; i < ci; ++i) {
            T acc = 0;
            const T* inp = in + i * hw;
            for (std::size_t p = 0; p < hw; ++p) acc += grow[p] * inp[p];
            gw[oc * ci + i] += acc;
          }
        }
      }
      if (in_n->requires_grad) {
        T* gi = in_n->grad_buf().data();
        const T* wt = w_n->values.data();
        for (std::size_t oc = 0; oc < co; ++oc) {
          const T* grow = g + oc * hw;
          for (std::size_t i = 0; i < ci; ++i) {
            const T wv = wt[oc * ci + i];
            T* girow = gi + i * hw;
            for (std::size_t p = 0; p < hw; ++p) girow[p] += wv * grow[p];
          }
        }
      }
    };
  });
  return out;
}

// ---------------------------------------------------------------------------
// Pooling
// ---------------------------------------------------------------------------

// 2x2 max pooling over disjoint blocks. Ties route the subgradient to the
// first maximum in row-major order.
template <typename T>
Tensor<T> maxpool2x2(const Tensor<T>& input) {
  if (input.rank() != 3) throw ContractError("maxpool2x2: input must be C x H x W");
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  if (h % 2 != 0 || w % 2 != 0)
    throw ContractError("maxpool2x2: spatial dims " + std::to_string(h) + "x" +
                        std::to_string(w) + " must be even");
  const std::size_t oh = h / 2, ow = w / 2;
  std::vector<T> v(c * oh * ow);
  auto argmax = std::make_shared<std::vector<std::size_t>>(c * oh * ow);
  const T* in = input.values().data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    const T* inp = in + ch * h * w;
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        const std::size_t base = (2 * y) * w + 2 * x;
        std::size_t best = base;
        T bv = inp[base];
        const std::size_t cand[3] = {base + 1, base + w, base + w + 1};
        for (std::size_t k = 0; k < 3; ++k)
          if (inp[cand[k]] > bv) {
            bv = inp[cand[k]];
            best = cand[k];
          }
        v[(ch * oh + y) * ow + x] = bv;
        (*argmax)[(ch * oh + y) * ow + x] = ch * h * w + best;
      }
  }
  auto out = detail::make_result(std::move(v), {c, oh, ow});
  detail::record(out, {input}, [in_n = input.node(), argmax](TensorNode<T>* o) {
    return [in_n, argmax, o] {
      if (o->grad.empty()) return;
      auto& g = in_n->grad_buf();
      for (std::size_t i = 0; i < o->grad.size(); ++i) g[(*argmax)[i]] += o->grad[i];
    };
  });
  return out;
}

// Per-channel max over all remaining positions; accepts C x H x W or C x N.
template <typename T>
Tensor<T> global_max_pool(const Tensor<T>& input) {
  if (input.rank() < 2) throw ContractError("global_max_pool: input must have rank >= 2");
  const std::size_t c = input.dim(0);
  const std::size_t n = input.numel() / c;
  std::vector<T> v(c);
  auto argmax = std::make_shared<std::vector<std::size_t>>(c);
  const T* in = input.values().data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    const T* row = in + ch * n;
    std::size_t best = 0;
    T bv = row[0];
    for (std::size_t i = 1; i < n; ++i)
      if (row[i] > bv) {
        bv = row[i];
        best = i;
      }
    v[ch] = bv;
    (*argmax)[ch] = ch * n + best;
  }
  auto out = detail::make_result(std::move(v), {c});
  detail::record(out, {input}, [in_n = input.node(), argmax](TensorNode<T>* o) {
    return [in_n, argmax, o] {
      if (o->grad.empty()) return;
      auto& g = in_n->grad_buf();
      for (std::size_t ch = 0; ch < o->grad.size(); ++ch) g[(*argmax)[ch]] += o->grad[ch];
    };
  });
  return out;
}

// ---------------------------------------------------------------------------
// Softmax
// ---------------------------------------------------------------------------

// Row-wise softmax with max subtraction: out[l][j] = exp(s[l][j]) / sum_j'.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& s) {
  if (s.rank() != 2) throw ContractError("softmax_rows: input must be rank-2");
  const std::size_t rows = s.dim(0), cols = s.dim(1);
  std::vector<T> v(rows * cols);
  const T* in = s.values().data();
  for (std::size_t l = 0; l < rows; ++l) {
    const T* row = in + l * cols;
    T* vrow = v.data() + l * cols;
    T mx = row[0];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
    T denom = 0;
    for (std::size_t j = 0; j < cols; ++j) {
      vrow[j] = std::exp(row[j] - mx);
      denom += vrow[j];
    }
    for (std::size_t j = 0; j < cols; ++j) vrow[j] /= denom;
  }
  auto out = detail::make_result(std::move(v), {rows, cols});
  detail::record(out, {s}, [sn = s.node(), rows, cols](TensorNode<T>* o) {
    return [sn, rows, cols, o] {
      if (o->grad.empty()) return;
      T* g = sn->grad_buf().data();
      const T* a = o->values.data();
      const T* go = o->grad.data();
      for (std::size_t l = 0; l < rows; ++l) {
        const T* arow = a + l * cols;
        const T* grow = go + l * cols;
        T dot = 0;
        for (std::size_t j = 0; j < cols; ++j) dot += grow[j] * arow[j];
        T* grad_row = g + l * cols;
        for (std::size_t j = 0; j < cols; ++j) grad_row[j] += arow[j] * (grow[j] - dot);
      }
    };
  });
  return out;
}

}  // namespace saqm
