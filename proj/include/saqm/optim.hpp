// Copyright (c) 2026 The SAQM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "saqm/error.hpp"
#include "saqm/tensor.hpp"

namespace saqm {

// Adam with bias correction. Moments live here, aligned one-to-one with the
// parameter list handed to each step.
template <typename T>
struct AdamState {
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T epsilon = T(1e-8);
  long step = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;

  explicit AdamState(const std::vector<Tensor<T>>& params) {
    m.reserve(params.size());
    v.reserve(params.size());
    for (const auto& p : params) {
      m.emplace_back(p.numel(), T(0));
      v.emplace_back(p.numel(), T(0));
    }
  }
};

template <typename T>
void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& state, T lr) {
  if (!(lr > T(0))) throw ContractError("adam_step: lr must be positive");
  if (params.size() != state.m.size())
    throw ContractError("adam_step: state tracks " + std::to_string(state.m.size()) +
                        " parameters, got " + std::to_string(params.size()));
  state.step += 1;
  const T bc1 = T(1) - std::pow(state.beta1, static_cast<T>(state.step));
  const T bc2 = T(1) - std::pow(state.beta2, static_cast<T>(state.step));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi].values();
    const auto& g = params[pi].grad();  // empty grad means zero gradient
    auto& m = state.m[pi];
    auto& v = state.v[pi];
    if (m.size() != p.size())
      throw ContractError("adam_step: parameter " + std::to_string(pi) + " changed size");
    for (std::size_t i = 0; i < p.size(); ++i) {
      const T gi = g.empty() ? T(0) : g[i];
      m[i] = state.beta1 * m[i] + (T(1) - state.beta1) * gi;
      v[i] = state.beta2 * v[i] + (T(1) - state.beta2) * gi * gi;
      const T mhat = m[i] / bc1;
      const T vhat = v[i] / bc2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
}

template <typename T>
void zero_grads(std::vector<Tensor<T>>& params) {
  for (auto& p : params) p.zero_grad();
}

}  // namespace saqm
