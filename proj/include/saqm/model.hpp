// Copyright (c) 2026 The SAQM Authors
// SPDX-License-Identifier: Apache-2.0
//
// The SAQM network: three convolutional branch nets producing Query, Key and
// Value feature maps from a 32x32 patch, a self-attention kernel with a
// learnable gamma gate, a global-max-pooled MLP regressor for the patch
// quality score, and a gradient-reversed domain classifier head.

#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "saqm/error.hpp"
#include "saqm/patches.hpp"
#include "saqm/rng.hpp"
#include "saqm/tensor.hpp"

namespace saqm {

inline constexpr std::size_t kPatchSize = 32;

template <typename T>
struct ConvLayer {
  Tensor<T> weight;  // out x in x k x k
  Tensor<T> bias;    // out
  std::size_t kernel = 3;

  std::size_t param_count() const { return weight.numel() + bias.numel(); }
};

template <typename T>
struct LinearLayer {
  Tensor<T> weight;  // out x in
  Tensor<T> bias;    // out
};

// One branch of the feature extractor: seven 3x3 convolutions with ReLU,
// max pooling after the fourth and seventh, then a 1x1 projection with ReLU.
// A 3 x 32 x 32 patch maps to out_channels x 8 x 8.
template <typename T>
struct BranchNet {
  std::vector<ConvLayer<T>> layers;
  std::size_t out_channels = 0;

  std::vector<std::size_t> layer_param_counts() const {
    std::vector<std::size_t> counts;
    for (const auto& l : layers) counts.push_back(l.param_count());
    return counts;
  }
};

// Channel plan for one branch: trunk widths scale with C, the head projects
// to `head_out` (C for the Value branch, C/8 for Query/Key).
inline std::vector<std::pair<std::size_t, std::size_t>> branch_plan(std::size_t c,
                                                                    std::size_t head_out) {
  const std::size_t q = c / 4, h = c / 2;
  return {{3, q}, {q, h}, {h, h}, {h, h}, {h, c}, {c, c}, {c, c}, {c, head_out}};
}

template <typename T>
struct SaqmParams {
  std::size_t channels = 0;    // C
  std::size_t locations = 64;  // N = 8 * 8
  BranchNet<T> q_net;
  BranchNet<T> k_net;
  BranchNet<T> v_net;
  Tensor<T> gamma;  // scalar, initialised to exactly zero
  LinearLayer<T> reg_fc0;  // C -> 64
  LinearLayer<T> reg_fc1;  // 64 -> 1
  LinearLayer<T> dom_fc0;  // C -> 64
  LinearLayer<T> dom_fc1;  // 64 -> 1

  std::vector<Tensor<T>> parameters() {
    std::vector<Tensor<T>> out;
    for (auto* net : {&q_net, &k_net, &v_net})
      for (auto& l : net->layers) {
        out.push_back(l.weight);
        out.push_back(l.bias);
      }
    out.push_back(gamma);
    for (auto* lin : {&reg_fc0, &reg_fc1, &dom_fc0, &dom_fc1}) {
      out.push_back(lin->weight);
      out.push_back(lin->bias);
    }
    return out;
  }

  // Canonical (name, tensor) listing; the checkpoint writer relies on this
  // order being stable.
  std::vector<std::pair<std::string, Tensor<T>>> named_parameters() {
    std::vector<std::pair<std::string, Tensor<T>>> out;
    const char* branch_names[3] = {"q", "k", "v"};
    BranchNet<T>* nets[3] = {&q_net, &k_net, &v_net};
    for (int b = 0; b < 3; ++b)
      for (std::size_t i = 0; i < nets[b]->layers.size(); ++i) {
        const std::string base = std::string(branch_names[b]) + ".conv" + std::to_string(i);
        out.emplace_back(base + ".weight", nets[b]->layers[i].weight);
        out.emplace_back(base + ".bias", nets[b]->layers[i].bias);
      }
    out.emplace_back("gamma", gamma);
    const char* head_names[4] = {"regressor.fc0", "regressor.fc1", "domain.fc0", "domain.fc1"};
    LinearLayer<T>* heads[4] = {&reg_fc0, &reg_fc1, &dom_fc0, &dom_fc1};
    for (int i = 0; i < 4; ++i) {
      out.emplace_back(std::string(head_names[i]) + ".weight", heads[i]->weight);
      out.emplace_back(std::string(head_names[i]) + ".bias", heads[i]->bias);
    }
    return out;
  }
};

namespace detail {

template <typename T>
Tensor<T> he_uniform(std::vector<std::size_t> shape, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(rng.uniform(-bound, bound));
  return Tensor<T>::from(std::move(v), std::move(shape), true);
}

template <typename T>
BranchNet<T> build_branch(std::size_t c, std::size_t head_out, Rng rng) {
  BranchNet<T> net;
  net.out_channels = head_out;
  const auto plan = branch_plan(c, head_out);
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const auto [in_ch, out_ch] = plan[i];
    const std::size_t k = (i + 1 == plan.size()) ? 1 : 3;
    ConvLayer<T> layer;
    layer.kernel = k;
    layer.weight = he_uniform<T>({out_ch, in_ch, k, k}, in_ch * k * k, rng);
    layer.bias = Tensor<T>::zeros({out_ch}, true);
    net.layers.push_back(std::move(layer));
  }
  return net;
}

template <typename T>
LinearLayer<T> build_linear(std::size_t out_dim, std::size_t in_dim, Rng rng) {
  return {he_uniform<T>({out_dim, in_dim}, in_dim, rng), Tensor<T>::zeros({out_dim}, true)};
}

}  // namespace detail

template <typename T = float>
SaqmParams<T> build_model(std::uint64_t seed, std::size_t c = 512) {
  if (c == 0 || c % 8 != 0)
    throw ContractError("build_model: C = " + std::to_string(c) + " must be divisible by 8");
  Rng rng(seed);
  SaqmParams<T> p;
  p.channels = c;
  p.locations = 64;
  p.q_net = detail::build_branch<T>(c, c / 8, rng.fork("q"));
  p.k_net = detail::build_branch<T>(c, c / 8, rng.fork("k"));
  p.v_net = detail::build_branch<T>(c, c, rng.fork("v"));
  p.gamma = Tensor<T>::scalar(T(0), true);
  p.reg_fc0 = detail::build_linear<T>(64, c, rng.fork("reg0"));
  p.reg_fc1 = detail::build_linear<T>(1, 64, rng.fork("reg1"));
  p.dom_fc0 = detail::build_linear<T>(64, c, rng.fork("dom0"));
  p.dom_fc1 = detail::build_linear<T>(1, 64, rng.fork("dom1"));
  return p;
}

// Applies one branch to a 3 x 32 x 32 patch and flattens the spatial grid
// row-major into N = 64 columns.
template <typename T>
Tensor<T> branch_features(const BranchNet<T>& net, const Tensor<T>& patch) {
  if (patch.rank() != 3 || patch.dim(0) != 3 || patch.dim(1) != kPatchSize ||
      patch.dim(2) != kPatchSize)
    throw ContractError("branch_features: patch must be 3 x 32 x 32");
  Tensor<T> x = patch;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& l = net.layers[i];
    x = l.kernel == 1 ? conv1x1(x, l.weight, l.bias) : conv2d(x, l.weight, l.bias);
    x = relu(x);
    if (i == 3 || i == 6) x = maxpool2x2(x);
  }
  return reshape(x, {net.out_channels, x.dim(1) * x.dim(2)});
}

template <typename T>
struct AttentionTrace {
  Tensor<T> scores;     // S, N x N
  Tensor<T> attention;  // A, N x N row-normalised
  Tensor<T> output;     // gamma * (V A^T) + V, C x N
  Tensor<T> pooled;     // per-channel max over locations, C
};

// Eq.-style attention kernel: S[l][j] = Query[:,l] . Key[:,j], A is the row
// softmax of S, and each output location is a gamma-gated convex combination
// of Value locations plus the Value residual.
template <typename T>
AttentionTrace<T> attention(const Tensor<T>& query, const Tensor<T>& key,
                            const Tensor<T>& value, const Tensor<T>& gamma) {
  if (query.rank() != 2 || key.rank() != 2 || value.rank() != 2)
    throw ContractError("attention: query/key/value must be rank-2");
  const std::size_t n = query.dim(1);
  if (key.dim(1) != n || value.dim(1) != n)
    throw ContractError("attention: location counts disagree (query " + std::to_string(n) +
                        ", key " + std::to_string(key.dim(1)) + ", value " +
                        std::to_string(value.dim(1)) + ")");
  if (key.dim(0) != query.dim(0))
    throw ContractError("attention: query rows " + std::to_string(query.dim(0)) +
                        " != key rows " + std::to_string(key.dim(0)));
  AttentionTrace<T> trace;
  trace.scores = matmul(transpose(query), key);
  trace.attention = softmax_rows(trace.scores);
  auto attended = matmul(value, transpose(trace.attention));
  trace.output = add(scalar_scale(attended, gamma), value);
  trace.pooled = global_max_pool(trace.output);
  return trace;
}

// Full feature path for one patch: three branches, attention, pooling.
template <typename T>
AttentionTrace<T> forward_features(SaqmParams<T>& params, const Tensor<T>& patch) {
  auto q = branch_features(params.q_net, patch);
  auto k = branch_features(params.k_net, patch);
  auto v = branch_features(params.v_net, patch);
  return attention(q, k, v, params.gamma);
}

// Pre-sigmoid quality logit; training losses are computed from this so the
// gradient does not vanish when the sigmoid saturates in f32.
template <typename T>
Tensor<T> regressor_logit(SaqmParams<T>& params, const Tensor<T>& pooled) {
  auto h = relu(linear(pooled, params.reg_fc0.weight, params.reg_fc0.bias));
  return linear(h, params.reg_fc1.weight, params.reg_fc1.bias);
}

template <typename T>
Tensor<T> regressor_score(SaqmParams<T>& params, const Tensor<T>& pooled) {
  return sigmoid(regressor_logit(params, pooled));
}

// Predicted quality of one 32x32 patch, in (0,1).
template <typename T>
Tensor<T> patch_score(SaqmParams<T>& params, const Tensor<T>& patch) {
  return regressor_score(params, forward_features(params, patch).pooled);
}

// Pre-sigmoid domain-classifier output. The gradient reversal sits between
// the features and the head, so the head itself trains normally while
// reversed gradients flow into the feature extractor.
template <typename T>
Tensor<T> domain_pre_logit(SaqmParams<T>& params, const Tensor<T>& pooled, T lambda_grl) {
  auto rev = grad_reverse(pooled, lambda_grl);
  auto h = relu(linear(rev, params.dom_fc0.weight, params.dom_fc0.bias));
  return linear(h, params.dom_fc1.weight, params.dom_fc1.bias);
}

// Domain-classifier probability from the pooled feature vector.
template <typename T>
Tensor<T> domain_logit(SaqmParams<T>& params, const Tensor<T>& pooled, T lambda_grl) {
  return sigmoid(domain_pre_logit(params, pooled, lambda_grl));
}

// Mean patch score over the sliding-window grid. Inference only: gradients
// are not recorded.
template <typename T>
double image_score(SaqmParams<T>& params, const Tensor<T>& image, std::size_t patch = kPatchSize,
                   std::size_t stride = kPatchSize) {
  if (image.rank() != 3 || image.dim(0) != 3)
    throw ContractError("image_score: image must be 3 x H x W");
  NoGradGuard ng;
  const auto grid = patch_grid(image.dim(1), image.dim(2), patch, stride);
  double total = 0.0;
  for (const auto& pos : grid) {
    auto p = crop_patch(image, pos.y, pos.x, patch);
    total += static_cast<double>(patch_score(params, p).item());
  }
  return total / static_cast<double>(grid.size());
}

}  // namespace saqm
