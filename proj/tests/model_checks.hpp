// Copyright (c) 2026 The SAQM Authors
// SPDX-License-Identifier: Apache-2.0
//
// Model-level checks shared by the unit tests and the acceptance suite.
// Each returns an empty string on success, else a diagnostic.

#pragma once

#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "saqm/model.hpp"
#include "saqm/tensor.hpp"

namespace model_checks {

// Table-style per-layer parameter counts for the Value branch at C = 512.
inline const std::vector<std::size_t> kValueBranchCounts = {
    3584, 295168, 590080, 590080, 1180160, 2359808, 2359808, 262656};

inline std::string architecture_counts() {
  auto model = saqm::build_model<float>(/*seed=*/0, /*c=*/512);
  const auto v_counts = model.v_net.layer_param_counts();
  if (v_counts != kValueBranchCounts) {
    std::ostringstream os;
    os << "value-branch counts mismatch:";
    for (auto c : v_counts) os << ' ' << c;
    return os.str();
  }
  std::size_t total = 0;
  for (auto c : v_counts) total += c;
  if (total != 7641344)
    return "value-branch total " + std::to_string(total) + " != 7641344";
  const auto q_counts = model.q_net.layer_param_counts();
  const auto k_counts = model.k_net.layer_param_counts();
  if (q_counts.back() != 32832 || k_counts.back() != 32832)
    return "query/key head counts " + std::to_string(q_counts.back()) + "/" +
           std::to_string(k_counts.back()) + " != 32832";
  for (std::size_t i = 0; i + 1 < q_counts.size(); ++i)
    if (q_counts[i] != kValueBranchCounts[i] || k_counts[i] != kValueBranchCounts[i])
      return "query/key trunk layer " + std::to_string(i) + " diverges from Value branch";
  return {};
}

inline std::string feature_map_shape() {
  auto model = saqm::build_model<float>(/*seed=*/1, /*c=*/512);
  saqm::NoGradGuard ng;
  saqm::Rng rng(3);
  std::vector<float> pv(3 * 32 * 32);
  for (auto& v : pv) v = static_cast<float>(rng.uniform(0.0, 1.0));
  auto patch = saqm::Tensor<float>::from(std::move(pv), {3, 32, 32});
  auto feats = saqm::branch_features(model.v_net, patch);
  if (feats.shape() != std::vector<std::size_t>{512, 64})
    return "value features are " + std::to_string(feats.dim(0)) + "x" +
           std::to_string(feats.dim(1)) + ", expected 512x64";
  return {};
}

// Attention kernel vs the brute-force triple loop on an N=4 toy.
inline std::string attention_toy_oracle(double tolerance = 1e-6) {
  saqm::Rng rng(11);
  const std::size_t d = 2, c = 3, n = 4;
  auto q = gradcheck::random_tensor({d, n}, rng, false);
  auto k = gradcheck::random_tensor({d, n}, rng, false);
  auto v = gradcheck::random_tensor({c, n}, rng, false);
  const double gamma = 0.7;
  auto trace = saqm::attention(q, k, v, saqm::Tensor<double>::scalar(gamma));
  auto expect = oracle::attention(q.values(), k.values(), d, v.values(), c, n, gamma);
  for (std::size_t i = 0; i < expect.size(); ++i)
    if (std::abs(trace.output.values()[i] - expect[i]) > tolerance)
      return "attention output diverges from oracle at index " + std::to_string(i);
  for (std::size_t l = 0; l < n; ++l) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) row += trace.attention.values()[l * n + j];
    if (std::abs(row - 1.0) > 1e-6)
      return "attention row " + std::to_string(l) + " sums to " + std::to_string(row);
  }
  return {};
}

inline std::string gamma_zero_bypass() {
  auto model = saqm::build_model<double>(/*seed=*/5, /*c=*/16);
  saqm::NoGradGuard ng;
  saqm::Rng rng(17);
  std::vector<double> pv(3 * 32 * 32);
  for (auto& v : pv) v = rng.uniform(0.0, 1.0);
  auto patch = saqm::Tensor<double>::from(std::move(pv), {3, 32, 32});
  const double before = saqm::patch_score(model, patch).item();
  for (auto& layer : model.q_net.layers)
    for (auto& v : layer.weight.values()) v += 0.25;
  for (auto& layer : model.k_net.layers)
    for (auto& v : layer.bias.values()) v -= 0.125;
  const double after = saqm::patch_score(model, patch).item();
  if (before != after)
    return "score changed under Q/K perturbation with gamma = 0: " + std::to_string(before) +
           " -> " + std::to_string(after);
  return {};
}

// End-to-end finite differences through the quality path at C = 16 (f64),
// probing parameters sampled across all quality-path tensors.
inline std::string e2e_quality_gradcheck(int probes = 25) {
  auto model = saqm::build_model<double>(/*seed=*/42, /*c=*/16);
  model.gamma.values()[0] = 0.5;  // exercise the attention branch
  saqm::Rng rng(99);
  std::vector<double> pv(3 * 32 * 32);
  for (auto& v : pv) v = rng.uniform(0.0, 1.0);
  auto patch = saqm::Tensor<double>::from(std::move(pv), {3, 32, 32});

  std::vector<saqm::Tensor<double>> leaves;
  for (auto* net : {&model.q_net, &model.k_net, &model.v_net})
    for (auto& l : net->layers) {
      leaves.push_back(l.weight);
      leaves.push_back(l.bias);
    }
  leaves.push_back(model.gamma);
  leaves.push_back(model.reg_fc0.weight);
  leaves.push_back(model.reg_fc0.bias);
  leaves.push_back(model.reg_fc1.weight);
  leaves.push_back(model.reg_fc1.bias);

  gradcheck::Options opt;
  opt.probes = probes;
  opt.abs_tol = 1e-3;
  opt.rel_tol = 1e-2;
  return gradcheck::check([&] { return saqm::bce(saqm::patch_score(model, patch), 0.7); },
                          leaves, rng.fork("probe"), opt);
}

// Domain head parameters are downstream of the reversal layer, so finite
// differences apply to them when the pooled vector is a fixed leaf.
inline std::string domain_head_gradcheck() {
  auto model = saqm::build_model<double>(/*seed=*/4, /*c=*/16);
  saqm::Rng rng(23);
  auto pooled = gradcheck::random_tensor({16}, rng, false);
  gradcheck::Options opt;
  opt.probes = 25;
  return gradcheck::check(
      [&] { return saqm::bce(saqm::domain_logit(model, pooled, 1.0), 1.0); },
      {model.dom_fc0.weight, model.dom_fc0.bias, model.dom_fc1.weight, model.dom_fc1.bias},
      rng.fork("probe"), opt);
}

}  // namespace model_checks
