// Copyright (c) 2026 The SAQM Authors
// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference checks for every differentiable tensor op, shared by the
// unit tests and the acceptance suite. grad_reverse is deliberately absent:
// its backward rule is not the derivative of its forward map, and it is
// verified by exact-negation tests instead.

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gradcheck.hpp"
#include "saqm/tensor.hpp"

namespace fd_suite {

struct Result {
  std::string op;
  std::string error;  // empty on pass
};

inline std::vector<Result> run(std::uint64_t seed = 7) {
  using saqm::Tensor;
  using gradcheck::check;
  using gradcheck::projection_like;
  using gradcheck::random_tensor;
  using gradcheck::separated_tensor;
  saqm::Rng root(seed);
  std::vector<Result> results;

  auto run_case = [&](const std::string& name, auto&& fn) {
    saqm::Rng rng = root.fork(name);
    results.push_back({name, fn(rng)});
  };

  run_case("add", [](saqm::Rng rng) {
    auto a = random_tensor({3, 5}, rng);
    auto b = random_tensor({3, 5}, rng);
    auto p = projection_like(a, rng);
    return check([&] { return saqm::sum(saqm::mul(saqm::add(a, b), p)); }, {a, b}, rng.fork(1));
  });

  run_case("sub", [](saqm::Rng rng) {
    auto a = random_tensor({4, 4}, rng);
    auto b = random_tensor({4, 4}, rng);
    auto p = projection_like(a, rng);
    return check([&] { return saqm::sum(saqm::mul(saqm::sub(a, b), p)); }, {a, b}, rng.fork(1));
  });

  run_case("mul", [](saqm::Rng rng) {
    auto a = random_tensor({3, 5}, rng);
    auto b = random_tensor({3, 5}, rng);
    auto p = projection_like(a, rng);
    return check([&] { return saqm::sum(saqm::mul(saqm::mul(a, b), p)); }, {a, b}, rng.fork(1));
  });

  run_case("scale", [](saqm::Rng rng) {
    auto a = random_tensor({6, 4}, rng);
    auto p = projection_like(a, rng);
    return check([&] { return saqm::sum(saqm::mul(saqm::scale(a, 1.7), p)); }, {a}, rng.fork(1));
  });

  run_case("scalar_scale", [](saqm::Rng rng) {
    auto a = random_tensor({5, 5}, rng);
    auto s = saqm::Tensor<double>::scalar(0.6, true);
    auto p = projection_like(a, rng);
    return check([&] { return saqm::sum(saqm::mul(saqm::scalar_scale(a, s), p)); }, {a, s},
                 rng.fork(1));
  });

  run_case("sum", [](saqm::Rng rng) {
    auto a = random_tensor({7, 3}, rng);
    return check([&] { return saqm::sum(a); }, {a}, rng.fork(1));
  });

  run_case("mean", [](saqm::Rng rng) {
    auto a = random_tensor({5, 5}, rng);
    return check([&] { return saqm::mean(a); }, {a}, rng.fork(1));
  });

  run_case("relu", [](saqm::Rng rng) {
    auto a = separated_tensor({6, 6}, rng);
    auto p = projection_like(a, rng);
    return check([&] { return saqm::sum(saqm::mul(saqm::relu(a), p)); }, {a}, rng.fork(1));
  });

  run_case("sigmoid", [](saqm::Rng rng) {
    auto a = random_tensor({4, 8}, rng);
    auto p = projection_like(a, rng);
    return check([&] { return saqm::sum(saqm::mul(saqm::sigmoid(a), p)); }, {a}, rng.fork(1));
  });

  run_case("reshape", [](saqm::Rng rng) {
    auto a = random_tensor({4, 6}, rng);
    auto p = random_tensor({24}, rng, false);
    return check([&] { return saqm::sum(saqm::mul(saqm::reshape(a, {24}), p)); }, {a},
                 rng.fork(1));
  });

  run_case("transpose", [](saqm::Rng rng) {
    auto a = random_tensor({3, 7}, rng);
    auto p = random_tensor({7, 3}, rng, false);
    return check([&] { return saqm::sum(saqm::mul(saqm::transpose(a), p)); }, {a}, rng.fork(1));
  });

  run_case("matmul", [](saqm::Rng rng) {
    auto a = random_tensor({4, 6}, rng);
    auto b = random_tensor({6, 5}, rng);
    auto p = random_tensor({4, 5}, rng, false);
    return check([&] { return saqm::sum(saqm::mul(saqm::matmul(a, b), p)); }, {a, b},
                 rng.fork(1));
  });

  run_case("linear", [](saqm::Rng rng) {
    auto x = random_tensor({9}, rng);
    auto w = random_tensor({5, 9}, rng);
    auto b = random_tensor({5}, rng);
    auto p = random_tensor({5}, rng, false);
    return check([&] { return saqm::sum(saqm::mul(saqm::linear(x, w, b), p)); }, {x, w, b},
                 rng.fork(1));
  });

  run_case("conv2d", [](saqm::Rng rng) {
    auto x = random_tensor({2, 6, 5}, rng);
    auto w = random_tensor({3, 2, 3, 3}, rng);
    auto b = random_tensor({3}, rng);
    auto p = random_tensor({3, 6, 5}, rng, false);
    return check([&] { return saqm::sum(saqm::mul(saqm::conv2d(x, w, b), p)); }, {x, w, b},
                 rng.fork(1));
  });

  run_case("conv1x1", [](saqm::Rng rng) {
    auto x = random_tensor({4, 5, 5}, rng);
    auto w = random_tensor({3, 4, 1, 1}, rng);
    auto b = random_tensor({3}, rng);
    auto p = random_tensor({3, 5, 5}, rng, false);
    return check([&] { return saqm::sum(saqm::mul(saqm::conv1x1(x, w, b), p)); }, {x, w, b},
                 rng.fork(1));
  });

  run_case("maxpool2x2", [](saqm::Rng rng) {
    auto x = separated_tensor({2, 6, 6}, rng);
    auto p = random_tensor({2, 3, 3}, rng, false);
    return check([&] { return saqm::sum(saqm::mul(saqm::maxpool2x2(x), p)); }, {x}, rng.fork(1));
  });

  run_case("global_max_pool", [](saqm::Rng rng) {
    auto x = separated_tensor({3, 4, 4}, rng);
    auto p = random_tensor({3}, rng, false);
    return check([&] { return saqm::sum(saqm::mul(saqm::global_max_pool(x), p)); }, {x},
                 rng.fork(1));
  });

  run_case("softmax_rows", [](saqm::Rng rng) {
    auto s = random_tensor({5, 5}, rng);
    auto p = random_tensor({5, 5}, rng, false);
    return check([&] { return saqm::sum(saqm::mul(saqm::softmax_rows(s), p)); }, {s},
                 rng.fork(1));
  });

  run_case("bce", [](saqm::Rng rng) {
    auto p = saqm::Tensor<double>::scalar(rng.uniform(0.1, 0.9), true);
    return check([&] { return saqm::bce(p, 0.3); }, {p}, rng.fork(1));
  });

  run_case("bce_with_logits", [](saqm::Rng rng) {
    auto z = saqm::Tensor<double>::scalar(rng.uniform(-3.0, 3.0), true);
    return check([&] { return saqm::bce_with_logits(z, 0.7); }, {z}, rng.fork(1));
  });

  return results;
}

}  // namespace fd_suite
