// Copyright (c) 2026 The SAQM Authors
// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference gradient checking (f64) shared by the unit and
// acceptance suites.

#pragma once

#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "saqm/rng.hpp"
#include "saqm/tensor.hpp"

namespace gradcheck {

struct Options {
  double h = 1e-3;
  double abs_tol = 1e-4;
  double rel_tol = 1e-3;
  int probes = 20;
};

// make_loss() must rebuild the scalar loss from the current leaf values.
// Returns an empty string on success, a diagnostic on the first failure.
template <typename F>
std::string check(F&& make_loss, std::vector<saqm::Tensor<double>> leaves, saqm::Rng rng,
                  Options opt = {}) {
  for (auto& leaf : leaves) leaf.zero_grad();
  auto loss = make_loss();
  loss.backward();

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t li = 0; li < leaves.size(); ++li)
    for (std::size_t i = 0; i < leaves[li].numel(); ++i) coords.emplace_back(li, i);
  if (coords.size() > static_cast<std::size_t>(opt.probes)) {
    rng.shuffle(coords);
    coords.resize(static_cast<std::size_t>(opt.probes));
  }

  for (auto [li, i] : coords) {
    auto& leaf = leaves[li];
    const auto& g = leaf.grad();
    const double analytic = g.empty() ? 0.0 : g[i];
    double numeric;
    {
      saqm::NoGradGuard ng;
      auto& v = leaf.values();
      const double orig = v[i];
      v[i] = orig + opt.h;
      const double fp = make_loss().item();
      v[i] = orig - opt.h;
      const double fm = make_loss().item();
      v[i] = orig;
      numeric = (fp - fm) / (2.0 * opt.h);
    }
    const double tol = std::max(opt.abs_tol, opt.rel_tol * std::abs(numeric));
    if (std::abs(analytic - numeric) > tol) {
      std::ostringstream os;
      os << "leaf " << li << " index " << i << ": analytic " << analytic << " vs numeric "
         << numeric << " (tol " << tol << ")";
      return os.str();
    }
  }
  return {};
}

// Random tensor with entries spread over [-1, 1].
inline saqm::Tensor<double> random_tensor(std::vector<std::size_t> shape, saqm::Rng& rng,
                                          bool requires_grad = true) {
  std::vector<double> v(saqm::shape_numel(shape));
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return saqm::Tensor<double>::from(std::move(v), std::move(shape), requires_grad);
}

// Random tensor whose values are distinct multiples of `step`, shuffled, so
// max-style ops keep the same argmax under +-h perturbations.
inline saqm::Tensor<double> separated_tensor(std::vector<std::size_t> shape, saqm::Rng& rng,
                                             double step = 0.1, bool requires_grad = true) {
  const std::size_t n = saqm::shape_numel(shape);
  std::vector<double> v(n);
  // Offset by step/2 so no value sits exactly on the ReLU kink.
  for (std::size_t i = 0; i < n; ++i)
    v[i] = step * static_cast<double>(i) - step * static_cast<double>(n) / 2.0 + step / 2.0;
  rng.shuffle(v);
  return saqm::Tensor<double>::from(std::move(v), std::move(shape), requires_grad);
}

// Fixed random projection so every output element contributes to the scalar.
inline saqm::Tensor<double> projection_like(const saqm::Tensor<double>& t, saqm::Rng& rng) {
  std::vector<double> v(t.numel());
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return saqm::Tensor<double>::from(std::move(v), t.shape(), false);
}

}  // namespace gradcheck
