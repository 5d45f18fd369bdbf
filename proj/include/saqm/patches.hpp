// Copyright (c) 2026 The SAQM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "saqm/error.hpp"
#include "saqm/tensor.hpp"

namespace saqm {

// Sliding-window anchors {0, stride, 2*stride, ...} clamped so the final
// anchor is extent - patch (the last window is edge-aligned). Duplicates are
// removed; order is ascending.
inline std::vector<std::size_t> patch_anchors(std::size_t extent, std::size_t patch,
                                              std::size_t stride) {
  if (extent < patch)
    throw ContractError("patch_anchors: extent " + std::to_string(extent) +
                        " smaller than patch " + std::to_string(patch));
  if (stride == 0) throw ContractError("patch_anchors: stride must be positive");
  std::vector<std::size_t> anchors;
  const std::size_t last = extent - patch;
  for (std::size_t a = 0; a <= last; a += stride) anchors.push_back(a);
  if (anchors.back() != last) anchors.push_back(last);
  return anchors;
}

struct PatchPos {
  std::size_t y = 0;
  std::size_t x = 0;
};

// Row-major grid of patch positions covering a H x W image.
inline std::vector<PatchPos> patch_grid(std::size_t h, std::size_t w, std::size_t patch,
                                        std::size_t stride) {
  const auto ys = patch_anchors(h, patch, stride);
  const auto xs = patch_anchors(w, patch, stride);
  std::vector<PatchPos> grid;
  grid.reserve(ys.size() * xs.size());
  for (std::size_t y : ys)
    for (std::size_t x : xs) grid.push_back({y, x});
  return grid;
}

template <typename T>
Tensor<T> crop_patch(const Tensor<T>& image, std::size_t y, std::size_t x, std::size_t patch) {
  if (image.rank() != 3) throw ContractError("crop_patch: image must be C x H x W");
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (y + patch > h || x + patch > w)
    throw ContractError("crop_patch: window exceeds image bounds");
  std::vector<T> v(c * patch * patch);
  const T* in = image.values().data();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t yy = 0; yy < patch; ++yy) {
      const T* src = in + (ch * h + y + yy) * w + x;
      T* dst = v.data() + (ch * patch + yy) * patch;
      for (std::size_t xx = 0; xx < patch; ++xx) dst[xx] = src[xx];
    }
  return Tensor<T>::from(std::move(v), {c, patch, patch});
}

template <typename T>
struct ExtractedPatch {
  Tensor<T> patch;
  std::size_t y = 0;
  std::size_t x = 0;
};

// All sliding-window patches of an image in deterministic row-major order.
template <typename T>
std::vector<ExtractedPatch<T>> extract_patches(const Tensor<T>& image, std::size_t patch = 32,
                                               std::size_t stride = 32) {
  if (image.rank() != 3) throw ContractError("extract_patches: image must be C x H x W");
  const std::size_t h = image.dim(1), w = image.dim(2);
  if (h < patch || w < patch)
    throw ContractError("extract_patches: image " + std::to_string(h) + "x" +
                        std::to_string(w) + " smaller than patch size " + std::to_string(patch));
  std::vector<ExtractedPatch<T>> out;
  for (const auto& pos : patch_grid(h, w, patch, stride))
    out.push_back({crop_patch(image, pos.y, pos.x, patch), pos.y, pos.x});
  return out;
}

}  // namespace saqm
