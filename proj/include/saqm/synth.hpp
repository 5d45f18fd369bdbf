// Copyright (c) 2026 The SAQM Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic two-domain dataset generator for desk-scale experiments.
// References are band-limited random textures. Each reference receives
// `levels` graded distortions (Gaussian blur plus additive noise followed by
// a box filter), and a pseudo-MOS that decreases affinely with the level.
// The source domain renders RGB textures (P6); the target domain renders
// grayscale speckle-modulated textures (P5) mimicking ultrasound statistics.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "saqm/dataset.hpp"
#include "saqm/error.hpp"
#include "saqm/image.hpp"
#include "saqm/rng.hpp"

namespace saqm {

struct SynthSpec {
  std::size_t n_references = 12;
  std::size_t levels = 5;
  std::size_t size = 64;  // square images, multiple of 32
  std::uint64_t seed = 0;
  bool make_source = true;
  bool make_target = true;
  double test_fraction = 0.25;
};

namespace detail {

using Plane = std::vector<float>;  // size x size, row-major

inline Plane smoothed_noise(std::size_t n, double amplitude, Rng& rng) {
  Plane raw(n * n);
  for (auto& v : raw) v = static_cast<float>(rng.uniform(-amplitude, amplitude));
  Plane out(n * n, 0.f);
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      float acc = 0.f;
      int cnt = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = static_cast<int>(y) + dy, xx = static_cast<int>(x) + dx;
          if (yy < 0 || yy >= static_cast<int>(n) || xx < 0 || xx >= static_cast<int>(n))
            continue;
          acc += raw[static_cast<std::size_t>(yy) * n + static_cast<std::size_t>(xx)];
          ++cnt;
        }
      out[y * n + x] = acc / static_cast<float>(cnt);
    }
  return out;
}

// Sum of random-frequency sinusoids plus smoothed noise, min-max scaled.
inline Plane texture(std::size_t n, double max_freq, Rng& rng) {
  Plane t(n * n, 0.f);
  const int waves = 6;
  for (int k = 0; k < waves; ++k) {
    const double fx = rng.uniform(0.5, max_freq);
    const double fy = rng.uniform(0.5, max_freq);
    const double phase = rng.uniform(0.0, 6.283185307179586);
    const double amp = rng.uniform(0.4, 1.0) / (1.0 + 0.5 * k);
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x)
        t[y * n + x] += static_cast<float>(
            amp * std::sin(6.283185307179586 *
                               (fx * static_cast<double>(x) + fy * static_cast<double>(y)) /
                               static_cast<double>(n) +
                           phase));
  }
  const Plane noise = smoothed_noise(n, 0.35, rng);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] += noise[i];
  const auto [lo, hi] = std::minmax_element(t.begin(), t.end());
  const float span = std::max(*hi - *lo, 1e-6f);
  for (auto& v : t) v = 0.05f + 0.9f * (v - *lo) / span;
  return t;
}

inline Plane gaussian_blur(const Plane& img, std::size_t n, double sigma) {
  if (sigma <= 0.0) return img;
  const int radius = std::max(1, static_cast<int>(std::ceil(2.5 * sigma)));
  std::vector<float> kernel(static_cast<std::size_t>(2 * radius + 1));
  float total = 0.f;
  for (int i = -radius; i <= radius; ++i) {
    const float v = static_cast<float>(std::exp(-0.5 * (i / sigma) * (i / sigma)));
    kernel[static_cast<std::size_t>(i + radius)] = v;
    total += v;
  }
  for (auto& v : kernel) v /= total;
  auto clampi = [&](int i) { return std::clamp(i, 0, static_cast<int>(n) - 1); };
  Plane tmp(n * n), out(n * n);
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      float acc = 0.f;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[static_cast<std::size_t>(i + radius)] *
               img[y * n + static_cast<std::size_t>(clampi(static_cast<int>(x) + i))];
      tmp[y * n + x] = acc;
    }
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      float acc = 0.f;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[static_cast<std::size_t>(i + radius)] *
               tmp[static_cast<std::size_t>(clampi(static_cast<int>(y) + i)) * n + x];
      out[y * n + x] = acc;
    }
  return out;
}

inline Plane box3(const Plane& img, std::size_t n) {
  Plane out(n * n);
  auto clampi = [&](int i) { return std::clamp(i, 0, static_cast<int>(n) - 1); };
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      float acc = 0.f;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
          acc += img[static_cast<std::size_t>(clampi(static_cast<int>(y) + dy)) * n +
                     static_cast<std::size_t>(clampi(static_cast<int>(x) + dx))];
      out[y * n + x] = acc / 9.f;
    }
  return out;
}

// Level-k degradation: blur, then noise, then a box "denoise" pass.
inline Plane distort(const Plane& img, std::size_t n, std::size_t level, std::size_t levels,
                     Rng& rng) {
  const double frac = static_cast<double>(level) / static_cast<double>(levels);
  const double sigma = 0.6 + 2.2 * frac;
  const double noise_amp = 0.03 + 0.22 * frac;
  Plane out = gaussian_blur(img, n, sigma);
  for (auto& v : out) v += static_cast<float>(rng.uniform(-noise_amp, noise_amp));
  out = box3(out, n);
  for (auto& v : out) v = std::clamp(v, 0.f, 1.f);
  return out;
}

inline Tensor<float> planes_to_tensor(const std::vector<Plane>& planes, std::size_t n) {
  std::vector<float> v;
  v.reserve(planes.size() * n * n);
  for (const auto& p : planes) v.insert(v.end(), p.begin(), p.end());
  return Tensor<float>::from(std::move(v), {planes.size(), n, n});
}

}  // namespace detail

inline double synth_pseudo_mos(std::size_t level, std::size_t levels) {
  return 1.0 - 0.9 * static_cast<double>(level) / static_cast<double>(levels);
}

// Writes the dataset under out_dir (images, manifest.csv, synth_meta.txt)
// and returns the manifest.
inline Manifest synth_dataset(const SynthSpec& spec, const std::string& out_dir) {
  if (spec.size < 32 || spec.size % 32 != 0)
    throw ContractError("synth: size " + std::to_string(spec.size) +
                        " must be a positive multiple of 32");
  if (spec.levels < 2)
    throw ContractError("synth: levels " + std::to_string(spec.levels) + " must be >= 2");
  if (spec.n_references < 2)
    throw ContractError("synth: need at least 2 references");
  if (!spec.make_source && !spec.make_target)
    throw ContractError("synth: no domain selected");

  std::filesystem::create_directories(out_dir);
  const std::size_t n = spec.size;
  Manifest manifest;
  manifest.base_dir = out_dir;
  Rng root(spec.seed);

  auto emit = [&](Domain domain) {
    const char* tag = to_string(domain);
    Rng domain_rng = root.fork(tag);
    for (std::size_t r = 0; r < spec.n_references; ++r) {
      Rng ref_rng = domain_rng.fork(r);
      std::vector<detail::Plane> pristine;
      if (domain == Domain::source) {
        // RGB texture: a shared base plus small per-channel colour fields.
        detail::Plane base = detail::texture(n, 7.0, ref_rng);
        for (int c = 0; c < 3; ++c) {
          detail::Plane tint = detail::smoothed_noise(n, 0.10, ref_rng);
          detail::Plane ch(n * n);
          for (std::size_t i = 0; i < ch.size(); ++i)
            ch[i] = std::clamp(base[i] + tint[i], 0.f, 1.f);
          pristine.push_back(std::move(ch));
        }
      } else {
        // Grayscale speckle-modulated texture.
        detail::Plane base = detail::texture(n, 4.0, ref_rng);
        detail::Plane speckle = detail::smoothed_noise(n, 0.9, ref_rng);
        detail::Plane ch(n * n);
        for (std::size_t i = 0; i < ch.size(); ++i)
          ch[i] = std::clamp(base[i] * (1.0f + 0.45f * speckle[i]), 0.f, 1.f);
        pristine.push_back(std::move(ch));
      }

      char refname[64];
      std::snprintf(refname, sizeof(refname), "%s_r%02zu", tag, r);
      for (std::size_t level = 0; level <= spec.levels; ++level) {
        std::vector<detail::Plane> planes;
        if (level == 0) {
          planes = pristine;
        } else {
          Rng level_rng = ref_rng.fork(100 + level);
          for (const auto& p : pristine)
            planes.push_back(detail::distort(p, n, level, spec.levels, level_rng));
        }
        const std::string ext = domain == Domain::source ? ".ppm" : ".pgm";
        const std::string name =
            std::string(refname) + "_l" + std::to_string(level) + ext;
        auto img = detail::planes_to_tensor(planes, n);
        if (domain == Domain::source)
          save_ppm((std::filesystem::path(out_dir) / name).string(), img);
        else
          save_pgm((std::filesystem::path(out_dir) / name).string(), img);
        ManifestRow row;
        row.path = name;
        row.mos = synth_pseudo_mos(level, spec.levels);
        row.domain = domain;
        row.split = Split::train;
        manifest.rows.push_back(std::move(row));
      }
    }
  };

  if (spec.make_source) emit(Domain::source);
  if (spec.make_target) emit(Domain::target);

  assign_split(manifest, spec.test_fraction, spec.seed);
  write_manifest((std::filesystem::path(out_dir) / "manifest.csv").string(), manifest);

  std::ofstream meta((std::filesystem::path(out_dir) / "synth_meta.txt").string());
  meta << "seed=" << spec.seed << "\nreferences=" << spec.n_references
       << "\nlevels=" << spec.levels << "\nsize=" << spec.size << "\nsource="
       << (spec.make_source ? 1 : 0) << "\ntarget=" << (spec.make_target ? 1 : 0)
       << "\ntest_fraction=" << spec.test_fraction << "\n";
  return manifest;
}

}  // namespace saqm
