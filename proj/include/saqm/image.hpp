// Copyright (c) 2026 The SAQM Authors
// SPDX-License-Identifier: Apache-2.0
//
// Binary PPM (P6) / PGM (P5) reading and writing, 8-bit maxval 255 only.
// Pixels are scaled to [0,1]; grayscale is replicated across 3 channels.

#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "saqm/error.hpp"
#include "saqm/tensor.hpp"

namespace saqm {

namespace detail {

class PnmHeaderReader {
 public:
  explicit PnmHeaderReader(const std::string& bytes) : bytes_(bytes) {}

  std::string magic() {
    if (bytes_.size() < 2) throw ParseError("pnm: file too short for magic");
    pos_ = 2;
    return bytes_.substr(0, 2);
  }

  // Whitespace- and comment-tolerant unsigned integer token.
  std::size_t next_uint(const char* what) {
    skip_separators();
    if (pos_ >= bytes_.size()) throw ParseError(std::string("pnm: missing ") + what);
    if (bytes_[pos_] < '0' || bytes_[pos_] > '9')
      throw ParseError(std::string("pnm: malformed ") + what);
    std::size_t v = 0;
    while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
      v = v * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
      if (v > 1000000) throw ParseError(std::string("pnm: implausible ") + what);
      ++pos_;
    }
    return v;
  }

  // A single whitespace byte separates the maxval from the payload.
  std::size_t payload_offset() {
    if (pos_ >= bytes_.size() || !is_space(bytes_[pos_]))
      throw ParseError("pnm: missing separator before payload");
    return pos_ + 1;
  }

 private:
  static bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
  }

  void skip_separators() {
    while (pos_ < bytes_.size()) {
      if (is_space(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

// Loads a binary P5/P6 file as a 3 x H x W tensor in [0,1].
inline Tensor<float> load_image(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("image: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << is.rdbuf();
  const std::string bytes = buf.str();

  detail::PnmHeaderReader header(bytes);
  const std::string magic = header.magic();
  if (magic != "P5" && magic != "P6")
    throw ParseError("image '" + path + "': unknown magic '" + magic + "'");
  const std::size_t w = header.next_uint("width");
  const std::size_t h = header.next_uint("height");
  const std::size_t maxval = header.next_uint("maxval");
  if (w == 0 || h == 0) throw ParseError("image '" + path + "': zero dimension");
  if (maxval != 255)
    throw ParseError("image '" + path + "': maxval " + std::to_string(maxval) +
                     " unsupported (must be 255)");
  const std::size_t offset = header.payload_offset();
  const std::size_t channels = magic == "P6" ? 3 : 1;
  const std::size_t need = w * h * channels;
  if (bytes.size() < offset + need)
    throw ParseError("image '" + path + "': truncated payload (" +
                     std::to_string(bytes.size() - offset) + " of " + std::to_string(need) +
                     " bytes)");

  std::vector<float> v(3 * h * w);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + offset;
  if (channels == 3) {
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        for (std::size_t c = 0; c < 3; ++c)
          v[(c * h + y) * w + x] = static_cast<float>(p[(y * w + x) * 3 + c]) / 255.0f;
  } else {
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const float g = static_cast<float>(p[y * w + x]) / 255.0f;
        for (std::size_t c = 0; c < 3; ++c) v[(c * h + y) * w + x] = g;
      }
  }
  return Tensor<float>::from(std::move(v), {3, h, w});
}

namespace detail {

inline unsigned char quantize(float v) {
  const float scaled = std::round(v * 255.0f);
  if (scaled <= 0.0f) return 0;
  if (scaled >= 255.0f) return 255;
  return static_cast<unsigned char>(scaled);
}

}  // namespace detail

// Writes a 3 x H x W tensor as binary P6.
inline void save_ppm(const std::string& path, const Tensor<float>& img) {
  if (img.rank() != 3 || img.dim(0) != 3)
    throw ContractError("save_ppm: image must be 3 x H x W");
  const std::size_t h = img.dim(1), w = img.dim(2);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("image: cannot open '" + path + "' for writing");
  os << "P6\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> row(w * 3);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        row[x * 3 + c] = detail::quantize(img.values()[(c * h + y) * w + x]);
    os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!os) throw IoError("image: write to '" + path + "' failed");
}

// Writes channel 0 of a C x H x W tensor as binary P5.
inline void save_pgm(const std::string& path, const Tensor<float>& img) {
  if (img.rank() != 3) throw ContractError("save_pgm: image must be C x H x W");
  const std::size_t h = img.dim(1), w = img.dim(2);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("image: cannot open '" + path + "' for writing");
  os << "P5\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> row(w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) row[x] = detail::quantize(img.values()[y * w + x]);
    os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!os) throw IoError("image: write to '" + path + "' failed");
}

}  // namespace saqm
