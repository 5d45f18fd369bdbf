// Copyright (c) 2026 The SAQM Authors
// SPDX-License-Identifier: Apache-2.0
//
// Manifest-driven dataset handling: CSV manifests (`path,mos,domain,split`),
// per-domain min-max MOS normalisation, and reference-disjoint splitting.

#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "saqm/error.hpp"
#include "saqm/image.hpp"
#include "saqm/rng.hpp"
#include "saqm/tensor.hpp"

namespace saqm {

enum class Domain { source, target };
enum class Split { train, test };

inline const char* to_string(Domain d) { return d == Domain::source ? "source" : "target"; }
inline const char* to_string(Split s) { return s == Split::train ? "train" : "test"; }

inline Domain parse_domain(const std::string& s) {
  if (s == "source") return Domain::source;
  if (s == "target") return Domain::target;
  throw ParseError("manifest: unknown domain '" + s + "'");
}

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw ParseError("manifest: unknown split '" + s + "'");
}

struct ManifestRow {
  std::string path;
  std::optional<double> mos;  // raw score as stored on disk; empty = unlabeled
  Domain domain = Domain::source;
  Split split = Split::train;
};

struct MosRange {
  double min = 0.0;
  double max = 1.0;
};

struct Manifest {
  std::vector<ManifestRow> rows;
  std::filesystem::path base_dir;             // directory image paths resolve against
  std::map<Domain, MosRange> normalization;   // filled by normalize_mos

  std::string resolve(const ManifestRow& row) const {
    std::filesystem::path p(row.path);
    if (p.is_absolute() || base_dir.empty()) return p.string();
    return (base_dir / p).string();
  }

  // Normalised MOS in [0,1]; requires normalize_mos() to have run for the
  // row's domain when a label is present.
  std::optional<double> normalized_mos(const ManifestRow& row) const {
    if (!row.mos) return std::nullopt;
    auto it = normalization.find(row.domain);
    if (it == normalization.end())
      throw ContractError("manifest: MOS normalisation missing for domain " +
                          std::string(to_string(row.domain)));
    return (*row.mos - it->second.min) / (it->second.max - it->second.min);
  }
};

// Groups all versions of one pristine image: the file stem with its final
// underscore-separated token (the distortion tag) removed.
inline std::string reference_id(const std::string& path) {
  std::string stem = std::filesystem::path(path).stem().string();
  const auto us = stem.rfind('_');
  return us == std::string::npos ? stem : stem.substr(0, us);
}

// An image instance ready for the model.
struct Sample {
  Tensor<float> image;              // 3 x H x W in [0,1]
  std::optional<double> mos;        // normalised to [0,1]
  Domain domain = Domain::source;
  Split split = Split::train;
  std::string id;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace detail

inline Manifest read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("manifest: cannot open '" + path + "'");
  Manifest m;
  m.base_dir = std::filesystem::path(path).parent_path();
  std::string line;
  if (!std::getline(is, line)) throw ParseError("manifest '" + path + "': empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "path,mos,domain,split")
    throw ParseError("manifest '" + path + "': bad header '" + line + "'");
  std::size_t lineno = 1;
  std::map<std::string, bool> seen;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != 4)
      throw ParseError("manifest '" + path + "' line " + std::to_string(lineno) +
                       ": expected 4 fields, got " + std::to_string(fields.size()));
    ManifestRow row;
    row.path = fields[0];
    if (row.path.empty())
      throw ParseError("manifest '" + path + "' line " + std::to_string(lineno) +
                       ": empty path");
    if (seen.count(row.path))
      throw ParseError("manifest '" + path + "' line " + std::to_string(lineno) +
                       ": duplicate path '" + row.path + "'");
    seen[row.path] = true;
    if (!fields[1].empty()) {
      try {
        std::size_t consumed = 0;
        row.mos = std::stod(fields[1], &consumed);
        if (consumed != fields[1].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw ParseError("manifest '" + path + "' line " + std::to_string(lineno) +
                         ": bad mos value '" + fields[1] + "'");
      }
    }
    row.domain = parse_domain(fields[2]);
    row.split = parse_split(fields[3]);
    m.rows.push_back(std::move(row));
  }
  return m;
}

inline void write_manifest(const std::string& path, const Manifest& m) {
  std::ofstream os(path);
  if (!os) throw IoError("manifest: cannot open '" + path + "' for writing");
  os << "path,mos,domain,split\n";
  for (const auto& row : m.rows) {
    os << row.path << ',';
    if (row.mos) {
      std::ostringstream v;
      v.precision(17);
      v << *row.mos;
      os << v.str();
    }
    os << ',' << to_string(row.domain) << ',' << to_string(row.split) << '\n';
  }
  if (!os) throw IoError("manifest: write to '" + path + "' failed");
}

// Per-domain min-max scaling of the raw MOS values; the ranges are stored on
// the manifest so scores can be inverted later.
inline void normalize_mos(Manifest& m) {
  for (Domain d : {Domain::source, Domain::target}) {
    std::vector<double> raw;
    for (const auto& row : m.rows)
      if (row.domain == d && row.mos) raw.push_back(*row.mos);
    if (raw.empty()) continue;
    const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
    if (*lo == *hi)
      throw ContractError("normalize_mos: domain " + std::string(to_string(d)) +
                          " has constant raw MOS " + std::to_string(*lo));
    m.normalization[d] = {*lo, *hi};
  }
}

// Reference-disjoint train/test assignment: all versions of one pristine
// image land on the same side. Per domain, floor(refs * test_fraction)
// references go to the test split, drawn deterministically from the seed.
inline void assign_split(Manifest& m, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw ContractError("split: test_fraction " + std::to_string(test_fraction) +
                        " outside (0,1)");
  std::map<std::string, Split> side;
  for (Domain d : {Domain::source, Domain::target}) {
    std::vector<std::string> refs;
    for (const auto& row : m.rows) {
      if (row.domain != d) continue;
      const std::string id = reference_id(row.path);
      if (std::find(refs.begin(), refs.end(), id) == refs.end()) refs.push_back(id);
    }
    if (refs.empty()) continue;
    if (refs.size() < 2)
      throw ContractError("split: domain " + std::string(to_string(d)) +
                          " needs at least 2 references, got " + std::to_string(refs.size()));
    Rng rng = Rng(seed).fork("split").fork(to_string(d));
    rng.shuffle(refs);
    const std::size_t n_test =
        static_cast<std::size_t>(static_cast<double>(refs.size()) * test_fraction);
    for (std::size_t i = 0; i < refs.size(); ++i)
      side[std::string(to_string(d)) + "/" + refs[i]] = i < n_test ? Split::test : Split::train;
  }
  for (auto& row : m.rows)
    row.split = side[std::string(to_string(row.domain)) + "/" + reference_id(row.path)];
}

// Loads every row matching the optional filters, MOS normalised.
inline std::vector<Sample> load_samples(const Manifest& m,
                                        std::optional<Domain> domain = std::nullopt,
                                        std::optional<Split> split = std::nullopt) {
  std::vector<Sample> out;
  for (const auto& row : m.rows) {
    if (domain && row.domain != *domain) continue;
    if (split && row.split != *split) continue;
    Sample s;
    s.image = load_image(m.resolve(row));
    s.mos = m.normalized_mos(row);
    s.domain = row.domain;
    s.split = row.split;
    s.id = row.path;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace saqm
