// Copyright (c) 2026 The SAQM Authors
// SPDX-License-Identifier: Apache-2.0
//
// PLCC / SROCC correlation metrics, per-dataset evaluation, and plain-text
// report tables.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "saqm/dataset.hpp"
#include "saqm/error.hpp"
#include "saqm/model.hpp"

namespace saqm {

namespace detail {

inline void check_correlation_inputs(const char* op, const std::vector<double>& x,
                                     const std::vector<double>& y) {
  if (x.size() != y.size())
    throw ContractError(std::string(op) + ": length mismatch (" + std::to_string(x.size()) +
                        " vs " + std::to_string(y.size()) + ")");
  if (x.size() < 3)
    throw ContractError(std::string(op) + ": need at least 3 points, got " +
                        std::to_string(x.size()));
}

}  // namespace detail

// Pearson product-moment correlation. Constant input has no defined
// correlation and is rejected.
inline double plcc(const std::vector<double>& x, const std::vector<double>& y) {
  detail::check_correlation_inputs("plcc", x, y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0)
    throw ContractError("plcc: undefined correlation for constant input");
  return sxy / std::sqrt(sxx * syy);
}

// Fractional ranks with ties averaged.
inline std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double mean_rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = mean_rank;
    i = j + 1;
  }
  return ranks;
}

// Spearman rank-order correlation: Pearson correlation of average ranks.
inline double srocc(const std::vector<double>& x, const std::vector<double>& y) {
  detail::check_correlation_inputs("srocc", x, y);
  return plcc(average_ranks(x), average_ranks(y));
}

struct EvalReport {
  std::string dataset;
  std::string config;  // configuration id or "-" when unknown
  std::size_t n = 0;
  double plcc = 0.0;
  double srocc = 0.0;
  std::string checkpoint;
};

// Correlates predictions against subjective scores gathered elsewhere.
inline EvalReport correlate_scores(const std::string& dataset, const std::string& config,
                                   const std::vector<double>& predicted,
                                   const std::vector<double>& subjective,
                                   const std::string& checkpoint = {}) {
  EvalReport r;
  r.dataset = dataset;
  r.config = config;
  r.checkpoint = checkpoint;
  r.n = predicted.size();
  r.plcc = plcc(predicted, subjective);
  r.srocc = srocc(predicted, subjective);
  return r;
}

// Scores every labeled image of the chosen split and correlates against the
// normalised MOS. Deterministic: images are visited in manifest order.
template <typename T>
EvalReport evaluate(SaqmParams<T>& model, const Manifest& manifest, const std::string& dataset,
                    bool full_split = false, std::size_t stride = kPatchSize,
                    const std::string& config = "-", const std::string& checkpoint = {}) {
  Manifest m = manifest;
  normalize_mos(m);
  std::vector<double> predicted, subjective;
  for (const auto& row : m.rows) {
    if (!row.mos) continue;
    if (!full_split && row.split != Split::test) continue;
    auto image = load_image(m.resolve(row));
    predicted.push_back(image_score(model, image, kPatchSize, stride));
    subjective.push_back(*m.normalized_mos(row));
  }
  if (predicted.size() < 3)
    throw ContractError("evaluate: insufficient labeled samples (" +
                        std::to_string(predicted.size()) + " < 3)");
  return correlate_scores(dataset, config, predicted, subjective, checkpoint);
}

// Fixed-width table mirroring the ablation layout: one row per configuration,
// one PLCC/SROCC column pair per dataset, values with three decimals. Rows
// and columns appear in first-appearance order of the input.
inline std::string render_report(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw ContractError("render_report: no reports");
  std::vector<std::string> configs, datasets;
  for (const auto& r : reports) {
    if (std::find(configs.begin(), configs.end(), r.config) == configs.end())
      configs.push_back(r.config);
    if (std::find(datasets.begin(), datasets.end(), r.dataset) == datasets.end())
      datasets.push_back(r.dataset);
  }
  auto cell = [&](const std::string& config, const std::string& dataset) -> const EvalReport* {
    for (const auto& r : reports)
      if (r.config == config && r.dataset == dataset) return &r;
    return nullptr;
  };
  auto fmt = [](double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(3) << v;
    return os.str();
  };

  const std::size_t pair_width = 16;  // "PLCC    SROCC " column pair
  std::ostringstream os;
  os << std::left << std::setw(8) << "Config";
  for (const auto& d : datasets) os << std::left << std::setw(pair_width) << d;
  os << '\n' << std::setw(8) << "";
  for (std::size_t i = 0; i < datasets.size(); ++i)
    os << std::left << std::setw(8) << "PLCC" << std::setw(8) << "SROCC";
  os << '\n';
  for (const auto& c : configs) {
    os << std::left << std::setw(8) << c;
    for (const auto& d : datasets) {
      const auto* r = cell(c, d);
      if (r)
        os << std::left << std::setw(8) << fmt(r->plcc) << std::setw(8) << fmt(r->srocc);
      else
        os << std::left << std::setw(8) << "-" << std::setw(8) << "-";
    }
    os << '\n';
  }
  return os.str();
}

inline void write_report_csv(const std::string& path, const std::vector<EvalReport>& reports) {
  std::ofstream os(path);
  if (!os) throw IoError("report: cannot open '" + path + "' for writing");
  os << "dataset,config,n,plcc,srocc\n";
  for (const auto& r : reports) {
    std::ostringstream line;
    line << std::fixed << std::setprecision(6);
    line << r.dataset << ',' << r.config << ',' << r.n << ',' << r.plcc << ',' << r.srocc;
    os << line.str() << '\n';
  }
  if (!os) throw IoError("report: write to '" + path + "' failed");
}

}  // namespace saqm
