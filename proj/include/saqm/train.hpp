// Copyright (c) 2026 The SAQM Authors
// SPDX-License-Identifier: Apache-2.0
//
// Training loops for the four experimental configurations:
//   1  supervised on the target domain only
//   2  supervised on the source domain only
//   3  unsupervised domain adaptation (source labeled, target unlabeled)
//   4  semi-supervised domain adaptation (source labeled, a seed-selected
//      fraction of target references labeled)
// Per batch: L = mean BCE over labeled patches + lambda_domain * mean BCE of
// the domain classifier over all patches (configs 3-4). The gradient
// reversal layer negates the domain gradients entering the feature branches.
// Domain labels: source = 0, target = 1.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "saqm/dataset.hpp"
#include "saqm/error.hpp"
#include "saqm/model.hpp"
#include "saqm/optim.hpp"
#include "saqm/patches.hpp"
#include "saqm/rng.hpp"
#include "saqm/tensor.hpp"

namespace saqm {

struct TrainConfig {
  int config_id = 1;  // 1..4
  double lr = 5e-4;
  std::size_t epochs = 100;
  std::size_t batch_size = 16;
  double lambda_domain = 1.0;
  double lambda_grl = 1.0;
  double labeled_target_fraction = 0.5;  // config 4 only
  std::uint64_t seed = 0;
  std::size_t stride = 32;

  bool uses_source() const { return config_id != 1; }
  bool uses_target() const { return config_id != 2; }
  bool uses_domain_loss() const { return config_id == 3 || config_id == 4; }

  // Applies the cross-field invariants: configs 1-2 carry no domain loss,
  // config 3 labels no target data, configs 1-2 use every available label.
  TrainConfig normalized() const {
    TrainConfig c = *this;
    if (c.config_id == 1 || c.config_id == 2) c.lambda_domain = 0.0;
    if (c.config_id == 3) c.labeled_target_fraction = 0.0;
    if (c.config_id == 1 || c.config_id == 2) c.labeled_target_fraction = 1.0;
    return c;
  }

  void validate() const {
    if (config_id < 1 || config_id > 4)
      throw ContractError("train: config " + std::to_string(config_id) + " not in 1..4");
    if (!(lr > 0.0)) throw ContractError("train: lr must be positive");
    if (epochs == 0) throw ContractError("train: epochs must be >= 1");
    if (batch_size == 0) throw ContractError("train: batch_size must be >= 1");
    if (uses_domain_loss() && batch_size % 2 != 0)
      throw ContractError("train: configs 3-4 need an even batch_size for half/half mixing");
    if (lambda_domain < 0.0) throw ContractError("train: lambda_domain must be >= 0");
    if (labeled_target_fraction < 0.0 || labeled_target_fraction > 1.0)
      throw ContractError("train: labeled_target_fraction outside [0,1]");
    if (stride == 0) throw ContractError("train: stride must be positive");
  }
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double loss_q = 0.0;
  double loss_d = 0.0;
  double domain_acc = 0.0;
  double seconds = 0.0;
};

struct RunLog {
  std::vector<EpochLog> epochs;
};

inline void write_run_log(const std::string& path, const RunLog& log) {
  std::ofstream os(path);
  if (!os) throw IoError("run log: cannot open '" + path + "' for writing");
  os << "epoch,loss_q,loss_d,domain_acc,seconds\n";
  for (const auto& e : log.epochs) {
    std::ostringstream line;
    line << e.epoch << ',' << std::fixed << std::setprecision(6) << e.loss_q << ',' << e.loss_d
         << ',' << e.domain_acc << ',' << std::setprecision(3) << e.seconds;
    os << line.str() << '\n';
  }
  if (!os) throw IoError("run log: write to '" + path + "' failed");
}

// Line-oriented `key = value` config file mirroring TrainConfig. Blank lines
// and '#' comments are allowed; unknown keys are rejected.
inline TrainConfig apply_config_file(TrainConfig base, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("config: cannot open '" + path + "'");
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
  };
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ParseError("config '" + path + "' line " + std::to_string(lineno) +
                       ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    try {
      if (key == "config_id") base.config_id = std::stoi(value);
      else if (key == "lr") base.lr = std::stod(value);
      else if (key == "epochs") base.epochs = static_cast<std::size_t>(std::stoul(value));
      else if (key == "batch_size") base.batch_size = static_cast<std::size_t>(std::stoul(value));
      else if (key == "lambda_domain") base.lambda_domain = std::stod(value);
      else if (key == "lambda_grl") base.lambda_grl = std::stod(value);
      else if (key == "labeled_target_fraction") base.labeled_target_fraction = std::stod(value);
      else if (key == "seed") base.seed = std::stoull(value);
      else if (key == "stride") base.stride = static_cast<std::size_t>(std::stoul(value));
      else
        throw ParseError("config '" + path + "' line " + std::to_string(lineno) +
                         ": unknown key '" + key + "'");
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception&) {
      throw ParseError("config '" + path + "' line " + std::to_string(lineno) +
                       ": bad value '" + value + "' for key '" + key + "'");
    }
  }
  return base;
}

template <typename T>
struct TrainPatch {
  Tensor<T> patch;  // 3 x 32 x 32
  T mos = T(0);     // normalised target, valid when labeled
  bool labeled = false;
  Domain domain = Domain::source;
};

namespace detail {

// Loads the train-split rows of one domain and cuts them into patches. When
// read_labels is false the MOS column is never touched (config 3 purity).
// labeled_refs, when set, restricts labels to the listed reference ids.
template <typename T>
std::vector<TrainPatch<T>> domain_patches(const Manifest& manifest, Domain domain,
                                          std::size_t stride, bool read_labels,
                                          const std::vector<std::string>* labeled_refs) {
  Manifest m = manifest;
  if (read_labels) normalize_mos(m);
  std::vector<TrainPatch<T>> out;
  for (const auto& row : m.rows) {
    if (row.domain != domain || row.split != Split::train) continue;
    bool labeled = false;
    double mos = 0.0;
    if (read_labels && row.mos) {
      if (!labeled_refs || std::find(labeled_refs->begin(), labeled_refs->end(),
                                     reference_id(row.path)) != labeled_refs->end()) {
        labeled = true;
        mos = *m.normalized_mos(row);
      }
    }
    auto image = load_image(m.resolve(row));
    std::vector<T> converted(image.numel());
    for (std::size_t i = 0; i < image.numel(); ++i)
      converted[i] = static_cast<T>(image.values()[i]);
    auto typed = Tensor<T>::from(std::move(converted), image.shape());
    for (auto& ep : extract_patches(typed, kPatchSize, stride))
      out.push_back({ep.patch, static_cast<T>(mos), labeled, domain});
  }
  return out;
}

inline std::vector<std::string> select_labeled_refs(const Manifest& manifest, Domain domain,
                                                    double fraction, std::uint64_t seed) {
  std::vector<std::string> refs;
  for (const auto& row : manifest.rows) {
    if (row.domain != domain || row.split != Split::train) continue;
    const std::string id = reference_id(row.path);
    if (std::find(refs.begin(), refs.end(), id) == refs.end()) refs.push_back(id);
  }
  Rng rng = Rng(seed).fork("labeled-target");
  rng.shuffle(refs);
  const std::size_t keep =
      static_cast<std::size_t>(static_cast<double>(refs.size()) * fraction);
  refs.resize(keep);
  return refs;
}

}  // namespace detail

struct BatchItem {
  bool from_source = false;
  std::size_t index = 0;
};
using Batch = std::vector<BatchItem>;

// Deterministic epoch batch plan. Configs 1-2 chunk a single shuffled
// stream; configs 3-4 draw half the batch from each stream, cycling the
// shorter one through its shuffled order.
inline std::vector<Batch> compose_batches(std::size_t n_source, std::size_t n_target,
                                          const TrainConfig& config, Rng rng) {
  const TrainConfig cfg = config.normalized();
  std::vector<Batch> batches;
  if (!cfg.uses_domain_loss()) {
    const bool from_source = cfg.config_id == 2;
    const std::size_t n = from_source ? n_source : n_target;
    if (n == 0)
      throw ContractError("compose_batches: required patch stream is empty");
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    rng.fork(from_source ? "source" : "target").shuffle(perm);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      Batch b;
      for (std::size_t i = start; i < std::min(n, start + cfg.batch_size); ++i)
        b.push_back({from_source, perm[i]});
      batches.push_back(std::move(b));
    }
    return batches;
  }
  if (n_source == 0 || n_target == 0)
    throw ContractError("compose_batches: configs 3-4 need both patch streams non-empty");
  const std::size_t half = cfg.batch_size / 2;
  std::vector<std::size_t> perm_s(n_source), perm_t(n_target);
  for (std::size_t i = 0; i < n_source; ++i) perm_s[i] = i;
  for (std::size_t i = 0; i < n_target; ++i) perm_t[i] = i;
  rng.fork("source").shuffle(perm_s);
  rng.fork("target").shuffle(perm_t);
  const std::size_t longest = std::max(n_source, n_target);
  const std::size_t steps = (longest + half - 1) / half;
  for (std::size_t k = 0; k < steps; ++k) {
    Batch b;
    for (std::size_t j = 0; j < half; ++j)
      b.push_back({true, perm_s[(k * half + j) % n_source]});
    for (std::size_t j = 0; j < half; ++j)
      b.push_back({false, perm_t[(k * half + j) % n_target]});
    batches.push_back(std::move(b));
  }
  return batches;
}

template <typename T>
struct BatchOutcome {
  Tensor<T> loss;  // undefined when the batch contributed no terms
  double loss_q_sum = 0.0;
  std::size_t q_count = 0;
  double loss_d_sum = 0.0;
  std::size_t d_count = 0;
  std::size_t d_correct = 0;

  bool has_loss() const { return loss.defined(); }
};

namespace detail {

template <typename T>
Tensor<T> mean_scalars(const std::vector<Tensor<T>>& terms) {
  Tensor<T> acc = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
  return scale(acc, T(1) / static_cast<T>(terms.size()));
}

}  // namespace detail

// Forward pass and loss assembly for one batch. Shared between the training
// loop and the gradient-decomposition checks in the test suites.
template <typename T>
BatchOutcome<T> batch_losses(SaqmParams<T>& model, const std::vector<const TrainPatch<T>*>& batch,
                             double lambda_domain, double lambda_grl, bool use_domain_loss) {
  BatchOutcome<T> out;
  std::vector<Tensor<T>> q_terms, d_terms;
  for (const TrainPatch<T>* item : batch) {
    auto trace = forward_features(model, item->patch);
    if (item->labeled) {
      // Loss from the pre-sigmoid logit so saturated scores keep a gradient.
      auto term = bce_with_logits(regressor_logit(model, trace.pooled), item->mos);
      out.loss_q_sum += static_cast<double>(term.item());
      ++out.q_count;
      q_terms.push_back(std::move(term));
    }
    if (use_domain_loss) {
      const T label = item->domain == Domain::target ? T(1) : T(0);
      auto pre = domain_pre_logit(model, trace.pooled, static_cast<T>(lambda_grl));
      auto term = bce_with_logits(pre, label);
      out.loss_d_sum += static_cast<double>(term.item());
      ++out.d_count;
      if ((pre.item() > T(0)) == (label > T(0.5))) ++out.d_correct;
      d_terms.push_back(std::move(term));
    }
  }
  Tensor<T> loss;
  if (!q_terms.empty()) loss = detail::mean_scalars(q_terms);
  if (!d_terms.empty()) {
    auto d = scale(detail::mean_scalars(d_terms), static_cast<T>(lambda_domain));
    loss = loss.defined() ? add(loss, d) : d;
  }
  out.loss = loss;
  return out;
}

// Trains the model in place and returns the per-epoch log. Deterministic
// given (config, manifests, model): batch order, weight updates and logged
// losses depend only on the seed.
template <typename T>
RunLog train(const TrainConfig& config, const std::optional<Manifest>& source,
             const std::optional<Manifest>& target, SaqmParams<T>& model,
             std::ostream* progress = nullptr) {
  config.validate();
  const TrainConfig cfg = config.normalized();

  if (cfg.uses_source() && !source)
    throw ContractError("train: config " + std::to_string(cfg.config_id) +
                        " requires a source manifest");
  if (cfg.uses_target() && !target)
    throw ContractError("train: config " + std::to_string(cfg.config_id) +
                        " requires a target manifest");
  if (!cfg.uses_source() && source)
    throw ContractError("train: config 1 takes no source manifest");
  if (!cfg.uses_target() && target)
    throw ContractError("train: config 2 takes no target manifest");

  std::vector<TrainPatch<T>> src_patches, tgt_patches;
  if (cfg.uses_source())
    src_patches = detail::domain_patches<T>(*source, Domain::source, cfg.stride,
                                            /*read_labels=*/true, nullptr);
  if (cfg.uses_target()) {
    const bool read_labels = cfg.config_id != 3;
    std::vector<std::string> labeled_refs;
    const std::vector<std::string>* refs_filter = nullptr;
    if (cfg.config_id == 4) {
      labeled_refs = detail::select_labeled_refs(*target, Domain::target,
                                                 cfg.labeled_target_fraction, cfg.seed);
      refs_filter = &labeled_refs;
    }
    tgt_patches = detail::domain_patches<T>(*target, Domain::target, cfg.stride, read_labels,
                                            refs_filter);
  }
  if (cfg.uses_source() && src_patches.empty())
    throw ContractError("train: source manifest has no train-split source rows");
  if (cfg.uses_target() && tgt_patches.empty())
    throw ContractError("train: target manifest has no train-split target rows");

  auto params = model.parameters();
  AdamState<T> state(params);
  Rng shuffle_root = Rng(cfg.seed).fork("shuffle");
  RunLog log;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto plan =
        compose_batches(src_patches.size(), tgt_patches.size(), cfg, shuffle_root.fork(epoch));
    EpochLog e;
    e.epoch = epoch + 1;
    double q_sum = 0.0, d_sum = 0.0;
    std::size_t q_count = 0, d_count = 0, d_correct = 0;
    for (const auto& batch : plan) {
      std::vector<const TrainPatch<T>*> items;
      items.reserve(batch.size());
      for (const auto& ref : batch)
        items.push_back(ref.from_source ? &src_patches[ref.index] : &tgt_patches[ref.index]);
      auto outcome = batch_losses(model, items, cfg.lambda_domain, cfg.lambda_grl,
                                  cfg.uses_domain_loss());
      q_sum += outcome.loss_q_sum;
      q_count += outcome.q_count;
      d_sum += outcome.loss_d_sum;
      d_count += outcome.d_count;
      d_correct += outcome.d_correct;
      if (outcome.has_loss()) {
        zero_grads(params);
        outcome.loss.backward();
        adam_step(params, state, static_cast<T>(cfg.lr));
      }
    }
    e.loss_q = q_count ? q_sum / static_cast<double>(q_count) : 0.0;
    e.loss_d = d_count ? d_sum / static_cast<double>(d_count) : 0.0;
    e.domain_acc = d_count ? static_cast<double>(d_correct) / static_cast<double>(d_count) : 0.0;
    e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log.epochs.push_back(e);
    if (progress) {
      std::ostringstream line;
      line << "epoch " << e.epoch << "/" << cfg.epochs << " loss_q=" << std::fixed
           << std::setprecision(4) << e.loss_q;
      if (cfg.uses_domain_loss())
        line << " loss_d=" << e.loss_d << " domain_acc=" << std::setprecision(3)
             << e.domain_acc;
      *progress << line.str() << '\n';
    }
  }
  return log;
}

}  // namespace saqm
