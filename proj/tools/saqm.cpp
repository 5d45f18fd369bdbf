// Copyright (c) 2026 The SAQM Authors
// SPDX-License-Identifier: Apache-2.0
//
// saqm command-line tool: synthetic dataset generation, training, scoring
// and evaluation. Parseable results go to stdout, progress to stderr.
// Exit codes: 0 success, 1 runtime failure, 2 usage or contract error.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "saqm/checkpoint.hpp"
#include "saqm/dataset.hpp"
#include "saqm/error.hpp"
#include "saqm/eval.hpp"
#include "saqm/image.hpp"
#include "saqm/model.hpp"
#include "saqm/synth.hpp"
#include "saqm/train.hpp"

namespace {

// Lowest-precedence seed source; flags and config files override it.
std::uint64_t env_seed() {
  const char* env = std::getenv("SAQM_SEED");
  if (!env || !*env) return 0;
  try {
    std::size_t consumed = 0;
    const auto v = std::stoull(env, &consumed);
    if (consumed != std::string(env).size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw saqm::ContractError(std::string("SAQM_SEED is not an unsigned integer: '") + env +
                              "'");
  }
}

int run_synth(const std::string& out_dir, std::size_t references, std::size_t levels,
              std::size_t size, std::uint64_t seed, const std::string& domain) {
  saqm::SynthSpec spec;
  spec.n_references = references;
  spec.levels = levels;
  spec.size = size;
  spec.seed = seed;
  spec.make_source = domain == "source" || domain == "both";
  spec.make_target = domain == "target" || domain == "both";
  std::cerr << "synth: seed " << seed << ", writing " << out_dir << "\n";
  auto manifest = saqm::synth_dataset(spec, out_dir);
  std::cout << out_dir << "\t" << manifest.rows.size() << " images\n";
  return 0;
}

struct TrainFlags {
  int config_id = 0;
  std::string source, target, out, config_file, log;
  double lr = 0, lambda_domain = 0, lambda_grl = 0, labeled_fraction = 0;
  std::size_t epochs = 0, batch = 0, stride = 0, channels = 512;
  std::uint64_t seed = 0;
};

int run_train(const CLI::App* cmd, const TrainFlags& flags) {
  saqm::TrainConfig cfg;
  cfg.seed = env_seed();
  if (cmd->count("--config-file")) cfg = saqm::apply_config_file(cfg, flags.config_file);
  // Explicit flags take precedence over the config file.
  if (cmd->count("--config")) cfg.config_id = flags.config_id;
  if (cmd->count("--lr")) cfg.lr = flags.lr;
  if (cmd->count("--epochs")) cfg.epochs = flags.epochs;
  if (cmd->count("--batch")) cfg.batch_size = flags.batch;
  if (cmd->count("--lambda")) cfg.lambda_domain = flags.lambda_domain;
  if (cmd->count("--lambda-grl")) cfg.lambda_grl = flags.lambda_grl;
  if (cmd->count("--labeled-fraction")) cfg.labeled_target_fraction = flags.labeled_fraction;
  if (cmd->count("--seed")) cfg.seed = flags.seed;
  if (cmd->count("--stride")) cfg.stride = flags.stride;
  cfg.validate();

  std::optional<saqm::Manifest> source, target;
  if (cmd->count("--source")) source = saqm::read_manifest(flags.source);
  if (cmd->count("--target")) target = saqm::read_manifest(flags.target);

  std::cerr << "train: config " << cfg.config_id << ", seed " << cfg.seed << ", lr " << cfg.lr
            << ", epochs " << cfg.epochs << ", channels " << flags.channels << "\n";
  auto model = saqm::build_model<float>(cfg.seed, flags.channels);
  auto log = saqm::train(cfg, source, target, model, &std::cerr);

  saqm::save_checkpoint(model, flags.out);
  const std::string log_path = flags.log.empty() ? flags.out + ".log.csv" : flags.log;
  saqm::write_run_log(log_path, log);
  std::cout << flags.out << "\t" << log.epochs.size() << " epochs\n";
  return 0;
}

int run_score(const std::string& ckpt, const std::string& image_path, std::size_t stride) {
  auto model = saqm::load_checkpoint(ckpt);
  auto image = saqm::load_image(image_path);
  const double score = saqm::image_score(model, image, saqm::kPatchSize, stride);
  std::printf("%s\t%.6f\n", image_path.c_str(), score);
  return 0;
}

int run_eval(const std::string& ckpt, const std::string& manifest_path,
             const std::string& split, const std::string& out_prefix) {
  auto model = saqm::load_checkpoint(ckpt);
  auto manifest = saqm::read_manifest(manifest_path);
  const std::string dataset = std::filesystem::path(manifest_path).stem().string();
  auto report = saqm::evaluate(model, manifest, dataset, split == "full",
                               saqm::kPatchSize, "-", ckpt);
  const auto table = saqm::render_report({report});
  std::cout << table;
  if (!out_prefix.empty()) {
    std::ofstream os(out_prefix + ".txt");
    if (!os) throw saqm::IoError("eval: cannot open '" + out_prefix + ".txt' for writing");
    os << table;
    saqm::write_report_csv(out_prefix + ".csv", {report});
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sliding-window self-attention image quality metric"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "Generate a synthetic two-domain dataset");
  std::string synth_out, synth_domain = "both";
  std::size_t synth_refs = 12, synth_levels = 5, synth_size = 64;
  std::uint64_t synth_seed = 0;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--references", synth_refs, "Pristine references per domain");
  synth->add_option("--levels", synth_levels, "Distortion levels per reference");
  synth->add_option("--size", synth_size, "Image size (multiple of 32)");
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_option("--domain", synth_domain, "Domains to generate")
      ->check(CLI::IsMember({"source", "target", "both"}));

  auto* train = app.add_subcommand("train", "Train a model (configurations 1-4)");
  TrainFlags tf;
  train->add_option("--config", tf.config_id, "Configuration id (1-4)");
  train->add_option("--source", tf.source, "Source-domain manifest CSV");
  train->add_option("--target", tf.target, "Target-domain manifest CSV");
  train->add_option("--out", tf.out, "Checkpoint output path")->required();
  train->add_option("--lr", tf.lr, "Learning rate");
  train->add_option("--epochs", tf.epochs, "Training epochs");
  train->add_option("--batch", tf.batch, "Batch size");
  train->add_option("--lambda", tf.lambda_domain, "Domain loss weight");
  train->add_option("--lambda-grl", tf.lambda_grl, "Gradient reversal strength");
  train->add_option("--labeled-fraction", tf.labeled_fraction,
                    "Labeled target reference fraction (config 4)");
  train->add_option("--seed", tf.seed, "Training seed");
  train->add_option("--stride", tf.stride, "Patch stride");
  train->add_option("--channels", tf.channels, "Model width C (divisible by 8)");
  train->add_option("--config-file", tf.config_file, "key = value config file");
  train->add_option("--log", tf.log, "Run log CSV path (default: <out>.log.csv)");

  auto* score = app.add_subcommand("score", "Score one image with a checkpoint");
  std::string score_ckpt, score_image;
  std::size_t score_stride = 32;
  score->add_option("--ckpt", score_ckpt, "Checkpoint path")->required();
  score->add_option("--image", score_image, "Image path (P5/P6)")->required();
  score->add_option("--stride", score_stride, "Patch stride");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint against a manifest");
  std::string eval_ckpt, eval_manifest, eval_split = "test", eval_out;
  eval->add_option("--ckpt", eval_ckpt, "Checkpoint path")->required();
  eval->add_option("--manifest", eval_manifest, "Manifest CSV")->required();
  eval->add_option("--split", eval_split, "Rows to evaluate")
      ->check(CLI::IsMember({"test", "full"}));
  eval->add_option("--out", eval_out, "Report prefix (writes PREFIX.txt and PREFIX.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand(synth)) {
      const std::uint64_t seed = synth->count("--seed") ? synth_seed : env_seed();
      return run_synth(synth_out, synth_refs, synth_levels, synth_size, seed, synth_domain);
    }
    if (app.got_subcommand(train)) return run_train(train, tf);
    if (app.got_subcommand(score)) return run_score(score_ckpt, score_image, score_stride);
    if (app.got_subcommand(eval)) return run_eval(eval_ckpt, eval_manifest, eval_split, eval_out);
  } catch (const saqm::ContractError& e) {
    std::cerr << "saqm: " << e.what() << "\n";
    return 2;
  } catch (const saqm::ParseError& e) {
    std::cerr << "saqm: " << e.what() << "\n";
    return 2;
  } catch (const saqm::IoError& e) {
    std::cerr << "saqm: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "saqm: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
