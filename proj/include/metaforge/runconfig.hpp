// SPDX-License-Identifier: Apache-2.0
//
// Declarative run configuration: a flat key=value text file ('#' comments).
// The METAFORGE_SEED environment variable overrides the configured seed.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "metaforge/bench.hpp"
#include "metaforge/corpus.hpp"

namespace metaforge {

struct RunConfig {
  // model
  std::size_t vocab_size = 64;
  std::size_t embed_dim = 16;
  std::size_t hidden_dim = 16;
  std::size_t mlp_dim = 16;
  bool attention = false;

  // training
  double alpha = 0.01;
  double beta = 0.1;
  int inner_steps = 1;
  int task_batch = 4;
  int epochs = 10;
  bool second_order = false;

  // pruning
  double gamma = 0.05;
  double l1_weight = 0.001;
  int finetune_steps = 5;
  double finetune_lr = 0.1;
  std::size_t batch_size = 32;

  // synthetic data
  std::size_t gen_tasks = 10;
  std::size_t gen_pairs = 110;
  double gen_overlap = 0.2;
  std::size_t signature_size = 6;

  // run
  std::string method = "cmaml";
  std::uint64_t seed = 0;
  std::size_t decode_max_len = 12;
  std::string corpus_path;
  std::string out_dir = "out";

  static RunConfig from_file(const std::filesystem::path& path);
  // METAFORGE_SEED, when set, wins over file and flag values.
  void apply_env();

  bench::BenchConfig bench_config() const;
  corpus::GenConfig gen_config() const;
  model::ModelConfig model_config() const;
};

}  // namespace metaforge
