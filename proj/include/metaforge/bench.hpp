// SPDX-License-Identifier: Apache-2.0
//
// End-to-end experiment driver: runs one of the competing methods
// (pretrain-only, finetune, MAML, CMAML, CMAML with the Seq2SP'G ablation)
// over a task set and reports metrics, including the pairwise Diff Score of
// the per-task models and the Delta Score across task-level adaptation.
#pragma once

#include <span>
#include <string>
#include <vector>

#include "metaforge/corpus.hpp"
#include "metaforge/eval.hpp"
#include "metaforge/jointmeta.hpp"
#include "metaforge/meta.hpp"
#include "metaforge/model.hpp"
#include "metaforge/pruning.hpp"

namespace metaforge::bench {

enum class Method {
  kPretrainOnly,
  kFinetune,
  kMaml,
  kCmaml,
  kCmamlSpg,  // CMAML over Seq2SP'G (private module sees h_{t-1} only)
};

Method method_from_string(const std::string& name);
std::string method_name(Method method);

struct BenchConfig {
  model::ModelConfig model;
  meta::TrainConfig train;
  prune::PruneConfig prune;
  // Task-level adaptation at evaluation time (distinct from the pruning
  // re-train stage, whose step count stays at the PruneConfig value).
  int adapt_steps = 30;
  double adapt_lr = 0.15;
  std::size_t decode_max_len = 12;
  bool disable_pruning = false;  // cmaml with all-ones masks (reduction runs)
};

struct MethodArtifacts {
  eval::MetricsReport report;
  std::vector<ParamStore> before;  // per-task models before adaptation
  std::vector<ParamStore> after;   // per-task models after adaptation
  std::vector<EdgeMask> masks;     // cmaml methods only
  std::vector<joint::TrainLogEntry> log;
};

MethodArtifacts run_method(Method method, std::span<const corpus::Task> tasks,
                           const BenchConfig& cfg);

// Metrics of the per-task models on their valid splits plus Diff/Delta.
eval::MetricsReport evaluate_models(const std::string& method_label,
                                    std::span<const corpus::Task> tasks,
                                    std::span<const ParamStore> before,
                                    std::span<const ParamStore> after,
                                    const std::vector<EdgeMask>& masks,
                                    const model::ModelConfig& mcfg,
                                    std::size_t decode_max_len);

// Impact-factor grid: {overlap 0, 1} x {pairs_low, pairs_high}, every method
// on freshly generated corpora. Returns a deterministic flat table.
struct ImpactCell {
  double overlap = 0.0;
  std::size_t pairs_per_task = 0;
  eval::MetricsReport report;
};

std::vector<ImpactCell> run_impact_grid(const BenchConfig& cfg,
                                        const corpus::GenConfig& gen,
                                        std::span<const Method> methods,
                                        std::size_t pairs_low,
                                        std::size_t pairs_high);

void save_impact_table(std::span<const ImpactCell> table,
                       const std::filesystem::path& json_path,
                       const std::filesystem::path& csv_path);

}  // namespace metaforge::bench
