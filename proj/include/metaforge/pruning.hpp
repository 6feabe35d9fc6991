// SPDX-License-Identifier: Apache-2.0
//
// Private network pruning: L1-regularized per-task fine-tuning followed by
// top-down threshold pruning of the private MLP. The layers touching the
// MLP input and output are always kept; middle layers are processed from
// the one closest to the output downwards, keeping edges with |w| > gamma
// whose destination node still has a kept edge in the layer above.
#pragma once

#include <span>
#include <string>
#include <vector>

#include "metaforge/corpus.hpp"
#include "metaforge/mask.hpp"
#include "metaforge/meta.hpp"
#include "metaforge/model.hpp"
#include "metaforge/params.hpp"

namespace metaforge::prune {

struct PruneConfig {
  double gamma = 0.05;      // pruning threshold
  double l1_weight = 0.001; // lambda
  int finetune_steps = 5;
  double finetune_lr = 0.1;
  std::size_t batch_size = 32;

  void validate() const;
};

// Mini-batch SGD on L_task + lambda * ||theta_p||_1 over the whole model.
// The L1 subgradient is sign(w) (0 at w = 0) and applies to every private
// tensor. Returns a copy; theta is untouched.
ParamStore l1_finetune(const ParamStore& theta, const corpus::Task& task,
                       const PruneConfig& cfg, const model::ModelConfig& mcfg);

// Algorithm: keep layers 1 and L unconditionally, then for k = L-1 down
// to 2 keep edges with |w| > gamma whose destination node is still alive
// (has a kept edge in layer k+1).
EdgeMask prune_private(const ParamStore& theta_task, double gamma,
                       const model::ModelConfig& mcfg,
                       const std::string& task_id);

struct MaskStats {
  std::vector<std::string> task_ids;
  std::vector<double> sparsity;            // pruned fraction of middle edges
  std::vector<std::vector<double>> overlap; // pairwise Jaccard, middle layers
  double mean_overlap = 0.0;
  // histogram[k] = number of middle edges kept by exactly k tasks
  std::vector<std::size_t> edge_task_histogram;
};

MaskStats mask_stats(std::span<const EdgeMask> masks);

}  // namespace metaforge::prune
