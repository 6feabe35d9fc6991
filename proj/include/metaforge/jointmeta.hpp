// SPDX-License-Identifier: Apache-2.0
//
// Joint meta-learning over pruned private structures. Within a batch, one
// shared adapted private vector is computed per inner step: each private
// edge moves by the summed gradients of every batch task whose mask keeps
// it (masked forward passes make the other tasks' gradients exactly zero).
// Task i's adapted view is that shared vector re-masked by mask_i. The
// shared and gating modules adapt per task, exactly as in vanilla MAML.
//
// Edges pruned by every task are frozen at zero: masked forwards give them
// zero gradient, so zero is the only self-consistent stored value.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "metaforge/corpus.hpp"
#include "metaforge/mask.hpp"
#include "metaforge/meta.hpp"
#include "metaforge/model.hpp"
#include "metaforge/params.hpp"
#include "metaforge/pruning.hpp"

namespace metaforge::joint {

// Inverted index: for each private middle-layer edge, the ascending list of
// task indices whose mask keeps it. Edges of the first and last layers are
// implicitly active in every task.
struct EdgeTaskIndex {
  std::size_t num_tasks = 0;
  // middle[l][flat edge] with l = 0 for private layer 2, etc.
  std::vector<std::vector<std::vector<std::uint32_t>>> middle;

  // Tasks keeping the edge; layer is 0-based over all private layers.
  std::vector<std::uint32_t> tasks_for(std::size_t layer, std::size_t r,
                                       std::size_t c,
                                       std::size_t cols) const;
};

EdgeTaskIndex build_edge_task_index(std::span<const EdgeMask> masks);

struct JointAdapted {
  // theta'^p: the batch-shared adapted private tensors (unmasked values).
  ParamStore shared_private;
  // Full per-task stores: theta'^s_i + theta'^p * mask_i + theta'^g_i.
  std::vector<ParamStore> per_task;
};

JointAdapted joint_inner_adapt(const ParamStore& theta,
                               const std::vector<const corpus::Task*>& batch,
                               const std::vector<const EdgeMask*>& masks,
                               double alpha, int inner_steps,
                               const model::ModelConfig& mcfg);

ParamStore joint_outer_update(const ParamStore& theta,
                              const std::vector<const corpus::Task*>& batch,
                              const std::vector<const EdgeMask*>& masks,
                              const JointAdapted& adapted, double beta,
                              const model::ModelConfig& mcfg);

struct TrainLogEntry {
  int step = 0;
  double mean_train_loss = 0.0;
  double mean_valid_loss = 0.0;
};

struct CustomizedResult {
  ParamStore theta;
  std::vector<TrainLogEntry> log;
};

// Algorithm: re-train from the MAML initialization with per-task masks,
// epochs of shuffled task batches (same schedule generator as
// maml_pretrain). masks[i] belongs to tasks[i].
CustomizedResult customized_train(const ParamStore& theta0,
                                  std::span<const corpus::Task> tasks,
                                  std::span<const EdgeMask> masks,
                                  const meta::TrainConfig& cfg,
                                  const model::ModelConfig& mcfg);

// Mini-batch fine-tuning of all modules with the mask applied to the
// private forward pass. Returns an unmasked store.
ParamStore masked_finetune(const ParamStore& theta, const corpus::Task& task,
                           const EdgeMask& mask, int steps, double lr,
                           std::size_t batch_size,
                           const model::ModelConfig& mcfg);

// Test-time adaptation of an unseen task: L1 fine-tune, prune, then
// fine-tune all modules with the new mask applied.
std::pair<ParamStore, EdgeMask> adapt_new_task(const ParamStore& theta,
                                               const corpus::Task& task,
                                               const prune::PruneConfig& pcfg,
                                               const model::ModelConfig& mcfg);

// Materialized per-task model: private weights masked, everything else
// shared.
ParamStore model_for_task(const ParamStore& theta, const EdgeMask& mask);

void save_training_log(std::span<const TrainLogEntry> log,
                       const std::filesystem::path& path);

}  // namespace metaforge::joint
