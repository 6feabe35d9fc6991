// SPDX-License-Identifier: Apache-2.0
//
// Vanilla MAML: per-task inner adaptation
//
//   theta_i' = theta - alpha * grad L_train(theta)      (applied k times)
//
// and the outer meta-update
//
//   theta <- theta - beta * sum_i grad L_valid(theta_i')
//
// First-order by default (outer gradients taken at theta_i'); the
// second-order mode differentiates through the inner steps using
// central-difference Hessian-vector products, which is exact on quadratics.
// Both loops are plain SGD and fully deterministic given the seed.
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "metaforge/corpus.hpp"
#include "metaforge/params.hpp"
#include "metaforge/rng.hpp"

namespace metaforge::meta {

struct TrainConfig {
  double alpha = 0.01;  // inner step size
  double beta = 0.1;    // outer step size
  int inner_steps = 1;
  int task_batch = 4;
  int epochs = 1;
  bool second_order = false;
  std::uint64_t seed = 0;

  void validate() const;
};

// Builds the scalar training loss for a chunk of data on the given tape.
// The model modules bind this to batch_nll; tests may bind toy objectives.
using LossFn = std::function<ad::TensorPtr(
    ad::Tape&, const ParamStore&, std::span<const corpus::DialoguePair>)>;

// theta' = theta - alpha * grad, `steps` times on full-batch gradients.
// The input store is never mutated.
ParamStore inner_adapt(const ParamStore& theta,
                       std::span<const corpus::DialoguePair> data,
                       double alpha, int steps, const LossFn& loss);

// One meta-update over the batch; task gradients are accumulated in batch
// order.
ParamStore outer_update(const ParamStore& theta,
                        const std::vector<const corpus::Task*>& batch,
                        const TrainConfig& cfg, const LossFn& loss);

// Epochs of shuffled task batches. Deterministic given cfg.seed.
ParamStore maml_pretrain(const ParamStore& theta_init,
                         std::span<const corpus::Task> tasks,
                         const TrainConfig& cfg, const LossFn& loss);

// Baseline: plain mini-batch SGD over a pool of pairs (used by the
// pretrain-only / finetune methods and for task-level fine-tuning).
ParamStore sgd_finetune(const ParamStore& theta,
                        std::span<const corpus::DialoguePair> data, double lr,
                        int steps, std::size_t batch_size, const LossFn& loss);

// Non-meta baseline pre-training: epochs of seeded, shuffled mini-batches
// over the union of all tasks' train pairs.
ParamStore joint_pretrain(const ParamStore& theta,
                          std::span<const corpus::Task> tasks, double lr,
                          int epochs, std::size_t batch_size,
                          std::uint64_t seed, const LossFn& loss);

// Epoch-shuffled task batches; shared between maml_pretrain and
// customized_train so both consume the identical schedule.
std::vector<std::vector<std::size_t>> epoch_batches(Rng& rng,
                                                    std::size_t n_tasks,
                                                    std::size_t task_batch);

// Mean loss over every task's valid split (monitoring).
double mean_valid_loss(const ParamStore& theta,
                       std::span<const corpus::Task> tasks,
                       const LossFn& loss);

}  // namespace metaforge::meta
