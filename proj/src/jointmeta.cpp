// SPDX-License-Identifier: Apache-2.0

#include "metaforge/jointmeta.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "metaforge/rng.hpp"

namespace metaforge::joint {

namespace {

const std::vector<std::string>& private_names() {
  static const std::vector<std::string> names = model::private_weight_names();
  return names;
}

void check_masks(const std::vector<const corpus::Task*>& batch,
                 const std::vector<const EdgeMask*>& masks) {
  if (batch.size() != masks.size()) {
    throw ContractError("joint: batch and mask lists differ in length");
  }
  for (std::size_t i = 0; i < masks.size(); ++i) {
    if (masks[i] == nullptr) {
      throw ContractError("joint: task " + batch[i]->id + " has no mask");
    }
    if (!masks.empty() && !masks[i]->same_geometry(*masks[0])) {
      throw ContractError("joint: mask geometry mismatch for " +
                          batch[i]->id);
    }
  }
}

// grads of `loss` at `store` (masked forward) into store's grad buffers.
void masked_grad(ParamStore& store, std::span<const corpus::DialoguePair> data,
                 const EdgeMask& mask, const model::ModelConfig& mcfg) {
  ad::Tape tape;
  store.zero_grad();
  auto loss = model::batch_nll(tape, store, mcfg, data, &mask);
  if (!std::isfinite(loss->item())) {
    throw NumericError("joint: non-finite loss");
  }
  tape.backward(loss);
}

void apply_mask_values(ParamStore& store, const EdgeMask& mask) {
  const auto& names = private_names();
  for (std::size_t l = 0; l < names.size(); ++l) {
    auto& t = store.at(names[l]);
    for (std::size_t k = 0; k < t->size(); ++k) {
      t->values[k] *= mask.layers[l].keep[k];
    }
  }
}

}  // namespace

std::vector<std::uint32_t> EdgeTaskIndex::tasks_for(std::size_t layer,
                                                    std::size_t r,
                                                    std::size_t c,
                                                    std::size_t cols) const {
  if (layer == 0 || layer + 1 >= middle.size() + 2) {
    std::vector<std::uint32_t> all(num_tasks);
    for (std::size_t i = 0; i < num_tasks; ++i) {
      all[i] = static_cast<std::uint32_t>(i);
    }
    return all;
  }
  return middle[layer - 1][r * cols + c];
}

EdgeTaskIndex build_edge_task_index(std::span<const EdgeMask> masks) {
  if (masks.empty()) throw ContractError("edge index: no masks");
  for (const auto& m : masks) {
    if (!m.same_geometry(masks[0])) {
      throw ContractError("edge index: geometry mismatch at " + m.task_id);
    }
  }
  EdgeTaskIndex index;
  index.num_tasks = masks.size();
  const std::size_t L = masks[0].layers.size();
  for (std::size_t l = 1; l + 1 < L; ++l) {
    std::vector<std::vector<std::uint32_t>> edges(
        masks[0].layers[l].keep.size());
    for (std::size_t t = 0; t < masks.size(); ++t) {
      const auto& keep = masks[t].layers[l].keep;
      for (std::size_t k = 0; k < keep.size(); ++k) {
        if (keep[k] != 0.0) edges[k].push_back(static_cast<std::uint32_t>(t));
      }
    }
    index.middle.push_back(std::move(edges));
  }
  return index;
}

JointAdapted joint_inner_adapt(const ParamStore& theta,
                               const std::vector<const corpus::Task*>& batch,
                               const std::vector<const EdgeMask*>& masks,
                               double alpha, int inner_steps,
                               const model::ModelConfig& mcfg) {
  if (batch.empty()) throw ContractError("joint_inner_adapt: empty batch");
  check_masks(batch, masks);

  // Per-task adapted copies carry theta'^s_i / theta'^g_i; the private
  // tensors of `shared_private` carry theta'^p. Private biases are never
  // pruned, so they belong to every task and pool across the batch exactly
  // like the always-kept outer-layer edges.
  JointAdapted out;
  out.shared_private = theta.clone();
  for (std::size_t i = 0; i < batch.size(); ++i) {
    out.per_task.push_back(theta.clone());
  }

  std::vector<std::string> private_all;
  for (const auto& [name, t] : theta) {
    if (name.rfind("private.", 0) == 0) private_all.push_back(name);
  }

  for (int step = 0; step < inner_steps; ++step) {
    // Accumulated private gradients across the batch (Eq. 4 sum).
    std::vector<std::vector<double>> private_acc;
    for (const auto& name : private_all) {
      private_acc.emplace_back(theta.at(name)->size(), 0.0);
    }

    for (std::size_t i = 0; i < batch.size(); ++i) {
      ParamStore& task_store = out.per_task[i];
      // The task's working view: its own shared/gating tensors, the shared
      // private vector masked by its own mask.
      for (const auto& name : private_all) {
        task_store.at(name)->values = out.shared_private.at(name)->values;
      }
      apply_mask_values(task_store, *masks[i]);
      masked_grad(task_store, batch[i]->train, *masks[i], mcfg);

      // Shared/gating: per-task step (Eq. 2).
      for (auto& [name, t] : task_store.items()) {
        if (name.rfind("private.", 0) == 0) continue;
        for (std::size_t k = 0; k < t->size(); ++k) {
          t->values[k] -= alpha * t->grad[k];
        }
      }
      // Private: gradients pool across the batch. Masked forwards zero the
      // pruned entries exactly, so plain accumulation realizes the edge-set
      // sums.
      for (std::size_t l = 0; l < private_all.size(); ++l) {
        const auto& g = task_store.at(private_all[l])->grad;
        auto& acc = private_acc[l];
        for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += g[k];
      }
    }

    for (std::size_t l = 0; l < private_all.size(); ++l) {
      auto& t = out.shared_private.at(private_all[l]);
      for (std::size_t k = 0; k < t->size(); ++k) {
        t->values[k] -= alpha * private_acc[l][k];
      }
    }
  }

  // Final materialized per-task stores: re-masked adapted private view.
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (const auto& name : private_all) {
      out.per_task[i].at(name)->values = out.shared_private.at(name)->values;
    }
    apply_mask_values(out.per_task[i], *masks[i]);
  }
  return out;
}

ParamStore joint_outer_update(const ParamStore& theta,
                              const std::vector<const corpus::Task*>& batch,
                              const std::vector<const EdgeMask*>& masks,
                              const JointAdapted& adapted, double beta,
                              const model::ModelConfig& mcfg) {
  if (adapted.per_task.size() != batch.size()) {
    throw ContractError("joint_outer_update: adapted batch size mismatch");
  }
  check_masks(batch, masks);

  std::vector<std::vector<double>> acc;
  for (const auto& [name, t] : theta) acc.emplace_back(t->size(), 0.0);

  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i]->valid.empty()) {
      throw ContractError("joint_outer_update: task " + batch[i]->id +
                          " has no valid pairs");
    }
    ParamStore task_store = adapted.per_task[i].clone();
    masked_grad(task_store, batch[i]->valid, *masks[i], mcfg);
    std::size_t j = 0;
    for (const auto& [name, t] : task_store) {
      auto& a = acc[j++];
      for (std::size_t k = 0; k < t->size(); ++k) a[k] += t->grad[k];
    }
  }

  ParamStore next = theta.clone();
  std::size_t j = 0;
  for (auto& [name, t] : next.items()) {
    const auto& a = acc[j++];
    for (std::size_t k = 0; k < t->size(); ++k) {
      t->values[k] -= beta * a[k];
    }
  }
  return next;
}

CustomizedResult customized_train(const ParamStore& theta0,
                                  std::span<const corpus::Task> tasks,
                                  std::span<const EdgeMask> masks,
                                  const meta::TrainConfig& cfg,
                                  const model::ModelConfig& mcfg) {
  if (tasks.size() != masks.size()) {
    throw ContractError("customized_train: tasks and masks differ in length");
  }
  const EdgeTaskIndex index = build_edge_task_index(masks);

  CustomizedResult result;
  result.theta = theta0.clone();

  // Freeze edges pruned by every task at zero.
  const auto& names = private_names();
  for (std::size_t l = 1; l + 1 < names.size(); ++l) {
    auto& t = result.theta.at(names[l]);
    const auto& edges = index.middle[l - 1];
    for (std::size_t k = 0; k < t->size(); ++k) {
      if (edges[k].empty()) t->values[k] = 0.0;
    }
  }

  auto loss_fn = [&mcfg](ad::Tape& tape, const ParamStore& p,
                         std::span<const corpus::DialoguePair> data) {
    return model::batch_nll(tape, p, mcfg, data, nullptr);
  };

  Rng rng(cfg.seed);
  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto batches = meta::epoch_batches(
        rng, tasks.size(), static_cast<std::size_t>(cfg.task_batch));
    for (const auto& batch_idx : batches) {
      std::vector<const corpus::Task*> batch;
      std::vector<const EdgeMask*> batch_masks;
      for (std::size_t idx : batch_idx) {
        batch.push_back(&tasks[idx]);
        batch_masks.push_back(&masks[idx]);
      }
      try {
        auto adapted = joint_inner_adapt(result.theta, batch, batch_masks,
                                         cfg.alpha, cfg.inner_steps, mcfg);
        // Mean inner train loss of the batch at theta (monitoring only).
        double train_loss = 0.0;
        for (std::size_t i = 0; i < batch.size(); ++i) {
          ad::Tape tape;
          auto masked = model_for_task(result.theta, *batch_masks[i]);
          train_loss += model::batch_nll(tape, masked, mcfg, batch[i]->train,
                                         batch_masks[i])
                            ->item();
        }
        train_loss /= static_cast<double>(batch.size());

        result.theta = joint_outer_update(result.theta, batch, batch_masks,
                                          adapted, cfg.beta, mcfg);

        double valid_loss = 0.0;
        for (std::size_t i = 0; i < batch.size(); ++i) {
          ad::Tape tape;
          auto masked = model_for_task(result.theta, *batch_masks[i]);
          valid_loss += model::batch_nll(tape, masked, mcfg, batch[i]->valid,
                                         batch_masks[i])
                            ->item();
        }
        valid_loss /= static_cast<double>(batch.size());
        result.log.push_back(TrainLogEntry{step, train_loss, valid_loss});
      } catch (const NumericError& e) {
        throw NumericError("customized_train step " + std::to_string(step) +
                           ": " + e.what());
      }
      ++step;
    }
  }
  return result;
}

ParamStore masked_finetune(const ParamStore& theta, const corpus::Task& task,
                           const EdgeMask& mask, int steps, double lr,
                           std::size_t batch_size,
                           const model::ModelConfig& mcfg) {
  if (task.train.empty()) {
    throw ContractError("masked_finetune: task " + task.id +
                        " has no train pairs");
  }
  ParamStore adapted = theta.clone();
  const std::size_t bs = std::min(batch_size, task.train.size());
  std::size_t cursor = 0;
  for (int s = 0; s < steps; ++s) {
    std::vector<corpus::DialoguePair> batch;
    for (std::size_t i = 0; i < bs; ++i) {
      batch.push_back(task.train[(cursor + i) % task.train.size()]);
    }
    cursor = (cursor + bs) % task.train.size();
    masked_grad(adapted, batch, mask, mcfg);
    adapted.sgd_step(lr);
  }
  return adapted;
}

std::pair<ParamStore, EdgeMask> adapt_new_task(const ParamStore& theta,
                                               const corpus::Task& task,
                                               const prune::PruneConfig& pcfg,
                                               const model::ModelConfig& mcfg) {
  ParamStore finetuned = prune::l1_finetune(theta, task, pcfg, mcfg);
  EdgeMask mask = prune::prune_private(finetuned, pcfg.gamma, mcfg, task.id);
  ParamStore adapted =
      masked_finetune(theta, task, mask, pcfg.finetune_steps, pcfg.finetune_lr,
                      pcfg.batch_size, mcfg);
  return {model_for_task(adapted, mask), std::move(mask)};
}

ParamStore model_for_task(const ParamStore& theta, const EdgeMask& mask) {
  ParamStore view = theta.clone();
  apply_mask_values(view, mask);
  return view;
}

void save_training_log(std::span<const TrainLogEntry> log,
                       const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write training log: " + path.string());
  for (const auto& entry : log) {
    nlohmann::json obj;
    obj["step"] = entry.step;
    obj["mean_train_loss"] = entry.mean_train_loss;
    obj["mean_valid_loss"] = entry.mean_valid_loss;
    out << obj.dump() << '\n';
  }
}

}  // namespace metaforge::joint
