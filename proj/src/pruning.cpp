// SPDX-License-Identifier: Apache-2.0

#include "metaforge/pruning.hpp"

#include <cmath>

namespace metaforge::prune {

void PruneConfig::validate() const {
  if (gamma < 0.0) throw ContractError("prune config: gamma must be >= 0");
  if (l1_weight < 0.0) {
    throw ContractError("prune config: l1_weight must be >= 0");
  }
  if (finetune_steps < 1) {
    throw ContractError("prune config: finetune_steps must be >= 1");
  }
}

ParamStore l1_finetune(const ParamStore& theta, const corpus::Task& task,
                       const PruneConfig& cfg,
                       const model::ModelConfig& mcfg) {
  if (task.train.empty()) {
    throw ContractError("l1_finetune: task " + task.id + " has no train pairs");
  }
  const std::size_t bs = std::min(cfg.batch_size, task.train.size());
  ParamStore adapted = theta.clone();
  std::size_t cursor = 0;
  for (int s = 0; s < cfg.finetune_steps; ++s) {
    std::vector<corpus::DialoguePair> batch;
    for (std::size_t i = 0; i < bs; ++i) {
      batch.push_back(task.train[(cursor + i) % task.train.size()]);
    }
    cursor = (cursor + bs) % task.train.size();

    ad::Tape tape;
    adapted.zero_grad();
    auto loss = model::batch_nll(tape, adapted, mcfg, batch, nullptr);
    if (!std::isfinite(loss->item())) {
      throw NumericError("l1_finetune: non-finite loss on task " + task.id);
    }
    tape.backward(loss);
    // L1 subgradient on the private module.
    for (auto& [name, t] : adapted.items()) {
      if (name.rfind("private.", 0) != 0) continue;
      for (std::size_t k = 0; k < t->size(); ++k) {
        const double w = t->values[k];
        if (w > 0.0) {
          t->grad[k] += cfg.l1_weight;
        } else if (w < 0.0) {
          t->grad[k] -= cfg.l1_weight;
        }
      }
    }
    adapted.sgd_step(cfg.finetune_lr);
  }
  return adapted;
}

EdgeMask prune_private(const ParamStore& theta_task, double gamma,
                       const model::ModelConfig& mcfg,
                       const std::string& task_id) {
  const auto names = model::private_weight_names();
  const auto dims = mcfg.private_dims();
  const std::size_t L = names.size();

  EdgeMask mask;
  mask.task_id = task_id;
  mask.layers.resize(L);
  for (std::size_t l = 0; l < L; ++l) {
    const auto& w = theta_task.at(names[l]);
    if (w->shape != ad::Shape{dims[l].first, dims[l].second}) {
      throw ContractError("prune_private: unexpected shape for " + names[l]);
    }
    mask.layers[l] = EdgeMask::Layer{
        dims[l].first, dims[l].second,
        std::vector<double>(dims[l].first * dims[l].second, 0.0)};
  }

  // Layers 1 and L are kept unconditionally.
  std::fill(mask.layers[0].keep.begin(), mask.layers[0].keep.end(), 1.0);
  std::fill(mask.layers[L - 1].keep.begin(), mask.layers[L - 1].keep.end(),
            1.0);

  // alive[c]: node c between layer k and k+1 still reaches the output.
  // Nodes feeding the (unpruned) output layer are all alive.
  std::vector<char> alive(dims[L - 2].second, 1);
  for (std::size_t k = L - 2; k >= 1; --k) {
    const auto& w = theta_task.at(names[k]);
    EdgeMask::Layer& layer = mask.layers[k];
    std::vector<char> lower_alive(layer.rows, 0);
    for (std::size_t r = 0; r < layer.rows; ++r) {
      for (std::size_t c = 0; c < layer.cols; ++c) {
        const double weight = w->values[r * layer.cols + c];
        if (std::fabs(weight) > gamma && alive[c]) {
          layer.set(r, c, 1.0);
          lower_alive[r] = 1;
        }
      }
    }
    alive = std::move(lower_alive);
    if (k == 1) break;
  }
  return mask;
}

MaskStats mask_stats(std::span<const EdgeMask> masks) {
  if (masks.empty()) throw ContractError("mask_stats: no masks");
  for (const auto& m : masks) {
    if (!m.same_geometry(masks[0])) {
      throw ContractError("mask_stats: geometry mismatch at " + m.task_id);
    }
  }
  MaskStats stats;
  const std::size_t n = masks.size();
  for (const auto& m : masks) {
    stats.task_ids.push_back(m.task_id);
    const std::size_t total = m.middle_total();
    stats.sparsity.push_back(
        total == 0 ? 0.0
                   : 1.0 - static_cast<double>(m.middle_kept()) /
                               static_cast<double>(total));
  }

  auto middle_bits = [](const EdgeMask& m) {
    std::vector<char> bits;
    for (std::size_t l = 1; l + 1 < m.layers.size(); ++l) {
      for (double v : m.layers[l].keep) bits.push_back(v != 0.0);
    }
    return bits;
  };
  std::vector<std::vector<char>> bits;
  bits.reserve(n);
  for (const auto& m : masks) bits.push_back(middle_bits(m));

  stats.overlap.assign(n, std::vector<double>(n, 1.0));
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      std::size_t inter = 0, uni = 0;
      for (std::size_t k = 0; k < bits[i].size(); ++k) {
        inter += (bits[i][k] && bits[j][k]);
        uni += (bits[i][k] || bits[j][k]);
      }
      const double jac =
          uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
      stats.overlap[i][j] = stats.overlap[j][i] = jac;
      sum += jac;
      ++pairs;
    }
  }
  stats.mean_overlap = pairs == 0 ? 1.0 : sum / static_cast<double>(pairs);

  const std::size_t edges = bits.empty() ? 0 : bits[0].size();
  stats.edge_task_histogram.assign(n + 1, 0);
  for (std::size_t k = 0; k < edges; ++k) {
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) count += bits[i][k];
    ++stats.edge_task_histogram[count];
  }
  return stats;
}

}  // namespace metaforge::prune
