// SPDX-License-Identifier: Apache-2.0

#include "metaforge/meta.hpp"

#include <cmath>
#include <string>

#include "metaforge/rng.hpp"

namespace metaforge::meta {

namespace {

// Gradient of `loss` at theta into theta's grad buffers.
void compute_grad(ParamStore& theta, std::span<const corpus::DialoguePair> data,
                  const LossFn& loss) {
  ad::Tape tape;
  theta.zero_grad();
  auto out = loss(tape, theta, data);
  if (!std::isfinite(out->item())) {
    throw NumericError("non-finite training loss");
  }
  tape.backward(out);
}

std::vector<std::vector<double>> snapshot_grads(const ParamStore& theta) {
  std::vector<std::vector<double>> grads;
  grads.reserve(theta.count());
  for (const auto& [name, t] : theta) grads.push_back(t->grad);
  return grads;
}

void axpy_values(ParamStore& theta,
                 const std::vector<std::vector<double>>& direction,
                 double factor) {
  std::size_t i = 0;
  for (auto& [name, t] : theta.items()) {
    const auto& d = direction[i++];
    for (std::size_t k = 0; k < t->size(); ++k) t->values[k] += factor * d[k];
  }
}

void accumulate(std::vector<std::vector<double>>& acc,
                const ParamStore& theta) {
  std::size_t i = 0;
  for (const auto& [name, t] : theta) {
    auto& a = acc[i++];
    for (std::size_t k = 0; k < t->size(); ++k) a[k] += t->grad[k];
  }
}

std::vector<std::vector<double>> zeros_like(const ParamStore& theta) {
  std::vector<std::vector<double>> z;
  z.reserve(theta.count());
  for (const auto& [name, t] : theta) {
    z.emplace_back(t->size(), 0.0);
  }
  return z;
}

// Central-difference Hessian-vector product of the training loss at theta:
//   H v ~= (grad L(theta + eps v) - grad L(theta - eps v)) / (2 eps)
// Exact (up to rounding) when the loss is quadratic in theta.
std::vector<std::vector<double>> hvp(const ParamStore& theta,
                                     std::span<const corpus::DialoguePair> data,
                                     const LossFn& loss,
                                     const std::vector<std::vector<double>>& v) {
  double vmax = 0.0;
  for (const auto& block : v) {
    for (double x : block) vmax = std::max(vmax, std::fabs(x));
  }
  const double eps = 1e-3 / std::max(1.0, vmax);

  ParamStore probe = theta.clone();
  axpy_values(probe, v, eps);
  compute_grad(probe, data, loss);
  auto g_plus = snapshot_grads(probe);

  axpy_values(probe, v, -2.0 * eps);
  compute_grad(probe, data, loss);
  auto g_minus = snapshot_grads(probe);

  for (std::size_t i = 0; i < g_plus.size(); ++i) {
    for (std::size_t k = 0; k < g_plus[i].size(); ++k) {
      g_plus[i][k] = (g_plus[i][k] - g_minus[i][k]) / (2.0 * eps);
    }
  }
  return g_plus;
}

// Outer gradient for one task, differentiated through the inner trajectory:
//   v_k = grad L_valid(theta_k);  v_{t} = v_{t+1} - alpha * H_train(theta_t) v_{t+1}
std::vector<std::vector<double>> second_order_task_grad(
    const ParamStore& theta, const corpus::Task& task, const TrainConfig& cfg,
    const LossFn& loss) {
  std::vector<ParamStore> trajectory;
  trajectory.push_back(theta.clone());
  for (int s = 0; s < cfg.inner_steps; ++s) {
    ParamStore next = trajectory.back().clone();
    compute_grad(next, task.train, loss);
    next.sgd_step(cfg.alpha);
    trajectory.push_back(std::move(next));
  }

  compute_grad(trajectory.back(), task.valid, loss);
  auto v = snapshot_grads(trajectory.back());
  if (cfg.alpha == 0.0) return v;
  for (int t = cfg.inner_steps - 1; t >= 0; --t) {
    auto hv = hvp(trajectory[static_cast<std::size_t>(t)], task.train, loss, v);
    for (std::size_t i = 0; i < v.size(); ++i) {
      for (std::size_t k = 0; k < v[i].size(); ++k) {
        v[i][k] -= cfg.alpha * hv[i][k];
      }
    }
  }
  return v;
}

}  // namespace

void TrainConfig::validate() const {
  if (alpha <= 0.0 || beta <= 0.0) {
    throw ContractError("train config: alpha and beta must be positive");
  }
  if (inner_steps < 1) {
    throw ContractError("train config: inner_steps must be >= 1");
  }
  if (epochs < 1) throw ContractError("train config: epochs must be >= 1");
  if (task_batch < 1) {
    throw ContractError("train config: task_batch must be >= 1");
  }
}

ParamStore inner_adapt(const ParamStore& theta,
                       std::span<const corpus::DialoguePair> data,
                       double alpha, int steps, const LossFn& loss) {
  if (data.empty()) throw ContractError("inner_adapt: empty data");
  ParamStore adapted = theta.clone();
  for (int s = 0; s < steps; ++s) {
    compute_grad(adapted, data, loss);
    adapted.sgd_step(alpha);
  }
  return adapted;
}

ParamStore outer_update(const ParamStore& theta,
                        const std::vector<const corpus::Task*>& batch,
                        const TrainConfig& cfg, const LossFn& loss) {
  if (batch.empty()) throw ContractError("outer_update: empty batch");
  auto acc = zeros_like(theta);
  for (const corpus::Task* task : batch) {
    if (task->valid.empty()) {
      throw ContractError("outer_update: task " + task->id +
                          " has no valid pairs");
    }
    if (cfg.second_order) {
      auto g = second_order_task_grad(theta, *task, cfg, loss);
      for (std::size_t i = 0; i < acc.size(); ++i) {
        for (std::size_t k = 0; k < acc[i].size(); ++k) acc[i][k] += g[i][k];
      }
    } else {
      ParamStore adapted =
          inner_adapt(theta, task->train, cfg.alpha, cfg.inner_steps, loss);
      compute_grad(adapted, task->valid, loss);
      accumulate(acc, adapted);
    }
  }
  ParamStore next = theta.clone();
  axpy_values(next, acc, -cfg.beta);
  return next;
}

std::vector<std::vector<std::size_t>> epoch_batches(Rng& rng,
                                                    std::size_t n_tasks,
                                                    std::size_t task_batch) {
  const auto order = shuffled_indices(rng, n_tasks);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < n_tasks; i += task_batch) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(
                                             std::min(i + task_batch, n_tasks)));
  }
  return batches;
}

ParamStore maml_pretrain(const ParamStore& theta_init,
                         std::span<const corpus::Task> tasks,
                         const TrainConfig& cfg, const LossFn& loss) {
  if (tasks.empty()) throw ContractError("maml_pretrain: no tasks");
  ParamStore theta = theta_init.clone();
  Rng rng(cfg.seed);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto batches = epoch_batches(rng, tasks.size(),
                                       static_cast<std::size_t>(cfg.task_batch));
    for (std::size_t b = 0; b < batches.size(); ++b) {
      std::vector<const corpus::Task*> batch;
      for (std::size_t idx : batches[b]) batch.push_back(&tasks[idx]);
      try {
        theta = outer_update(theta, batch, cfg, loss);
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + " batch " +
                           std::to_string(b) + ": " + e.what());
      }
    }
  }
  return theta;
}

ParamStore sgd_finetune(const ParamStore& theta,
                        std::span<const corpus::DialoguePair> data, double lr,
                        int steps, std::size_t batch_size, const LossFn& loss) {
  if (data.empty()) throw ContractError("sgd_finetune: empty data");
  const std::size_t bs = std::min(batch_size, data.size());
  ParamStore adapted = theta.clone();
  std::size_t cursor = 0;
  for (int s = 0; s < steps; ++s) {
    std::vector<corpus::DialoguePair> batch;
    for (std::size_t i = 0; i < bs; ++i) {
      batch.push_back(data[(cursor + i) % data.size()]);
    }
    cursor = (cursor + bs) % data.size();
    compute_grad(adapted, batch, loss);
    adapted.sgd_step(lr);
  }
  return adapted;
}

ParamStore joint_pretrain(const ParamStore& theta,
                          std::span<const corpus::Task> tasks, double lr,
                          int epochs, std::size_t batch_size,
                          std::uint64_t seed, const LossFn& loss) {
  std::vector<corpus::DialoguePair> pool;
  for (const auto& task : tasks) {
    pool.insert(pool.end(), task.train.begin(), task.train.end());
  }
  if (pool.empty()) throw ContractError("joint_pretrain: no train pairs");
  ParamStore adapted = theta.clone();
  Rng rng(seed);
  const std::size_t bs = std::min(batch_size, pool.size());
  for (int epoch = 0; epoch < epochs; ++epoch) {
    const auto order = shuffled_indices(rng, pool.size());
    for (std::size_t start = 0; start < order.size(); start += bs) {
      std::vector<corpus::DialoguePair> batch;
      for (std::size_t i = start; i < std::min(start + bs, order.size()); ++i) {
        batch.push_back(pool[order[i]]);
      }
      compute_grad(adapted, batch, loss);
      adapted.sgd_step(lr);
    }
  }
  return adapted;
}

double mean_valid_loss(const ParamStore& theta,
                       std::span<const corpus::Task> tasks,
                       const LossFn& loss) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& task : tasks) {
    if (task.valid.empty()) continue;
    ad::Tape tape;
    auto out = loss(tape, theta, task.valid);
    total += out->item();
    ++n;
  }
  if (n == 0) throw ContractError("mean_valid_loss: no valid pairs");
  return total / static_cast<double>(n);
}

}  // namespace metaforge::meta
