// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include <doctest.h>

#include "metaforge/meta.hpp"
#include "metaforge/model.hpp"
#include "metaforge/rng.hpp"

using namespace metaforge;
using namespace metaforge::meta;

namespace {

// 1-parameter quadratic objective L = theta^2; ignores the data argument.
ParamStore quadratic_store(double theta0) {
  ParamStore p;
  p.insert("theta", ad::Tensor::leaf({1}, {theta0}, true));
  return p;
}

const LossFn kQuadratic = [](ad::Tape& tape, const ParamStore& p,
                             std::span<const corpus::DialoguePair>) {
  const auto& theta = p.at("theta");
  return tape.mul(theta, theta);
};

corpus::Task dummy_task() {
  corpus::Task task;
  task.id = "quad";
  task.train.push_back(corpus::DialoguePair{{4}, {5}});
  task.valid.push_back(corpus::DialoguePair{{4}, {5}});
  return task;
}

model::ModelConfig tiny_config() {
  model::ModelConfig cfg;
  cfg.vocab_size = 48;
  cfg.embed_dim = 4;
  cfg.hidden_dim = 4;
  cfg.mlp_dim = 4;
  return cfg;
}

LossFn model_loss(const model::ModelConfig& cfg) {
  return [cfg](ad::Tape& tape, const ParamStore& p,
               std::span<const corpus::DialoguePair> data) {
    return model::batch_nll(tape, p, cfg, data, nullptr);
  };
}

std::vector<corpus::Task> tiny_tasks(std::size_t n, std::uint64_t seed) {
  corpus::GenConfig gen;
  gen.n_tasks = n;
  gen.pairs_per_task = 22;
  gen.vocab_size = 48;
  gen.signature_size = 4;
  gen.seed = seed;
  return corpus::gen_synthetic(gen).first;
}

}  // namespace

TEST_CASE("quadratic inner step lands exactly on 0.8") {
  auto theta = quadratic_store(1.0);
  auto adapted = inner_adapt(theta, dummy_task().train, 0.1, 1, kQuadratic);
  CHECK(adapted.at("theta")->values[0] == 0.8);
  // two steps: (1 - 0.2)^2 scaling of the gradient path
  auto two = inner_adapt(theta, dummy_task().train, 0.1, 2, kQuadratic);
  CHECK(two.at("theta")->values[0] == doctest::Approx(0.64).epsilon(1e-15));
}

TEST_CASE("alpha = 0 leaves parameters bit-identical") {
  auto theta = quadratic_store(1.0);
  auto adapted = inner_adapt(theta, dummy_task().train, 0.0, 3, kQuadratic);
  CHECK(adapted.at("theta")->values[0] == 1.0);
}

TEST_CASE("inner_adapt never mutates its input") {
  auto cfg = tiny_config();
  ParamStore theta = model::init_params(cfg, 5);
  const auto before = theta.flatten();
  corpus::Task task;
  task.train = {{{4, 5}, {6}}, {{5}, {7, 6}}};
  auto adapted = inner_adapt(theta, task.train, 0.05, 2, model_loss(cfg));
  const auto after = theta.flatten();
  REQUIRE(before.size() == after.size());
  for (std::size_t i = 0; i < before.size(); ++i) {
    CHECK(before[i] == after[i]);
  }
  // and the copy did move
  CHECK(adapted.flatten() != before);
}

TEST_CASE("inner_adapt rejects empty data") {
  auto theta = quadratic_store(1.0);
  CHECK_THROWS_AS(
      inner_adapt(theta, std::span<const corpus::DialoguePair>{}, 0.1, 1,
                  kQuadratic),
      ContractError);
}

TEST_CASE("quadratic outer update: first order 0.84, second order 0.872") {
  auto theta = quadratic_store(1.0);
  auto task = dummy_task();
  TrainConfig cfg;
  cfg.alpha = 0.1;
  cfg.beta = 0.1;
  cfg.inner_steps = 1;

  auto first = outer_update(theta, {&task}, cfg, kQuadratic);
  CHECK(first.at("theta")->values[0] == 0.84);

  cfg.second_order = true;
  auto second = outer_update(theta, {&task}, cfg, kQuadratic);
  // d/dtheta L(theta') = 2 theta' (1 - 2 alpha): hand chain rule gives
  // theta_new = 1 - 0.1 * 1.28 = 0.872; the Hessian-vector product is
  // exact on quadratics.
  CHECK(second.at("theta")->values[0] ==
        doctest::Approx(0.872).epsilon(1e-12));
}

TEST_CASE("outer update rejects an empty valid split") {
  auto theta = quadratic_store(1.0);
  corpus::Task task = dummy_task();
  task.valid.clear();
  TrainConfig cfg;
  CHECK_THROWS_AS(outer_update(theta, {&task}, cfg, kQuadratic),
                  ContractError);
}

TEST_CASE("first and second order agree exactly when alpha = 0") {
  auto cfg = tiny_config();
  ParamStore theta = model::init_params(cfg, 7);
  auto tasks = tiny_tasks(2, 3);
  std::vector<const corpus::Task*> batch = {&tasks[0], &tasks[1]};
  TrainConfig tcfg;
  tcfg.alpha = 0.0;
  tcfg.beta = 0.1;
  tcfg.inner_steps = 1;
  auto first = outer_update(theta, batch, tcfg, model_loss(cfg));
  tcfg.second_order = true;
  auto second = outer_update(theta, batch, tcfg, model_loss(cfg));
  auto f = first.flatten(), s = second.flatten();
  for (std::size_t i = 0; i < f.size(); ++i) CHECK(f[i] == s[i]);
}

TEST_CASE("first and second order agree exactly when inner_steps = 0") {
  auto cfg = tiny_config();
  ParamStore theta = model::init_params(cfg, 11);
  auto tasks = tiny_tasks(2, 5);
  std::vector<const corpus::Task*> batch = {&tasks[0]};
  TrainConfig tcfg;
  tcfg.alpha = 0.05;
  tcfg.beta = 0.1;
  tcfg.inner_steps = 0;
  auto first = outer_update(theta, batch, tcfg, model_loss(cfg));
  tcfg.second_order = true;
  auto second = outer_update(theta, batch, tcfg, model_loss(cfg));
  auto f = first.flatten(), s = second.flatten();
  for (std::size_t i = 0; i < f.size(); ++i) CHECK(f[i] == s[i]);
}

TEST_CASE("alpha = 0 outer update reduces to joint gradient descent") {
  auto cfg = tiny_config();
  auto loss = model_loss(cfg);
  auto tasks = tiny_tasks(3, 9);
  std::vector<const corpus::Task*> batch;
  for (const auto& t : tasks) batch.push_back(&t);

  TrainConfig tcfg;
  tcfg.alpha = 0.0;
  tcfg.beta = 0.1;
  tcfg.inner_steps = 1;

  ParamStore theta_meta = model::init_params(cfg, 13);
  ParamStore theta_joint = model::init_params(cfg, 13);

  for (int step = 0; step < 3; ++step) {
    theta_meta = outer_update(theta_meta, batch, tcfg, loss);

    // joint comparator: one tape summing the per-task mean valid losses in
    // the same task order
    ad::Tape tape;
    theta_joint.zero_grad();
    ad::TensorPtr total;
    for (const auto* task : batch) {
      auto l = loss(tape, theta_joint, task->valid);
      total = total ? tape.add(total, l) : l;
    }
    tape.backward(total);
    theta_joint.sgd_step(tcfg.beta);

    auto a = theta_meta.flatten(), b = theta_joint.flatten();
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("maml_pretrain is deterministic") {
  auto cfg = tiny_config();
  auto tasks = tiny_tasks(4, 21);
  TrainConfig tcfg;
  tcfg.alpha = 0.02;
  tcfg.beta = 0.1;
  tcfg.epochs = 2;
  tcfg.task_batch = 2;
  tcfg.seed = 77;
  ParamStore init = model::init_params(cfg, 77);
  auto run1 = maml_pretrain(init, tasks, tcfg, model_loss(cfg));
  auto run2 = maml_pretrain(init, tasks, tcfg, model_loss(cfg));
  auto a = run1.flatten(), b = run2.flatten();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("maml training lowers the mean valid loss on every seed") {
  auto cfg = tiny_config();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto tasks = tiny_tasks(4, seed);
    TrainConfig tcfg;
    tcfg.alpha = 0.05;
    tcfg.beta = 0.1;
    tcfg.epochs = 3;
    tcfg.task_batch = 2;
    tcfg.seed = seed;
    auto loss = model_loss(cfg);
    ParamStore init = model::init_params(cfg, seed);
    const double before = mean_valid_loss(init, tasks, loss);
    auto trained = maml_pretrain(init, tasks, tcfg, loss);
    const double after = mean_valid_loss(trained, tasks, loss);
    INFO("seed ", seed, " before ", before, " after ", after);
    CHECK(after < before);
  }
}

TEST_CASE("full-batch alpha = 0 pretraining tracks joint training") {
  auto cfg = tiny_config();
  auto loss = model_loss(cfg);
  auto tasks = tiny_tasks(3, 31);
  TrainConfig tcfg;
  tcfg.alpha = 0.0;
  tcfg.beta = 0.05;
  tcfg.epochs = 2;
  tcfg.task_batch = static_cast<int>(tasks.size());
  tcfg.seed = 4;
  ParamStore init = model::init_params(cfg, 4);
  auto meta_run = maml_pretrain(init, tasks, tcfg, loss);

  // comparator from the same shuffled schedule
  ParamStore joint = init.clone();
  Rng rng(tcfg.seed);
  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    const auto batches = epoch_batches(rng, tasks.size(),
                                       static_cast<std::size_t>(tcfg.task_batch));
    for (const auto& batch : batches) {
      ad::Tape tape;
      joint.zero_grad();
      ad::TensorPtr total;
      for (std::size_t idx : batch) {
        auto l = loss(tape, joint, tasks[idx].valid);
        total = total ? tape.add(total, l) : l;
      }
      tape.backward(total);
      joint.sgd_step(tcfg.beta);
    }
  }
  auto a = meta_run.flatten(), b = joint.flatten();
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
  }
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  cfg.alpha = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ContractError);
  cfg = TrainConfig{};
  cfg.inner_steps = 0;
  CHECK_THROWS_AS(cfg.validate(), ContractError);
  cfg = TrainConfig{};
  cfg.epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), ContractError);
  CHECK_NOTHROW(TrainConfig{}.validate());
}
