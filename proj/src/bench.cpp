// SPDX-License-Identifier: Apache-2.0

#include "metaforge/bench.hpp"

#include <fstream>

#include <json.hpp>

namespace metaforge::bench {

Method method_from_string(const std::string& name) {
  if (name == "pretrain_only") return Method::kPretrainOnly;
  if (name == "finetune") return Method::kFinetune;
  if (name == "maml") return Method::kMaml;
  if (name == "cmaml") return Method::kCmaml;
  if (name == "cmaml_sp'g" || name == "cmaml_spg") return Method::kCmamlSpg;
  throw ParseError("unknown method: " + name);
}

std::string method_name(Method method) {
  switch (method) {
    case Method::kPretrainOnly: return "pretrain_only";
    case Method::kFinetune: return "finetune";
    case Method::kMaml: return "maml";
    case Method::kCmaml: return "cmaml";
    case Method::kCmamlSpg: return "cmaml_spg";
  }
  return "?";
}

namespace {

meta::LossFn make_loss(const model::ModelConfig& mcfg) {
  return [mcfg](ad::Tape& tape, const ParamStore& p,
                std::span<const corpus::DialoguePair> data) {
    return model::batch_nll(tape, p, mcfg, data, nullptr);
  };
}

}  // namespace

eval::MetricsReport evaluate_models(const std::string& method_label,
                                    std::span<const corpus::Task> tasks,
                                    std::span<const ParamStore> before,
                                    std::span<const ParamStore> after,
                                    const std::vector<EdgeMask>& masks,
                                    const model::ModelConfig& mcfg,
                                    std::size_t decode_max_len) {
  eval::MetricsReport report;
  report.method = method_label;

  double total_nll = 0.0;
  std::size_t total_tokens = 0;
  std::vector<std::vector<int>> all_candidates, all_references;
  std::size_t consistency_tasks = 0;

  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const corpus::Task& task = tasks[i];
    const EdgeMask* mask = masks.empty() ? nullptr : &masks[i];
    eval::TaskMetrics tm;
    tm.task_id = task.id;

    tm.ppl = eval::perplexity(after[i], mcfg, task.valid, mask);
    for (const auto& pair : task.valid) {
      ad::Tape tape;
      total_nll +=
          model::sequence_nll(tape, after[i], mcfg, pair, mask)->item();
      total_tokens += pair.response.size() + 1;
    }

    std::vector<std::vector<int>> candidates, references;
    for (const auto& pair : task.valid) {
      candidates.push_back(model::greedy_decode(after[i], mcfg, pair.query,
                                                mask, decode_max_len));
      references.push_back(pair.response);
    }
    tm.bleu = eval::bleu(candidates, references);
    bool any_tokens = false;
    for (const auto& c : candidates) any_tokens |= !c.empty();
    tm.dist1 = any_tokens ? eval::dist1(candidates) : 0.0;
    if (!task.signature.empty()) {
      tm.consistency = eval::consistency_proxy(candidates, task.signature);
      ++consistency_tasks;
    }
    all_candidates.insert(all_candidates.end(), candidates.begin(),
                          candidates.end());
    all_references.insert(all_references.end(), references.begin(),
                          references.end());
    report.consistency += tm.consistency;
    report.per_task.push_back(std::move(tm));
  }

  report.ppl = std::exp(total_nll / static_cast<double>(total_tokens));
  report.bleu = eval::bleu(all_candidates, all_references);
  bool any_tokens = false;
  for (const auto& c : all_candidates) any_tokens |= !c.empty();
  report.dist1 = any_tokens ? eval::dist1(all_candidates) : 0.0;
  report.consistency = consistency_tasks
                           ? report.consistency /
                                 static_cast<double>(consistency_tasks)
                           : 0.0;
  report.diff_score = eval::diff_score(after);
  report.delta_score = eval::delta_score(before, after);
  return report;
}

MethodArtifacts run_method(Method method, std::span<const corpus::Task> tasks,
                           const BenchConfig& cfg) {
  model::ModelConfig mcfg = cfg.model;
  if (method == Method::kCmamlSpg) mcfg.private_hidden_only = true;
  const auto loss = make_loss(mcfg);

  MethodArtifacts artifacts;
  ParamStore theta = model::init_params(mcfg, cfg.train.seed);

  const bool is_meta = method != Method::kPretrainOnly &&
                       method != Method::kFinetune;
  if (is_meta) {
    theta = meta::maml_pretrain(theta, tasks, cfg.train, loss);
  } else {
    theta = meta::joint_pretrain(theta, tasks, cfg.train.beta,
                                 cfg.train.epochs, cfg.prune.batch_size,
                                 cfg.train.seed, loss);
  }

  switch (method) {
    case Method::kPretrainOnly: {
      for (std::size_t i = 0; i < tasks.size(); ++i) {
        artifacts.before.push_back(theta.clone());
        artifacts.after.push_back(theta.clone());
      }
      break;
    }
    case Method::kFinetune:
    case Method::kMaml: {
      for (const auto& task : tasks) {
        artifacts.before.push_back(theta.clone());
        artifacts.after.push_back(
            meta::sgd_finetune(theta, task.train, cfg.adapt_lr,
                               cfg.adapt_steps, cfg.prune.batch_size, loss));
      }
      break;
    }
    case Method::kCmaml:
    case Method::kCmamlSpg: {
      for (const auto& task : tasks) {
        if (cfg.disable_pruning) {
          artifacts.masks.push_back(
              EdgeMask::all_ones(task.id, mcfg.private_dims()));
        } else {
          ParamStore finetuned =
              prune::l1_finetune(theta, task, cfg.prune, mcfg);
          artifacts.masks.push_back(
              prune::prune_private(finetuned, cfg.prune.gamma, mcfg, task.id));
        }
      }
      auto customized = joint::customized_train(theta, tasks, artifacts.masks,
                                                cfg.train, mcfg);
      artifacts.log = std::move(customized.log);
      for (std::size_t i = 0; i < tasks.size(); ++i) {
        artifacts.before.push_back(
            joint::model_for_task(customized.theta, artifacts.masks[i]));
        ParamStore adapted = joint::masked_finetune(
            customized.theta, tasks[i], artifacts.masks[i], cfg.adapt_steps,
            cfg.adapt_lr, cfg.prune.batch_size, mcfg);
        artifacts.after.push_back(
            joint::model_for_task(adapted, artifacts.masks[i]));
      }
      break;
    }
  }

  artifacts.report =
      evaluate_models(method_name(method), tasks, artifacts.before,
                      artifacts.after, artifacts.masks, mcfg,
                      cfg.decode_max_len);
  return artifacts;
}

std::vector<ImpactCell> run_impact_grid(const BenchConfig& cfg,
                                        const corpus::GenConfig& gen,
                                        std::span<const Method> methods,
                                        std::size_t pairs_low,
                                        std::size_t pairs_high) {
  std::vector<ImpactCell> table;
  for (double overlap : {0.0, 1.0}) {
    for (std::size_t pairs : {pairs_low, pairs_high}) {
      corpus::GenConfig cell_gen = gen;
      cell_gen.overlap = overlap;
      cell_gen.pairs_per_task = pairs;
      auto [tasks, vocab] = corpus::gen_synthetic(cell_gen);
      BenchConfig cell_cfg = cfg;
      cell_cfg.model.vocab_size = vocab.size();
      for (Method method : methods) {
        auto artifacts = run_method(method, tasks, cell_cfg);
        table.push_back(ImpactCell{overlap, pairs, artifacts.report});
      }
    }
  }
  return table;
}

void save_impact_table(std::span<const ImpactCell> table,
                       const std::filesystem::path& json_path,
                       const std::filesystem::path& csv_path) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& cell : table) {
    nlohmann::json obj;
    obj["overlap"] = cell.overlap;
    obj["pairs_per_task"] = cell.pairs_per_task;
    obj["method"] = cell.report.method;
    obj["ppl"] = cell.report.ppl;
    obj["bleu"] = cell.report.bleu;
    obj["dist1"] = cell.report.dist1;
    obj["consistency"] = cell.report.consistency;
    obj["diff_score"] = cell.report.diff_score;
    obj["delta_score"] = cell.report.delta_score;
    arr.push_back(std::move(obj));
  }
  std::ofstream out(json_path);
  if (!out) throw ParseError("cannot write impact table: " +
                             json_path.string());
  out << arr.dump(1) << '\n';

  std::ofstream csv(csv_path);
  if (!csv) throw ParseError("cannot write impact csv: " + csv_path.string());
  csv << "overlap,pairs_per_task,method,ppl,bleu,dist1,consistency,"
         "diff_score,delta_score\n";
  csv.precision(17);
  for (const auto& cell : table) {
    csv << cell.overlap << ',' << cell.pairs_per_task << ','
        << cell.report.method << ',' << cell.report.ppl << ','
        << cell.report.bleu << ',' << cell.report.dist1 << ','
        << cell.report.consistency << ',' << cell.report.diff_score << ','
        << cell.report.delta_score << '\n';
  }
}

}  // namespace metaforge::bench
