// SPDX-License-Identifier: Apache-2.0
//
// Experiment driver. Subcommands cover the full pipeline:
//   gen-data -> pretrain -> prune -> joint-train -> adapt -> evaluate -> diff
// plus `gradcheck` (gradient fidelity), `bench` (one method end to end) and
// `impact` (the data-quantity x task-similarity grid).
//
// Every subcommand is deterministic given its config and seed and prints a
// one-line JSON summary on success. Exit codes: 0 ok, 2 config/parse
// failure, 3 numeric failure, 1 anything else.

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "metaforge/bench.hpp"
#include "metaforge/corpus.hpp"
#include "metaforge/eval.hpp"
#include "metaforge/gradcheck_suite.hpp"
#include "metaforge/jointmeta.hpp"
#include "metaforge/runconfig.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace metaforge;

namespace {

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  std::int64_t seed = -1;
};

RunConfig resolve_config(const CommonFlags& flags) {
  RunConfig cfg;
  if (!flags.config_path.empty()) {
    cfg = RunConfig::from_file(flags.config_path);
  }
  if (flags.seed >= 0) cfg.seed = static_cast<std::uint64_t>(flags.seed);
  if (!flags.out_dir.empty()) cfg.out_dir = flags.out_dir;
  cfg.apply_env();
  fs::create_directories(cfg.out_dir);
  return cfg;
}

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "key=value config file");
  cmd->add_option("--seed", flags.seed, "seed override");
  cmd->add_option("--out", flags.out_dir, "output directory");
}

void print_summary(const json& obj) { std::cout << obj.dump() << std::endl; }

// Loads a corpus previously produced by gen-data (or an external drop-in
// with the same layout): tasks.jsonl + vocab.json [+ signatures.json].
std::pair<std::vector<corpus::Task>, corpus::Vocab> load_corpus_dir(
    const RunConfig& cfg) {
  fs::path dir = cfg.corpus_path.empty() ? fs::path(cfg.out_dir)
                                         : fs::path(cfg.corpus_path);
  fs::path tasks_file = dir / "tasks.jsonl";
  if (!fs::exists(tasks_file) && fs::is_regular_file(dir)) {
    // A bare JSONL path is accepted too; the vocabulary is rebuilt from it.
    auto [tasks, vocab] = corpus::load_jsonl(dir, cfg.vocab_size);
    return {std::move(tasks), std::move(vocab)};
  }
  corpus::Vocab vocab = corpus::load_vocab(dir / "vocab.json");
  auto tasks = corpus::load_jsonl(tasks_file, vocab);
  if (fs::exists(dir / "signatures.json")) {
    corpus::load_signatures(tasks, vocab, dir / "signatures.json");
  }
  return {std::move(tasks), std::move(vocab)};
}

int cmd_gen_data(const RunConfig& cfg) {
  auto [tasks, vocab] = corpus::gen_synthetic(cfg.gen_config());
  fs::path dir(cfg.out_dir);
  corpus::save_jsonl(tasks, vocab, dir / "tasks.jsonl");
  corpus::save_vocab(vocab, dir / "vocab.json");
  corpus::save_signatures(tasks, vocab, dir / "signatures.json");
  print_summary({{"command", "gen-data"},
                 {"tasks", tasks.size()},
                 {"vocab", vocab.size()},
                 {"out", dir.string()}});
  return 0;
}

int cmd_pretrain(const RunConfig& cfg) {
  auto [tasks, vocab] = load_corpus_dir(cfg);
  RunConfig run = cfg;
  run.vocab_size = vocab.size();
  auto bcfg = run.bench_config();
  auto loss = [&](ad::Tape& tape, const ParamStore& p,
                  std::span<const corpus::DialoguePair> data) {
    return model::batch_nll(tape, p, bcfg.model, data, nullptr);
  };
  ParamStore theta = model::init_params(bcfg.model, cfg.seed);
  const bool meta_method = cfg.method != "pretrain_only" &&
                           cfg.method != "finetune";
  if (meta_method) {
    theta = meta::maml_pretrain(theta, tasks, bcfg.train, loss);
  } else {
    theta = meta::joint_pretrain(theta, tasks, bcfg.train.beta,
                                 bcfg.train.epochs, bcfg.prune.batch_size,
                                 bcfg.train.seed, loss);
  }
  fs::path out = fs::path(cfg.out_dir) / "checkpoint.json";
  save_checkpoint(theta, out);
  print_summary({{"command", "pretrain"},
                 {"mode", meta_method ? "maml" : "joint"},
                 {"checkpoint", out.string()},
                 {"valid_loss", meta::mean_valid_loss(theta, tasks, loss)}});
  return 0;
}

int cmd_prune(const RunConfig& cfg) {
  auto [tasks, vocab] = load_corpus_dir(cfg);
  RunConfig run = cfg;
  run.vocab_size = vocab.size();
  auto bcfg = run.bench_config();
  ParamStore theta =
      load_checkpoint(fs::path(cfg.out_dir) / "checkpoint.json");
  std::vector<EdgeMask> masks;
  for (const auto& task : tasks) {
    ParamStore finetuned = prune::l1_finetune(theta, task, bcfg.prune,
                                              bcfg.model);
    masks.push_back(prune::prune_private(finetuned, bcfg.prune.gamma,
                                         bcfg.model, task.id));
    masks.back().validate();
  }
  fs::path out = fs::path(cfg.out_dir) / "masks.json";
  save_masks(masks, out);
  auto stats = prune::mask_stats(masks);
  double mean_sparsity = 0.0;
  for (double s : stats.sparsity) mean_sparsity += s;
  mean_sparsity /= static_cast<double>(stats.sparsity.size());
  print_summary({{"command", "prune"},
                 {"masks", out.string()},
                 {"mean_sparsity", mean_sparsity},
                 {"mean_overlap", stats.mean_overlap}});
  return 0;
}

int cmd_joint_train(const RunConfig& cfg) {
  auto [tasks, vocab] = load_corpus_dir(cfg);
  RunConfig run = cfg;
  run.vocab_size = vocab.size();
  auto bcfg = run.bench_config();
  ParamStore theta =
      load_checkpoint(fs::path(cfg.out_dir) / "checkpoint.json");
  auto masks = load_masks(fs::path(cfg.out_dir) / "masks.json");
  auto result =
      joint::customized_train(theta, tasks, masks, bcfg.train, bcfg.model);
  fs::path out = fs::path(cfg.out_dir) / "customized.json";
  save_checkpoint(result.theta, out);
  joint::save_training_log(result.log,
                           fs::path(cfg.out_dir) / "training_log.jsonl");
  print_summary(
      {{"command", "joint-train"},
       {"checkpoint", out.string()},
       {"steps", result.log.size()},
       {"final_valid_loss",
        result.log.empty() ? 0.0 : result.log.back().mean_valid_loss}});
  return 0;
}

int cmd_adapt(const RunConfig& cfg, const std::string& task_id) {
  auto [tasks, vocab] = load_corpus_dir(cfg);
  RunConfig run = cfg;
  run.vocab_size = vocab.size();
  auto bcfg = run.bench_config();
  ParamStore theta =
      load_checkpoint(fs::path(cfg.out_dir) / "customized.json");
  const corpus::Task* task = nullptr;
  for (const auto& t : tasks) {
    if (t.id == task_id) task = &t;
  }
  if (!task) throw ContractError("adapt: unknown task id " + task_id);
  auto [adapted, mask] = joint::adapt_new_task(theta, *task, bcfg.prune,
                                               bcfg.model);
  fs::path ckpt = fs::path(cfg.out_dir) / ("adapted_" + task_id + ".json");
  fs::path mfile = fs::path(cfg.out_dir) / ("mask_" + task_id + ".json");
  save_checkpoint(adapted, ckpt);
  save_masks({mask}, mfile);
  const double ppl = eval::perplexity(adapted, bcfg.model, task->valid, &mask);
  print_summary({{"command", "adapt"},
                 {"task", task_id},
                 {"checkpoint", ckpt.string()},
                 {"valid_ppl", ppl}});
  return 0;
}

int cmd_evaluate(const RunConfig& cfg, const std::string& checkpoint_path) {
  auto [tasks, vocab] = load_corpus_dir(cfg);
  RunConfig run = cfg;
  run.vocab_size = vocab.size();
  auto bcfg = run.bench_config();
  fs::path ckpt = checkpoint_path.empty()
                      ? fs::path(cfg.out_dir) / "checkpoint.json"
                      : fs::path(checkpoint_path);
  ParamStore theta = load_checkpoint(ckpt);
  std::vector<ParamStore> models;
  for (std::size_t i = 0; i < tasks.size(); ++i) models.push_back(theta.clone());
  auto report = bench::evaluate_models("checkpoint", tasks, models, models, {},
                                       bcfg.model, bcfg.decode_max_len);
  fs::path out = fs::path(cfg.out_dir) / "metrics.json";
  eval::save_metrics({&report, 1}, out);
  print_summary({{"command", "evaluate"},
                 {"metrics", out.string()},
                 {"ppl", report.ppl},
                 {"bleu", report.bleu},
                 {"dist1", report.dist1}});
  return 0;
}

int cmd_diff(const std::vector<std::string>& checkpoints,
             const std::string& mode) {
  std::vector<ParamStore> models;
  for (const auto& path : checkpoints) models.push_back(load_checkpoint(path));
  json summary{{"command", "diff"}, {"mode", mode}};
  if (mode == "pairwise") {
    summary["diff_score"] = eval::diff_score(models);
  } else {
    if (models.size() % 2 != 0) {
      throw ContractError(
          "diff --mode delta expects before checkpoints followed by after "
          "checkpoints");
    }
    const std::size_t half = models.size() / 2;
    std::span<const ParamStore> before(models.data(), half);
    std::span<const ParamStore> after(models.data() + half, half);
    summary["delta_score"] = eval::delta_score(before, after);
  }
  print_summary(summary);
  return 0;
}

int cmd_gradcheck(const RunConfig& cfg, std::size_t instances) {
  const double h = 1e-4, tol = 1e-4;
  auto results = ad::primitive_gradcheck_suite(instances, cfg.seed, h, tol);
  results.push_back(ad::model_gradcheck_suite(
      std::max<std::size_t>(instances / 5, 4), cfg.seed, h, tol));
  double max_err = 0.0;
  bool pass = true;
  json detail = json::object();
  for (const auto& r : results) {
    max_err = std::max(max_err, r.max_rel_err);
    pass = pass && r.pass;
    detail[r.name] = r.max_rel_err;
  }
  print_summary({{"command", "gradcheck"},
                 {"max_rel_err", max_err},
                 {"tolerance", tol},
                 {"pass", pass},
                 {"per_primitive", detail}});
  return pass ? 0 : 3;
}

int cmd_bench(const RunConfig& cfg, bool disable_pruning) {
  auto [tasks, vocab] = load_corpus_dir(cfg);
  RunConfig run = cfg;
  run.vocab_size = vocab.size();
  auto bcfg = run.bench_config();
  bcfg.disable_pruning = disable_pruning;
  auto artifacts =
      bench::run_method(bench::method_from_string(cfg.method), tasks, bcfg);
  fs::path out = fs::path(cfg.out_dir) / "metrics.json";
  eval::save_metrics({&artifacts.report, 1}, out);
  eval::save_metrics_csv({&artifacts.report, 1},
                         fs::path(cfg.out_dir) / "metrics.csv");
  if (!artifacts.log.empty()) {
    joint::save_training_log(artifacts.log,
                             fs::path(cfg.out_dir) / "training_log.jsonl");
  }
  print_summary({{"command", "bench"},
                 {"method", cfg.method},
                 {"metrics", out.string()},
                 {"ppl", artifacts.report.ppl},
                 {"bleu", artifacts.report.bleu},
                 {"dist1", artifacts.report.dist1},
                 {"consistency", artifacts.report.consistency},
                 {"diff_score", artifacts.report.diff_score},
                 {"delta_score", artifacts.report.delta_score}});
  return 0;
}

int cmd_impact(const RunConfig& cfg, std::size_t pairs_low,
               std::size_t pairs_high) {
  auto bcfg = cfg.bench_config();
  auto gen = cfg.gen_config();
  const std::vector<bench::Method> methods = {
      bench::Method::kPretrainOnly, bench::Method::kMaml,
      bench::Method::kCmaml};
  auto table =
      bench::run_impact_grid(bcfg, gen, methods, pairs_low, pairs_high);
  fs::path jsonp = fs::path(cfg.out_dir) / "impact.json";
  fs::path csvp = fs::path(cfg.out_dir) / "impact.csv";
  bench::save_impact_table(table, jsonp, csvp);
  print_summary({{"command", "impact"},
                 {"cells", table.size()},
                 {"json", jsonp.string()},
                 {"csv", csvp.string()}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"metaforge: customized meta-learning for few-shot sequence "
               "generation"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string task_id, checkpoint_path, diff_mode = "pairwise";
  std::vector<std::string> diff_checkpoints;
  std::size_t gradcheck_instances = 100;
  std::size_t pairs_low = 55, pairs_high = 110;
  bool disable_pruning = false;

  std::size_t gen_tasks = 0, gen_pairs = 0;
  double gen_overlap = -1.0;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
  add_common(gen, flags);
  gen->add_option("--tasks", gen_tasks, "number of tasks");
  gen->add_option("--pairs", gen_pairs, "pairs per task");
  gen->add_option("--overlap", gen_overlap, "signature overlap in [0,1]");

  std::string method_flag;
  auto* pretrain = app.add_subcommand("pretrain", "MAML or joint pre-training");
  add_common(pretrain, flags);
  pretrain->add_option("--method", method_flag,
                       "pretrain_only|finetune|maml|cmaml|cmaml_spg");

  auto* prune_cmd = app.add_subcommand("prune", "per-task private pruning");
  add_common(prune_cmd, flags);

  auto* jt = app.add_subcommand("joint-train", "customized model training");
  add_common(jt, flags);

  auto* adapt = app.add_subcommand("adapt", "adapt to one task");
  add_common(adapt, flags);
  adapt->add_option("--task", task_id, "task id")->required();

  auto* evaluate = app.add_subcommand("evaluate", "metrics for a checkpoint");
  add_common(evaluate, flags);
  evaluate->add_option("--checkpoint", checkpoint_path, "checkpoint path");

  auto* diff = app.add_subcommand("diff", "model difference scores");
  diff->add_option("--checkpoints", diff_checkpoints, "checkpoint files")
      ->required();
  diff->add_option("--mode", diff_mode, "pairwise|delta");

  auto* gradcheck = app.add_subcommand("gradcheck", "gradient fidelity");
  add_common(gradcheck, flags);
  gradcheck->add_option("--instances", gradcheck_instances,
                        "instances per primitive");

  auto* bench_cmd = app.add_subcommand("bench", "run one method end to end");
  add_common(bench_cmd, flags);
  bench_cmd->add_option("--method", method_flag,
                        "pretrain_only|finetune|maml|cmaml|cmaml_spg");
  bench_cmd->add_flag("--no-prune", disable_pruning,
                      "cmaml with all-ones masks");

  auto* impact = app.add_subcommand("impact", "impact-factor grid");
  add_common(impact, flags);
  impact->add_option("--pairs-low", pairs_low, "few-shot pair count");
  impact->add_option("--pairs-high", pairs_high, "full pair count");

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg = resolve_config(flags);
    if (!method_flag.empty()) cfg.method = method_flag;
    if (gen->parsed()) {
      if (gen_tasks) cfg.gen_tasks = gen_tasks;
      if (gen_pairs) cfg.gen_pairs = gen_pairs;
      if (gen_overlap >= 0.0) cfg.gen_overlap = gen_overlap;
      return cmd_gen_data(cfg);
    }
    if (pretrain->parsed()) return cmd_pretrain(cfg);
    if (prune_cmd->parsed()) return cmd_prune(cfg);
    if (jt->parsed()) return cmd_joint_train(cfg);
    if (adapt->parsed()) return cmd_adapt(cfg, task_id);
    if (evaluate->parsed()) return cmd_evaluate(cfg, checkpoint_path);
    if (diff->parsed()) return cmd_diff(diff_checkpoints, diff_mode);
    if (gradcheck->parsed()) return cmd_gradcheck(cfg, gradcheck_instances);
    if (bench_cmd->parsed()) return cmd_bench(cfg, disable_pruning);
    if (impact->parsed()) return cmd_impact(cfg, pairs_low, pairs_high);
  } catch (const ParseError& e) {
    std::cerr << "config/parse error: " << e.what() << std::endl;
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << std::endl;
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
