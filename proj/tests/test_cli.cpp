// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <doctest.h>

#include "metaforge/bench.hpp"
#include "metaforge/jointmeta.hpp"
#include "metaforge/runconfig.hpp"

using namespace metaforge;
namespace fs = std::filesystem;

namespace {

fs::path write_config(const std::string& name, const std::string& body) {
  auto p = fs::temp_directory_path() / name;
  std::ofstream out(p);
  out << body;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

#ifdef METAFORGE_CLI_PATH
int run_cli(const std::string& args) {
  const std::string cmd = std::string(METAFORGE_CLI_PATH) + " " + args +
                          " > /dev/null 2>&1";
  return std::system(cmd.c_str());
}
#endif

}  // namespace

TEST_CASE("config files parse and unknown keys fail") {
  auto p = write_config("cfg_ok.txt",
                        "# comment\n"
                        "vocab_size = 32\n"
                        "alpha=0.02\n"
                        "method = maml\n"
                        "second_order = true\n"
                        "seed = 9\n");
  auto cfg = RunConfig::from_file(p);
  CHECK(cfg.vocab_size == 32);
  CHECK(cfg.alpha == 0.02);
  CHECK(cfg.method == "maml");
  CHECK(cfg.second_order);
  CHECK(cfg.seed == 9);

  auto bad = write_config("cfg_bad.txt", "no_such_key = 1\n");
  CHECK_THROWS_AS(RunConfig::from_file(bad), ParseError);
  auto bad2 = write_config("cfg_bad2.txt", "alpha 0.1\n");
  CHECK_THROWS_AS(RunConfig::from_file(bad2), ParseError);
  auto bad3 = write_config("cfg_bad3.txt", "alpha = zebra\n");
  CHECK_THROWS_AS(RunConfig::from_file(bad3), ParseError);
}

TEST_CASE("METAFORGE_SEED overrides the configured seed") {
  auto p = write_config("cfg_seed.txt", "seed = 5\n");
  auto cfg = RunConfig::from_file(p);
  setenv("METAFORGE_SEED", "123", 1);
  cfg.apply_env();
  unsetenv("METAFORGE_SEED");
  CHECK(cfg.seed == 123);
}

TEST_CASE("method names round-trip") {
  for (const char* name :
       {"pretrain_only", "finetune", "maml", "cmaml", "cmaml_spg"}) {
    CHECK(bench::method_name(bench::method_from_string(name)) == name);
  }
  CHECK(bench::method_from_string("cmaml_sp'g") == bench::Method::kCmamlSpg);
  CHECK_THROWS_AS(bench::method_from_string("nope"), ParseError);
}

TEST_CASE("pretrain-only bench reports exactly zero diff and delta") {
  corpus::GenConfig gen;
  gen.n_tasks = 3;
  gen.pairs_per_task = 11;
  gen.vocab_size = 32;
  gen.signature_size = 4;
  gen.seed = 3;
  auto [tasks, vocab] = corpus::gen_synthetic(gen);

  bench::BenchConfig cfg;
  cfg.model.vocab_size = vocab.size();
  cfg.model.embed_dim = 4;
  cfg.model.hidden_dim = 4;
  cfg.model.mlp_dim = 4;
  cfg.train.epochs = 1;
  cfg.train.seed = 3;
  cfg.prune.finetune_steps = 2;

  auto artifacts = bench::run_method(bench::Method::kPretrainOnly, tasks, cfg);
  CHECK(artifacts.report.diff_score == 0.0);
  CHECK(artifacts.report.delta_score == 0.0);
}

TEST_CASE("cmaml without pruning walks the vanilla MAML trajectory") {
  // With all-ones masks and singleton batches, customized_train must follow
  // exactly the same trajectory as continued vanilla MAML training over the
  // same epoch schedule, and the masked fine-tune must equal the plain one.
  corpus::GenConfig gen;
  gen.n_tasks = 3;
  gen.pairs_per_task = 11;
  gen.vocab_size = 32;
  gen.signature_size = 4;
  gen.seed = 11;
  auto [tasks, vocab] = corpus::gen_synthetic(gen);

  model::ModelConfig mcfg;
  mcfg.vocab_size = vocab.size();
  mcfg.embed_dim = 4;
  mcfg.hidden_dim = 4;
  mcfg.mlp_dim = 4;

  meta::TrainConfig tcfg;
  tcfg.alpha = 0.05;
  tcfg.beta = 0.1;
  tcfg.epochs = 2;
  tcfg.task_batch = 1;  // Eq. 4's batch sum degenerates per task
  tcfg.seed = 11;

  auto loss = [&mcfg](ad::Tape& tape, const ParamStore& p,
                      std::span<const corpus::DialoguePair> data) {
    return model::batch_nll(tape, p, mcfg, data, nullptr);
  };
  ParamStore theta0 = model::init_params(mcfg, 11);
  ParamStore pretrained = meta::maml_pretrain(theta0, tasks, tcfg, loss);

  std::vector<EdgeMask> masks;
  for (const auto& task : tasks) {
    masks.push_back(EdgeMask::all_ones(task.id, mcfg.private_dims()));
  }
  auto customized =
      joint::customized_train(pretrained, tasks, masks, tcfg, mcfg);

  // vanilla comparator over the identical epoch schedule
  ParamStore vanilla = pretrained.clone();
  Rng rng(tcfg.seed);
  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    const auto batches = meta::epoch_batches(
        rng, tasks.size(), static_cast<std::size_t>(tcfg.task_batch));
    for (const auto& batch_idx : batches) {
      std::vector<const corpus::Task*> batch;
      for (std::size_t idx : batch_idx) batch.push_back(&tasks[idx]);
      vanilla = meta::outer_update(vanilla, batch, tcfg, loss);
    }
  }
  auto a = customized.theta.flatten(), b = vanilla.flatten();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::fabs(a[i] - b[i]) <= 1e-12);
  }

  // masked fine-tune with all-ones equals the plain fine-tune
  auto masked = joint::masked_finetune(customized.theta, tasks[0], masks[0],
                                       3, 0.1, 32, mcfg);
  auto plain = meta::sgd_finetune(vanilla, tasks[0].train, 0.1, 3, 32, loss);
  auto c = masked.flatten(), d = plain.flatten();
  for (std::size_t i = 0; i < c.size(); ++i) {
    CHECK(std::fabs(c[i] - d[i]) <= 1e-12);
  }
}

#ifdef METAFORGE_CLI_PATH

TEST_CASE("gen-data is byte-deterministic across runs") {
  auto out1 = fs::temp_directory_path() / "mf_cli_gen1";
  auto out2 = fs::temp_directory_path() / "mf_cli_gen2";
  fs::remove_all(out1);
  fs::remove_all(out2);
  REQUIRE(run_cli("gen-data --tasks 4 --pairs 22 --overlap 0.2 --seed 7 "
                  "--out " + out1.string()) == 0);
  REQUIRE(run_cli("gen-data --tasks 4 --pairs 22 --overlap 0.2 --seed 7 "
                  "--out " + out2.string()) == 0);
  for (const char* name : {"tasks.jsonl", "vocab.json", "signatures.json"}) {
    CHECK(slurp(out1 / name) == slurp(out2 / name));
    CHECK(!slurp(out1 / name).empty());
  }
}

TEST_CASE("the full pipeline runs through the binary") {
  auto out = fs::temp_directory_path() / "mf_cli_pipeline";
  fs::remove_all(out);
  auto cfgp = write_config("cli_pipeline.cfg",
                           "vocab_size = 32\n"
                           "embed_dim = 4\n"
                           "hidden_dim = 4\n"
                           "mlp_dim = 4\n"
                           "epochs = 1\n"
                           "finetune_steps = 2\n"
                           "gen_tasks = 3\n"
                           "gen_pairs = 11\n"
                           "signature_size = 4\n"
                           "seed = 5\n"
                           "method = cmaml\n");
  const std::string common =
      " --config " + cfgp.string() + " --out " + out.string();
  REQUIRE(run_cli("gen-data" + common) == 0);
  REQUIRE(run_cli("pretrain" + common) == 0);
  REQUIRE(run_cli("prune" + common) == 0);
  REQUIRE(run_cli("joint-train" + common) == 0);
  REQUIRE(run_cli("adapt --task task00" + common) == 0);
  REQUIRE(run_cli("evaluate" + common) == 0);
  REQUIRE(run_cli("bench --method pretrain_only" + common) == 0);
  CHECK(fs::exists(out / "checkpoint.json"));
  CHECK(fs::exists(out / "masks.json"));
  CHECK(fs::exists(out / "customized.json"));
  CHECK(fs::exists(out / "training_log.jsonl"));
  CHECK(fs::exists(out / "metrics.json"));
  REQUIRE(run_cli("diff --checkpoints " + (out / "checkpoint.json").string() +
                  " " + (out / "customized.json").string()) == 0);
}

TEST_CASE("gradcheck subcommand exits zero") {
  CHECK(run_cli("gradcheck --instances 5") == 0);
}

TEST_CASE("a bad config exits with code 2") {
  auto bad = write_config("cli_bad.cfg", "nonsense = 1\n");
  const int status = run_cli("bench --config " + bad.string());
  CHECK(WEXITSTATUS(status) == 2);
}

#endif  // METAFORGE_CLI_PATH
