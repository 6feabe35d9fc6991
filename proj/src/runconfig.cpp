// SPDX-License-Identifier: Apache-2.0

#include "metaforge/runconfig.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace metaforge {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ParseError("config: bad boolean for " + key + ": " + v);
}

template <typename T>
T parse_number(const std::string& v, const std::string& key) {
  std::istringstream ss(v);
  T out;
  ss >> out;
  if (ss.fail() || !ss.eof()) {
    throw ParseError("config: bad value for " + key + ": " + v);
  }
  return out;
}

}  // namespace

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config: " + path.string());
  RunConfig cfg;

  std::map<std::string, std::function<void(const std::string&)>> setters;
  auto num = [&](const char* key, auto& field) {
    setters[key] = [key, &field](const std::string& v) {
      field = parse_number<std::decay_t<decltype(field)>>(v, key);
    };
  };
  auto boolean = [&](const char* key, bool& field) {
    setters[key] = [key, &field](const std::string& v) {
      field = parse_bool(v, key);
    };
  };
  auto text = [&](const char* key, std::string& field) {
    setters[key] = [&field](const std::string& v) { field = v; };
  };

  num("vocab_size", cfg.vocab_size);
  num("embed_dim", cfg.embed_dim);
  num("hidden_dim", cfg.hidden_dim);
  num("mlp_dim", cfg.mlp_dim);
  boolean("attention", cfg.attention);
  num("alpha", cfg.alpha);
  num("beta", cfg.beta);
  num("inner_steps", cfg.inner_steps);
  num("task_batch", cfg.task_batch);
  num("epochs", cfg.epochs);
  boolean("second_order", cfg.second_order);
  num("gamma", cfg.gamma);
  num("l1_weight", cfg.l1_weight);
  num("finetune_steps", cfg.finetune_steps);
  num("finetune_lr", cfg.finetune_lr);
  num("batch_size", cfg.batch_size);
  num("gen_tasks", cfg.gen_tasks);
  num("gen_pairs", cfg.gen_pairs);
  num("gen_overlap", cfg.gen_overlap);
  num("signature_size", cfg.signature_size);
  text("method", cfg.method);
  num("seed", cfg.seed);
  num("decode_max_len", cfg.decode_max_len);
  text("corpus", cfg.corpus_path);
  text("out", cfg.out_dir);

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ParseError("config line " + std::to_string(line_no) +
                       ": expected key = value");
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    auto it = setters.find(key);
    if (it == setters.end()) {
      throw ParseError("config line " + std::to_string(line_no) +
                       ": unknown key " + key);
    }
    it->second(value);
  }
  return cfg;
}

void RunConfig::apply_env() {
  if (const char* env = std::getenv("METAFORGE_SEED")) {
    seed = parse_number<std::uint64_t>(env, "METAFORGE_SEED");
  }
}

bench::BenchConfig RunConfig::bench_config() const {
  bench::BenchConfig cfg;
  cfg.model = model_config();
  cfg.train.alpha = alpha;
  cfg.train.beta = beta;
  cfg.train.inner_steps = inner_steps;
  cfg.train.task_batch = task_batch;
  cfg.train.epochs = epochs;
  cfg.train.second_order = second_order;
  cfg.train.seed = seed;
  cfg.prune.gamma = gamma;
  cfg.prune.l1_weight = l1_weight;
  cfg.prune.finetune_steps = finetune_steps;
  cfg.prune.finetune_lr = finetune_lr;
  cfg.prune.batch_size = batch_size;
  cfg.decode_max_len = decode_max_len;
  return cfg;
}

corpus::GenConfig RunConfig::gen_config() const {
  corpus::GenConfig cfg;
  cfg.n_tasks = gen_tasks;
  cfg.pairs_per_task = gen_pairs;
  cfg.overlap = gen_overlap;
  cfg.seed = seed;
  cfg.vocab_size = vocab_size;
  cfg.signature_size = signature_size;
  return cfg;
}

model::ModelConfig RunConfig::model_config() const {
  model::ModelConfig cfg;
  cfg.vocab_size = vocab_size;
  cfg.embed_dim = embed_dim;
  cfg.hidden_dim = hidden_dim;
  cfg.mlp_dim = mlp_dim;
  cfg.attention = attention;
  return cfg;
}

}  // namespace metaforge
