// SPDX-License-Identifier: Apache-2.0

#include "metaforge/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "metaforge/rng.hpp"

namespace metaforge::corpus {

using nlohmann::json;

namespace {

constexpr const char* kReserved[4] = {"<pad>", "<sos>", "<eos>", "<unk>"};

std::vector<std::string> tokenize(const std::string& text) {
  std::istringstream ss(text);
  std::vector<std::string> out;
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

struct RawPair {
  std::vector<std::string> query;
  std::vector<std::string> response;
};

struct RawTask {
  std::string id;
  std::vector<RawPair> pairs;
};

std::vector<RawTask> read_raw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open corpus file: " + path.string());
  std::vector<RawTask> tasks;
  std::map<std::string, std::size_t> by_id;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!obj.contains("task") || !obj.contains("query") ||
        !obj.contains("response")) {
      throw ParseError("line " + std::to_string(line_no) +
                       ": expected keys task/query/response");
    }
    RawPair pair{tokenize(obj["query"].get<std::string>()),
                 tokenize(obj["response"].get<std::string>())};
    if (pair.query.empty() || pair.response.empty()) {
      throw ParseError("line " + std::to_string(line_no) +
                       ": empty query or response");
    }
    const std::string id = obj["task"].get<std::string>();
    auto it = by_id.find(id);
    if (it == by_id.end()) {
      by_id.emplace(id, tasks.size());
      tasks.push_back(RawTask{id, {}});
      it = by_id.find(id);
    }
    tasks[it->second].pairs.push_back(std::move(pair));
  }
  return tasks;
}

std::vector<int> encode(const std::vector<std::string>& tokens,
                        const Vocab& vocab) {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(vocab.id_of(t));
  return ids;
}

// Every 11th pair (1-based within the task) goes to valid.
Task split_task(const RawTask& raw, const Vocab& vocab) {
  Task task;
  task.id = raw.id;
  for (std::size_t k = 0; k < raw.pairs.size(); ++k) {
    DialoguePair pair{encode(raw.pairs[k].query, vocab),
                      encode(raw.pairs[k].response, vocab)};
    if ((k + 1) % 11 == 0) {
      task.valid.push_back(std::move(pair));
    } else {
      task.train.push_back(std::move(pair));
    }
  }
  return task;
}

std::string detokenize(std::span<const int> ids, const Vocab& vocab) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += vocab.token_of(ids[i]);
  }
  return out;
}

}  // namespace

Vocab::Vocab() {
  for (const char* t : kReserved) {
    token_to_id.emplace(t, static_cast<int>(id_to_token.size()));
    id_to_token.emplace_back(t);
  }
}

int Vocab::id_of(const std::string& token) const {
  auto it = token_to_id.find(token);
  return it == token_to_id.end() ? kUnk : it->second;
}

const std::string& Vocab::token_of(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token.size()) {
    throw IndexError("vocab: id " + std::to_string(id) + " out of range");
  }
  return id_to_token[static_cast<std::size_t>(id)];
}

int Vocab::add(const std::string& token) {
  auto it = token_to_id.find(token);
  if (it != token_to_id.end()) return it->second;
  const int id = static_cast<int>(id_to_token.size());
  token_to_id.emplace(token, id);
  id_to_token.push_back(token);
  return id;
}

std::vector<Task> load_jsonl(const std::filesystem::path& path,
                             const Vocab& vocab) {
  std::vector<Task> tasks;
  for (const auto& raw : read_raw(path)) {
    tasks.push_back(split_task(raw, vocab));
  }
  return tasks;
}

std::pair<std::vector<Task>, Vocab> load_jsonl(
    const std::filesystem::path& path, std::size_t max_vocab) {
  const auto raw = read_raw(path);
  std::vector<std::vector<std::string>> docs;
  for (const auto& t : raw) {
    for (const auto& p : t.pairs) {
      docs.push_back(p.query);
      docs.push_back(p.response);
    }
  }
  Vocab vocab = build_vocab(docs, max_vocab);
  std::vector<Task> tasks;
  for (const auto& t : raw) tasks.push_back(split_task(t, vocab));
  return {std::move(tasks), std::move(vocab)};
}

void save_jsonl(std::span<const Task> tasks, const Vocab& vocab,
                const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write corpus file: " + path.string());
  for (const auto& task : tasks) {
    std::size_t ti = 0, vi = 0;
    const std::size_t total = task.train.size() + task.valid.size();
    for (std::size_t k = 1; k <= total; ++k) {
      const DialoguePair& pair =
          (k % 11 == 0 && vi < task.valid.size()) ? task.valid[vi++]
                                                  : task.train[ti++];
      json obj;
      obj["task"] = task.id;
      obj["query"] = detokenize(pair.query, vocab);
      obj["response"] = detokenize(pair.response, vocab);
      out << obj.dump() << '\n';
    }
  }
}

Vocab build_vocab(std::span<const std::vector<std::string>> documents,
                  std::size_t max_size) {
  if (max_size < 5) throw ContractError("build_vocab: max_size must be >= 5");
  std::map<std::string, std::size_t> freq;
  for (const auto& doc : documents) {
    for (const auto& tok : doc) ++freq[tok];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(),
                                                          freq.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) {
                     if (a.second != b.second) return a.second > b.second;
                     return a.first < b.first;
                   });
  Vocab vocab;
  for (const auto& [tok, count] : ranked) {
    (void)count;
    if (vocab.size() >= max_size) break;
    vocab.add(tok);
  }
  return vocab;
}

void save_vocab(const Vocab& vocab, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write vocab file: " + path.string());
  out << json(vocab.id_to_token).dump(2) << '\n';
}

Vocab load_vocab(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open vocab file: " + path.string());
  json arr;
  try {
    in >> arr;
  } catch (const json::exception& e) {
    throw ParseError(std::string("vocab: ") + e.what());
  }
  Vocab vocab;
  std::size_t i = 0;
  for (const auto& tok : arr) {
    const std::string t = tok.get<std::string>();
    if (i < 4) {
      if (t != kReserved[i]) {
        throw ParseError("vocab: reserved id " + std::to_string(i) +
                         " must be " + kReserved[i]);
      }
    } else {
      vocab.add(t);
    }
    ++i;
  }
  return vocab;
}

void save_signatures(std::span<const Task> tasks, const Vocab& vocab,
                     const std::filesystem::path& path) {
  json obj = json::object();
  for (const auto& task : tasks) {
    json arr = json::array();
    for (int id : task.signature) arr.push_back(vocab.token_of(id));
    obj[task.id] = arr;
  }
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write signature file: " + path.string());
  out << obj.dump(2) << '\n';
}

void load_signatures(std::vector<Task>& tasks, const Vocab& vocab,
                     const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open signature file: " + path.string());
  json obj;
  try {
    in >> obj;
  } catch (const json::exception& e) {
    throw ParseError(std::string("signatures: ") + e.what());
  }
  for (auto& task : tasks) {
    task.signature.clear();
    if (!obj.contains(task.id)) continue;
    for (const auto& tok : obj[task.id]) {
      task.signature.insert(vocab.id_of(tok.get<std::string>()));
    }
  }
}

std::pair<std::vector<Task>, Vocab> gen_synthetic(const GenConfig& cfg) {
  if (cfg.n_tasks < 2) throw ContractError("gen_synthetic: n_tasks must be >= 2");
  if (cfg.pairs_per_task < 11) {
    throw ContractError("gen_synthetic: pairs_per_task must be >= 11");
  }
  if (cfg.overlap < 0.0 || cfg.overlap > 1.0) {
    throw ContractError("gen_synthetic: overlap must lie in [0,1]");
  }
  const std::size_t s = cfg.signature_size;
  const std::size_t common =
      static_cast<std::size_t>(std::llround(2.0 * static_cast<double>(s) *
                                            cfg.overlap / (1.0 + cfg.overlap)));
  const std::size_t unique = s - common;
  const std::size_t sig_total = common + cfg.n_tasks * unique;

  static const char* kTemplateWords[] = {
      "hi",   "hello", "hey",  "how",  "are",   "you",   "what", "do",
      "like", "i",     "love", "the",  "and",   "today", "yes",  "not"};
  const std::size_t n_template = std::size(kTemplateWords);

  if (cfg.vocab_size < 4 + sig_total + n_template) {
    throw ContractError(
        "gen_synthetic: vocab_size " + std::to_string(cfg.vocab_size) +
        " too small for " + std::to_string(sig_total) +
        " signature tokens plus templates");
  }

  Vocab vocab;
  std::vector<int> template_ids;
  for (const char* w : kTemplateWords) template_ids.push_back(vocab.add(w));

  std::vector<int> common_sig;
  for (std::size_t k = 0; k < common; ++k) {
    common_sig.push_back(vocab.add("topic_all_" + std::to_string(k)));
  }
  std::vector<std::vector<int>> task_sigs(cfg.n_tasks);
  for (std::size_t t = 0; t < cfg.n_tasks; ++t) {
    task_sigs[t] = common_sig;
    for (std::size_t k = 0; k < unique; ++k) {
      task_sigs[t].push_back(
          vocab.add("topic_" + std::to_string(t) + "_" + std::to_string(k)));
    }
  }
  // Filler words pad the vocabulary to the requested size.
  std::vector<int> filler_ids;
  while (vocab.size() < cfg.vocab_size) {
    filler_ids.push_back(
        vocab.add("w" + std::to_string(vocab.size())));
  }
  const std::vector<int>& extras =
      filler_ids.empty() ? template_ids : filler_ids;

  Rng rng(cfg.seed);
  auto pick = [&rng](const std::vector<int>& pool) {
    return pool[rand_index(rng, pool.size())];
  };
  // Tasks lean on a dominant signature token, the way a persona leans on a
  // dominant trait; half of the signature mentions use it.
  auto pick_sig = [&rng, &pick](const std::vector<int>& sig) {
    return rand_real(rng) < 0.5 ? sig.back() : pick(sig);
  };

  const int id_hi = template_ids[0], id_hello = template_ids[1],
            id_hey = template_ids[2], id_how = template_ids[3],
            id_are = template_ids[4], id_you = template_ids[5],
            id_what = template_ids[6], id_do = template_ids[7],
            id_like = template_ids[8], id_i = template_ids[9],
            id_love = template_ids[10], id_the = template_ids[11],
            id_and = template_ids[12], id_today = template_ids[13],
            id_yes = template_ids[14], id_not = template_ids[15];

  std::vector<Task> tasks(cfg.n_tasks);
  const int width = cfg.n_tasks >= 100 ? 4 : 2;
  for (std::size_t t = 0; t < cfg.n_tasks; ++t) {
    Task& task = tasks[t];
    std::string num = std::to_string(t);
    while (static_cast<int>(num.size()) < width) num = "0" + num;
    task.id = "task" + num;
    task.signature.insert(task_sigs[t].begin(), task_sigs[t].end());

    for (std::size_t k = 1; k <= cfg.pairs_per_task; ++k) {
      DialoguePair pair;
      switch (rand_index(rng, 4)) {
        case 0:
          pair.query = {id_hi, id_how, id_are, id_you};
          break;
        case 1:
          pair.query = {id_what, id_do, id_you, id_like};
          break;
        case 2:
          pair.query = {id_hey, id_what, id_do, id_you, id_do, id_today};
          break;
        default:
          pair.query = {id_hello, id_you, id_like, id_the, pick(extras)};
          break;
      }
      if (rand_real(rng) < cfg.signature_rate) {
        const int sig_a = pick_sig(task_sigs[t]);
        if (rand_real(rng) < 0.5) {
          pair.response = {id_i, id_love, sig_a};
        } else {
          pair.response = {id_yes, id_i, id_like, sig_a, id_and,
                           pick_sig(task_sigs[t])};
        }
      } else {
        if (rand_real(rng) < 0.5) {
          pair.response = {id_not, id_the, pick(extras), id_today};
        } else {
          pair.response = {id_i, id_do, id_not, id_like, pick(extras)};
        }
      }
      if (k % 11 == 0) {
        task.valid.push_back(std::move(pair));
      } else {
        task.train.push_back(std::move(pair));
      }
    }
  }
  return {std::move(tasks), std::move(vocab)};
}

}  // namespace metaforge::corpus
