// SPDX-License-Identifier: Apache-2.0
//
// Task and dialogue-pair data model: JSONL ingestion, vocabulary,
// deterministic 10:1 train/valid splitting, and a synthetic task generator
// whose axes (pairs per task, signature overlap) mirror the impact-factor
// experiment grid.
#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "metaforge/errors.hpp"

namespace metaforge::corpus {

struct Vocab {
  static constexpr int kPad = 0;
  static constexpr int kSos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  std::vector<std::string> id_to_token;  // [0..3] reserved
  std::unordered_map<std::string, int> token_to_id;

  Vocab();  // reserved entries only

  std::size_t size() const { return id_to_token.size(); }
  int id_of(const std::string& token) const;  // kUnk when absent
  const std::string& token_of(int id) const;
  int add(const std::string& token);  // idempotent
};

struct DialoguePair {
  std::vector<int> query;
  std::vector<int> response;
};

struct Task {
  std::string id;
  std::vector<DialoguePair> train;
  std::vector<DialoguePair> valid;
  std::set<int> signature;  // synthetic tasks only
};

// --- JSONL corpus format ------------------------------------------------
// One object per line: {"task": str, "query": str, "response": str},
// whitespace tokenization. Pairs are grouped by task id (per-task order
// preserved) and every 11th pair of a task goes to its valid split.

std::vector<Task> load_jsonl(const std::filesystem::path& path,
                             const Vocab& vocab);

// Reads the file, builds the vocabulary from it (see build_vocab), then
// encodes.
std::pair<std::vector<Task>, Vocab> load_jsonl(
    const std::filesystem::path& path, std::size_t max_vocab);

// Inverse of the split rule: emits pairs in original order so a reload
// reproduces identical tasks.
void save_jsonl(std::span<const Task> tasks, const Vocab& vocab,
                const std::filesystem::path& path);

// Tokens ranked by frequency, ties broken lexicographically, truncated to
// max_size entries including the 4 reserved ids.
Vocab build_vocab(std::span<const std::vector<std::string>> documents,
                  std::size_t max_size);

void save_vocab(const Vocab& vocab, const std::filesystem::path& path);
Vocab load_vocab(const std::filesystem::path& path);

// Sidecar for synthetic task signatures: {"task_id": ["tok", ...], ...}.
void save_signatures(std::span<const Task> tasks, const Vocab& vocab,
                     const std::filesystem::path& path);
void load_signatures(std::vector<Task>& tasks, const Vocab& vocab,
                     const std::filesystem::path& path);

// --- Synthetic generator ------------------------------------------------

struct GenConfig {
  std::size_t n_tasks = 10;
  std::size_t pairs_per_task = 110;
  double overlap = 0.2;  // pairwise signature Jaccard target
  std::uint64_t seed = 0;
  std::size_t vocab_size = 64;      // including reserved ids
  std::size_t signature_size = 6;   // tokens per task signature
  double signature_rate = 0.7;      // P(response embeds a signature token)
};

// Deterministic synthetic corpus. Task signatures share `c` tokens with
// c = round(2*s*overlap/(1+overlap)), which makes the pairwise Jaccard
// index hit the requested overlap exactly when that expression is integral
// (always at 0 and 1).
std::pair<std::vector<Task>, Vocab> gen_synthetic(const GenConfig& cfg);

}  // namespace metaforge::corpus
