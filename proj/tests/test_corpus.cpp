// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>

#include <doctest.h>

#include "metaforge/corpus.hpp"

using namespace metaforge;
using namespace metaforge::corpus;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  auto p = fs::temp_directory_path() / name;
  fs::remove(p);
  return p;
}

void write_lines(const fs::path& p, const std::vector<std::string>& lines) {
  std::ofstream out(p);
  for (const auto& l : lines) out << l << '\n';
}

}  // namespace

TEST_CASE("22 pairs split 20 train / 2 valid") {
  auto p = temp_file("corpus22.jsonl");
  std::vector<std::string> lines;
  for (int i = 0; i < 22; ++i) {
    lines.push_back(R"({"task":"t","query":"a b","response":"c d"})");
  }
  write_lines(p, lines);
  auto [tasks, vocab] = load_jsonl(p, 64);
  REQUIRE(tasks.size() == 1);
  CHECK(tasks[0].train.size() == 20);
  CHECK(tasks[0].valid.size() == 2);
}

TEST_CASE("121 pairs split 110 train / 11 valid") {
  auto p = temp_file("corpus121.jsonl");
  std::vector<std::string> lines;
  for (int i = 0; i < 121; ++i) {
    lines.push_back(R"({"task":"u","query":"q","response":"r"})");
  }
  write_lines(p, lines);
  auto [tasks, vocab] = load_jsonl(p, 64);
  REQUIRE(tasks.size() == 1);
  CHECK(tasks[0].train.size() == 110);
  CHECK(tasks[0].valid.size() == 11);
}

TEST_CASE("empty file yields empty task list") {
  auto p = temp_file("corpus_empty.jsonl");
  write_lines(p, {});
  auto [tasks, vocab] = load_jsonl(p, 64);
  CHECK(tasks.empty());
}

TEST_CASE("malformed line reports its number") {
  auto p = temp_file("corpus_bad.jsonl");
  write_lines(p, {R"({"task":"t","query":"a","response":"b"})", "{nope"});
  CHECK_THROWS_WITH_AS(load_jsonl(p, 64), doctest::Contains("line 2"),
                       ParseError);
}

TEST_CASE("unknown tokens map to unk") {
  auto p = temp_file("corpus_unk.jsonl");
  write_lines(p, {R"({"task":"t","query":"a","response":"b"})"});
  Vocab tiny;  // reserved only
  auto tasks = load_jsonl(p, tiny);
  REQUIRE(tasks.size() == 1);
  CHECK(tasks[0].train[0].query == std::vector<int>{Vocab::kUnk});
}

TEST_CASE("vocab ranks by frequency then lexicographically") {
  std::vector<std::vector<std::string>> docs = {{"a", "a", "b"}};
  auto vocab = build_vocab(docs, 64);
  CHECK(vocab.id_of("a") == 4);
  CHECK(vocab.id_of("b") == 5);

  std::vector<std::vector<std::string>> tie_docs = {{"b", "a"}};
  auto tie_vocab = build_vocab(tie_docs, 64);
  CHECK(tie_vocab.id_of("a") == 4);
  CHECK(tie_vocab.id_of("b") == 5);
}

TEST_CASE("vocab truncates to max_size and maps the rest to unk") {
  std::vector<std::vector<std::string>> docs = {
      {"t0", "t1", "t2", "t3", "t4", "t5", "t6", "t7", "t8", "t9"}};
  auto vocab = build_vocab(docs, 6);
  CHECK(vocab.size() == 6);
  CHECK(vocab.id_of("t0") == 4);
  CHECK(vocab.id_of("t1") == 5);
  CHECK(vocab.id_of("t2") == Vocab::kUnk);
}

TEST_CASE("build_vocab requires room for reserved ids") {
  std::vector<std::vector<std::string>> docs = {{"a"}};
  CHECK_THROWS_AS(build_vocab(docs, 4), ContractError);
}

TEST_CASE("generator rejects bad parameters") {
  GenConfig cfg;
  cfg.n_tasks = 1;
  CHECK_THROWS_AS(gen_synthetic(cfg), ContractError);
  cfg = GenConfig{};
  cfg.pairs_per_task = 5;
  CHECK_THROWS_AS(gen_synthetic(cfg), ContractError);
  cfg = GenConfig{};
  cfg.overlap = 1.5;
  CHECK_THROWS_AS(gen_synthetic(cfg), ContractError);
}

TEST_CASE("overlap endpoints give identical / disjoint signatures") {
  GenConfig cfg;
  cfg.n_tasks = 4;
  cfg.pairs_per_task = 22;
  cfg.vocab_size = 64;

  cfg.overlap = 1.0;
  auto [same, v1] = gen_synthetic(cfg);
  for (std::size_t i = 1; i < same.size(); ++i) {
    CHECK(same[i].signature == same[0].signature);
  }

  cfg.overlap = 0.0;
  auto [disjoint, v2] = gen_synthetic(cfg);
  for (std::size_t i = 0; i < disjoint.size(); ++i) {
    for (std::size_t j = i + 1; j < disjoint.size(); ++j) {
      for (int id : disjoint[i].signature) {
        CHECK(disjoint[j].signature.count(id) == 0);
      }
    }
  }
}

TEST_CASE("10 tasks x 110 pairs split 100/10") {
  GenConfig cfg;
  cfg.n_tasks = 10;
  cfg.pairs_per_task = 110;
  auto [tasks, vocab] = gen_synthetic(cfg);
  REQUIRE(tasks.size() == 10);
  for (const auto& t : tasks) {
    CHECK(t.train.size() == 100);
    CHECK(t.valid.size() == 10);
  }
  CHECK(vocab.size() == 64);
}

TEST_CASE("same seed gives byte-identical corpora") {
  GenConfig cfg;
  cfg.n_tasks = 3;
  cfg.pairs_per_task = 22;
  cfg.seed = 99;
  auto [t1, v1] = gen_synthetic(cfg);
  auto [t2, v2] = gen_synthetic(cfg);
  auto p1 = temp_file("gen1.jsonl");
  auto p2 = temp_file("gen2.jsonl");
  save_jsonl(t1, v1, p1);
  save_jsonl(t2, v2, p2);
  std::ifstream f1(p1), f2(p2);
  std::string s1((std::istreambuf_iterator<char>(f1)), {});
  std::string s2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(s1 == s2);
  CHECK(!s1.empty());
}

TEST_CASE("signature tokens appear in ~70% of responses") {
  GenConfig cfg;
  cfg.n_tasks = 10;
  cfg.pairs_per_task = 110;  // 1100 pairs total
  cfg.seed = 5;
  auto [tasks, vocab] = gen_synthetic(cfg);
  std::size_t hits = 0, total = 0;
  for (const auto& task : tasks) {
    auto contains_sig = [&](const DialoguePair& pair) {
      for (int id : pair.response) {
        if (task.signature.count(id)) return true;
      }
      return false;
    };
    for (const auto& p : task.train) {
      hits += contains_sig(p);
      ++total;
    }
    for (const auto& p : task.valid) {
      hits += contains_sig(p);
      ++total;
    }
  }
  const double rate = static_cast<double>(hits) / static_cast<double>(total);
  CHECK(total >= 1000);
  CHECK(rate == doctest::Approx(0.7).epsilon(0.05 / 0.7));
}

TEST_CASE("save then load reproduces token ids exactly") {
  GenConfig cfg;
  cfg.n_tasks = 3;
  cfg.pairs_per_task = 33;
  cfg.seed = 42;
  auto [tasks, vocab] = gen_synthetic(cfg);
  auto p = temp_file("roundtrip.jsonl");
  save_jsonl(tasks, vocab, p);
  auto reloaded = load_jsonl(p, vocab);
  REQUIRE(reloaded.size() == tasks.size());
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    CHECK(reloaded[i].id == tasks[i].id);
    REQUIRE(reloaded[i].train.size() == tasks[i].train.size());
    REQUIRE(reloaded[i].valid.size() == tasks[i].valid.size());
    for (std::size_t k = 0; k < tasks[i].train.size(); ++k) {
      CHECK(reloaded[i].train[k].query == tasks[i].train[k].query);
      CHECK(reloaded[i].train[k].response == tasks[i].train[k].response);
    }
    for (std::size_t k = 0; k < tasks[i].valid.size(); ++k) {
      CHECK(reloaded[i].valid[k].query == tasks[i].valid[k].query);
      CHECK(reloaded[i].valid[k].response == tasks[i].valid[k].response);
    }
  }
}

TEST_CASE("vocab and signature sidecars round-trip") {
  GenConfig cfg;
  cfg.n_tasks = 2;
  cfg.pairs_per_task = 11;
  auto [tasks, vocab] = gen_synthetic(cfg);
  auto vp = temp_file("vocab.json");
  auto sp = temp_file("sigs.json");
  save_vocab(vocab, vp);
  save_signatures(tasks, vocab, sp);
  auto vocab2 = load_vocab(vp);
  CHECK(vocab2.id_to_token == vocab.id_to_token);
  auto tasks2 = tasks;
  for (auto& t : tasks2) t.signature.clear();
  load_signatures(tasks2, vocab2, sp);
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    CHECK(tasks2[i].signature == tasks[i].signature);
  }
}
