// SPDX-License-Identifier: Apache-2.0

#include "metaforge/eval.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

namespace metaforge::eval {

double perplexity(const ParamStore& params, const model::ModelConfig& cfg,
                  std::span<const corpus::DialoguePair> pairs,
                  const EdgeMask* mask) {
  if (pairs.empty()) throw ContractError("perplexity: no pairs");
  double total_nll = 0.0;
  std::size_t total_tokens = 0;
  for (const auto& pair : pairs) {
    ad::Tape tape;
    total_nll += model::sequence_nll(tape, params, cfg, pair, mask)->item();
    total_tokens += pair.response.size() + 1;  // + end-of-sequence target
  }
  return std::exp(total_nll / static_cast<double>(total_tokens));
}

double bleu(std::span<const std::vector<int>> candidates,
            std::span<const std::vector<int>> references) {
  if (candidates.empty() || candidates.size() != references.size()) {
    throw ContractError("bleu: need equally many candidates and references");
  }
  constexpr std::size_t kMaxN = 4;
  std::size_t clipped[kMaxN] = {0, 0, 0, 0};
  std::size_t total[kMaxN] = {0, 0, 0, 0};
  std::size_t cand_len = 0, ref_len = 0;

  using Ngram = std::vector<int>;
  for (std::size_t s = 0; s < candidates.size(); ++s) {
    const auto& cand = candidates[s];
    const auto& ref = references[s];
    cand_len += cand.size();
    ref_len += ref.size();
    for (std::size_t n = 1; n <= kMaxN; ++n) {
      if (cand.size() < n) continue;
      std::map<Ngram, std::size_t> ref_counts;
      if (ref.size() >= n) {
        for (std::size_t i = 0; i + n <= ref.size(); ++i) {
          ++ref_counts[Ngram(ref.begin() + i, ref.begin() + i + n)];
        }
      }
      std::map<Ngram, std::size_t> cand_counts;
      for (std::size_t i = 0; i + n <= cand.size(); ++i) {
        ++cand_counts[Ngram(cand.begin() + i, cand.begin() + i + n)];
      }
      for (const auto& [gram, count] : cand_counts) {
        total[n - 1] += count;
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) {
          clipped[n - 1] += std::min(count, it->second);
        }
      }
    }
  }

  if (cand_len == 0) return 0.0;
  if (clipped[0] == 0) return 0.0;

  double log_precision = 0.0;
  for (std::size_t n = 1; n <= kMaxN; ++n) {
    double p;
    if (n == 1) {
      p = static_cast<double>(clipped[0]) / static_cast<double>(total[0]);
    } else {
      // add-1 smoothing on higher-order counts
      p = (static_cast<double>(clipped[n - 1]) + 1.0) /
          (static_cast<double>(total[n - 1]) + 1.0);
    }
    log_precision += std::log(p);
  }
  double bp = 1.0;
  if (cand_len < ref_len) {
    bp = std::exp(1.0 - static_cast<double>(ref_len) /
                            static_cast<double>(cand_len));
  }
  return bp * std::exp(log_precision / static_cast<double>(kMaxN));
}

double dist1(std::span<const std::vector<int>> responses) {
  std::size_t total = 0;
  std::set<int> unique;
  for (const auto& r : responses) {
    total += r.size();
    unique.insert(r.begin(), r.end());
  }
  if (total == 0) throw ContractError("dist1: all responses empty");
  return static_cast<double>(unique.size()) / static_cast<double>(total);
}

namespace {

double squared_distance_over_m(const ParamStore& a, const ParamStore& b) {
  if (!a.same_geometry(b)) throw ContractError("diff: geometry mismatch");
  double sum = 0.0;
  std::size_t m = 0;
  auto ita = a.begin();
  auto itb = b.begin();
  for (; ita != a.end(); ++ita, ++itb) {
    const auto& va = ita->second->values;
    const auto& vb = itb->second->values;
    for (std::size_t k = 0; k < va.size(); ++k) {
      const double d = va[k] - vb[k];
      sum += d * d;
    }
    m += va.size();
  }
  return sum / static_cast<double>(m);
}

}  // namespace

double diff_score(std::span<const ParamStore> models) {
  if (models.size() < 2) return 0.0;
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < models.size(); ++i) {
    for (std::size_t j = i + 1; j < models.size(); ++j) {
      sum += squared_distance_over_m(models[i], models[j]);
      ++pairs;
    }
  }
  return sum / static_cast<double>(pairs);
}

double delta_score(std::span<const ParamStore> before,
                   std::span<const ParamStore> after) {
  if (before.size() != after.size()) {
    throw ContractError("delta_score: list length mismatch");
  }
  if (before.empty()) throw ContractError("delta_score: empty lists");
  double sum = 0.0;
  for (std::size_t i = 0; i < before.size(); ++i) {
    sum += squared_distance_over_m(before[i], after[i]);
  }
  return sum / static_cast<double>(before.size());
}

double consistency_proxy(std::span<const std::vector<int>> responses,
                         const std::set<int>& signature) {
  if (responses.empty()) throw ContractError("consistency: no responses");
  if (signature.empty()) throw ContractError("consistency: empty signature");
  std::size_t hits = 0;
  for (const auto& r : responses) {
    for (int id : r) {
      if (signature.count(id)) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(responses.size());
}

namespace {

nlohmann::json report_json(const MetricsReport& r) {
  nlohmann::json obj;
  obj["method"] = r.method;
  obj["ppl"] = r.ppl;
  obj["bleu"] = r.bleu;
  obj["dist1"] = r.dist1;
  obj["consistency"] = r.consistency;
  obj["diff_score"] = r.diff_score;
  obj["delta_score"] = r.delta_score;
  nlohmann::json per_task = nlohmann::json::array();
  for (const auto& t : r.per_task) {
    per_task.push_back({{"task_id", t.task_id},
                        {"ppl", t.ppl},
                        {"bleu", t.bleu},
                        {"dist1", t.dist1},
                        {"consistency", t.consistency}});
  }
  obj["per_task"] = std::move(per_task);
  return obj;
}

}  // namespace

void save_metrics(std::span<const MetricsReport> reports,
                  const std::filesystem::path& path) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : reports) arr.push_back(report_json(r));
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write metrics: " + path.string());
  out << arr.dump(1) << '\n';
}

void save_metrics_csv(std::span<const MetricsReport> reports,
                      const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write metrics csv: " + path.string());
  out << "method,ppl,bleu,dist1,consistency,diff_score,delta_score\n";
  out.precision(17);
  for (const auto& r : reports) {
    out << r.method << ',' << r.ppl << ',' << r.bleu << ',' << r.dist1 << ','
        << r.consistency << ',' << r.diff_score << ',' << r.delta_score
        << '\n';
  }
}

}  // namespace metaforge::eval
