// SPDX-License-Identifier: Apache-2.0
//
// Automatic metrics: perplexity, corpus BLEU (n = 1..4, add-1 smoothing on
// n >= 2, standard brevity penalty), distinct-1, pairwise model difference
// (Diff Score), before/after adaptation difference (Delta Score), and a
// mechanical task-consistency proxy (fraction of responses containing a
// signature token).
#pragma once

#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "metaforge/corpus.hpp"
#include "metaforge/mask.hpp"
#include "metaforge/model.hpp"
#include "metaforge/params.hpp"

namespace metaforge::eval {

// exp(total teacher-forced NLL / total target-token count).
double perplexity(const ParamStore& params, const model::ModelConfig& cfg,
                  std::span<const corpus::DialoguePair> pairs,
                  const EdgeMask* mask);

// Corpus-level BLEU in [0,1].
double bleu(std::span<const std::vector<int>> candidates,
            std::span<const std::vector<int>> references);

// |unique tokens| / |total tokens| over all responses.
double dist1(std::span<const std::vector<int>> responses);

// Mean over unordered model pairs of ||theta_i - theta_j||^2 / M.
double diff_score(std::span<const ParamStore> models);

// Mean over tasks of ||theta_after - theta_before||^2 / M.
double delta_score(std::span<const ParamStore> before,
                   std::span<const ParamStore> after);

// Fraction of responses containing at least one signature token.
double consistency_proxy(std::span<const std::vector<int>> responses,
                         const std::set<int>& signature);

struct TaskMetrics {
  std::string task_id;
  double ppl = 0.0;
  double bleu = 0.0;
  double dist1 = 0.0;
  double consistency = 0.0;
};

struct MetricsReport {
  std::string method;
  double ppl = 0.0;
  double bleu = 0.0;
  double dist1 = 0.0;
  double consistency = 0.0;
  double diff_score = 0.0;
  double delta_score = 0.0;
  std::vector<TaskMetrics> per_task;
};

void save_metrics(std::span<const MetricsReport> reports,
                  const std::filesystem::path& path);
// CSV table, one row per method, mirroring the metric column layout.
void save_metrics_csv(std::span<const MetricsReport> reports,
                      const std::filesystem::path& path);

}  // namespace metaforge::eval
