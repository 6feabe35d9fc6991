// SPDX-License-Identifier: Apache-2.0
//
// Independent brute-force trace of the private-network pruning procedure,
// written over explicit edge/node sets and kept separate from the library
// implementation it checks. Layer k (1-based) connects node column set N_k
// (rows) to N_{k+1} (cols).
#pragma once

#include <cmath>
#include <set>
#include <tuple>
#include <vector>

#include "metaforge/mask.hpp"

namespace metaforge::testing {

struct BruteForcePruner {
  using Edge = std::tuple<std::size_t, std::size_t, std::size_t>;  // k, r, c
  using Node = std::pair<std::size_t, std::size_t>;                // k, idx

  static std::vector<EdgeMask::Layer> prune(
      const std::vector<std::vector<std::vector<double>>>& weights,
      double gamma) {
    const std::size_t L = weights.size();
    std::set<Edge> e_keep;
    std::set<Node> n_keep;

    auto rows = [&](std::size_t k) { return weights[k - 1].size(); };
    auto cols = [&](std::size_t k) { return weights[k - 1][0].size(); };

    // E_keep <- E_1 u E_L
    for (std::size_t r = 0; r < rows(1); ++r) {
      for (std::size_t c = 0; c < cols(1); ++c) e_keep.insert({1, r, c});
    }
    for (std::size_t r = 0; r < rows(L); ++r) {
      for (std::size_t c = 0; c < cols(L); ++c) e_keep.insert({L, r, c});
    }
    // N_keep <- N_L u N_1
    for (std::size_t i = 0; i < rows(L); ++i) n_keep.insert({L, i});
    for (std::size_t i = 0; i < rows(1); ++i) n_keep.insert({1, i});

    for (std::size_t k = L - 1; k > 1; --k) {
      for (std::size_t r = 0; r < rows(k); ++r) {
        for (std::size_t c = 0; c < cols(k); ++c) {
          const bool above_alive = n_keep.count({k + 1, c}) > 0;
          if (std::fabs(weights[k - 1][r][c]) > gamma && above_alive) {
            e_keep.insert({k, r, c});
          }
        }
      }
      for (std::size_t n = 0; n < rows(k); ++n) {
        for (std::size_t c = 0; c < cols(k); ++c) {
          if (e_keep.count({k, n, c})) {
            n_keep.insert({k, n});
            break;
          }
        }
      }
    }

    std::vector<EdgeMask::Layer> out;
    for (std::size_t k = 1; k <= L; ++k) {
      EdgeMask::Layer layer{rows(k), cols(k),
                            std::vector<double>(rows(k) * cols(k), 0.0)};
      for (std::size_t r = 0; r < rows(k); ++r) {
        for (std::size_t c = 0; c < cols(k); ++c) {
          if (e_keep.count({k, r, c})) layer.set(r, c, 1.0);
        }
      }
      out.push_back(std::move(layer));
    }
    return out;
  }
};

}  // namespace metaforge::testing
