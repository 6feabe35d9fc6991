// SPDX-License-Identifier: Apache-2.0
//
// Per-task binary mask over the private-module weight matrices. Layers 1 and
// L are never pruned; a kept middle-layer edge must feed a node that still
// has at least one kept edge in the layer above (dead-node propagation).
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "metaforge/autodiff.hpp"

namespace metaforge {

struct EdgeMask {
  struct Layer {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> keep;  // row-major, entries 0.0 or 1.0

    double at(std::size_t r, std::size_t c) const { return keep[r * cols + c]; }
    void set(std::size_t r, std::size_t c, double v) { keep[r * cols + c] = v; }
  };

  std::string task_id;
  std::vector<Layer> layers;  // one per private weight matrix

  static EdgeMask all_ones(std::string task_id,
                           const std::vector<std::pair<std::size_t,
                                                       std::size_t>>& dims);

  std::size_t num_layers() const { return layers.size(); }

  // Constant tensors for mask_mul, built once and shared across tapes.
  const ad::TensorPtr& layer_tensor(std::size_t l) const;

  // Kept / total counts over the middle layers (the prunable region).
  std::size_t middle_kept() const;
  std::size_t middle_total() const;

  bool same_geometry(const EdgeMask& other) const;

  // Throws ContractError if either structural invariant fails.
  void validate() const;

 private:
  mutable std::vector<ad::TensorPtr> tensors_;
};

void save_masks(const std::vector<EdgeMask>& masks,
                const std::filesystem::path& path);
std::vector<EdgeMask> load_masks(const std::filesystem::path& path);

}  // namespace metaforge
