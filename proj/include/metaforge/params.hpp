// SPDX-License-Identifier: Apache-2.0
//
// Named, partitioned parameter storage. Names carry the module partition as
// a prefix ("shared.", "private.", "gate."); entries are kept sorted by name
// so that iteration order, flattening and checkpoint round-trips are all
// canonical.
#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "metaforge/autodiff.hpp"

namespace metaforge {

class ParamStore {
 public:
  void insert(std::string name, ad::TensorPtr tensor);
  const ad::TensorPtr& at(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::size_t count() const { return items_.size(); }
  std::size_t total_size() const;

  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

  // Deep copy with fresh tensors (grads zeroed).
  ParamStore clone() const;

  void zero_grad();
  // w -= lr * grad on every tensor.
  void sgd_step(double lr);

  bool same_geometry(const ParamStore& other) const;
  // Values of all tensors in name order.
  std::vector<double> flatten() const;

  std::vector<std::pair<std::string, ad::TensorPtr>>& items() {
    return items_;
  }
  const std::vector<std::pair<std::string, ad::TensorPtr>>& items() const {
    return items_;
  }

 private:
  std::vector<std::pair<std::string, ad::TensorPtr>> items_;  // name-sorted
};

// Checkpoint file: flat JSON map name -> {shape, values} with
// round-trip-exact decimal floats.
void save_checkpoint(const ParamStore& params,
                     const std::filesystem::path& path);
ParamStore load_checkpoint(const std::filesystem::path& path);

}  // namespace metaforge
