// SPDX-License-Identifier: Apache-2.0

#include "metaforge/mask.hpp"

#include <fstream>

#include <json.hpp>

namespace metaforge {

using nlohmann::json;

EdgeMask EdgeMask::all_ones(
    std::string task_id,
    const std::vector<std::pair<std::size_t, std::size_t>>& dims) {
  EdgeMask mask;
  mask.task_id = std::move(task_id);
  for (const auto& [r, c] : dims) {
    mask.layers.push_back(Layer{r, c, std::vector<double>(r * c, 1.0)});
  }
  return mask;
}

const ad::TensorPtr& EdgeMask::layer_tensor(std::size_t l) const {
  if (tensors_.size() != layers.size()) {
    tensors_.clear();
    for (const auto& layer : layers) {
      tensors_.push_back(
          ad::Tensor::leaf({layer.rows, layer.cols}, layer.keep, false));
    }
  }
  return tensors_[l];
}

std::size_t EdgeMask::middle_kept() const {
  std::size_t n = 0;
  for (std::size_t l = 1; l + 1 < layers.size(); ++l) {
    for (double v : layers[l].keep) n += (v != 0.0);
  }
  return n;
}

std::size_t EdgeMask::middle_total() const {
  std::size_t n = 0;
  for (std::size_t l = 1; l + 1 < layers.size(); ++l) {
    n += layers[l].keep.size();
  }
  return n;
}

bool EdgeMask::same_geometry(const EdgeMask& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].rows != other.layers[l].rows ||
        layers[l].cols != other.layers[l].cols) {
      return false;
    }
  }
  return true;
}

void EdgeMask::validate() const {
  if (layers.size() < 2) throw ContractError("mask: need at least 2 layers");
  const std::size_t last = layers.size() - 1;
  for (double v : layers[0].keep) {
    if (v != 1.0) throw ContractError("mask " + task_id + ": layer 1 pruned");
  }
  for (double v : layers[last].keep) {
    if (v != 1.0) {
      throw ContractError("mask " + task_id + ": output layer pruned");
    }
  }
  for (auto& layer : layers) {
    for (double v : layer.keep) {
      if (v != 0.0 && v != 1.0) {
        throw ContractError("mask " + task_id + ": non-binary entry");
      }
    }
  }
  // Dead-node propagation: a kept edge in middle layer l must end on a node
  // with a kept edge in layer l+1.
  for (std::size_t l = 1; l + 1 < layers.size(); ++l) {
    const Layer& cur = layers[l];
    const Layer& above = layers[l + 1];
    for (std::size_t c = 0; c < cur.cols; ++c) {
      bool col_used = false;
      for (std::size_t r = 0; r < cur.rows && !col_used; ++r) {
        col_used = cur.at(r, c) != 0.0;
      }
      if (!col_used) continue;
      bool alive = false;
      for (std::size_t k = 0; k < above.cols && !alive; ++k) {
        alive = above.at(c, k) != 0.0;
      }
      if (!alive) {
        throw ContractError("mask " + task_id + ": dead node " +
                            std::to_string(c) + " kept in layer " +
                            std::to_string(l + 1));
      }
    }
  }
}

void save_masks(const std::vector<EdgeMask>& masks,
                const std::filesystem::path& path) {
  json arr = json::array();
  for (const auto& mask : masks) {
    json layers = json::array();
    for (const auto& layer : mask.layers) {
      json rows = json::array();
      for (std::size_t r = 0; r < layer.rows; ++r) {
        json row = json::array();
        for (std::size_t c = 0; c < layer.cols; ++c) {
          row.push_back(static_cast<int>(layer.at(r, c)));
        }
        rows.push_back(std::move(row));
      }
      layers.push_back(std::move(rows));
    }
    arr.push_back(json{{"task_id", mask.task_id}, {"layers", layers}});
  }
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write mask file: " + path.string());
  out << arr.dump(1) << '\n';
}

std::vector<EdgeMask> load_masks(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open mask file: " + path.string());
  json arr;
  try {
    in >> arr;
  } catch (const json::exception& e) {
    throw ParseError(std::string("masks: ") + e.what());
  }
  std::vector<EdgeMask> masks;
  for (const auto& obj : arr) {
    EdgeMask mask;
    mask.task_id = obj.at("task_id").get<std::string>();
    for (const auto& rows : obj.at("layers")) {
      EdgeMask::Layer layer;
      layer.rows = rows.size();
      layer.cols = rows.empty() ? 0 : rows[0].size();
      for (const auto& row : rows) {
        if (row.size() != layer.cols) {
          throw ParseError("masks: ragged rows in " + mask.task_id);
        }
        for (const auto& v : row) {
          layer.keep.push_back(v.get<double>());
        }
      }
      mask.layers.push_back(std::move(layer));
    }
    masks.push_back(std::move(mask));
  }
  return masks;
}

}  // namespace metaforge
