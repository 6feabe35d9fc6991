// SPDX-License-Identifier: Apache-2.0

#include "metaforge/params.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

namespace metaforge {

using nlohmann::json;

void ParamStore::insert(std::string name, ad::TensorPtr tensor) {
  auto it = std::lower_bound(
      items_.begin(), items_.end(), name,
      [](const auto& item, const std::string& n) { return item.first < n; });
  if (it != items_.end() && it->first == name) {
    throw ContractError("param store: duplicate name " + name);
  }
  items_.emplace(it, std::move(name), std::move(tensor));
}

const ad::TensorPtr& ParamStore::at(std::string_view name) const {
  auto it = std::lower_bound(
      items_.begin(), items_.end(), name,
      [](const auto& item, std::string_view n) { return item.first < n; });
  if (it == items_.end() || it->first != name) {
    throw ContractError("param store: missing name " + std::string(name));
  }
  return it->second;
}

bool ParamStore::contains(std::string_view name) const {
  auto it = std::lower_bound(
      items_.begin(), items_.end(), name,
      [](const auto& item, std::string_view n) { return item.first < n; });
  return it != items_.end() && it->first == name;
}

std::size_t ParamStore::total_size() const {
  std::size_t n = 0;
  for (const auto& [name, t] : items_) n += t->size();
  return n;
}

ParamStore ParamStore::clone() const {
  ParamStore copy;
  for (const auto& [name, t] : items_) {
    copy.items_.emplace_back(name,
                             ad::Tensor::leaf(t->shape, t->values, true));
  }
  return copy;
}

void ParamStore::zero_grad() {
  for (auto& [name, t] : items_) t->zero_grad();
}

void ParamStore::sgd_step(double lr) {
  for (auto& [name, t] : items_) {
    for (std::size_t i = 0; i < t->size(); ++i) {
      t->values[i] -= lr * t->grad[i];
    }
  }
}

bool ParamStore::same_geometry(const ParamStore& other) const {
  if (items_.size() != other.items_.size()) return false;
  for (std::size_t i = 0; i < items_.size(); ++i) {
    if (items_[i].first != other.items_[i].first) return false;
    if (items_[i].second->shape != other.items_[i].second->shape) return false;
  }
  return true;
}

std::vector<double> ParamStore::flatten() const {
  std::vector<double> out;
  out.reserve(total_size());
  for (const auto& [name, t] : items_) {
    out.insert(out.end(), t->values.begin(), t->values.end());
  }
  return out;
}

void save_checkpoint(const ParamStore& params,
                     const std::filesystem::path& path) {
  json obj = json::object();
  for (const auto& [name, t] : params) {
    json entry;
    entry["shape"] = t->shape;
    entry["values"] = t->values;
    obj[name] = std::move(entry);
  }
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write checkpoint: " + path.string());
  out << obj.dump(1) << '\n';
}

ParamStore load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open checkpoint: " + path.string());
  json obj;
  try {
    in >> obj;
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
  ParamStore params;
  for (const auto& [name, entry] : obj.items()) {
    ad::Shape shape = entry.at("shape").get<ad::Shape>();
    std::vector<double> values = entry.at("values").get<std::vector<double>>();
    params.insert(name, ad::Tensor::leaf(std::move(shape), std::move(values),
                                         true));
  }
  return params;
}

}  // namespace metaforge
