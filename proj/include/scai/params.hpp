#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "scai/tensor.hpp"

namespace scai {

struct Parameter {
  std::string name;
  Shape shape;
  std::shared_ptr<std::vector<double>> values;
};

/// Ordered, named collection of trainable buffers. Insertion order is the
/// canonical order used by checkpoints and the optimizer.
class ParameterStore {
 public:
  std::size_t add(std::string name, Shape shape, std::vector<double> values);

  std::size_t index_of(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& get(const std::string& name) const { return params_[index_of(name)]; }
  std::size_t size() const { return params_.size(); }
  std::size_t total_values() const;

  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  /// Deep copy; the clone shares no storage with this store.
  ParameterStore clone() const;
  /// Overwrites values from a store with identical names and shapes.
  void assign_values(const ParameterStore& other);

  /// One autodiff leaf per parameter, aliasing the stored values.
  std::vector<Tensor> bind(bool requires_grad) const;

  bool operator==(const ParameterStore& other) const;

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Text checkpoint:
///
///     scai-checkpoint 1
///     meta <single line of caller-defined text>
///     params <count>
///     <name> <rank> <d0> ... <d_rank-1>
///     <values, space separated, 17 significant digits>
///     ...
///
/// Values round-trip exactly.
void save_checkpoint(const std::filesystem::path& path, const std::string& meta, const ParameterStore& store);

struct Checkpoint {
  std::string meta;
  ParameterStore params;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace scai
