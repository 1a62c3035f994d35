#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "sgan/tensor.hpp"

namespace sgan {

/// Named, insertion-ordered set of network tensors.
///
/// Trainable entries are weights, biases and batch-norm scale/shift. Non-trainable
/// entries (running statistics, fixed filters) travel with checkpoints but are never
/// touched by an optimizer.
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
    bool trainable = true;
  };

  Tensor& add(std::string name, Tensor tensor, bool trainable = true);
  bool contains(std::string_view name) const;
  Tensor& at(std::string_view name);
  const Tensor& at(std::string_view name) const;

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  void zero_grad();
  /// FNV-1a over names and value bytes.
  std::uint64_t hash(bool trainable_only = true) const;
  bool all_finite() const;
  /// Deep copy with fresh leaf tensors.
  ParamSet clone() const;
  /// Copies values from `other`, matching entries by name and shape.
  void assign_from(const ParamSet& other);

 private:
  std::vector<Entry> entries_;
};

}  // namespace sgan
