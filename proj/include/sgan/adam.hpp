#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sgan/params.hpp"

namespace sgan {

struct AdamConfig {
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Ascend maximizes the objective whose gradient is stored (theta += lr * step).
enum class Direction { Descend, Ascend };

/// Adam with bias correction over the trainable entries of a ParamSet.
class Adam {
 public:
  explicit Adam(AdamConfig config = {});

  /// Applies one update from the stored gradients. Throws NonFiniteError naming the
  /// offending parameter before any value is modified.
  void step(ParamSet& params, Direction direction = Direction::Descend);

  const AdamConfig& config() const { return config_; }
  std::uint64_t step_count() const { return step_count_; }

  /// Moments and step count as named tensors under `prefix` for checkpointing.
  void export_state(const std::string& prefix, ParamSet& out) const;
  void import_state(const std::string& prefix, const ParamSet& in);

 private:
  struct Moments {
    std::string name;
    std::vector<double> first, second;
  };
  Moments& moments_for(const ParamSet::Entry& entry);

  AdamConfig config_;
  std::uint64_t step_count_ = 0;
  std::vector<Moments> moments_;
};

}  // namespace sgan
