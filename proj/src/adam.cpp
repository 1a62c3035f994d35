#include "sgan/adam.hpp"

#include <cmath>
#include <stdexcept>

#include "sgan/errors.hpp"

namespace sgan {

Adam::Adam(AdamConfig config) : config_(config) {
  if (!(config_.learning_rate > 0.0)) throw std::invalid_argument("Adam learning rate must be positive");
  if (!(config_.beta1 > 0.0 && config_.beta1 < 1.0) || !(config_.beta2 > 0.0 && config_.beta2 < 1.0)) {
    throw std::invalid_argument("Adam betas must lie in (0,1)");
  }
  if (!(config_.eps > 0.0)) throw std::invalid_argument("Adam eps must be positive");
}

Adam::Moments& Adam::moments_for(const ParamSet::Entry& entry) {
  for (auto& m : moments_)
    if (m.name == entry.name) return m;
  moments_.push_back({entry.name, std::vector<double>(entry.tensor.size(), 0.0),
                      std::vector<double>(entry.tensor.size(), 0.0)});
  return moments_.back();
}

void Adam::step(ParamSet& params, Direction direction) {
  for (const auto& e : params.entries()) {
    if (!e.trainable || !e.tensor.has_grad()) continue;
    for (double g : e.tensor.grad()) {
      if (!std::isfinite(g)) throw NonFiniteError("non-finite gradient in parameter " + e.name);
    }
  }
  ++step_count_;
  const double t = static_cast<double>(step_count_);
  const double correction1 = 1.0 - std::pow(config_.beta1, t);
  const double correction2 = 1.0 - std::pow(config_.beta2, t);
  const double sign = direction == Direction::Descend ? -1.0 : 1.0;
  for (auto& e : params.entries()) {
    if (!e.trainable || !e.tensor.has_grad()) continue;
    Moments& m = moments_for(e);
    auto value = e.tensor.data();
    auto grad = e.tensor.grad();
    for (std::size_t i = 0; i < value.size(); ++i) {
      m.first[i] = config_.beta1 * m.first[i] + (1.0 - config_.beta1) * grad[i];
      m.second[i] = config_.beta2 * m.second[i] + (1.0 - config_.beta2) * grad[i] * grad[i];
      const double mhat = m.first[i] / correction1;
      const double vhat = m.second[i] / correction2;
      value[i] += sign * config_.learning_rate * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

void Adam::export_state(const std::string& prefix, ParamSet& out) const {
  out.add(prefix + "/step", Tensor::scalar(static_cast<double>(step_count_)), false);
  for (const auto& m : moments_) {
    out.add(prefix + "/m1/" + m.name, Tensor::from({m.first.size()}, m.first), false);
    out.add(prefix + "/m2/" + m.name, Tensor::from({m.second.size()}, m.second), false);
  }
}

void Adam::import_state(const std::string& prefix, const ParamSet& in) {
  step_count_ = static_cast<std::uint64_t>(in.at(prefix + "/step").item());
  moments_.clear();
  const std::string m1 = prefix + "/m1/";
  for (const auto& e : in.entries()) {
    if (e.name.rfind(m1, 0) != 0) continue;
    const std::string name = e.name.substr(m1.size());
    const Tensor& second = in.at(prefix + "/m2/" + name);
    moments_.push_back({name, std::vector<double>(e.tensor.data().begin(), e.tensor.data().end()),
                        std::vector<double>(second.data().begin(), second.data().end())});
  }
}

}  // namespace sgan
