#include "sgan/params.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "sgan/errors.hpp"

namespace sgan {

Tensor& ParamSet::add(std::string name, Tensor tensor, bool trainable) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  tensor.set_requires_grad(trainable);
  entries_.push_back({std::move(name), std::move(tensor), trainable});
  return entries_.back().tensor;
}

bool ParamSet::contains(std::string_view name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == name; });
}

Tensor& ParamSet::at(std::string_view name) {
  for (auto& e : entries_)
    if (e.name == name) return e.tensor;
  throw std::out_of_range("no parameter named " + std::string(name));
}

const Tensor& ParamSet::at(std::string_view name) const {
  return const_cast<ParamSet*>(this)->at(name);
}

void ParamSet::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

std::uint64_t ParamSet::hash(bool trainable_only) const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto mix = [&h](std::uint8_t byte) {
    h ^= byte;
    h *= 0x100000001b3ULL;
  };
  for (const auto& e : entries_) {
    if (trainable_only && !e.trainable) continue;
    for (char ch : e.name) mix(static_cast<std::uint8_t>(ch));
    for (double v : e.tensor.data()) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int i = 0; i < 8; ++i) mix(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
  }
  return h;
}

bool ParamSet::all_finite() const {
  for (const auto& e : entries_)
    for (double v : e.tensor.data())
      if (!std::isfinite(v)) return false;
  return true;
}

ParamSet ParamSet::clone() const {
  ParamSet copy;
  for (const auto& e : entries_) copy.add(e.name, e.tensor.clone(), e.trainable);
  return copy;
}

void ParamSet::assign_from(const ParamSet& other) {
  for (auto& e : entries_) {
    const Tensor& src = other.at(e.name);
    if (src.shape() != e.tensor.shape()) {
      throw ShapeError("parameter " + e.name + ": shape " + shape_string(src.shape()) + " vs " +
                       shape_string(e.tensor.shape()));
    }
    std::copy(src.data().begin(), src.data().end(), e.tensor.data().begin());
  }
}

}  // namespace sgan
