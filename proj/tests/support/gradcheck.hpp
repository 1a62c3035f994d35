#pragma once

// Central finite-difference oracle shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "sgan/random.hpp"
#include "sgan/tensor.hpp"

namespace sgan::testing {

struct GradCheck {
  double relative_error = 0.0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||, floor)
  std::size_t checked = 0;
};

/// `analytic` builds the graph whose backward pass is under test; `numeric` evaluates the
/// reference function (under no-grad). Both read the current values of `inputs`.
/// At most `max_per_input` coordinates per input are probed (chosen by `seed`).
inline GradCheck check_gradients(const std::function<Tensor()>& analytic_loss,
                                 const std::function<Tensor()>& numeric_loss, std::vector<Tensor> inputs,
                                 double h = 1e-5, std::size_t max_per_input = 48, std::uint64_t seed = 0) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  backward(analytic_loss());
  NoGradGuard no_grad;
  const auto& loss = numeric_loss;
  std::vector<std::vector<double>> analytic;
  for (auto& t : inputs) analytic.emplace_back(t.grad().begin(), t.grad().end());

  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  GradCheck out;
  Rng rng(seed);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto values = inputs[k].data();
    std::vector<std::size_t> probe(values.size());
    for (std::size_t i = 0; i < probe.size(); ++i) probe[i] = i;
    if (probe.size() > max_per_input) {
      rng.shuffle(std::span<std::size_t>(probe));
      probe.resize(max_per_input);
    }
    for (std::size_t i : probe) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = loss().item();
      values[i] = saved - h;
      const double down = loss().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[k][i];
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      n2 += numeric * numeric;
      ++out.checked;
    }
  }
  out.relative_error = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), 1e-10});
  return out;
}

inline GradCheck check_gradients(const std::function<Tensor()>& loss, std::vector<Tensor> inputs,
                                 double h = 1e-5, std::size_t max_per_input = 48, std::uint64_t seed = 0) {
  return check_gradients(loss, loss, std::move(inputs), h, max_per_input, seed);
}

inline Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = rng.normal(0.0, scale);
  return Tensor::from(std::move(shape), std::move(v));
}

}  // namespace sgan::testing
