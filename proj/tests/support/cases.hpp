#pragma once

// Random small instances for the finite-difference oracle: one family per layer type plus
// the full adversarial losses. Shared by the unit tests and the acceptance binary.

#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "sgan/nets.hpp"
#include "sgan/ops.hpp"
#include "sgan/training.hpp"

namespace sgan::testing {

struct GradCase {
  std::string name;
  bool batch_norm_path = false;  // looser tolerance
  std::function<GradCheck(std::uint64_t seed)> run;
};

inline constexpr double kTolerance = 1e-6;
inline constexpr double kBatchNormTolerance = 1e-4;

/// Scalar random projection <t, R> so every output element carries a distinct weight.
inline Tensor project(const Tensor& t, const Tensor& weights) {
  const Tensor flat = ops::reshape(t, {1, t.size()});
  return ops::fully_connected(flat, weights, Tensor::zeros({1}));
}

inline Tensor projection_weights(std::size_t n, Rng& rng) { return random_tensor({n, 1}, rng); }

inline std::vector<GradCase> layer_cases() {
  std::vector<GradCase> cases;
  cases.push_back({"conv2d", false, [](std::uint64_t seed) {
                     Rng rng(seed);
                     const std::size_t n = 2, c = 1 + rng.below(3), f = 1 + rng.below(3), k = 1 + rng.below(4);
                     const std::size_t stride = 1 + rng.below(2), pad = rng.below(2);
                     const std::size_t h = k + rng.below(4), w = k + rng.below(4);
                     Tensor x = random_tensor({n, c, h, w}, rng), kernel = random_tensor({f, c, k, k}, rng);
                     const Tensor probe = ops::conv2d(x, kernel, stride, pad);
                     const Tensor r = projection_weights(probe.size(), rng);
                     return check_gradients([&] { return project(ops::conv2d(x, kernel, stride, pad), r); },
                                            {x, kernel}, 1e-5, 48, seed);
                   }});
  cases.push_back({"conv_transpose2d", false, [](std::uint64_t seed) {
                     Rng rng(seed);
                     const std::size_t n = 2, c = 1 + rng.below(3), f = 1 + rng.below(3), k = 2 + rng.below(3);
                     const std::size_t stride = 1 + rng.below(2), pad = rng.below(2);
                     const std::size_t h = 1 + rng.below(4), w = 1 + rng.below(4);
                     Tensor x = random_tensor({n, f, h, w}, rng), kernel = random_tensor({f, c, k, k}, rng);
                     const Tensor probe = ops::conv_transpose2d(x, kernel, stride, pad);
                     const Tensor r = projection_weights(probe.size(), rng);
                     return check_gradients([&] { return project(ops::conv_transpose2d(x, kernel, stride, pad), r); },
                                            {x, kernel}, 1e-5, 48, seed);
                   }});
  cases.push_back({"zero_sum_filter", false, [](std::uint64_t seed) {
                     Rng rng(seed);
                     const std::size_t k = 3 + 2 * rng.below(2), pad = rng.below(3);
                     Tensor x = random_tensor({2, 2, k + rng.below(3), k + rng.below(3)}, rng);
                     std::vector<double> kv(k * k);
                     double total = 0.0;
                     for (double& v : kv) total += (v = rng.normal());
                     kv[k * k / 2] -= total;
                     Tensor kernel = Tensor::from({k, k}, kv);
                     const Tensor probe = ops::zero_sum_filter(x, kernel, pad);
                     const Tensor r = projection_weights(probe.size(), rng);
                     return check_gradients([&] { return project(ops::zero_sum_filter(x, kernel, pad), r); },
                                            {x, kernel}, 1e-5, 48, seed);
                   }});
  cases.push_back({"channel_bias", false, [](std::uint64_t seed) {
                     Rng rng(seed);
                     const std::size_t c = 1 + rng.below(4);
                     Tensor x = random_tensor({2, c, 3, 3}, rng), b = random_tensor({c}, rng);
                     const Tensor r = projection_weights(x.size(), rng);
                     return check_gradients([&] { return project(ops::add_channel_bias(x, b), r); }, {x, b}, 1e-5, 48,
                                            seed);
                   }});
  for (const bool spatial : {true, false}) {
    cases.push_back({spatial ? "batch_norm_nchw" : "batch_norm_nc", true, [spatial](std::uint64_t seed) {
                       Rng rng(seed);
                       const std::size_t n = 2 + rng.below(4), c = 1 + rng.below(3);
                       const Shape shape = spatial ? Shape{n, c, 1 + rng.below(3), 1 + rng.below(3)} : Shape{n, c};
                       Tensor x = random_tensor(shape, rng, 2.0);
                       Tensor scale = random_tensor({c}, rng), shift = random_tensor({c}, rng);
                       Tensor mean = Tensor::zeros({c}), var = Tensor::full({c}, 1.0);
                       const Tensor r = projection_weights(x.size(), rng);
                       return check_gradients(
                           [&] { return project(ops::batch_norm(x, scale, shift, mean, var, {}), r); },
                           {x, scale, shift}, 1e-5, 48, seed);
                     }});
  }
  cases.push_back({"batch_norm_eval", true, [](std::uint64_t seed) {
                     Rng rng(seed);
                     const std::size_t c = 1 + rng.below(3);
                     Tensor x = random_tensor({3, c, 2, 2}, rng), scale = random_tensor({c}, rng),
                            shift = random_tensor({c}, rng);
                     Tensor mean = random_tensor({c}, rng), var = Tensor::full({c}, 0.5 + rng.uniform());
                     const Tensor r = projection_weights(x.size(), rng);
                     ops::BatchNormOptions eval;
                     eval.training = false;
                     return check_gradients([&] { return project(ops::batch_norm(x, scale, shift, mean, var, eval), r); },
                                            {x, scale, shift}, 1e-5, 48, seed);
                   }});
  cases.push_back({"leaky_relu", false, [](std::uint64_t seed) {
                     Rng rng(seed);
                     Tensor x = random_tensor({2, 3, 3, 3}, rng);
                     const double slope = rng.uniform(0.05, 0.5);
                     const Tensor r = projection_weights(x.size(), rng);
                     return check_gradients([&] { return project(ops::leaky_relu(x, slope), r); }, {x}, 1e-5, 48, seed);
                   }});
  cases.push_back({"tanh", false, [](std::uint64_t seed) {
                     Rng rng(seed);
                     Tensor x = random_tensor({2, 7}, rng, 1.5);
                     const Tensor r = projection_weights(x.size(), rng);
                     return check_gradients([&] { return project(ops::tanh(x), r); }, {x}, 1e-5, 48, seed);
                   }});
  cases.push_back({"sigmoid", false, [](std::uint64_t seed) {
                     Rng rng(seed);
                     Tensor x = random_tensor({2, 7}, rng, 2.0);
                     const Tensor r = projection_weights(x.size(), rng);
                     return check_gradients([&] { return project(ops::sigmoid(x), r); }, {x}, 1e-5, 48, seed);
                   }});
  cases.push_back({"fully_connected", false, [](std::uint64_t seed) {
                     Rng rng(seed);
                     const std::size_t n = 1 + rng.below(3), k = 1 + rng.below(6), m = 1 + rng.below(5);
                     Tensor x = random_tensor({n, k}, rng), w = random_tensor({k, m}, rng), b = random_tensor({m}, rng);
                     const Tensor r = projection_weights(n * m, rng);
                     return check_gradients([&] { return project(ops::fully_connected(x, w, b), r); }, {x, w, b}, 1e-5,
                                            48, seed);
                   }});
  cases.push_back({"max_pool2d", false, [](std::uint64_t seed) {
                     Rng rng(seed);
                     Tensor x = random_tensor({2, 2, 4 + 2 * rng.below(2), 4}, rng);
                     const Tensor r = projection_weights(x.size() / 4, rng);
                     return check_gradients([&] { return project(ops::max_pool2d(x, 2, 2), r); }, {x}, 1e-5, 48, seed);
                   }});
  cases.push_back({"global_avg_pool", false, [](std::uint64_t seed) {
                     Rng rng(seed);
                     Tensor x = random_tensor({2, 3, 1 + rng.below(4), 1 + rng.below(4)}, rng);
                     const Tensor r = projection_weights(6, rng);
                     return check_gradients([&] { return project(ops::global_avg_pool(x), r); }, {x}, 1e-5, 48, seed);
                   }});
  cases.push_back({"reshape", false, [](std::uint64_t seed) {
                     Rng rng(seed);
                     Tensor x = random_tensor({2, 3, 4}, rng);
                     const Tensor r = projection_weights(24, rng);
                     return check_gradients([&] { return project(ops::reshape(x, {4, 6}), r); }, {x}, 1e-5, 48, seed);
                   }});
  cases.push_back({"bce_loss", false, [](std::uint64_t seed) {
                     Rng rng(seed);
                     const std::size_t n = 1 + rng.below(8);
                     Tensor x = random_tensor({n, 1}, rng, 2.0);
                     std::vector<double> t(n);
                     for (double& v : t) v = rng.uniform();
                     const Tensor target = Tensor::from({n, 1}, t);
                     const double label = rng.coin() ? 1.0 : 0.0;
                     return check_gradients(
                         [&] {
                           const Tensor p = ops::sigmoid(x);
                           return ops::add(ops::bce_loss(p, target), ops::bce_loss(p, label));
                         },
                         {x}, 1e-5, 48, seed);
                   }});
  cases.push_back({"sum_mean_add_scale", false, [](std::uint64_t seed) {
                     Rng rng(seed);
                     Tensor a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng);
                     const double k = rng.uniform(-2.0, 2.0);
                     const Tensor r = projection_weights(12, rng);
                     return check_gradients(
                         [&] {
                           const Tensor c = ops::add(a, ops::scale(b, k));
                           return ops::add(project(c, r), ops::add(ops::sum(ops::tanh(a)), ops::mean(ops::sigmoid(b))));
                         },
                         {a, b}, 1e-5, 48, seed);
                   }});
  return cases;
}

/// Tiny adversarial setup: 16x16 RGB, z_dim 4, channel width 2.
struct TinyGame {
  nets::Network generator, discriminator, steganalyser;
  Tensor real, noise;
  stego::EmbedConfig embed{stego::Algorithm::Pm1, 0, 0.4, 0};

  explicit TinyGame(std::uint64_t seed, std::size_t batch = 4) {
    Rng rng(seed);
    generator = nets::Network(nets::build_generator(4, 2, 16), derive_seed(seed, {1}));
    discriminator = nets::Network(nets::build_critic(nets::CriticKind::Discriminator, 16, 2), derive_seed(seed, {2}));
    steganalyser = nets::Network(nets::build_critic(nets::CriticKind::Steganalyser, 16, 2), derive_seed(seed, {3}));
    // Larger weights than the N(0, 0.02) init so gradients are not vanishingly small.
    for (auto* net : {&generator, &discriminator, &steganalyser}) {
      for (auto& e : net->params().entries()) {
        if (!e.trainable) continue;
        for (double& v : e.tensor.data()) v += rng.normal(0.0, 0.3);
      }
    }
    std::vector<double> r(batch * 3 * 16 * 16);
    for (double& v : r) v = rng.uniform(-1.0, 1.0);
    real = Tensor::from({batch, 3, 16, 16}, r);
    noise = training::sample_noise(batch, 4, derive_seed(seed, {4}));
    embed.seed = derive_seed(seed, {5});
  }
};

inline std::vector<Tensor> trainable(nets::Network& net) {
  std::vector<Tensor> out;
  for (auto& e : net.params().entries())
    if (e.trainable) out.push_back(e.tensor);
  return out;
}

// mean log(1 - p) and mean log p, as used by the objectives.
inline Tensor mean_log_one_minus(const Tensor& p) { return ops::scale(ops::bce_loss(p, 0.0), -1.0); }
inline Tensor mean_log(const Tensor& p) { return ops::scale(ops::bce_loss(p, 1.0), -1.0); }

/// The generator objective with Stego and quantization replaced by constant offsets frozen
/// at the current point: x + (Stego(x0) - x0). Its true gradient is what the straight-through
/// rule claims to compute.
inline Tensor frozen_offset_objective(TinyGame& g, double alpha, const Tensor& stego_offset, const Tensor& quant_offset) {
  const Tensor fake = g.generator.forward(g.noise, true);
  const Tensor d_term = mean_log_one_minus(g.discriminator.forward(fake, true));
  const Tensor s_stego = g.steganalyser.forward(ops::add(fake, stego_offset), true);
  const Tensor s_cover = g.steganalyser.forward(ops::add(fake, quant_offset), true);
  const Tensor s_term = ops::add(mean_log(s_stego), mean_log_one_minus(s_cover));
  return ops::add(ops::scale(d_term, alpha), ops::scale(s_term, 1.0 - alpha));
}

// The perturbed tiny nets sit close to leaky-ReLU kinks; a smaller step keeps probes on one side.
inline constexpr double kLossStep = 1e-6;

inline std::vector<GradCase> loss_cases() {
  std::vector<GradCase> cases;
  cases.push_back({"gan_discriminator_loss", true, [](std::uint64_t seed) {
                     TinyGame g(seed);
                     return check_gradients(
                         [&] { return training::gan_losses(g.discriminator, g.generator, g.real, g.noise).discriminator; },
                         trainable(g.discriminator), kLossStep, 48, seed);
                   }});
  cases.push_back({"gan_generator_loss", true, [](std::uint64_t seed) {
                     TinyGame g(seed);
                     return check_gradients(
                         [&] { return training::gan_losses(g.discriminator, g.generator, g.real, g.noise).generator; },
                         trainable(g.generator), kLossStep, 48, seed);
                   }});
  cases.push_back({"sgan_steganalyser_loss", true, [](std::uint64_t seed) {
                     TinyGame g(seed);
                     return check_gradients(
                         [&] {
                           return training::sgan_losses(g.discriminator, g.steganalyser, g.generator, g.real, g.noise,
                                                        0.85, g.embed, seed)
                               .steganalyser;
                         },
                         trainable(g.steganalyser), kLossStep, 48, seed);
                   }});
  cases.push_back({"sgan_generator_loss", true, [](std::uint64_t seed) {
                     TinyGame g(seed);
                     Rng rng(seed);
                     const double alpha = rng.uniform(0.5, 0.95);
                     Tensor stego_offset, quant_offset;
                     {
                       NoGradGuard no_grad;
                       const Tensor fake0 = g.generator.forward(g.noise, true);
                       const Tensor s = training::stego_forward(fake0, g.embed, seed);
                       const Tensor q = training::quantize_forward(fake0);
                       std::vector<double> ds(fake0.size()), dq(fake0.size());
                       for (std::size_t i = 0; i < ds.size(); ++i) {
                         ds[i] = s[i] - fake0[i];
                         dq[i] = q[i] - fake0[i];
                       }
                       stego_offset = Tensor::from(fake0.shape(), ds);
                       quant_offset = Tensor::from(fake0.shape(), dq);
                     }
                     return check_gradients(
                         [&] {
                           return training::sgan_losses(g.discriminator, g.steganalyser, g.generator, g.real, g.noise,
                                                        alpha, g.embed, seed)
                               .generator;
                         },
                         [&] { return frozen_offset_objective(g, alpha, stego_offset, quant_offset); },
                         trainable(g.generator), kLossStep, 48, seed);
                   }});
  return cases;
}

}  // namespace sgan::testing
