#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sgan/adam.hpp"
#include "sgan/image.hpp"
#include "sgan/nets.hpp"
#include "sgan/stego.hpp"

namespace sgan::training {

enum class Mode { Gan, Sgan };
/// Saturating: G descends on mean log(1 - D(G(z))). NonSaturating: G descends on -mean log D(G(z)).
enum class GeneratorLoss { Saturating, NonSaturating };
/// StraightThrough: backward treats Stego as identity. Detach: no gradient through Stego.
enum class StegoGradient { StraightThrough, Detach };

struct SganConfig {
  Mode mode = Mode::Sgan;
  double alpha = 0.85;
  std::size_t batch_size = 32;
  std::size_t epochs = 5;
  std::size_t image_size = 16;
  std::size_t z_dim = 100;
  std::size_t generator_channels = 8;
  std::size_t critic_channels = 8;
  AdamConfig adam_g{2e-4, 0.5, 0.999, 1e-8};
  AdamConfig adam_d{2e-4, 0.5, 0.999, 1e-8};
  AdamConfig adam_s{2e-4, 0.5, 0.999, 1e-8};
  ops::BatchNormOptions batch_norm{};
  stego::EmbedConfig embed{stego::Algorithm::Pm1, 0, 0.4, 0};
  GeneratorLoss generator_loss = GeneratorLoss::Saturating;
  StegoGradient stego_gradient = StegoGradient::StraightThrough;
  std::uint64_t param_seed = 1;
  std::uint64_t noise_seed = 2;
  std::uint64_t data_seed = 3;
  std::uint64_t embed_seed = 4;

  /// Throws std::invalid_argument on out-of-range values.
  void validate() const;
  /// Non-empty when alpha <= 0.7, where generated images stop looking realistic.
  std::string warning() const;
};

enum class StepKind : char { D = 'D', S = 'S', G = 'G' };

struct StepRecord {
  std::uint64_t iteration = 0;  // 1-based mini-batch counter across epochs
  std::size_t epoch = 0;
  StepKind kind = StepKind::D;
  double loss = 0.0;
  double grad_norm = 0.0;
  double wall_ms = 0.0;  // excluded from equality

  bool same_values(const StepRecord& other) const;
};

struct TrainTrace {
  std::vector<StepRecord> records;

  std::size_t count(StepKind kind) const;
  double mean_loss(StepKind kind, std::size_t epoch) const;
  bool same_values(const TrainTrace& other) const;
  /// One JSON object per line.
  void write_jsonl(const std::filesystem::path& path, bool append = false) const;
};

struct SganState {
  nets::Network generator;
  nets::Network discriminator;
  nets::Network steganalyser;
  Adam opt_g, opt_d, opt_s;
  std::size_t epoch = 0;         // completed epochs
  std::uint64_t iteration = 0;   // completed mini-batches

  /// Parameters, running statistics, optimizer moments and counters.
  ParamSet to_checkpoint() const;
};

SganState init_state(const SganConfig& config);
/// Rebuilds networks from the config and restores everything from a checkpoint.
SganState restore_state(const SganConfig& config, const ParamSet& checkpoint);

/// Stores image size, z_dim and channel widths as meta/ entries so a checkpoint is self-describing.
void tag_architecture(ParamSet& checkpoint, const SganConfig& config);
/// `base` with the architecture fields replaced by the checkpoint's meta/ entries (when present).
SganConfig architecture_from(const ParamSet& checkpoint, SganConfig base);

/// Draws a [n, z_dim] batch of standard normal noise.
Tensor sample_noise(std::size_t n, std::size_t z_dim, std::uint64_t seed);

/// Quantizes each image of a [-1,1] batch to 8 bits, embeds a fresh random payload
/// (seeded per image from `seed`) and maps back to [-1,1].
Tensor stego_forward(const Tensor& images, const stego::EmbedConfig& embed, std::uint64_t seed);
/// Quantization only (the cover side of the steganalyser input).
Tensor quantize_forward(const Tensor& images);

/// Stego(x) with the configured gradient rule.
Tensor stego_op(const Tensor& images, const stego::EmbedConfig& embed, std::uint64_t seed, StegoGradient rule);
/// Quantize(x) with a straight-through gradient.
Tensor quantize_op(const Tensor& images);

struct GanLosses {
  Tensor discriminator;  // -[mean log D(x) + mean log(1 - D(G(z)))]
  Tensor generator;      // mean log(1 - D(G(z))), or its non-saturating replacement
};

/// Losses of the two-player game. L_D sees G(z) detached; L_G is computed with θ_D frozen,
/// so each loss only ever reaches its own player's parameters.
GanLosses gan_losses(nets::Network& discriminator, nets::Network& generator, const Tensor& real_batch,
                     const Tensor& noise_batch, GeneratorLoss loss = GeneratorLoss::Saturating);

struct SganLosses {
  Tensor discriminator;
  Tensor steganalyser;  // -mean[log S(Stego(G(z))) + log(1 - S(G(z)))]
  Tensor generator;     // alpha * (D term) + (1 - alpha) * mean[log S(Stego(G(z))) + log(1 - S(G(z)))]
};

SganLosses sgan_losses(nets::Network& discriminator, nets::Network& steganalyser, nets::Network& generator,
                       const Tensor& real_batch, const Tensor& noise_batch, double alpha,
                       const stego::EmbedConfig& embed, std::uint64_t stego_seed,
                       GeneratorLoss loss = GeneratorLoss::Saturating,
                       StegoGradient rule = StegoGradient::StraightThrough);

/// Generator objective given an already generated batch, with D and S frozen.
Tensor generator_objective(nets::Network& discriminator, nets::Network* steganalyser, const Tensor& fake,
                           double alpha, const stego::EmbedConfig& embed, std::uint64_t stego_seed,
                           GeneratorLoss loss, StegoGradient rule);

struct EpochResult {
  bool halted = false;
  std::string reason;
};

/// One pass over `dataset` (mini-batches in a seeded order): per batch one D step, one S step
/// (SGAN only) and two G steps with fresh noise. Records every step into `trace`.
EpochResult train_epoch(SganState& state, const SganConfig& config, const Dataset& dataset, TrainTrace& trace);

/// Mini-batches per epoch for a dataset of n images.
std::size_t batches_per_epoch(std::size_t n, std::size_t batch_size);

/// Eval-mode generation of n images from noise seeded by `seed`.
std::vector<Image> generate(nets::Network& generator, std::size_t n, std::uint64_t seed, std::size_t z_dim,
                            std::size_t chunk = 64);

/// Marks a ParamSet's trainable entries as constants while alive.
class FreezeGuard {
 public:
  explicit FreezeGuard(ParamSet& params);
  ~FreezeGuard();
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  ParamSet& params_;
};

}  // namespace sgan::training
