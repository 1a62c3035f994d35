#include "sgan/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

#include "sgan/errors.hpp"
#include "sgan/random.hpp"

namespace sgan::training {

namespace {

constexpr std::uint64_t kNoiseStream = 0x2015e;
constexpr std::uint64_t kOrderStream = 0x0bde;
constexpr std::uint64_t kStegoStream = 0x57e6;
constexpr std::uint64_t kInitG = 0x61, kInitD = 0xd1, kInitS = 0x51;

double grad_norm(const ParamSet& params) {
  double s = 0.0;
  for (const auto& e : params.entries()) {
    if (!e.trainable || !e.tensor.has_grad()) continue;
    for (double g : e.tensor.grad()) s += g * g;
  }
  return std::sqrt(s);
}

// mean log(1 - p)
Tensor mean_log_one_minus(const Tensor& p) { return ops::scale(ops::bce_loss(p, 0.0), -1.0); }
// mean log p
Tensor mean_log(const Tensor& p) { return ops::scale(ops::bce_loss(p, 1.0), -1.0); }

Tensor batch_tensor(const Dataset& dataset, std::span<const std::size_t> indices) {
  std::vector<Image> images;
  images.reserve(indices.size());
  for (std::size_t i : indices) images.push_back(dataset.items[i]);
  return images_to_tensor(images);
}

}  // namespace

void SganConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0,1]");
  if (batch_size < 2) throw std::invalid_argument("batch size must be at least 2 (batch normalization)");
  if (z_dim == 0 || generator_channels == 0 || critic_channels == 0) {
    throw std::invalid_argument("network sizes must be positive");
  }
  for (const AdamConfig* a : {&adam_g, &adam_d, &adam_s}) {
    if (!(a->learning_rate > 0.0)) throw std::invalid_argument("learning rates must be positive");
    if (!(a->beta1 > 0.0 && a->beta1 < 1.0 && a->beta2 > 0.0 && a->beta2 < 1.0)) {
      throw std::invalid_argument("Adam betas must lie in (0,1)");
    }
  }
  if (!(embed.rate > 0.0 && embed.rate <= 1.0)) throw std::invalid_argument("embedding rate must lie in (0,1]");
  if (embed.channel >= 3) throw std::invalid_argument("embedding channel must be 0, 1 or 2");
}

std::string SganConfig::warning() const {
  if (mode == Mode::Sgan && alpha <= 0.7) {
    return "alpha <= 0.7: generated images tend to be unrealistic and noise-like";
  }
  return {};
}

bool StepRecord::same_values(const StepRecord& o) const {
  return iteration == o.iteration && epoch == o.epoch && kind == o.kind && loss == o.loss && grad_norm == o.grad_norm;
}

std::size_t TrainTrace::count(StepKind kind) const {
  std::size_t n = 0;
  for (const auto& r : records) n += r.kind == kind;
  return n;
}

double TrainTrace::mean_loss(StepKind kind, std::size_t epoch) const {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& r : records) {
    if (r.kind == kind && r.epoch == epoch) {
      s += r.loss;
      ++n;
    }
  }
  return n ? s / static_cast<double>(n) : std::nan("");
}

bool TrainTrace::same_values(const TrainTrace& other) const {
  if (records.size() != other.records.size()) return false;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (!records[i].same_values(other.records[i])) return false;
  return true;
}

void TrainTrace::write_jsonl(const std::filesystem::path& path, bool append) const {
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw FormatError("cannot write trace " + path.string());
  for (const auto& r : records) {
    nlohmann::json j = {{"iteration", r.iteration},
                        {"epoch", r.epoch},
                        {"step", std::string(1, static_cast<char>(r.kind))},
                        {"loss", r.loss},
                        {"grad_norm", r.grad_norm},
                        {"wall_ms", r.wall_ms}};
    out << j.dump() << '\n';
  }
}

FreezeGuard::FreezeGuard(ParamSet& params) : params_(params) {
  for (auto& e : params_.entries())
    if (e.trainable) e.tensor.set_requires_grad(false);
}

FreezeGuard::~FreezeGuard() {
  for (auto& e : params_.entries())
    if (e.trainable) e.tensor.set_requires_grad(true);
}

SganState init_state(const SganConfig& config) {
  config.validate();
  using nets::CriticKind;
  SganState state{
      nets::Network(nets::build_generator(config.z_dim, config.generator_channels, config.image_size),
                    derive_seed(config.param_seed, {kInitG}), config.batch_norm),
      nets::Network(nets::build_critic(CriticKind::Discriminator, config.image_size, config.critic_channels),
                    derive_seed(config.param_seed, {kInitD}), config.batch_norm),
      nets::Network(nets::build_critic(CriticKind::Steganalyser, config.image_size, config.critic_channels),
                    derive_seed(config.param_seed, {kInitS}), config.batch_norm),
      Adam(config.adam_g),
      Adam(config.adam_d),
      Adam(config.adam_s),
  };
  return state;
}

ParamSet SganState::to_checkpoint() const {
  ParamSet out;
  const auto copy = [&out](const std::string& prefix, const ParamSet& params) {
    for (const auto& e : params.entries()) out.add(prefix + e.name, e.tensor.clone(), e.trainable);
  };
  copy("G/", generator.params());
  copy("D/", discriminator.params());
  copy("S/", steganalyser.params());
  opt_g.export_state("adam/G", out);
  opt_d.export_state("adam/D", out);
  opt_s.export_state("adam/S", out);
  out.add("meta/epoch", Tensor::scalar(static_cast<double>(epoch)), false);
  out.add("meta/iteration", Tensor::scalar(static_cast<double>(iteration)), false);
  return out;
}

SganState restore_state(const SganConfig& config, const ParamSet& checkpoint) {
  SganState state = init_state(config);
  const auto restore = [&checkpoint](const std::string& prefix, ParamSet& params) {
    for (auto& e : params.entries()) {
      const Tensor& src = checkpoint.at(prefix + e.name);
      if (src.shape() != e.tensor.shape()) {
        throw FormatError("checkpoint entry " + prefix + e.name + " has shape " + shape_string(src.shape()) +
                          ", network expects " + shape_string(e.tensor.shape()));
      }
      std::copy(src.data().begin(), src.data().end(), e.tensor.data().begin());
    }
  };
  restore("G/", state.generator.params());
  restore("D/", state.discriminator.params());
  restore("S/", state.steganalyser.params());
  state.opt_g.import_state("adam/G", checkpoint);
  state.opt_d.import_state("adam/D", checkpoint);
  state.opt_s.import_state("adam/S", checkpoint);
  state.epoch = static_cast<std::size_t>(checkpoint.at("meta/epoch").item());
  state.iteration = static_cast<std::uint64_t>(checkpoint.at("meta/iteration").item());
  return state;
}

void tag_architecture(ParamSet& checkpoint, const SganConfig& config) {
  const auto put = [&checkpoint](const char* name, std::size_t v) {
    if (!checkpoint.contains(name)) checkpoint.add(name, Tensor::scalar(static_cast<double>(v)), false);
  };
  put("meta/image_size", config.image_size);
  put("meta/z_dim", config.z_dim);
  put("meta/generator_channels", config.generator_channels);
  put("meta/critic_channels", config.critic_channels);
}

SganConfig architecture_from(const ParamSet& checkpoint, SganConfig base) {
  const auto get = [&checkpoint](const char* name, std::size_t& out) {
    if (checkpoint.contains(name)) out = static_cast<std::size_t>(checkpoint.at(name).item());
  };
  get("meta/image_size", base.image_size);
  get("meta/z_dim", base.z_dim);
  get("meta/generator_channels", base.generator_channels);
  get("meta/critic_channels", base.critic_channels);
  return base;
}

Tensor sample_noise(std::size_t n, std::size_t z_dim, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> z(n * z_dim);
  for (double& v : z) v = rng.normal();
  return Tensor::from({n, z_dim}, std::move(z));
}

Tensor quantize_forward(const Tensor& images) {
  const auto pixels = tensor_to_images(images);
  return images_to_tensor(pixels);
}

Tensor stego_forward(const Tensor& images, const stego::EmbedConfig& embed, std::uint64_t seed) {
  auto pixels = tensor_to_images(images);
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    stego::EmbedConfig cfg = embed;
    cfg.seed = derive_seed(seed, {i, 0});
    const std::size_t n_bits = stego::capacity(pixels[i], cfg);
    const auto payload = stego::random_payload(n_bits, derive_seed(seed, {i, 1}), cfg.rate);
    pixels[i] = stego::embed(pixels[i], payload, cfg);
  }
  return images_to_tensor(pixels);
}

Tensor stego_op(const Tensor& images, const stego::EmbedConfig& embed, std::uint64_t seed, StegoGradient rule) {
  Tensor value = stego_forward(images, embed, seed);
  if (rule == StegoGradient::Detach) return value;
  return ops::straight_through(images, value);
}

Tensor quantize_op(const Tensor& images) { return ops::straight_through(images, quantize_forward(images)); }

GanLosses gan_losses(nets::Network& discriminator, nets::Network& generator, const Tensor& real_batch,
                     const Tensor& noise_batch, GeneratorLoss loss) {
  GanLosses out;
  Tensor fake = generator.forward(noise_batch, true);
  {
    FreezeGuard freeze_g(generator.params());
    Tensor fake_const = fake.detach();
    out.discriminator = ops::add(ops::bce_loss(discriminator.forward(real_batch, true), 1.0),
                                 ops::bce_loss(discriminator.forward(fake_const, true), 0.0));
  }
  stego::EmbedConfig unused;
  out.generator = generator_objective(discriminator, nullptr, fake, 1.0, unused, 0, loss,
                                      StegoGradient::StraightThrough);
  return out;
}

Tensor generator_objective(nets::Network& discriminator, nets::Network* steganalyser, const Tensor& fake,
                           double alpha, const stego::EmbedConfig& embed, std::uint64_t stego_seed,
                           GeneratorLoss loss, StegoGradient rule) {
  FreezeGuard freeze_d(discriminator.params());
  const Tensor d_fake = discriminator.forward(fake, true);
  Tensor d_term = loss == GeneratorLoss::Saturating ? mean_log_one_minus(d_fake) : ops::bce_loss(d_fake, 1.0);
  if (steganalyser == nullptr) return ops::scale(d_term, alpha);
  FreezeGuard freeze_s(steganalyser->params());
  const Tensor s_stego = steganalyser->forward(stego_op(fake, embed, stego_seed, rule), true);
  const Tensor s_cover = steganalyser->forward(quantize_op(fake), true);
  const Tensor s_term = ops::add(mean_log(s_stego), mean_log_one_minus(s_cover));
  return ops::add(ops::scale(d_term, alpha), ops::scale(s_term, 1.0 - alpha));
}

SganLosses sgan_losses(nets::Network& discriminator, nets::Network& steganalyser, nets::Network& generator,
                       const Tensor& real_batch, const Tensor& noise_batch, double alpha,
                       const stego::EmbedConfig& embed, std::uint64_t stego_seed, GeneratorLoss loss,
                       StegoGradient rule) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0,1]");
  SganLosses out;
  Tensor fake = generator.forward(noise_batch, true);
  {
    FreezeGuard freeze_g(generator.params());
    const Tensor fake_const = fake.detach();
    out.discriminator = ops::add(ops::bce_loss(discriminator.forward(real_batch, true), 1.0),
                                 ops::bce_loss(discriminator.forward(fake_const, true), 0.0));
    const Tensor stego = stego_forward(fake_const, embed, stego_seed);
    out.steganalyser = ops::add(ops::bce_loss(steganalyser.forward(stego, true), 1.0),
                                ops::bce_loss(steganalyser.forward(quantize_forward(fake_const), true), 0.0));
  }
  out.generator = generator_objective(discriminator, &steganalyser, fake, alpha, embed, stego_seed, loss, rule);
  return out;
}

std::size_t batches_per_epoch(std::size_t n, std::size_t batch_size) {
  if (n < 2) return 0;
  return std::max<std::size_t>(1, n / batch_size);
}

EpochResult train_epoch(SganState& state, const SganConfig& config, const Dataset& dataset, TrainTrace& trace) {
  config.validate();
  if (dataset.size() < 2) throw std::invalid_argument("training needs at least two images");
  using clock = std::chrono::steady_clock;
  const std::size_t epoch = state.epoch;
  const std::size_t n_batches = batches_per_epoch(dataset.size(), config.batch_size);
  const std::size_t batch = std::min(config.batch_size, dataset.size());
  Rng order_rng(derive_seed(config.data_seed, {kOrderStream, epoch}));
  const auto order = order_rng.permutation(dataset.size());
  const bool sgan = config.mode == Mode::Sgan;
  auto& G = state.generator;
  auto& D = state.discriminator;
  auto& S = state.steganalyser;

  const auto record = [&](StepKind kind, double loss, double norm, clock::time_point start) {
    trace.records.push_back({state.iteration + 1, epoch, kind, loss, norm,
                             std::chrono::duration<double, std::milli>(clock::now() - start).count()});
    if (!std::isfinite(loss) || !std::isfinite(norm)) {
      return EpochResult{true, std::string("non-finite ") + static_cast<char>(kind) + " loss at iteration " +
                                   std::to_string(state.iteration + 1)};
    }
    return EpochResult{};
  };

  for (std::size_t b = 0; b < n_batches; ++b) {
    const std::span<const std::size_t> idx(order.data() + b * batch, batch);
    const Tensor real = batch_tensor(dataset, idx);
    const std::uint64_t batch_key = state.iteration;

    // D step (ascent on the log-likelihood, expressed as descent on its negation).
    auto start = clock::now();
    Tensor fake;
    {
      NoGradGuard no_grad;
      fake = G.forward(sample_noise(batch, config.z_dim, derive_seed(config.noise_seed, {kNoiseStream, batch_key, 0})),
                       true);
    }
    D.params().zero_grad();
    const Tensor loss_d =
        ops::add(ops::bce_loss(D.forward(real, true), 1.0), ops::bce_loss(D.forward(fake, true), 0.0));
    backward(loss_d);
    if (auto r = record(StepKind::D, loss_d.item(), grad_norm(D.params()), start); r.halted) return r;
    state.opt_d.step(D.params(), Direction::Descend);

    const std::uint64_t stego_seed = derive_seed(config.embed_seed, {kStegoStream, batch_key});
    if (sgan) {
      start = clock::now();
      S.params().zero_grad();
      const Tensor stego = stego_forward(fake, config.embed, derive_seed(stego_seed, {0}));
      const Tensor loss_s = ops::add(ops::bce_loss(S.forward(stego, true), 1.0),
                                     ops::bce_loss(S.forward(quantize_forward(fake), true), 0.0));
      backward(loss_s);
      if (auto r = record(StepKind::S, loss_s.item(), grad_norm(S.params()), start); r.halted) return r;
      state.opt_s.step(S.params(), Direction::Descend);
    }

    for (std::uint64_t k = 1; k <= 2; ++k) {
      start = clock::now();
      G.params().zero_grad();
      const Tensor z = sample_noise(batch, config.z_dim, derive_seed(config.noise_seed, {kNoiseStream, batch_key, k}));
      const Tensor fake_g = G.forward(z, true);
      const Tensor loss_g =
          generator_objective(D, sgan ? &S : nullptr, fake_g, sgan ? config.alpha : 1.0, config.embed,
                              derive_seed(stego_seed, {k}), config.generator_loss, config.stego_gradient);
      backward(loss_g);
      if (auto r = record(StepKind::G, loss_g.item(), grad_norm(G.params()), start); r.halted) return r;
      state.opt_g.step(G.params(), Direction::Descend);
    }
    ++state.iteration;
  }
  ++state.epoch;
  return {};
}

std::vector<Image> generate(nets::Network& generator, std::size_t n, std::uint64_t seed, std::size_t z_dim,
                            std::size_t chunk) {
  NoGradGuard no_grad;
  std::vector<Image> out;
  out.reserve(n);
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t m = std::min(chunk, n - start);
    std::vector<double> z(m * z_dim);
    for (std::size_t i = 0; i < m; ++i) {
      Rng rng(derive_seed(seed, {kNoiseStream, start + i}));
      for (std::size_t j = 0; j < z_dim; ++j) z[i * z_dim + j] = rng.normal();
    }
    auto images = tensor_to_images(generator.forward(Tensor::from({m, z_dim}, std::move(z)), false));
    for (auto& img : images) out.push_back(std::move(img));
  }
  return out;
}

}  // namespace sgan::training
