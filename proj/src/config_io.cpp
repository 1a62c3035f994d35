#include "sgan/config_io.hpp"

#include <stdexcept>
#include <string>

namespace sgan::config {

using nlohmann::json;

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed, const char* where) {
  if (!j.is_object()) throw std::invalid_argument(std::string(where) + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) throw std::invalid_argument(std::string(where) + ": unknown key '" + key + "'");
  }
}

namespace {

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

json to_json(const AdamConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"eps", c.eps}};
}

AdamConfig adam_from_json(const json& j, AdamConfig c) {
  reject_unknown_keys(j, {"learning_rate", "beta1", "beta2", "eps"}, "adam");
  read(j, "learning_rate", c.learning_rate);
  read(j, "beta1", c.beta1);
  read(j, "beta2", c.beta2);
  read(j, "eps", c.eps);
  return c;
}

json to_json(const stego::EmbedConfig& c) {
  return {{"algorithm", stego::to_string(c.algorithm)}, {"channel", c.channel}, {"rate", c.rate}, {"seed", c.seed}};
}

stego::EmbedConfig embed_from_json(const json& j, stego::EmbedConfig c) {
  reject_unknown_keys(j, {"algorithm", "channel", "rate", "seed"}, "embed");
  if (j.contains("algorithm")) c.algorithm = stego::algorithm_from_string(j.at("algorithm").get<std::string>());
  read(j, "channel", c.channel);
  read(j, "rate", c.rate);
  read(j, "seed", c.seed);
  return c;
}

json to_json(const training::SganConfig& c) {
  using namespace training;
  return {{"mode", c.mode == Mode::Gan ? "gan" : "sgan"},
          {"alpha", c.alpha},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"image_size", c.image_size},
          {"z_dim", c.z_dim},
          {"generator_channels", c.generator_channels},
          {"critic_channels", c.critic_channels},
          {"adam_g", to_json(c.adam_g)},
          {"adam_d", to_json(c.adam_d)},
          {"adam_s", to_json(c.adam_s)},
          {"batch_norm_momentum", c.batch_norm.momentum},
          {"batch_norm_eps", c.batch_norm.eps},
          {"embed", to_json(c.embed)},
          {"generator_loss", c.generator_loss == GeneratorLoss::Saturating ? "saturating" : "non_saturating"},
          {"stego_gradient", c.stego_gradient == StegoGradient::StraightThrough ? "straight_through" : "detach"},
          {"param_seed", c.param_seed},
          {"noise_seed", c.noise_seed},
          {"data_seed", c.data_seed},
          {"embed_seed", c.embed_seed}};
}

training::SganConfig sgan_from_json(const json& j, training::SganConfig c) {
  using namespace training;
  reject_unknown_keys(j,
                      {"mode", "alpha", "batch_size", "epochs", "image_size", "z_dim", "generator_channels",
                       "critic_channels", "adam_g", "adam_d", "adam_s", "batch_norm_momentum", "batch_norm_eps",
                       "embed", "generator_loss", "stego_gradient", "param_seed", "noise_seed", "data_seed",
                       "embed_seed"},
                      "sgan");
  if (j.contains("mode")) {
    const auto m = j.at("mode").get<std::string>();
    if (m != "gan" && m != "sgan") throw std::invalid_argument("mode must be gan or sgan");
    c.mode = m == "gan" ? Mode::Gan : Mode::Sgan;
  }
  read(j, "alpha", c.alpha);
  read(j, "batch_size", c.batch_size);
  read(j, "epochs", c.epochs);
  read(j, "image_size", c.image_size);
  read(j, "z_dim", c.z_dim);
  read(j, "generator_channels", c.generator_channels);
  read(j, "critic_channels", c.critic_channels);
  if (j.contains("adam_g")) c.adam_g = adam_from_json(j.at("adam_g"), c.adam_g);
  if (j.contains("adam_d")) c.adam_d = adam_from_json(j.at("adam_d"), c.adam_d);
  if (j.contains("adam_s")) c.adam_s = adam_from_json(j.at("adam_s"), c.adam_s);
  read(j, "batch_norm_momentum", c.batch_norm.momentum);
  read(j, "batch_norm_eps", c.batch_norm.eps);
  if (j.contains("embed")) c.embed = embed_from_json(j.at("embed"), c.embed);
  if (j.contains("generator_loss")) {
    const auto g = j.at("generator_loss").get<std::string>();
    if (g != "saturating" && g != "non_saturating") throw std::invalid_argument("bad generator_loss " + g);
    c.generator_loss = g == "saturating" ? GeneratorLoss::Saturating : GeneratorLoss::NonSaturating;
  }
  if (j.contains("stego_gradient")) {
    const auto g = j.at("stego_gradient").get<std::string>();
    if (g != "straight_through" && g != "detach") throw std::invalid_argument("bad stego_gradient " + g);
    c.stego_gradient = g == "straight_through" ? StegoGradient::StraightThrough : StegoGradient::Detach;
  }
  read(j, "param_seed", c.param_seed);
  read(j, "noise_seed", c.noise_seed);
  read(j, "data_seed", c.data_seed);
  read(j, "embed_seed", c.embed_seed);
  return c;
}

}  // namespace sgan::config
