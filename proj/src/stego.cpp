#include "sgan/stego.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sgan/errors.hpp"
#include "sgan/random.hpp"

namespace sgan::stego {

namespace {

constexpr std::uint64_t kPositionStream = 0x9051;
constexpr std::uint64_t kDirectionStream = 0xd12e;

void check_channel(const Image& image, const EmbedConfig& config) {
  if (config.channel >= image.channels()) {
    throw std::invalid_argument("embed channel " + std::to_string(config.channel) + " out of range for " +
                                std::to_string(image.channels()) + "-channel image");
  }
}

void check_bits(const BitPayload& payload) {
  for (std::uint8_t b : payload.bits) {
    if (b > 1) throw std::invalid_argument("payload bits must be 0 or 1");
  }
}

}  // namespace

std::string to_string(Algorithm algorithm) { return algorithm == Algorithm::Lsb ? "lsb" : "pm1"; }

Algorithm algorithm_from_string(const std::string& name) {
  if (name == "lsb") return Algorithm::Lsb;
  if (name == "pm1") return Algorithm::Pm1;
  throw std::invalid_argument("unknown embedding algorithm '" + name + "' (expected lsb or pm1)");
}

BitPayload bytes_to_bits(std::span<const std::uint8_t> data, double rate) {
  BitPayload out;
  out.rate = rate;
  out.bits.reserve(data.size() * 8);
  for (std::uint8_t byte : data)
    for (int i = 7; i >= 0; --i) out.bits.push_back(static_cast<std::uint8_t>((byte >> i) & 1));
  return out;
}

PackedBytes bits_to_bytes(const BitPayload& payload) {
  PackedBytes out;
  out.padded = payload.size() % 8 != 0;
  out.bytes.assign((payload.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < payload.size(); ++i) {
    if (payload.bits[i]) out.bytes[i / 8] |= static_cast<std::uint8_t>(0x80 >> (i % 8));
  }
  return out;
}

BitPayload random_payload(std::size_t n_bits, std::uint64_t seed, double rate) {
  Rng rng(seed);
  BitPayload out;
  out.rate = rate;
  out.bits.resize(n_bits);
  for (auto& b : out.bits) b = rng.coin() ? 1 : 0;
  return out;
}

std::size_t capacity(const Image& image, const EmbedConfig& config) {
  if (!(config.rate > 0.0 && config.rate <= 1.0)) {
    throw CapacityError("embedding rate " + std::to_string(config.rate) + " bpp is outside (0, 1]");
  }
  return static_cast<std::size_t>(std::floor(config.rate * static_cast<double>(image.pixel_count())));
}

namespace {

std::vector<std::size_t> seeded_order(const Image& image, const EmbedConfig& config) {
  Rng rng(derive_seed(config.seed, {kPositionStream}));
  return rng.permutation(image.pixel_count());
}

}  // namespace

std::vector<std::size_t> select_positions(const Image& image, const EmbedConfig& config, std::size_t n_bits) {
  check_channel(image, config);
  const std::size_t cap = capacity(image, config);
  if (n_bits > cap) {
    throw CapacityError("payload of " + std::to_string(n_bits) + " bits exceeds capacity " + std::to_string(cap) +
                        " at " + std::to_string(config.rate) + " bpp");
  }
  auto order = seeded_order(image, config);
  order.resize(n_bits);
  return order;
}

Image embed_at(const Image& image, const BitPayload& payload, const EmbedConfig& config,
               std::span<const std::size_t> positions) {
  check_channel(image, config);
  check_bits(payload);
  if (positions.size() != payload.size()) {
    throw std::invalid_argument("embed_at: " + std::to_string(positions.size()) + " positions for " +
                                std::to_string(payload.size()) + " bits");
  }
  Image out = image;
  auto pixels = out.pixels();
  const std::size_t stride = image.channels();
  Rng direction(derive_seed(config.seed, {kDirectionStream}));
  for (std::size_t k = 0; k < positions.size(); ++k) {
    if (positions[k] >= image.pixel_count()) throw std::out_of_range("embed position outside the image");
    std::uint8_t& px = pixels[positions[k] * stride + config.channel];
    const std::uint8_t bit = payload.bits[k];
    if (config.algorithm == Algorithm::Lsb) {
      px = static_cast<std::uint8_t>((px & 0xFE) | bit);
      continue;
    }
    if ((px & 1) == bit) continue;
    if (px == 0) {
      px = 1;
    } else if (px == 255) {
      px = 254;
    } else {
      px = direction.coin() ? static_cast<std::uint8_t>(px + 1) : static_cast<std::uint8_t>(px - 1);
    }
  }
  return out;
}

BitPayload extract_at(const Image& image, const EmbedConfig& config, std::span<const std::size_t> positions) {
  check_channel(image, config);
  BitPayload out;
  out.rate = config.rate;
  out.bits.reserve(positions.size());
  const auto pixels = image.pixels();
  for (std::size_t pos : positions) {
    if (pos >= image.pixel_count()) throw std::out_of_range("extract position outside the image");
    out.bits.push_back(pixels[pos * image.channels() + config.channel] & 1);
  }
  return out;
}

Image embed_lsb(const Image& image, const BitPayload& payload, const EmbedConfig& config) {
  EmbedConfig c = config;
  c.algorithm = Algorithm::Lsb;
  return embed_at(image, payload, c, select_positions(image, c, payload.size()));
}

Image embed_pm1(const Image& image, const BitPayload& payload, const EmbedConfig& config) {
  EmbedConfig c = config;
  c.algorithm = Algorithm::Pm1;
  return embed_at(image, payload, c, select_positions(image, c, payload.size()));
}

Image embed(const Image& image, const BitPayload& payload, const EmbedConfig& config) {
  return config.algorithm == Algorithm::Lsb ? embed_lsb(image, payload, config) : embed_pm1(image, payload, config);
}

BitPayload extract(const Image& image, const EmbedConfig& config, std::size_t n_bits) {
  return extract_at(image, config, select_positions(image, config, n_bits));
}

CostFunction constant_cost(double value) {
  if (!(value >= 0.0) || !std::isfinite(value)) throw std::invalid_argument("cost must be finite and non-negative");
  return {"constant", [value](const Image&, std::size_t, std::size_t, std::size_t) { return value; }};
}

double distortion(const Image& cover, const Image& stego, const CostFunction& cost) {
  if (!cover.same_geometry(stego)) throw ShapeError("distortion: cover and stego differ in geometry");
  double total = 0.0;
  for (std::size_t y = 0; y < cover.height(); ++y)
    for (std::size_t x = 0; x < cover.width(); ++x)
      for (std::size_t c = 0; c < cover.channels(); ++c) {
        const int diff = std::abs(static_cast<int>(cover.at(x, y, c)) - static_cast<int>(stego.at(x, y, c)));
        if (diff == 0) continue;
        const double rho = cost.rho(cover, x, y, c);
        if (!(rho >= 0.0) || !std::isfinite(rho)) {
          throw std::domain_error("cost function '" + cost.name + "' returned an invalid value");
        }
        total += rho * diff;
      }
  return total;
}

std::vector<std::size_t> select_positions_by_cost(const Image& cover, const EmbedConfig& config, std::size_t n_bits,
                                                  const CostFunction& cost) {
  if (n_bits > capacity(cover, config)) throw CapacityError("payload exceeds capacity");
  // Every pixel of the channel is a candidate; the seeded order only breaks cost ties.
  check_channel(cover, config);
  auto order = seeded_order(cover, config);
  std::vector<double> rho(cover.pixel_count());
  for (std::size_t pos : order) rho[pos] = cost.rho(cover, pos % cover.width(), pos / cover.width(), config.channel);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rho[a] < rho[b]; });
  order.resize(n_bits);
  return order;
}

}  // namespace sgan::stego
