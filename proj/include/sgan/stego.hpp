#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sgan/image.hpp"

namespace sgan::stego {

enum class Algorithm { Lsb, Pm1 };

std::string to_string(Algorithm algorithm);
/// Accepts "lsb" and "pm1".
Algorithm algorithm_from_string(const std::string& name);

struct EmbedConfig {
  Algorithm algorithm = Algorithm::Pm1;
  std::size_t channel = 0;
  double rate = 0.4;  // message bits per pixel of the chosen channel
  std::uint64_t seed = 0;
};

/// Message bits (one per byte, value 0 or 1) and the rate they were produced for.
struct BitPayload {
  std::vector<std::uint8_t> bits;
  double rate = 0.0;

  std::size_t size() const { return bits.size(); }
  friend bool operator==(const BitPayload& a, const BitPayload& b) { return a.bits == b.bits; }
};

/// MSB-first within each byte.
BitPayload bytes_to_bits(std::span<const std::uint8_t> data, double rate = 0.0);

struct PackedBytes {
  std::vector<std::uint8_t> bytes;
  bool padded = false;  // trailing bits were zero-filled to a whole byte
};
PackedBytes bits_to_bytes(const BitPayload& payload);

BitPayload random_payload(std::size_t n_bits, std::uint64_t seed, double rate = 0.0);

/// floor(rate * width * height); throws CapacityError when rate is outside (0, 1].
std::size_t capacity(const Image& image, const EmbedConfig& config);

/// Seeded permutation of the channel's pixel indices (y * width + x), truncated to n_bits.
std::vector<std::size_t> select_positions(const Image& image, const EmbedConfig& config, std::size_t n_bits);

/// Pixel LSB := payload bit at each selected position.
Image embed_lsb(const Image& image, const BitPayload& payload, const EmbedConfig& config);
/// LSB matching: mismatching pixels move by +1 or -1 (fair coin; 0 -> 1 and 255 -> 254 forced).
Image embed_pm1(const Image& image, const BitPayload& payload, const EmbedConfig& config);
/// Dispatches on config.algorithm.
Image embed(const Image& image, const BitPayload& payload, const EmbedConfig& config);

/// Reads LSBs at the regenerated positions.
BitPayload extract(const Image& image, const EmbedConfig& config, std::size_t n_bits);

/// Pixel cost rho(cover, x, y, c) >= 0.
struct CostFunction {
  std::string name;
  std::function<double(const Image& cover, std::size_t x, std::size_t y, std::size_t c)> rho;
};

CostFunction constant_cost(double value = 1.0);

/// sum over all pixels and channels of rho(cover, x, y, c) * |cover - stego|.
double distortion(const Image& cover, const Image& stego, const CostFunction& cost);

/// Greedy cost-ordered selection: the n_bits cheapest pixels of the channel, ties broken
/// by the seeded permutation. Uses cover-side costs, so the receiver needs the same order.
std::vector<std::size_t> select_positions_by_cost(const Image& cover, const EmbedConfig& config, std::size_t n_bits,
                                                  const CostFunction& cost);
/// Embedding and extraction at explicit positions.
Image embed_at(const Image& image, const BitPayload& payload, const EmbedConfig& config,
               std::span<const std::size_t> positions);
BitPayload extract_at(const Image& image, const EmbedConfig& config, std::span<const std::size_t> positions);

}  // namespace sgan::stego
