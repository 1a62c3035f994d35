#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "sgan/tensor.hpp"

namespace sgan {

/// 8-bit raster, row-major with interleaved channels: index = (y * width + x) * channels + c.
class Image {
 public:
  Image() = default;
  Image(std::size_t width, std::size_t height, std::size_t channels, std::uint8_t fill = 0);
  Image(std::size_t width, std::size_t height, std::size_t channels, std::vector<std::uint8_t> pixels);

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  std::size_t channels() const { return channels_; }
  std::size_t pixel_count() const { return width_ * height_; }

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) { return pixels_[(y * width_ + x) * channels_ + c]; }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const {
    return pixels_[(y * width_ + x) * channels_ + c];
  }

  std::span<std::uint8_t> pixels() { return pixels_; }
  std::span<const std::uint8_t> pixels() const { return pixels_; }

  bool same_geometry(const Image& other) const {
    return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
  }
  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t width_ = 0, height_ = 0, channels_ = 0;
  std::vector<std::uint8_t> pixels_;
};

enum class Label : std::uint8_t { Cover = 0, Stego = 1 };

struct Dataset {
  std::vector<Image> items;
  std::vector<Label> labels;  // empty, or parallel to items
  std::uint64_t split_seed = 0;

  std::size_t size() const { return items.size(); }
  bool labeled() const { return !labels.empty(); }
  /// Throws if labels are present with the wrong length.
  void validate() const;
};

/// Reads PNG (8-bit gray/RGB, palette expanded) or binary PGM/PPM.
/// Lossy formats are rejected with a FormatError naming the format.
Image load_image(const std::filesystem::path& path);
/// Writes PNG or PGM/PPM chosen by extension; lossy extensions are rejected.
void save_image(const Image& image, const std::filesystem::path& path);
/// True when the extension names a lossless format this library writes.
bool is_lossless_path(const std::filesystem::path& path);

/// Central size x size region, offset floor((dim - size) / 2) on each axis.
Image center_crop(const Image& image, std::size_t size = 64);

/// Deterministic smooth-texture corpus: per-image random low-frequency sinusoids
/// shared across channels with per-channel tint, plus mild Gaussian noise.
Dataset synth_corpus(std::size_t n, std::size_t size, std::uint64_t seed, double noise_stddev = 0.6);

/// Seeded shuffle, then the first round(n * test_fraction) items form the test split.
std::pair<Dataset, Dataset> split(const Dataset& dataset, double test_fraction, std::uint64_t seed);

/// Pixels to [-1, 1] via x / 127.5 - 1, as a [N, C, H, W] tensor.
Tensor images_to_tensor(std::span<const Image> images);
/// Inverse bridge: round((x + 1) * 127.5) clamped to [0, 255].
std::vector<Image> tensor_to_images(const Tensor& batch);

double pixel_to_unit(std::uint8_t value);
std::uint8_t unit_to_pixel(double value);

/// Line-delimited manifest: "<path>\t<label>" with label 0, 1 or '-' when unlabeled.
void write_dataset_manifest(const std::filesystem::path& manifest, const std::vector<std::filesystem::path>& paths,
                            const std::vector<Label>& labels);
Dataset read_dataset_manifest(const std::filesystem::path& manifest);

}  // namespace sgan
