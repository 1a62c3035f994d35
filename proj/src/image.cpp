#include "sgan/image.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <sstream>

#include "sgan/errors.hpp"
#include "sgan/random.hpp"

namespace sgan {

namespace fs = std::filesystem;

Image::Image(std::size_t width, std::size_t height, std::size_t channels, std::uint8_t fill)
    : Image(width, height, channels, std::vector<std::uint8_t>(width * height * channels, fill)) {}

Image::Image(std::size_t width, std::size_t height, std::size_t channels, std::vector<std::uint8_t> pixels)
    : width_(width), height_(height), channels_(channels), pixels_(std::move(pixels)) {
  if (width == 0 || height == 0) throw ShapeError("image extents must be positive");
  if (channels != 1 && channels != 3) throw ShapeError("images have 1 or 3 channels, got " + std::to_string(channels));
  if (pixels_.size() != width * height * channels) {
    throw ShapeError("pixel buffer of " + std::to_string(pixels_.size()) + " bytes for " + std::to_string(width) +
                     "x" + std::to_string(height) + "x" + std::to_string(channels));
  }
}

void Dataset::validate() const {
  if (!labels.empty() && labels.size() != items.size()) {
    throw std::invalid_argument("dataset has " + std::to_string(items.size()) + " items but " +
                                std::to_string(labels.size()) + " labels");
  }
}

namespace {

std::string lower_extension(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return ext;
}

const char* lossy_format_name(const std::string& ext) {
  if (ext == ".jpg" || ext == ".jpeg" || ext == ".jpe" || ext == ".jfif") return "JPEG";
  if (ext == ".webp") return "WebP";
  if (ext == ".heic" || ext == ".heif") return "HEIF";
  if (ext == ".avif") return "AVIF";
  return nullptr;
}

std::vector<unsigned char> read_bytes(const fs::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw FormatError("cannot read image " + path.string());
  return {std::istreambuf_iterator<char>(file), {}};
}

Image decode_png(const std::vector<unsigned char>& bytes, const fs::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size())) {
    throw FormatError("unreadable PNG " + path.string() + ": " + png.message);
  }
  if (png.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&png);
    throw FormatError("16-bit PNG " + path.string() + " is not supported (8-bit containers only)");
  }
  if (png.format & PNG_FORMAT_FLAG_ALPHA) {
    png_image_free(&png);
    throw FormatError("PNG with alpha channel " + path.string() + " is not supported");
  }
  const std::size_t channels = (png.format & PNG_FORMAT_FLAG_COLOR) ? 3 : 1;
  png.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, pixels.data(), 0, nullptr)) {
    throw FormatError("failed decoding PNG " + path.string() + ": " + png.message);
  }
  return Image(png.width, png.height, channels, std::move(pixels));
}

// Binary netpbm: P5 (gray) or P6 (RGB), maxval 255.
Image decode_netpbm(const std::vector<unsigned char>& bytes, const fs::path& path) {
  std::size_t pos = 2;
  const auto next_token = [&]() -> std::size_t {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    std::size_t value = 0;
    bool any = false;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      value = value * 10 + (bytes[pos++] - '0');
      any = true;
      if (value > (1u << 24)) throw FormatError("netpbm header value too large in " + path.string());
    }
    if (!any) throw FormatError("malformed netpbm header in " + path.string());
    return value;
  };
  const std::size_t channels = bytes[1] == '6' ? 3 : 1;
  const std::size_t width = next_token(), height = next_token(), maxval = next_token();
  if (maxval != 255) throw FormatError("netpbm maxval " + std::to_string(maxval) + " unsupported in " + path.string());
  ++pos;  // single whitespace before raster
  const std::size_t need = width * height * channels;
  if (width == 0 || height == 0 || pos + need > bytes.size()) {
    throw FormatError("truncated netpbm raster in " + path.string());
  }
  return Image(width, height, channels, std::vector<std::uint8_t>(bytes.begin() + pos, bytes.begin() + pos + need));
}

}  // namespace

bool is_lossless_path(const fs::path& path) {
  const std::string ext = lower_extension(path);
  return ext == ".png" || ext == ".ppm" || ext == ".pgm" || ext == ".pnm";
}

Image load_image(const fs::path& path) {
  if (const char* lossy = lossy_format_name(lower_extension(path))) {
    throw FormatError(path.string() + ": " + lossy + " is a lossy format; payload bits would not survive");
  }
  const auto bytes = read_bytes(path);
  if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF) {
    throw FormatError(path.string() + ": JPEG is a lossy format; payload bits would not survive");
  }
  if (bytes.size() >= 8 && bytes[0] == 0x89 && bytes[1] == 'P' && bytes[2] == 'N' && bytes[3] == 'G') {
    return decode_png(bytes, path);
  }
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6')) {
    return decode_netpbm(bytes, path);
  }
  throw FormatError(path.string() + ": unrecognized image format (supported: PNG, binary PGM/PPM)");
}

void save_image(const Image& image, const fs::path& path) {
  const std::string ext = lower_extension(path);
  if (const char* lossy = lossy_format_name(ext)) {
    throw FormatError(path.string() + ": refusing to write " + lossy + ", a lossy format that destroys payloads");
  }
  if (ext == ".png") {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(image.width());
    png.height = static_cast<png_uint_32>(image.height());
    png.format = image.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&png, path.c_str(), 0, image.pixels().data(), 0, nullptr)) {
      throw FormatError("failed writing PNG " + path.string() + ": " + png.message);
    }
    return;
  }
  if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") {
    if (ext == ".ppm" && image.channels() != 3) throw FormatError(path.string() + ": PPM needs 3 channels");
    if (ext == ".pgm" && image.channels() != 1) throw FormatError(path.string() + ": PGM needs 1 channel");
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw FormatError("cannot open " + path.string() + " for writing");
    file << (image.channels() == 3 ? "P6" : "P5") << '\n' << image.width() << ' ' << image.height() << "\n255\n";
    file.write(reinterpret_cast<const char*>(image.pixels().data()), static_cast<std::streamsize>(image.pixels().size()));
    if (!file) throw FormatError("failed writing " + path.string());
    return;
  }
  throw FormatError(path.string() + ": unsupported output format '" + ext + "' (use .png, .ppm or .pgm)");
}

Image center_crop(const Image& image, std::size_t size) {
  if (size == 0 || image.width() < size || image.height() < size) {
    throw ShapeError("cannot crop " + std::to_string(image.width()) + "x" + std::to_string(image.height()) +
                     " image to " + std::to_string(size));
  }
  const std::size_t x0 = (image.width() - size) / 2, y0 = (image.height() - size) / 2;
  Image out(size, size, image.channels());
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x)
      for (std::size_t c = 0; c < image.channels(); ++c) out.at(x, y, c) = image.at(x0 + x, y0 + y, c);
  return out;
}

Dataset synth_corpus(std::size_t n, std::size_t size, std::uint64_t seed, double noise_stddev) {
  if (n == 0) throw std::invalid_argument("synth_corpus needs n >= 1");
  if (size == 0) throw std::invalid_argument("synth_corpus needs a positive size");
  constexpr int kWaves = 4;
  constexpr std::size_t kChannels = 3;
  Dataset out;
  out.split_seed = seed;
  out.items.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, {0x7e87, i}));
    struct Wave {
      double fx, fy, phase, amplitude;
    };
    std::array<Wave, kWaves> waves;
    for (auto& w : waves) {
      w = {rng.uniform(-2.5, 2.5), rng.uniform(-2.5, 2.5), rng.uniform(0.0, 2.0 * std::numbers::pi),
           rng.uniform(5.0, 18.0)};
    }
    std::array<double, kChannels> offset, gain;
    for (std::size_t c = 0; c < kChannels; ++c) {
      offset[c] = rng.uniform(-30.0, 30.0);
      gain[c] = rng.uniform(0.7, 1.3);
    }
    Image img(size, size, kChannels);
    const double inv = 2.0 * std::numbers::pi / static_cast<double>(size);
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        double lum = 0.0;
        for (const auto& w : waves) {
          lum += w.amplitude * std::sin(inv * (w.fx * static_cast<double>(x) + w.fy * static_cast<double>(y)) + w.phase);
        }
        for (std::size_t c = 0; c < kChannels; ++c) {
          const double v = 128.0 + offset[c] + gain[c] * lum + noise_stddev * rng.normal();
          img.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
        }
      }
    out.items.push_back(std::move(img));
  }
  return out;
}

std::pair<Dataset, Dataset> split(const Dataset& dataset, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw std::invalid_argument("test_fraction must lie in (0,1)");
  dataset.validate();
  const std::size_t n = dataset.size();
  const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
  Rng rng(derive_seed(seed, {0x5b11}));
  const auto order = rng.permutation(n);
  Dataset train, test;
  train.split_seed = test.split_seed = seed;
  for (std::size_t k = 0; k < n; ++k) {
    Dataset& dst = k < n_test ? test : train;
    dst.items.push_back(dataset.items[order[k]]);
    if (dataset.labeled()) dst.labels.push_back(dataset.labels[order[k]]);
  }
  return {std::move(train), std::move(test)};
}

double pixel_to_unit(std::uint8_t value) { return static_cast<double>(value) / 127.5 - 1.0; }

std::uint8_t unit_to_pixel(double value) {
  const double v = std::round((value + 1.0) * 127.5);
  return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
}

Tensor images_to_tensor(std::span<const Image> images) {
  if (images.empty()) throw ShapeError("images_to_tensor needs at least one image");
  const Image& first = images.front();
  const std::size_t c = first.channels(), h = first.height(), w = first.width();
  std::vector<double> data(images.size() * c * h * w);
  for (std::size_t b = 0; b < images.size(); ++b) {
    if (!images[b].same_geometry(first)) throw ShapeError("images_to_tensor: mixed image geometry");
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          data[((b * c + ch) * h + y) * w + x] = pixel_to_unit(images[b].at(x, y, ch));
        }
  }
  return Tensor::from({images.size(), c, h, w}, std::move(data));
}

std::vector<Image> tensor_to_images(const Tensor& batch) {
  if (batch.rank() != 4) throw ShapeError("tensor_to_images expects [N,C,H,W], got " + shape_string(batch.shape()));
  const std::size_t n = batch.dim(0), c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  std::vector<Image> out;
  out.reserve(n);
  const auto data = batch.data();
  for (std::size_t b = 0; b < n; ++b) {
    Image img(w, h, c);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) img.at(x, y, ch) = unit_to_pixel(data[((b * c + ch) * h + y) * w + x]);
    out.push_back(std::move(img));
  }
  return out;
}

void write_dataset_manifest(const fs::path& manifest, const std::vector<fs::path>& paths,
                            const std::vector<Label>& labels) {
  if (!labels.empty() && labels.size() != paths.size()) {
    throw std::invalid_argument("manifest: labels and paths differ in length");
  }
  std::ofstream out(manifest, std::ios::trunc);
  if (!out) throw FormatError("cannot write manifest " + manifest.string());
  for (std::size_t i = 0; i < paths.size(); ++i) {
    out << paths[i].string() << '\t';
    if (labels.empty()) {
      out << '-';
    } else {
      out << static_cast<int>(labels[i]);
    }
    out << '\n';
  }
}

Dataset read_dataset_manifest(const fs::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw FormatError("cannot read manifest " + manifest.string());
  Dataset out;
  std::string line;
  bool any_label = false, any_unlabeled = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos) throw FormatError(manifest.string() + ":" + std::to_string(line_no) + ": missing tab");
    fs::path p = line.substr(0, tab);
    if (p.is_relative()) p = manifest.parent_path() / p;
    const std::string label = line.substr(tab + 1);
    out.items.push_back(load_image(p));
    if (label == "0" || label == "1") {
      out.labels.push_back(label == "0" ? Label::Cover : Label::Stego);
      any_label = true;
    } else if (label == "-") {
      any_unlabeled = true;
    } else {
      throw FormatError(manifest.string() + ":" + std::to_string(line_no) + ": bad label '" + label + "'");
    }
  }
  if (any_label && any_unlabeled) throw FormatError(manifest.string() + ": mixes labeled and unlabeled lines");
  return out;
}

}  // namespace sgan
