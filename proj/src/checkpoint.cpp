#include "sgan/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "sgan/errors.hpp"

namespace sgan {

namespace {

constexpr std::array<char, 8> kMagic = {'S', 'G', 'A', 'N', 'C', 'K', 'P', 'T'};

void put_le(std::vector<char>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  Reader(std::vector<char> bytes, std::string source) : bytes_(std::move(bytes)), source_(std::move(source)) {}

  std::uint64_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw FormatError("checkpoint " + source_ + " is truncated");
  }
  std::vector<char> bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParamSet& params) {
  std::vector<char> out(kMagic.begin(), kMagic.end());
  put_le(out, kCheckpointVersion, 4);
  put_le(out, params.size(), 4);
  for (const auto& e : params.entries()) {
    put_le(out, e.name.size(), 4);
    out.insert(out.end(), e.name.begin(), e.name.end());
    out.push_back(e.trainable ? 1 : 0);
    put_le(out, e.tensor.rank(), 4);
    for (std::size_t d : e.tensor.shape()) put_le(out, d, 8);
    for (double v : e.tensor.data()) put_le(out, std::bit_cast<std::uint64_t>(v), 8);
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw FormatError("cannot open " + path.string() + " for writing");
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw FormatError("failed writing " + path.string());
}

ParamSet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw FormatError("cannot open checkpoint " + path.string());
  Reader in(std::vector<char>(std::istreambuf_iterator<char>(file), {}), path.string());
  if (in.str(kMagic.size()) != std::string(kMagic.begin(), kMagic.end())) {
    throw FormatError(path.string() + " is not a checkpoint (bad magic)");
  }
  const auto version = in.le(4);
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint " + path.string() + " has unsupported format version " + std::to_string(version));
  }
  const auto count = in.le(4);
  ParamSet params;
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = in.str(in.le(4));
    const bool trainable = in.le(1) != 0;
    const auto rank = in.le(4);
    if (rank == 0 || rank > 8) throw FormatError("checkpoint entry " + name + " has invalid rank");
    Shape shape;
    for (std::uint64_t r = 0; r < rank; ++r) shape.push_back(static_cast<std::size_t>(in.le(8)));
    for (std::size_t d : shape) {
      if (d == 0 || d > in.remaining()) throw FormatError("checkpoint entry " + name + " has invalid shape");
    }
    if (shape_size(shape) > in.remaining() / 8) throw FormatError("checkpoint " + path.string() + " is truncated");
    std::vector<double> values(shape_size(shape));
    for (double& v : values) v = std::bit_cast<double>(in.le(8));
    params.add(std::move(name), Tensor::from(std::move(shape), std::move(values)), trainable);
  }
  if (!in.done()) throw FormatError("checkpoint " + path.string() + " has trailing bytes");
  return params;
}

}  // namespace sgan
