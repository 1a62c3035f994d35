#pragma once

#include <cstdint>
#include <filesystem>

#include "sgan/params.hpp"

namespace sgan {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Binary layout, all integers and floats little-endian:
//   "SGANCKPT" | u32 version | u32 entry_count
//   per entry: u32 name_len | name | u8 trainable | u32 rank | u64 dims[rank] | f64 values[prod(dims)]
void save_checkpoint(const std::filesystem::path& path, const ParamSet& params);
/// Throws FormatError on bad magic, unknown version or truncation.
ParamSet load_checkpoint(const std::filesystem::path& path);

}  // namespace sgan
