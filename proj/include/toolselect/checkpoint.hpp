#pragma once

// Binary selector checkpoints, all integers little-endian:
//   "TSEL" | u32 version | u32 tensor count
//   per tensor: u16 name length, name bytes, u8 rank, u32 dims[rank], f32 values (row-major)
//   u32 CRC-32 of every preceding byte

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "toolselect/anp_selector.hpp"

namespace toolselect::checkpoint {

inline constexpr std::uint32_t kVersion = 1;

std::string serialize(const anp::SelectorParams& params);

/// Named tensors of a checkpoint image. Throws CorruptCheckpoint (bad magic,
/// CRC, truncation) or UnsupportedVersion.
std::vector<std::pair<std::string, diffcore::Tensor>> parse(const std::string& bytes);

/// Parameters shaped by `config`, filled from the image; names and shapes must match.
anp::SelectorParams deserialize(const std::string& bytes, const anp::SelectorConfig& config);

void save(const anp::SelectorParams& params, const std::filesystem::path& path);
anp::SelectorParams load(const std::filesystem::path& path, const anp::SelectorConfig& config);

} // namespace toolselect::checkpoint
