#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pvminer/tensor.hpp"

namespace pvminer::io {

/// 64-bit FNV-1a, rendered as 16 lowercase hex digits. Stable across
/// platforms, used for vocabulary/schema/topic fingerprints.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

std::string read_text(const std::filesystem::path& path);

/// Writes to a unique sibling temp file, then renames over the target.
void write_text_atomic(const std::filesystem::path& path, std::string_view content);

/// Raw little-endian float32 array, no header.
void write_f32(const std::filesystem::path& path, std::span<const float> values);
std::vector<float> read_f32(const std::filesystem::path& path, std::size_t expected_count);

std::string f32_bytes(std::span<const float> values);

void require_file(const std::filesystem::path& path, const std::string& stage);

} // namespace pvminer::io
