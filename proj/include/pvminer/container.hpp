#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pvminer/tensor.hpp"

namespace pvminer::io {

// Checkpoint container shared by the encoder, topic and classifier stores:
// <dir>/manifest.json plus <dir>/weights/<name>.f32 per named tensor.

using NamedTensors = std::vector<std::pair<std::string, const Tensor*>>;

/// Writes each tensor and returns the manifest "weights" array
/// [{"name", "shape", "file"}] in the given order.
nlohmann::json write_tensors(const std::filesystem::path& dir, const NamedTensors& tensors);

/// Reads every entry of a "weights" array. Throws IoError on missing or
/// truncated files.
std::map<std::string, Tensor> read_tensors(const std::filesystem::path& dir, const nlohmann::json& weights);

void write_json_atomic(const std::filesystem::path& path, const nlohmann::json& value);
nlohmann::json read_json(const std::filesystem::path& path);

/// Fetches a required manifest field, throwing IoError naming the file.
const nlohmann::json& field(const nlohmann::json& object, const std::string& key, const std::filesystem::path& origin);

} // namespace pvminer::io
