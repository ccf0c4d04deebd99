#include "pvminer/container.hpp"

#include "pvminer/io.hpp"

namespace pvminer::io {

namespace {

std::string file_name_for(const std::string& name) {
    std::string out;
    for (char c : name) {
        const bool safe = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '.' ||
                          c == '_' || c == '-';
        out += safe ? c : '_';
    }
    return "weights/" + out + ".f32";
}

} // namespace

nlohmann::json write_tensors(const std::filesystem::path& dir, const NamedTensors& tensors) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& [name, tensor] : tensors) {
        const std::string file = file_name_for(name);
        write_f32(dir / file, tensor->data());
        entries.push_back({{"name", name}, {"shape", tensor->shape()}, {"file", file}});
    }
    return entries;
}

std::map<std::string, Tensor> read_tensors(const std::filesystem::path& dir, const nlohmann::json& weights) {
    if (!weights.is_array()) {
        throw IoError("manifest in '" + dir.string() + "' has no weights array");
    }
    std::map<std::string, Tensor> out;
    for (const auto& entry : weights) {
        try {
            const auto name = entry.at("name").get<std::string>();
            const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
            const auto file = entry.at("file").get<std::string>();
            auto values = read_f32(dir / file, Tensor::element_count(shape));
            out.emplace(name, Tensor(shape, std::move(values)));
        } catch (const nlohmann::json::exception& e) {
            throw IoError("malformed weight entry in '" + dir.string() + "': " + e.what());
        }
    }
    return out;
}

void write_json_atomic(const std::filesystem::path& path, const nlohmann::json& value) {
    write_text_atomic(path, value.dump(2) + "\n");
}

nlohmann::json read_json(const std::filesystem::path& path) {
    const std::string text = read_text(path);
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw IoError("cannot parse JSON in '" + path.string() + "': " + e.what());
    }
}

const nlohmann::json& field(const nlohmann::json& object, const std::string& key, const std::filesystem::path& origin) {
    if (!object.is_object() || !object.contains(key)) {
        throw IoError("'" + origin.string() + "' lacks required field '" + key + "'");
    }
    return object.at(key);
}

} // namespace pvminer::io
