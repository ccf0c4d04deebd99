#include "pvminer/io.hpp"

#include <atomic>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <unistd.h>

namespace pvminer::io {

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t value) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = kDigits[value & 0xf];
        value >>= 4;
    }
    return out;
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "' for reading");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) {
        throw IoError("error while reading '" + path.string() + "'");
    }
    return ss.str();
}

void write_text_atomic(const std::filesystem::path& path, std::string_view content) {
    static std::atomic<unsigned> counter{0};
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
        if (ec) {
            throw IoError("cannot create directory '" + path.parent_path().string() + "': " + ec.message());
        }
    }
    auto tmp = path;
    tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter.fetch_add(1));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot open '" + tmp.string() + "' for writing");
        }
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) {
            throw IoError("error while writing '" + tmp.string() + "'");
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw IoError("cannot move '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
    }
}

std::string f32_bytes(std::span<const float> values) {
    std::string bytes(values.size() * 4, '\0');
    for (std::size_t i = 0; i < values.size(); ++i) {
        auto bits = std::bit_cast<std::uint32_t>(values[i]);
        for (int b = 0; b < 4; ++b) {
            bytes[i * 4 + static_cast<std::size_t>(b)] = static_cast<char>((bits >> (8 * b)) & 0xff);
        }
    }
    return bytes;
}

void write_f32(const std::filesystem::path& path, std::span<const float> values) {
    write_text_atomic(path, f32_bytes(values));
}

std::vector<float> read_f32(const std::filesystem::path& path, std::size_t expected_count) {
    const std::string bytes = read_text(path);
    if (bytes.size() != expected_count * 4) {
        throw IoError("'" + path.string() + "' holds " + std::to_string(bytes.size()) + " bytes, expected " +
                      std::to_string(expected_count * 4));
    }
    std::vector<float> values(expected_count);
    for (std::size_t i = 0; i < expected_count; ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) {
            bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i * 4 + static_cast<std::size_t>(b)]))
                    << (8 * b);
        }
        values[i] = std::bit_cast<float>(bits);
    }
    return values;
}

void require_file(const std::filesystem::path& path, const std::string& stage) {
    if (!std::filesystem::exists(path)) {
        throw DependencyError(stage, path.string() + " not found");
    }
}

} // namespace pvminer::io
