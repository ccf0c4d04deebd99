#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace pvminer {

inline constexpr std::string_view kNoSubcode = "None";

struct CodeSpec {
    std::string name;
    std::vector<std::string> subcodes; // empty: the code has no subcodes
};

/// Code/Subcode/Combo hierarchy. Combo ids follow lexicographic combo order.
class LabelSchema {
public:
    LabelSchema() = default;
    /// Throws InvalidArgument on an empty list, an underscore in a code name,
    /// or a duplicate combo.
    explicit LabelSchema(std::vector<CodeSpec> codes);

    /// Schema spanned by the combos seen in an annotation set.
    static LabelSchema from_combos(std::span<const std::string> combos);
    static LabelSchema default_schema();

    std::size_t size() const noexcept { return m_combos.size(); }
    const std::vector<std::string>& combos() const noexcept { return m_combos; }
    const std::vector<CodeSpec>& codes() const noexcept { return m_codes; }

    /// Sorted code names and sorted distinct non-None subcode names.
    std::vector<std::string> code_names() const;
    std::vector<std::string> subcode_names() const;

    bool contains(std::string_view combo) const;
    /// label2id; throws InvalidArgument for an unknown combo.
    int id(std::string_view combo) const;
    /// id2label; throws InvalidArgument when out of range.
    const std::string& name(int id) const;

    /// {"codes": {code: [subcodes...]}}
    nlohmann::json to_json() const;
    static LabelSchema from_json(const nlohmann::json& j);
    std::string fingerprint() const;

    friend bool operator==(const LabelSchema& a, const LabelSchema& b) { return a.m_combos == b.m_combos; }

private:
    std::vector<CodeSpec> m_codes;
    std::vector<std::string> m_combos;
    std::map<std::string, int, std::less<>> m_ids;
};

LabelSchema load_schema(const std::filesystem::path& path);
void save_schema(const LabelSchema& schema, const std::filesystem::path& path);

struct Decomposed {
    std::string code;
    std::optional<std::string> subcode;
    friend bool operator==(const Decomposed&, const Decomposed&) = default;
};

/// Split at the first underscore; "None" maps to no subcode.
Decomposed decompose(std::string_view combo);
std::string join_combo(std::string_view code, const std::optional<std::string>& subcode);

using MultiHot = std::vector<std::uint8_t>;

MultiHot encode_labels(const LabelSchema& schema, std::span<const std::string> combos);
/// Active combos in id order.
std::vector<std::string> decode_labels(const LabelSchema& schema, const MultiHot& bits);

enum class Author { patient, provider };

std::string_view author_name(Author a);
Author parse_author(std::string_view name);

struct AnnotatedMessage {
    std::string id;
    Author author = Author::patient;
    std::string text;
    std::optional<std::vector<std::string>> labels;
};

nlohmann::json message_to_json(const AnnotatedMessage& m);
AnnotatedMessage message_from_json(const nlohmann::json& j);

/// JSON lines. Throws IoError naming the file and line on malformed input.
std::vector<AnnotatedMessage> read_messages(const std::filesystem::path& path);
void write_messages(const std::filesystem::path& path, std::span<const AnnotatedMessage> messages);

/// Throws InvalidArgument on a duplicate id or a label outside the schema.
void validate_messages(const LabelSchema& schema, std::span<const AnnotatedMessage> messages);

/// Greedy multi-label stratification. Returns sorted index lists, one per
/// fraction, that partition [0, n).
std::vector<std::vector<std::size_t>> iterative_stratified_split(std::span<const std::vector<std::string>> label_sets,
                                                                 std::span<const double> fractions,
                                                                 std::uint64_t seed);

} // namespace pvminer
