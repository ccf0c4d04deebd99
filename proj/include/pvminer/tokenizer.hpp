#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace pvminer {

enum SpecialId : int {
    kPadId = 0,
    kUnkId = 1,
    kClsId = 2,
    kSepId = 3,
    kMaskId = 4,
    kPatientId = 5,
    kProviderId = 6,
    kTopicId = 7,
};

inline constexpr std::size_t kSpecialCount = 8;
inline constexpr std::array<std::string_view, kSpecialCount> kSpecialTokens = {
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "[PATIENT]", "[PROVIDER]", "[TOPIC]"};
inline constexpr std::string_view kContinuation = "##";

inline constexpr std::size_t kMaxSequenceLength = 512;
inline constexpr std::size_t kMaxContentLength = kMaxSequenceLength - 2;

using TokenSequence = std::vector<int>;

/// Token inventory with dense ids. The special tokens always occupy ids 0..7
/// in kSpecialTokens order.
class Vocabulary {
public:
    Vocabulary();

    /// Throws InvalidArgument unless tokens starts with the specials in order
    /// and holds no duplicates, empty tokens or whitespace.
    explicit Vocabulary(std::vector<std::string> tokens);

    std::size_t size() const noexcept { return m_tokens.size(); }
    std::optional<int> find(std::string_view token) const;
    bool contains(std::string_view token) const { return find(token).has_value(); }

    /// Throws InvalidArgument for ids outside [0, size).
    const std::string& token(int id) const;

    static bool is_special(int id) noexcept { return id >= 0 && id < static_cast<int>(kSpecialCount); }

    const std::vector<std::string>& tokens() const noexcept { return m_tokens; }

    /// Returns false when the token was already present.
    bool add(std::string token);

    /// One token per line, line number = id.
    std::string serialize() const;
    static Vocabulary parse(std::string_view text);

    /// 16 hex digit FNV-1a of serialize().
    std::string fingerprint() const;

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.m_tokens == b.m_tokens; }

private:
    std::vector<std::string> m_tokens;
    std::unordered_map<std::string, int> m_index;
};

void save_vocab(const Vocabulary& vocab, const std::filesystem::path& path);
Vocabulary load_vocab(const std::filesystem::path& path);

/// Splits after . ! ? (plus closing quotes/brackets) when followed by
/// whitespace and an uppercase letter, except after a listed abbreviation.
/// Segments are whitespace-trimmed; blank input gives no segments.
std::vector<std::string> segment_sentences(std::string_view text);

/// Lowercased words; every ASCII punctuation character is a word of its own.
/// Special-token literals such as "[PATIENT]" survive as single words.
std::vector<std::string> pre_tokenize(std::string_view text);

/// Greedy highest-count pair merging over "##"-continued character symbols.
/// Pairs below min_frequency never merge; ties go to the lexicographically
/// smallest (left, right) pair.
Vocabulary build_vocab(std::span<const std::string> corpus, std::size_t target_size, std::size_t min_frequency = 2);

/// Greedy longest-match-first WordPiece. A word with no full cover becomes
/// [UNK]. With specials the result is [CLS] content [SEP], content cut at 510.
TokenSequence encode(const Vocabulary& vocab, std::string_view text, bool add_specials = true);

/// Drops special tokens and glues "##" continuations to the previous token.
std::string decode(const Vocabulary& vocab, std::span<const int> ids);

/// True iff a content-only sequence fits the 510-token budget.
bool filter_segment(std::span<const int> content) noexcept;

} // namespace pvminer
