#include "pvminer/tokenizer.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <utility>

#include "pvminer/errors.hpp"
#include "pvminer/io.hpp"

namespace pvminer {

namespace {

constexpr std::size_t kMaxCharsPerWord = 100;

constexpr std::array<std::string_view, 8> kAbbreviations = {"dr", "mr", "mrs", "ms", "st", "e.g", "i.e", "etc"};

bool is_space(char c) noexcept {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_ascii_punct(char c) noexcept {
    const auto u = static_cast<unsigned char>(c);
    return (u >= 33 && u <= 47) || (u >= 58 && u <= 64) || (u >= 91 && u <= 96) || (u >= 123 && u <= 126);
}

char ascii_lower(char c) noexcept {
    return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && is_space(s.front())) {
        s.remove_prefix(1);
    }
    while (!s.empty() && is_space(s.back())) {
        s.remove_suffix(1);
    }
    return s;
}

std::optional<int> special_at(std::string_view text, std::size_t pos) {
    for (std::size_t i = 0; i < kSpecialTokens.size(); ++i) {
        if (text.substr(pos, kSpecialTokens[i].size()) == kSpecialTokens[i]) {
            return static_cast<int>(i);
        }
    }
    return std::nullopt;
}

std::optional<int> special_id(std::string_view word) {
    for (std::size_t i = 0; i < kSpecialTokens.size(); ++i) {
        if (word == kSpecialTokens[i]) {
            return static_cast<int>(i);
        }
    }
    return std::nullopt;
}

// Byte length of the UTF-8 sequence starting at s[pos]; malformed input
// falls back to single bytes.
std::size_t codepoint_length(std::string_view s, std::size_t pos) {
    const auto lead = static_cast<unsigned char>(s[pos]);
    std::size_t len = 1;
    if (lead >= 0xF0 && lead < 0xF8) {
        len = 4;
    } else if (lead >= 0xE0) {
        len = lead < 0xF0 ? 3 : 1;
    } else if (lead >= 0xC0) {
        len = 2;
    }
    if (pos + len > s.size()) {
        return 1;
    }
    for (std::size_t k = 1; k < len; ++k) {
        if ((static_cast<unsigned char>(s[pos + k]) & 0xC0) != 0x80) {
            return 1;
        }
    }
    return len;
}

std::vector<std::string> codepoints(std::string_view word) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < word.size();) {
        const std::size_t len = codepoint_length(word, i);
        out.emplace_back(word.substr(i, len));
        i += len;
    }
    return out;
}

bool is_abbreviation(std::string_view text, std::size_t dot) {
    std::size_t begin = dot;
    while (begin > 0 && !is_space(text[begin - 1])) {
        --begin;
    }
    std::string word;
    for (std::size_t i = begin; i < dot; ++i) {
        word.push_back(ascii_lower(text[i]));
    }
    const auto first = word.find_first_not_of("\"'([{");
    word = first == std::string::npos ? std::string() : word.substr(first);
    return std::find(kAbbreviations.begin(), kAbbreviations.end(), word) != kAbbreviations.end();
}

void wordpiece(const Vocabulary& vocab, std::string_view word, TokenSequence& out) {
    const auto chars = codepoints(word);
    if (chars.size() > kMaxCharsPerWord) {
        out.push_back(kUnkId);
        return;
    }
    TokenSequence pieces;
    std::size_t start = 0;
    while (start < chars.size()) {
        std::optional<int> match;
        std::size_t end = chars.size();
        for (; end > start; --end) {
            std::string piece = start > 0 ? std::string(kContinuation) : std::string();
            for (std::size_t k = start; k < end; ++k) {
                piece += chars[k];
            }
            match = vocab.find(piece);
            if (match) {
                break;
            }
        }
        if (!match) {
            out.push_back(kUnkId);
            return;
        }
        pieces.push_back(*match);
        start = end;
    }
    out.insert(out.end(), pieces.begin(), pieces.end());
}

} // namespace

Vocabulary::Vocabulary() {
    for (auto s : kSpecialTokens) {
        add(std::string(s));
    }
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
    if (tokens.size() < kSpecialCount) {
        throw InvalidArgument("vocabulary has " + std::to_string(tokens.size()) +
                              " tokens, fewer than the special tokens");
    }
    for (std::size_t i = 0; i < kSpecialCount; ++i) {
        if (tokens[i] != kSpecialTokens[i]) {
            throw InvalidArgument("vocabulary id " + std::to_string(i) + " must be " +
                                  std::string(kSpecialTokens[i]) + ", found '" + tokens[i] + "'");
        }
    }
    for (auto& t : tokens) {
        if (t.empty() || std::any_of(t.begin(), t.end(), is_space)) {
            throw InvalidArgument("vocabulary token '" + t + "' is empty or contains whitespace");
        }
        if (contains(t)) {
            throw InvalidArgument("duplicate vocabulary token '" + t + "'");
        }
        add(std::move(t));
    }
}

std::optional<int> Vocabulary::find(std::string_view token) const {
    auto it = m_index.find(std::string(token));
    if (it == m_index.end()) {
        return std::nullopt;
    }
    return it->second;
}

const std::string& Vocabulary::token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= m_tokens.size()) {
        throw InvalidArgument("token id " + std::to_string(id) + " outside vocabulary of size " +
                              std::to_string(m_tokens.size()));
    }
    return m_tokens[static_cast<std::size_t>(id)];
}

bool Vocabulary::add(std::string token) {
    const bool inserted = m_index.emplace(token, static_cast<int>(m_tokens.size())).second;
    if (!inserted) {
        return false;
    }
    m_tokens.push_back(std::move(token));
    return true;
}

std::string Vocabulary::serialize() const {
    std::string out;
    for (const auto& t : m_tokens) {
        out += t;
        out += '\n';
    }
    return out;
}

Vocabulary Vocabulary::parse(std::string_view text) {
    std::vector<std::string> tokens;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) {
            nl = text.size();
        }
        auto line = text.substr(pos, nl - pos);
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        tokens.emplace_back(line);
        pos = nl + 1;
    }
    return Vocabulary(std::move(tokens));
}

std::string Vocabulary::fingerprint() const {
    return io::hex64(io::fnv1a(serialize()));
}

void save_vocab(const Vocabulary& vocab, const std::filesystem::path& path) {
    io::write_text_atomic(path, vocab.serialize());
}

Vocabulary load_vocab(const std::filesystem::path& path) {
    return Vocabulary::parse(io::read_text(path));
}

std::vector<std::string> segment_sentences(std::string_view text) {
    std::vector<std::string> segments;
    auto emit = [&](std::string_view piece) {
        piece = trim(piece);
        if (!piece.empty()) {
            segments.emplace_back(piece);
        }
    };
    std::size_t start = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (c != '.' && c != '!' && c != '?') {
            continue;
        }
        std::size_t j = i + 1;
        while (j < text.size() && (text[j] == '.' || text[j] == '!' || text[j] == '?')) {
            ++j;
        }
        const bool lone_dot = c == '.' && j == i + 1;
        while (j < text.size() && (text[j] == '"' || text[j] == '\'' || text[j] == ')' || text[j] == ']')) {
            ++j;
        }
        if (j >= text.size() || !is_space(text[j])) {
            i = j - 1;
            continue;
        }
        std::size_t k = j;
        while (k < text.size() && is_space(text[k])) {
            ++k;
        }
        if (k < text.size() && text[k] >= 'A' && text[k] <= 'Z' && !(lone_dot && is_abbreviation(text, i))) {
            emit(text.substr(start, j - start));
            start = j;
        }
        i = j - 1;
    }
    emit(text.substr(start));
    return segments;
}

std::vector<std::string> pre_tokenize(std::string_view text) {
    std::vector<std::string> words;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) {
            words.push_back(std::move(current));
            current.clear();
        }
    };
    for (std::size_t i = 0; i < text.size();) {
        const char c = text[i];
        if (is_space(c)) {
            flush();
            ++i;
        } else if (c == '[' && special_at(text, i)) {
            flush();
            const auto id = *special_at(text, i);
            words.emplace_back(kSpecialTokens[static_cast<std::size_t>(id)]);
            i += kSpecialTokens[static_cast<std::size_t>(id)].size();
        } else if (is_ascii_punct(c)) {
            flush();
            words.emplace_back(1, c);
            ++i;
        } else {
            current.push_back(ascii_lower(c));
            ++i;
        }
    }
    flush();
    return words;
}

Vocabulary build_vocab(std::span<const std::string> corpus, std::size_t target_size, std::size_t min_frequency) {
    if (corpus.empty()) {
        throw InvalidArgument("build_vocab: corpus is empty");
    }
    std::map<std::string, std::size_t> word_counts;
    for (const auto& text : corpus) {
        for (auto& w : pre_tokenize(text)) {
            if (!special_id(w)) {
                ++word_counts[w];
            }
        }
    }

    struct Word {
        std::vector<std::string> symbols;
        std::size_t count;
    };
    std::vector<Word> words;
    std::set<std::string> alphabet;
    for (const auto& [w, n] : word_counts) {
        Word word{codepoints(w), n};
        for (std::size_t i = 0; i < word.symbols.size(); ++i) {
            alphabet.insert(word.symbols[i]);
            alphabet.insert(std::string(kContinuation) + word.symbols[i]);
            if (i > 0) {
                word.symbols[i] = std::string(kContinuation) + word.symbols[i];
            }
        }
        words.push_back(std::move(word));
    }
    if (target_size <= kSpecialCount + alphabet.size()) {
        throw InvalidArgument("build_vocab: target size " + std::to_string(target_size) +
                              " must exceed the " + std::to_string(kSpecialCount + alphabet.size()) +
                              " special and single-character tokens");
    }

    Vocabulary vocab;
    for (const auto& s : alphabet) {
        vocab.add(s);
    }
    const std::size_t threshold = std::max<std::size_t>(min_frequency, 1);
    while (vocab.size() < target_size) {
        std::map<std::pair<std::string, std::string>, std::size_t> pairs;
        for (const auto& w : words) {
            for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i) {
                pairs[{w.symbols[i], w.symbols[i + 1]}] += w.count;
            }
        }
        const std::pair<std::string, std::string>* best = nullptr;
        std::size_t best_count = 0;
        for (const auto& [p, n] : pairs) {
            if (n > best_count) {
                best = &p;
                best_count = n;
            }
        }
        if (best == nullptr || best_count < threshold) {
            break;
        }
        const auto [left, right] = *best;
        const std::string merged = left + right.substr(kContinuation.size());
        for (auto& w : words) {
            std::vector<std::string> next;
            next.reserve(w.symbols.size());
            for (std::size_t i = 0; i < w.symbols.size(); ++i) {
                if (i + 1 < w.symbols.size() && w.symbols[i] == left && w.symbols[i + 1] == right) {
                    next.push_back(merged);
                    ++i;
                } else {
                    next.push_back(std::move(w.symbols[i]));
                }
            }
            w.symbols = std::move(next);
        }
        vocab.add(merged);
    }
    return vocab;
}

TokenSequence encode(const Vocabulary& vocab, std::string_view text, bool add_specials) {
    TokenSequence content;
    for (const auto& w : pre_tokenize(text)) {
        if (auto id = special_id(w)) {
            content.push_back(*id);
        } else {
            wordpiece(vocab, w, content);
        }
    }
    if (!add_specials) {
        return content;
    }
    if (content.size() > kMaxContentLength) {
        content.resize(kMaxContentLength);
    }
    TokenSequence out;
    out.reserve(content.size() + 2);
    out.push_back(kClsId);
    out.insert(out.end(), content.begin(), content.end());
    out.push_back(kSepId);
    return out;
}

std::string decode(const Vocabulary& vocab, std::span<const int> ids) {
    std::string out;
    for (int id : ids) {
        const std::string& tok = vocab.token(id);
        if (Vocabulary::is_special(id)) {
            continue;
        }
        if (tok.starts_with(kContinuation)) {
            out += tok.substr(kContinuation.size());
        } else {
            if (!out.empty()) {
                out += ' ';
            }
            out += tok;
        }
    }
    return out;
}

bool filter_segment(std::span<const int> content) noexcept {
    return content.size() <= kMaxContentLength;
}

} // namespace pvminer
