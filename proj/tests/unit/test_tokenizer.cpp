#include <algorithm>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "pvminer/errors.hpp"
#include "pvminer/tokenizer.hpp"

using namespace pvminer;

namespace {

Vocabulary vocab_of(std::initializer_list<const char*> extra) {
    Vocabulary v;
    for (const char* t : extra) {
        v.add(t);
    }
    return v;
}

std::string random_text(std::mt19937_64& rng, std::size_t words) {
    static const std::string letters = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ";
    std::uniform_int_distribution<std::size_t> pick(0, letters.size() - 1);
    std::uniform_int_distribution<std::size_t> len(1, 9);
    std::string text;
    for (std::size_t w = 0; w < words; ++w) {
        if (w > 0) {
            text += ' ';
        }
        for (std::size_t n = len(rng); n > 0; --n) {
            text += letters[pick(rng)];
        }
    }
    return text;
}

std::string lower(std::string s) {
    for (auto& c : s) {
        if (c >= 'A' && c <= 'Z') {
            c = static_cast<char>(c - 'A' + 'a');
        }
    }
    return s;
}

} // namespace

TEST_CASE("special tokens occupy the first eight ids") {
    Vocabulary v;
    CHECK(v.size() == 8);
    CHECK(v.token(kPadId) == "[PAD]");
    CHECK(v.token(kPatientId) == "[PATIENT]");
    CHECK(v.token(kProviderId) == "[PROVIDER]");
    CHECK(v.token(kTopicId) == "[TOPIC]");
    for (int id = 0; id < 8; ++id) {
        CHECK(*v.find(v.token(id)) == id);
    }
    CHECK_THROWS_AS(v.token(8), InvalidArgument);
    CHECK_THROWS_AS(v.token(-1), InvalidArgument);
}

TEST_CASE("segment_sentences examples") {
    CHECK(segment_sentences("Hi. Thanks!") == std::vector<std::string>{"Hi.", "Thanks!"});
    CHECK(segment_sentences("").empty());
    CHECK(segment_sentences("   \n ").empty());
    CHECK(segment_sentences("Dr. Smith called.") == std::vector<std::string>{"Dr. Smith called."});
    CHECK(segment_sentences("Bring snacks, e.g. Crackers.") ==
          std::vector<std::string>{"Bring snacks, e.g. Crackers."});
    CHECK(segment_sentences("Is it ready?! Yes. no split here.") ==
          std::vector<std::string>{"Is it ready?!", "Yes. no split here."});
    CHECK(segment_sentences("He said \"stop.\" Then left.") ==
          std::vector<std::string>{"He said \"stop.\"", "Then left."});
    CHECK(segment_sentences("Version 2.5 Is out.") == std::vector<std::string>{"Version 2.5 Is out."});
}

TEST_CASE("segments concatenate back to the input modulo whitespace") {
    std::mt19937_64 rng(5);
    const std::vector<std::string> pieces{"Hello", "dr.", "Mr.", "ok.", "Wait!", "Why?", "x", "St.", " ", "\n", "A.", "e.g."};
    std::uniform_int_distribution<std::size_t> pick(0, pieces.size() - 1);
    auto squash = [](const std::string& s) {
        std::string out;
        for (char c : s) {
            if (c != ' ' && c != '\n') {
                out += c;
            }
        }
        return out;
    };
    for (int trial = 0; trial < 300; ++trial) {
        std::string text;
        for (int n = 0; n < 12; ++n) {
            text += pieces[pick(rng)];
            text += ' ';
        }
        std::string joined;
        for (const auto& s : segment_sentences(text)) {
            CHECK(!s.empty());
            CHECK(s.front() != ' ');
            joined += s;
        }
        CHECK(squash(joined) == squash(text));
    }
}

TEST_CASE("pre_tokenize lowercases, isolates punctuation and keeps special literals") {
    CHECK(pre_tokenize("Thank you, Dr. LEE!") ==
          std::vector<std::string>{"thank", "you", ",", "dr", ".", "lee", "!"});
    CHECK(pre_tokenize("[PATIENT] hi [TOPIC] lab") == std::vector<std::string>{"[PATIENT]", "hi", "[TOPIC]", "lab"});
    CHECK(pre_tokenize("[patient]") == std::vector<std::string>{"[", "patient", "]"});
}

TEST_CASE("build_vocab merge sequence on a repeated word") {
    // Hand simulation of "aaaa" x100 as a ##a ##a ##a:
    //   (##a,##a)=200 beats (a,##a)=100            -> ##aa    a ##aa ##a
    //   (a,##aa)=100 ties (##aa,##a)=100, "##aa" < "a" -> ##aaa   a ##aaa
    //   (a,##aaa)=100                              -> aaaa    nothing left to merge
    std::vector<std::string> corpus(100, "aaaa");
    auto v = build_vocab(corpus, 20, 2);
    const std::vector<std::string> expected{"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "[PATIENT]", "[PROVIDER]",
                                            "[TOPIC]", "##a", "a", "##aa", "##aaa", "aaaa"};
    CHECK(v.tokens() == expected);
    CHECK(encode(v, "aaaa", false) == TokenSequence{*v.find("aaaa")});
    CHECK(encode(v, "aaa", false) == TokenSequence{*v.find("a"), *v.find("##aa")});
}

TEST_CASE("build_vocab grows to the target size and stops") {
    std::vector<std::string> corpus;
    for (int i = 0; i < 40; ++i) {
        corpus.push_back("the blood draw at the lab station");
        corpus.push_back("thank you for the wonderful help");
    }
    auto v = build_vocab(corpus, 60, 2);
    CHECK(v.size() == 60);
    CHECK(v.contains("[PATIENT]"));
    CHECK(v.contains("[PROVIDER]"));
    for (char c : std::string("thebloodrawatlsionkyufwepr")) {
        CHECK(v.contains(std::string(1, c)));
        CHECK(v.contains("##" + std::string(1, c)));
    }
    auto w = build_vocab(corpus, 60, 2);
    CHECK(v.serialize() == w.serialize());
    for (const auto& text : corpus) {
        CHECK(decode(v, encode(v, text)) == text);
    }
}

TEST_CASE("build_vocab error and degenerate cases") {
    std::vector<std::string> corpus{"abc abc", "cab"};
    // 8 specials + {a,b,c} in both forms
    CHECK_THROWS_AS(build_vocab(corpus, 14, 1), InvalidArgument);
    CHECK_THROWS_AS(build_vocab(std::vector<std::string>{}, 100, 1), InvalidArgument);
    auto chars_only = build_vocab(corpus, 100, corpus.size() + 100);
    CHECK(chars_only.size() == 14);
    auto none = build_vocab(std::vector<std::string>{"[PATIENT] ab"}, 20, 1);
    CHECK(none.contains("ab"));
    CHECK(none.size() == 8 + 4 + 1);
}

TEST_CASE("encode examples") {
    auto v = vocab_of({"blood", "##work", "thank", "you", "b", "##l", "##o", "##d"});
    const int blood = *v.find("blood"), work = *v.find("##work");
    CHECK(encode(v, "bloodwork") == TokenSequence{kClsId, blood, work, kSepId});
    CHECK(encode(v, "Blood", false) == TokenSequence{blood});
    CHECK(encode(v, "€", false) == TokenSequence{kUnkId});
    // partial cover still collapses the whole word
    CHECK(encode(v, "bloodz", false) == TokenSequence{kUnkId});
    CHECK(encode(v, "[PROVIDER] thank you", false) == TokenSequence{kProviderId, *v.find("thank"), *v.find("you")});
    CHECK(encode(v, "", true) == TokenSequence{kClsId, kSepId});
}

TEST_CASE("encoded sequences never exceed 512 ids") {
    auto v = vocab_of({"lab"});
    std::string text;
    for (int i = 0; i < 700; ++i) {
        text += "lab ";
    }
    auto ids = encode(v, text);
    CHECK(ids.size() == 512);
    CHECK(ids.front() == kClsId);
    CHECK(ids.back() == kSepId);
    CHECK(encode(v, text, false).size() == 700);
}

TEST_CASE("decode examples") {
    auto v = vocab_of({"blood", "##work", "thank", "you"});
    const std::vector<int> ids{*v.find("blood"), *v.find("##work")};
    CHECK(decode(v, ids) == "bloodwork");
    CHECK(decode(v, std::vector<int>{}) == "");
    CHECK(decode(v, encode(v, "thank you")) == "thank you");
    CHECK_THROWS_AS(decode(v, std::vector<int>{99}), InvalidArgument);
}

TEST_CASE("round trips on fully covered text") {
    std::vector<std::string> corpus;
    std::mt19937_64 rng(21);
    for (int i = 0; i < 50; ++i) {
        corpus.push_back(random_text(rng, 8));
    }
    auto v = build_vocab(corpus, 200, 2);
    for (int trial = 0; trial < 300; ++trial) {
        const auto text = random_text(rng, 6);
        const auto ids = encode(v, text);
        CHECK(std::find(ids.begin(), ids.end(), kUnkId) == ids.end());
        CHECK(decode(v, ids) == lower(text));
        CHECK(encode(v, decode(v, ids)) == ids);
        for (int id : ids) {
            CHECK(static_cast<std::size_t>(id) < v.size());
        }
    }
}

TEST_CASE("filter_segment keeps at most 510 content tokens") {
    CHECK(filter_segment(std::vector<int>(510, 9)));
    CHECK_FALSE(filter_segment(std::vector<int>(511, 9)));
    CHECK(filter_segment(std::vector<int>{}));
}

TEST_CASE("vocabulary file round trip and validation") {
    auto v = vocab_of({"blood", "##work", "é"});
    auto path = std::filesystem::temp_directory_path() / "pvminer_test_vocab.txt";
    save_vocab(v, path);
    auto back = load_vocab(path);
    CHECK(back == v);
    CHECK(back.fingerprint() == v.fingerprint());
    std::filesystem::remove(path);

    CHECK_THROWS_AS(Vocabulary::parse("[PAD]\n[UNK]\n"), InvalidArgument);
    CHECK_THROWS_AS(Vocabulary::parse(v.serialize() + "blood\n"), InvalidArgument);
    CHECK_THROWS_AS(Vocabulary::parse(v.serialize() + "two words\n"), InvalidArgument);
    CHECK_THROWS_AS(load_vocab("/nonexistent/vocab.txt"), IoError);
}
