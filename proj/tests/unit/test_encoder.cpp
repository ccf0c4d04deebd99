#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "doctest.h"
#include "gradcheck.hpp"
#include "pvminer/encoder.hpp"
#include "pvminer/errors.hpp"
#include "pvminer/io.hpp"

using namespace pvminer;

namespace {

EncoderConfig tiny_config(std::size_t vocab, std::size_t layers = 1, std::size_t heads = 2, std::size_t hidden = 8) {
    EncoderConfig c;
    c.layers = layers;
    c.heads = heads;
    c.hidden = hidden;
    c.ffn = 2 * hidden;
    c.max_position = 16;
    c.vocab_size = vocab;
    return c;
}

std::vector<std::string> toy_lines() {
    std::ifstream in(std::string(PVMINER_FIXTURE_DIR) + "/toy_corpus.txt");
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) {
        lines.push_back(line);
    }
    return lines;
}

double cosine(const std::vector<float>& a, const std::vector<float>& b) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return dot / std::sqrt(na * nb);
}

} // namespace

TEST_CASE("encoder config presets and validation") {
    auto base = EncoderConfig::from_preset("pv-base-mini", 100);
    CHECK(base.layers == 2);
    CHECK(base.heads == 2);
    CHECK(base.hidden == 64);
    auto large = EncoderConfig::from_preset("pv-large-mini", 100);
    CHECK(large.layers == 4);
    CHECK(large.heads == 4);
    CHECK(large.hidden == 128);
    CHECK(EncoderConfig::from_json(large.to_json()) == large);
    CHECK_THROWS_AS(EncoderConfig::from_preset("bert-base", 100), InvalidArgument);

    auto bad = tiny_config(50);
    bad.heads = 3;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    bad = tiny_config(50);
    bad.max_position = 513;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    bad = tiny_config(8);
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}

TEST_CASE("forward shape, determinism and padding isolation") {
    Encoder model(tiny_config(30, 2), 4);
    const std::vector<int> ids{kClsId, 9, 12, 20, kSepId};
    auto h1 = hidden_states(model, std::span<const int>(ids));
    CHECK(h1.shape() == std::vector<std::size_t>{5, 8});
    CHECK(h1.all_finite());
    CHECK(hidden_states(model, std::span<const int>(ids)) == h1);

    std::vector<int> padded = ids;
    padded.insert(padded.end(), 3, kPadId);
    std::vector<std::uint8_t> mask(padded.size(), 1);
    std::fill(mask.begin() + 5, mask.end(), 0);
    auto h2 = hidden_states(model, std::span<const int>(padded), std::span<const std::uint8_t>(mask));
    CHECK(h2.shape() == std::vector<std::size_t>{8, 8});
    for (std::size_t r = 0; r < 5; ++r) {
        for (std::size_t c = 0; c < 8; ++c) {
            CHECK(std::abs(h2.at(r, c) - h1.at(r, c)) < 1e-5f);
        }
    }
    const std::vector<int> too_long(17, 9);
    CHECK_THROWS_AS(hidden_states(model, std::span<const int>(too_long)), InvalidArgument);
}

TEST_CASE("mlm_mask selection counts") {
    std::mt19937_64 rng(1);
    std::vector<int> seq(100);
    std::iota(seq.begin(), seq.end(), 8);
    CHECK(mlm_mask(seq, 0.0, 200, rng).masked_count() == 0);
    CHECK(mlm_mask(seq, 1.0, 200, rng).masked_count() == 100);
    CHECK_THROWS_AS(mlm_mask(seq, 1.5, 200, rng), InvalidArgument);

    std::vector<int> big(10000, 42);
    const double frac = static_cast<double>(mlm_mask(big, 0.15, 200, rng).masked_count()) / 10000.0;
    CHECK(std::abs(frac - 0.15) <= 0.01);
}

TEST_CASE("mlm_mask replacement split and special tokens") {
    std::mt19937_64 rng(2);
    std::vector<int> seq{kClsId, 10, kPatientId, 11, 12, kTopicId, 13, kSepId, kPadId};
    std::size_t selected = 0, masked = 0, kept = 0, replaced = 0;
    for (int draw = 0; draw < 100000; ++draw) {
        auto b = mlm_mask(seq, 0.5, 40, rng);
        for (std::size_t i = 0; i < seq.size(); ++i) {
            if (Vocabulary::is_special(seq[i])) {
                CHECK_MESSAGE(b.targets[i] == -1, "special token selected at draw ", draw);
                CHECK(b.input_ids[i] == seq[i]);
                continue;
            }
            if (b.targets[i] < 0) {
                CHECK(b.input_ids[i] == seq[i]);
                continue;
            }
            ++selected;
            CHECK(b.targets[i] == seq[i]);
            if (b.input_ids[i] == kMaskId) {
                ++masked;
            } else if (b.input_ids[i] == seq[i]) {
                ++kept;
            } else {
                ++replaced;
                CHECK(!Vocabulary::is_special(b.input_ids[i]));
            }
        }
    }
    const double n = static_cast<double>(selected);
    CHECK(std::abs(masked / n - 0.8) < 0.01);
    // a random replacement can land on the original id (1/32 here)
    CHECK(std::abs((replaced + kept) / n - 0.2) < 0.01);
    CHECK(replaced / n > 0.09);
}

TEST_CASE("mlm_loss analytic cases") {
    auto cfg = tiny_config(25);
    Encoder model(cfg, 3);
    std::mt19937_64 rng(9);
    std::vector<MlmBatch> batch{mlm_mask(std::vector<int>{kClsId, 9, 10, 11, 12, kSepId}, 1.0, 25, rng),
                                mlm_mask(std::vector<int>{kClsId, 20, 21, kSepId}, 1.0, 25, rng)};

    SUBCASE("fresh model sits near ln V") {
        const double loss = mlm_loss_value(model, std::span<const MlmBatch>(batch));
        CHECK(std::abs(loss - std::log(25.0)) / std::log(25.0) < 0.05);
    }
    SUBCASE("zero token table gives uniform logits") {
        model.parameter("embeddings.token").fill(0.0f);
        const double loss = mlm_loss_value(model, std::span<const MlmBatch>(batch));
        CHECK(loss == doctest::Approx(std::log(25.0)).epsilon(1e-6));
    }
    SUBCASE("large margin at the target drives the loss to zero") {
        model.parameter("embeddings.token").fill(0.0f);
        std::vector<MlmBatch> single{mlm_mask(std::vector<int>{kClsId, 14, kSepId}, 1.0, 25, rng)};
        single[0].input_ids[1] = kMaskId;
        model.parameter("mlm.bias")[14] = 60.0f;
        CHECK(mlm_loss_value(model, std::span<const MlmBatch>(single)) < 1e-6);
    }
    SUBCASE("no masked positions") {
        std::vector<MlmBatch> empty{mlm_mask(std::vector<int>{kClsId, 9, kSepId}, 0.0, 25, rng)};
        CHECK_THROWS_AS(mlm_loss_value(model, std::span<const MlmBatch>(empty)), InvalidArgument);
    }
}

TEST_CASE("mlm loss gradient matches finite differences on a one-layer model") {
    auto model = Encoder(tiny_config(20, 1, 2, 8), 11).cast<double>();
    // push the weights away from the tiny init so every path carries signal
    std::mt19937_64 rng(12);
    std::normal_distribution<double> noise(0.0, 0.3);
    for (auto& p : model.parameters()) {
        for (auto& x : p.values()) {
            x += noise(rng);
        }
    }
    std::vector<MlmBatch> batch{mlm_mask(std::vector<int>{kClsId, 9, 10, 11, 15, kSepId}, 0.6, 20, rng),
                                mlm_mask(std::vector<int>{kClsId, 17, 8, 19, kSepId}, 0.6, 20, rng)};
    batch[0].targets[2] = 10;
    batch[0].input_ids[2] = kMaskId;

    ag::Tape<double> tape;
    auto bound = model.bind(tape);
    tape.backward(mlm_loss(bound, std::span<const MlmBatch>(batch)));
    std::vector<BasicTensor<double>> analytic;
    std::vector<BasicTensor<double>*> params;
    for (std::size_t i = 0; i < bound.params.size(); ++i) {
        analytic.push_back(tape.grad(bound.params[i]));
        params.push_back(&model.parameters()[i]);
    }
    auto checks = testing::check_parameters(model.names(), params, analytic, [&] {
        return mlm_loss_value(model, std::span<const MlmBatch>(batch));
    });
    REQUIRE(checks.size() == model.parameter_tensor_count());
    for (const auto& c : checks) {
        CHECK_MESSAGE(c.max_relative_error < 1e-3, c.name, " rel err ", c.max_relative_error);
    }
}

TEST_CASE("pretrain with zero steps returns the initialisation") {
    const std::vector<TokenSequence> corpus{{kClsId, 9, 10, kSepId}, {kClsId, 11, kSepId}};
    auto cfg = tiny_config(20);
    PretrainOptions opts;
    opts.steps = 0;
    opts.seed = 17;
    auto result = pretrain(corpus, cfg, opts);
    CHECK(result.trace.empty());
    CHECK(result.model == Encoder(cfg, 17));

    CHECK_THROWS_AS(pretrain(std::vector<TokenSequence>{}, cfg, opts), InvalidArgument);
    const std::vector<TokenSequence> no_content{{kClsId, kSepId}};
    CHECK_THROWS_AS(pretrain(no_content, cfg, opts), InvalidArgument);
}

TEST_CASE("pretrain is deterministic and lowers the loss") {
    const auto lines = toy_lines();
    REQUIRE(lines.size() == 2000);
    const std::vector<std::string> head(lines.begin(), lines.begin() + 400);
    auto vocab = build_vocab(head, 120, 2);
    std::vector<TokenSequence> corpus;
    for (const auto& l : head) {
        corpus.push_back(encode(vocab, l));
    }
    auto cfg = tiny_config(vocab.size(), 1, 2, 16);
    cfg.max_position = 64;
    PretrainOptions opts;
    opts.steps = 120;
    opts.learning_rate = 3e-3;
    opts.seed = 5;
    auto a = pretrain(corpus, cfg, opts);
    auto b = pretrain(corpus, cfg, opts);
    CHECK(a.trace == b.trace);
    CHECK(a.model == b.model);
    auto s = smooth(a.trace, 20);
    CHECK(s.back() < s.front());

    opts.seed = 6;
    CHECK_FALSE(pretrain(corpus, cfg, opts).trace == a.trace);
}

TEST_CASE("smooth averages full windows") {
    std::vector<TracePoint> t{{0, 1.0}, {1, 2.0}, {2, 3.0}, {3, 4.0}};
    CHECK(smooth(t, 2) == std::vector<double>{1.5, 2.5, 3.5});
    CHECK(smooth(t, 5).empty());
    CHECK_THROWS_AS(smooth(t, 0), InvalidArgument);
}

TEST_CASE("embed pools content positions") {
    auto vocab = build_vocab(std::vector<std::string>{"blood test draw thank you"}, 40, 1);
    Encoder model(tiny_config(vocab.size()), 8);
    auto e1 = embed(model, vocab, "blood test");
    CHECK(e1.size() == 8);
    CHECK(embed(model, vocab, "blood test") == e1);
    CHECK_THROWS_AS(embed(model, vocab, "   "), InvalidArgument);

    // oracle: mean of hidden rows 1..len-2 computed directly
    const auto ids = encode(vocab, "blood test");
    const auto h = hidden_states(model, std::span<const int>(ids));
    for (std::size_t j = 0; j < 8; ++j) {
        double acc = 0;
        for (std::size_t r = 1; r + 1 < ids.size(); ++r) {
            acc += h.at(r, j);
        }
        CHECK(std::abs(e1[j] - acc / static_cast<double>(ids.size() - 2)) < 1e-6);
    }
    // a text of unknown words still embeds
    CHECK(embed(model, vocab, "zzz").size() == 8);
}

TEST_CASE("embedding similarity follows co-occurrence after toy pre-training") {
    const auto lines = toy_lines();
    auto vocab = build_vocab(lines, 160, 2);
    std::vector<TokenSequence> corpus;
    for (const auto& l : lines) {
        corpus.push_back(encode(vocab, l));
    }
    auto cfg = EncoderConfig::from_preset("pv-base-mini", vocab.size());
    cfg.max_position = 64;
    PretrainOptions opts;
    opts.steps = 300;
    opts.learning_rate = 2e-3;
    opts.seed = 1;
    auto model = pretrain(corpus, cfg, opts).model;
    const auto test = embed(model, vocab, "blood test");
    CHECK(cosine(test, embed(model, vocab, "blood draw")) > cosine(test, embed(model, vocab, "thank you")));
}

TEST_CASE("encoder checkpoint round trip is bit exact") {
    auto vocab = build_vocab(std::vector<std::string>{"blood test draw thank you"}, 40, 1);
    Encoder model(tiny_config(vocab.size(), 2), 8);
    model.parameter("mlm.bias")[3] = -0.0f;
    model.parameter("mlm.bias")[4] = 1e-40f;
    const auto dir = std::filesystem::temp_directory_path() / "pvminer_test_encoder_ckpt";
    std::filesystem::remove_all(dir);
    save_encoder(model, vocab, CheckpointMeta{"", 12, 99}, dir);
    auto loaded = load_encoder(dir);
    CHECK(loaded.vocab == vocab);
    CHECK(loaded.meta.step == 12);
    CHECK(loaded.meta.seed == 99);
    CHECK(loaded.meta.vocab_hash == vocab.fingerprint());
    CHECK(loaded.model.config() == model.config());
    for (std::size_t i = 0; i < model.parameter_tensor_count(); ++i) {
        CHECK(io::f32_bytes(loaded.model.parameters()[i].data()) == io::f32_bytes(model.parameters()[i].data()));
    }
    // re-saving reproduces the manifest byte for byte
    const auto first = io::read_text(dir / "manifest.json");
    save_encoder(loaded.model, loaded.vocab, loaded.meta, dir);
    CHECK(io::read_text(dir / "manifest.json") == first);

    Vocabulary other = vocab;
    other.add("extra");
    save_vocab(other, dir / "vocab.txt");
    CHECK_THROWS_AS(load_encoder(dir), InvalidState);
    std::filesystem::remove_all(dir);
    CHECK_THROWS_AS(load_encoder(dir), DependencyError);
}
