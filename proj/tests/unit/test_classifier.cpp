#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "doctest.h"
#include "gradcheck.hpp"
#include "pvminer/classifier.hpp"
#include "pvminer/container.hpp"
#include "pvminer/errors.hpp"
#include "pvminer/eval.hpp"
#include "pvminer/io.hpp"

using namespace pvminer;

namespace {

std::vector<AnnotatedMessage> fixture() {
    return read_messages(std::string(PVMINER_FIXTURE_DIR) + "/labeled_messages.jsonl");
}

// Encoder pre-trained on the toy corpus plus the fixture texts, and a topic
// model fitted on the fixture.
struct World {
    Vocabulary vocab;
    Encoder encoder;
    TopicModel topics;
    std::vector<AnnotatedMessage> messages;

    World() {
        std::ifstream in(std::string(PVMINER_FIXTURE_DIR) + "/toy_corpus.txt");
        std::vector<std::string> lines;
        for (std::string line; std::getline(in, line);) {
            lines.push_back(line);
        }
        messages = fixture();
        std::vector<std::string> texts;
        for (const auto& m : messages) {
            lines.push_back(m.text);
            texts.push_back(m.text);
        }
        vocab = build_vocab(lines, 400, 2);
        std::vector<TokenSequence> seqs;
        for (const auto& l : lines) {
            seqs.push_back(encode(vocab, l));
        }
        auto cfg = EncoderConfig::from_preset("pv-base-mini", vocab.size());
        cfg.max_position = 64;
        PretrainOptions opts;
        opts.steps = 200;
        opts.learning_rate = 2e-3;
        opts.seed = 1;
        encoder = pretrain(seqs, cfg, opts).model;
        topics = fit_topics(texts, embedder(), TopicParams{5, 0.5, 3, 3});
    }

    Embedder embedder() const {
        return [this](std::string_view t) { return embed(encoder, vocab, t); };
    }
    TopicContext context() const { return {&topics, embedder()}; }

    static const World& get() {
        static const World world;
        return world;
    }
};

TrainConfig quick_config(std::size_t epochs) {
    TrainConfig c;
    c.max_epochs = epochs;
    c.learning_rate = 1e-3;
    c.patience = epochs;
    c.seed = 4;
    return c;
}

const FinetuneResult& overfit() {
    static const FinetuneResult r = [] {
        const auto& w = World::get();
        return finetune(w.messages, w.messages, w.encoder, w.vocab, w.context(), LabelSchema::default_schema(),
                        AugmentOptions{}, quick_config(75));
    }();
    return r;
}

} // namespace

TEST_CASE("augment prefixes the author and appends topic keywords") {
    const auto& w = World::get();
    const auto ctx = w.context();
    const AnnotatedMessage patient{"p", Author::patient, "I am not feeling well today", std::nullopt};
    const auto in = augment(patient, ctx, AugmentOptions{});
    REQUIRE(in.author == Author::patient);
    CHECK(in.topic == assign(*ctx.model, patient.text, ctx.embedder));
    CHECK(in.keywords == top_keywords(*ctx.model, in.topic, 3));
    std::string expected = "[PATIENT] I am not feeling well today [TOPIC]";
    for (const auto& k : in.keywords) {
        expected += " " + k;
    }
    CHECK(in.text() == expected);

    const AnnotatedMessage provider{"q", Author::provider, "See you soon.", std::nullopt};
    CHECK(augment(provider, ctx, AugmentOptions{}).text().starts_with("[PROVIDER] See you soon. [TOPIC] "));
    CHECK(augment(provider, ctx, AugmentOptions{true, true, 0}).text() == "[PROVIDER] See you soon.");
    CHECK(augment(provider, ctx, AugmentOptions{false, false, 3}).text() == "See you soon.");

    const AnnotatedMessage twice{"r", Author::patient, augment(patient, ctx, AugmentOptions{}).text(), std::nullopt};
    CHECK_THROWS_AS(augment(twice, ctx, AugmentOptions{}), InvalidArgument);
    const AnnotatedMessage spaced{"s", Author::patient, "  [PROVIDER] hi", std::nullopt};
    CHECK_THROWS_AS(augment(spaced, ctx, AugmentOptions{false, false, 0}), InvalidArgument);

    const TopicModel unfitted;
    CHECK_THROWS_AS(augment(patient, TopicContext{&unfitted, ctx.embedder}, AugmentOptions{}), InvalidState);
    CHECK_THROWS_AS(augment(patient, TopicContext{}, AugmentOptions{}), InvalidState);
    CHECK_NOTHROW(augment(patient, TopicContext{}, AugmentOptions{true, false, 3}));
}

TEST_CASE("input ids keep the author and keywords and truncate the body") {
    const auto& w = World::get();
    AugmentedInput in;
    in.author = Author::provider;
    in.body = "please go to the lab for blood work before your visit";
    in.keywords = {"lab", "blood"};
    const auto full = input_ids(w.vocab, in, 512);
    REQUIRE(full.size() > 8);
    CHECK(full.front() == kClsId);
    CHECK(full[1] == kProviderId);
    CHECK(full.back() == kSepId);
    const auto topic_at = std::find(full.begin(), full.end(), kTopicId);
    REQUIRE(topic_at != full.end());
    const auto suffix = TokenSequence(topic_at, full.end());

    const auto cut = input_ids(w.vocab, in, 8);
    CHECK(cut.size() == 8);
    CHECK(cut[1] == kProviderId);
    CHECK(TokenSequence(cut.end() - static_cast<long>(suffix.size()), cut.end()) == suffix);
    // body keeps its leading tokens
    CHECK(cut[2] == full[2]);

    CHECK_THROWS_AS(input_ids(w.vocab, in, static_cast<std::size_t>(suffix.size() + 2)), InvalidArgument);
    AugmentedInput empty;
    empty.body = "   ";
    CHECK_THROWS_AS(input_ids(w.vocab, empty, 512), InvalidArgument);
    CHECK(input_ids(w.vocab, AugmentedInput{std::nullopt, "hi", kOutlierTopic, {}}, 512).front() == kClsId);
}

TEST_CASE("probabilities, thresholding and loss") {
    CHECK(probabilities(std::vector<double>{0.0})[0] == 0.5);
    CHECK(probabilities(std::vector<double>{std::log(3.0)})[0] == doctest::Approx(0.75).epsilon(1e-12));
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 4.0);
    for (int i = 0; i < 200; ++i) {
        const double z = n(rng);
        const auto p = probabilities(std::vector<double>{z, -z});
        CHECK(p[1] == doctest::Approx(1.0 - p[0]).epsilon(1e-12));
        CHECK(p[0] >= 0.0);
        CHECK(p[0] <= 1.0);
    }

    CHECK(predict(std::vector<double>{0.75, 0.4, 0.5}, 0.5) == MultiHot{1, 0, 1});
    CHECK(predict(std::vector<double>(4, 0.0)) == MultiHot(4, 0));
    CHECK(predict(std::vector<double>(4, 1.0)) == MultiHot(4, 1));

    CHECK(bce_loss(std::vector<double>(5, 0.0), MultiHot{1, 0, 0, 1, 0}) == doctest::Approx(std::log(2.0)));
    CHECK(bce_loss(std::vector<double>{60.0, -60.0}, MultiHot{1, 0}) < 1e-20);
    CHECK_THROWS_AS(bce_loss(std::vector<double>{0.0}, MultiHot{1, 0}), InvalidArgument);

    // moving any logit toward its gold sign strictly lowers the loss
    std::uniform_int_distribution<int> bit(0, 1);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> z(6);
        MultiHot y(6);
        for (std::size_t j = 0; j < z.size(); ++j) {
            z[j] = n(rng);
            y[j] = static_cast<std::uint8_t>(bit(rng));
        }
        const std::size_t j = static_cast<std::size_t>(trial) % z.size();
        auto moved = z;
        moved[j] += y[j] ? 0.5 : -0.5;
        CHECK(bce_loss(moved, y) < bce_loss(z, y));
    }
}

TEST_CASE("scaling logits never changes the prediction") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0.0, 3.0);
    std::uniform_real_distribution<double> c(1.0, 50.0);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<double> z(9);
        for (auto& v : z) {
            v = n(rng);
        }
        z[0] = 0.0;
        const double s = c(rng);
        std::vector<double> scaled;
        for (double v : z) {
            scaled.push_back(s * v);
        }
        CHECK(predict(probabilities(scaled)) == predict(probabilities(z)));
    }
}

TEST_CASE("bce gradient through the head and encoder matches finite differences") {
    EncoderConfig cfg;
    cfg.layers = 2;
    cfg.heads = 2;
    cfg.hidden = 16;
    cfg.ffn = 32;
    cfg.max_position = 16;
    cfg.vocab_size = 30;
    auto model = Encoder(cfg, 21).cast<double>();
    std::mt19937_64 rng(22);
    std::normal_distribution<double> noise(0.0, 0.3);
    for (auto& p : model.parameters()) {
        for (auto& x : p.values()) {
            x += noise(rng);
        }
    }
    BasicTensor<double> weight({4, 16}), bias({4});
    for (auto& x : weight.values()) {
        x = noise(rng);
    }
    const std::vector<int> ids{kClsId, kPatientId, 12, 17, 25, kTopicId, 9, kSepId};
    const std::vector<double> gold{1, 0, 0, 1};

    auto loss_value = [&] {
        ag::Tape<double> tape;
        auto bound = model.bind(tape, false);
        auto z = head_logits(bound, tape.constant(weight), tape.constant(bias), std::span<const int>(ids));
        return ag::bce_with_logits(z, std::span<const double>(gold)).value()[0];
    };
    ag::Tape<double> tape;
    auto bound = model.bind(tape);
    auto w = tape.leaf(weight);
    auto b = tape.leaf(bias);
    tape.backward(ag::bce_with_logits(head_logits(bound, w, b, std::span<const int>(ids)), std::span<const double>(gold)));

    std::vector<std::string> names = model.names();
    std::vector<BasicTensor<double>*> params;
    std::vector<BasicTensor<double>> analytic;
    for (std::size_t i = 0; i < bound.params.size(); ++i) {
        params.push_back(&model.parameters()[i]);
        analytic.push_back(tape.grad(bound.params[i]));
    }
    names.insert(names.end(), {"head.weight", "head.bias"});
    params.insert(params.end(), {&weight, &bias});
    analytic.push_back(tape.grad(w));
    analytic.push_back(tape.grad(b));
    for (const auto& c : testing::check_parameters(names, params, analytic, loss_value)) {
        CHECK_MESSAGE(c.max_relative_error < 1e-3, c.name, " rel err ", c.max_relative_error);
    }
}

TEST_CASE("train config validation and json") {
    TrainConfig c;
    CHECK_NOTHROW(c.validate());
    CHECK(c.max_epochs == 75);
    CHECK(c.batch_size == 8);
    CHECK(c.learning_rate == 5e-5);
    auto bad = c;
    bad.threshold = 1.0;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    bad = c;
    bad.batch_size = 0;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    bad = c;
    bad.learning_rate = -1.0;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    c.per_task = true;
    c.seed = 77;
    const auto back = TrainConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());
    CHECK(AugmentOptions::from_json(AugmentOptions{true, false, 2}.to_json()) == AugmentOptions{true, false, 2});
}

TEST_CASE("finetune rejects unusable input") {
    const auto& w = World::get();
    const auto schema = LabelSchema::default_schema();
    std::vector<AnnotatedMessage> none;
    const auto some = std::vector<AnnotatedMessage>(w.messages.begin(), w.messages.begin() + 4);
    CHECK_THROWS_AS(finetune(none, some, w.encoder, w.vocab, w.context(), schema, AugmentOptions{}, quick_config(1)),
                    InvalidArgument);
    CHECK_THROWS_AS(finetune(some, none, w.encoder, w.vocab, w.context(), schema, AugmentOptions{}, quick_config(1)),
                    InvalidArgument);
    auto unlabeled = some;
    unlabeled[0].labels.reset();
    CHECK_THROWS_AS(
        finetune(unlabeled, some, w.encoder, w.vocab, w.context(), schema, AugmentOptions{}, quick_config(1)),
        InvalidArgument);
}

TEST_CASE("finetune is deterministic and early stopping keeps the best epoch") {
    const auto& w = World::get();
    const auto schema = LabelSchema::default_schema();
    const std::vector<AnnotatedMessage> train(w.messages.begin(), w.messages.begin() + 16);
    const std::vector<AnnotatedMessage> val(w.messages.begin() + 16, w.messages.begin() + 24);
    auto cfg = quick_config(6);
    const auto a = finetune(train, val, w.encoder, w.vocab, w.context(), schema, AugmentOptions{}, cfg);
    const auto b = finetune(train, val, w.encoder, w.vocab, w.context(), schema, AugmentOptions{}, cfg);
    CHECK(a.best_epoch == b.best_epoch);
    CHECK(a.trace == b.trace);
    CHECK(a.model == b.model);
    REQUIRE(!a.trace.empty());
    CHECK(a.model.topic_hash == w.topics.fingerprint());
    CHECK(a.model.combo_head.weight.rows() == schema.size());
    CHECK_FALSE(a.model.per_task());

    double best = -1.0;
    for (const auto& e : a.trace) {
        best = std::max(best, e.validation_f1);
    }
    CHECK(a.best_f1 == best);
    CHECK(a.trace[a.best_epoch - 1].validation_f1 == a.best_f1);
    // the returned weights reproduce the recorded best score
    std::vector<MultiHot> pred, gold;
    for (const auto& m : val) {
        pred.push_back(encode_labels(schema, classify(a.model, m, w.context()).combos));
        gold.push_back(encode_labels(schema, *m.labels));
    }
    CHECK(micro_metrics(pred, gold).f1 == doctest::Approx(a.best_f1).epsilon(1e-12));

    cfg.patience = 0;
    cfg.max_epochs = 20;
    const auto stopped = finetune(train, val, w.encoder, w.vocab, w.context(), schema, AugmentOptions{}, cfg);
    const auto& t = stopped.trace;
    REQUIRE(!t.empty());
    for (std::size_t i = 1; i + 1 < t.size(); ++i) {
        double before = -1.0;
        for (std::size_t j = 0; j < i; ++j) {
            before = std::max(before, t[j].validation_f1);
        }
        CHECK(t[i].validation_f1 > before);
    }
    if (t.size() < cfg.max_epochs) {
        double before = -1.0;
        for (std::size_t j = 0; j + 1 < t.size(); ++j) {
            before = std::max(before, t[j].validation_f1);
        }
        CHECK(t.back().validation_f1 <= before);
    }
}

TEST_CASE("per-task mode trains code and subcode heads") {
    const auto& w = World::get();
    const auto schema = LabelSchema::default_schema();
    const std::vector<AnnotatedMessage> train(w.messages.begin(), w.messages.begin() + 8);
    auto cfg = quick_config(1);
    cfg.per_task = true;
    const auto r = finetune(train, train, w.encoder, w.vocab, w.context(), schema, AugmentOptions{}, cfg);
    REQUIRE(r.model.per_task());
    CHECK(r.model.code_head.weight.rows() == schema.code_names().size());
    CHECK(r.model.subcode_head.weight.rows() == schema.subcode_names().size());
    const auto c = classify(r.model, train[0], w.context());
    const auto codes = schema.code_names();
    const auto subcodes = schema.subcode_names();
    for (const auto& code : c.task_codes) {
        CHECK(std::count(codes.begin(), codes.end(), code) == 1);
    }
    for (const auto& sub : c.task_subcodes) {
        CHECK(std::count(subcodes.begin(), subcodes.end(), sub) == 1);
    }
}

TEST_CASE("overfitting the fixture recovers its labels") {
    const auto& w = World::get();
    const auto& r = overfit();
    CHECK(r.best_f1 >= 0.95);
    CHECK(r.best_epoch <= 75);

    const auto schema = LabelSchema::default_schema();
    const auto salutation = std::find_if(w.messages.begin(), w.messages.end(), [](const AnnotatedMessage& m) {
        return *m.labels == std::vector<std::string>{"PartnershipPatient_salutation"};
    });
    REQUIRE(salutation != w.messages.end());
    CHECK(classify(r.model, *salutation, w.context()).combos == *salutation->labels);

    for (const auto& m : w.messages) {
        const auto c = classify(r.model, m, w.context());
        CHECK(c.probabilities.size() == schema.size());
        CHECK(c.codes == decomposed_codes(c.combos));
        CHECK(c.subcodes == decomposed_subcodes(c.combos));
        std::set<std::string> codes;
        for (const auto& combo : c.combos) {
            codes.insert(decompose(combo).code);
        }
        CHECK(std::vector<std::string>(codes.begin(), codes.end()) == c.codes);
    }
}

TEST_CASE("classify decomposes and checks the topic model") {
    const auto& w = World::get();
    const auto schema = LabelSchema::default_schema();
    const std::vector<AnnotatedMessage> train(w.messages.begin(), w.messages.begin() + 8);
    auto model = finetune(train, train, w.encoder, w.vocab, w.context(), schema, AugmentOptions{}, quick_config(1)).model;

    // push every logit below zero, then force one SDOH combo on
    model.combo_head.weight = Tensor({schema.size(), model.encoder.config().hidden});
    model.combo_head.bias = Tensor({schema.size()});
    for (auto& b : model.combo_head.bias.data()) {
        b = -5.0f;
    }
    auto c = classify(model, train[0], w.context());
    CHECK(c.combos.empty());
    CHECK(c.codes.empty());
    CHECK(c.subcodes.empty());
    model.combo_head.bias[static_cast<std::size_t>(schema.id("SDOH_EconomicStability"))] = 5.0f;
    c = classify(model, train[0], w.context());
    CHECK(c.combos == std::vector<std::string>{"SDOH_EconomicStability"});
    CHECK(c.codes == std::vector<std::string>{"SDOH"});
    CHECK(c.subcodes == std::vector<std::string>{"EconomicStability"});

    const TopicModel unfitted;
    CHECK_THROWS_AS(classify(model, train[0], TopicContext{&unfitted, w.embedder()}), InvalidState);
    model.topic_hash = "0000";
    CHECK_THROWS_AS(classify(model, train[0], w.context()), InvalidState);
}

TEST_CASE("classifier checkpoint round trip is bit exact") {
    const auto& w = World::get();
    const auto schema = LabelSchema::default_schema();
    const std::vector<AnnotatedMessage> train(w.messages.begin(), w.messages.begin() + 8);
    auto cfg = quick_config(1);
    cfg.per_task = true;
    const auto model = finetune(train, train, w.encoder, w.vocab, w.context(), schema, AugmentOptions{}, cfg).model;

    const auto dir = std::filesystem::temp_directory_path() / "pvminer_test_classifier_ckpt";
    std::filesystem::remove_all(dir);
    save_classifier(model, dir);
    const auto loaded = load_classifier(dir);
    CHECK(loaded == model);
    for (std::size_t i = 0; i < model.encoder.parameter_tensor_count(); ++i) {
        CHECK(io::f32_bytes(loaded.encoder.parameters()[i].data()) == io::f32_bytes(model.encoder.parameters()[i].data()));
    }
    CHECK(io::f32_bytes(loaded.combo_head.weight.data()) == io::f32_bytes(model.combo_head.weight.data()));
    for (const auto& m : train) {
        CHECK(classify(loaded, m, w.context()).probabilities == classify(model, m, w.context()).probabilities);
    }
    const auto first = io::read_text(dir / "manifest.json");
    save_classifier(loaded, dir);
    CHECK(io::read_text(dir / "manifest.json") == first);

    auto manifest = io::read_json(dir / "manifest.json");
    manifest["schema_hash"] = "deadbeef";
    io::write_json_atomic(dir / "manifest.json", manifest);
    CHECK_THROWS_AS(load_classifier(dir), InvalidState);
    std::filesystem::remove_all(dir);
    CHECK_THROWS_AS(load_classifier(dir), DependencyError);
}
