#include "pvminer/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "pvminer/container.hpp"
#include "pvminer/errors.hpp"
#include "pvminer/eval.hpp"
#include "pvminer/io.hpp"
#include "pvminer/math.hpp"
#include "pvminer/optim.hpp"

namespace pvminer {

void TrainConfig::validate() const {
    if (max_epochs == 0 || batch_size == 0) {
        throw InvalidArgument("train config: epochs and batch size must be positive");
    }
    if (!(learning_rate > 0.0) || weight_decay < 0.0) {
        throw InvalidArgument("train config: learning rate must be positive and weight decay non-negative");
    }
    if (!(warmup_ratio >= 0.0 && warmup_ratio <= 1.0)) {
        throw InvalidArgument("train config: warmup ratio must lie in [0, 1]");
    }
    if (!(threshold > 0.0 && threshold < 1.0)) {
        throw InvalidArgument("train config: threshold must lie in (0, 1)");
    }
}

nlohmann::json TrainConfig::to_json() const {
    return {{"max_epochs", max_epochs},     {"batch_size", batch_size}, {"learning_rate", learning_rate},
            {"weight_decay", weight_decay}, {"warmup_ratio", warmup_ratio}, {"patience", patience},
            {"threshold", threshold},       {"seed", seed},             {"per_task", per_task}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    try {
        c.max_epochs = j.value("max_epochs", c.max_epochs);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.weight_decay = j.value("weight_decay", c.weight_decay);
        c.warmup_ratio = j.value("warmup_ratio", c.warmup_ratio);
        c.patience = j.value("patience", c.patience);
        c.threshold = j.value("threshold", c.threshold);
        c.seed = j.value("seed", c.seed);
        c.per_task = j.value("per_task", c.per_task);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("train config: ") + e.what());
    }
    return c;
}

nlohmann::json AugmentOptions::to_json() const {
    return {{"author", author}, {"topic", topic}, {"keywords", keywords}};
}

AugmentOptions AugmentOptions::from_json(const nlohmann::json& j) {
    AugmentOptions a;
    try {
        a.author = j.value("author", a.author);
        a.topic = j.value("topic", a.topic);
        a.keywords = j.value("keywords", a.keywords);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("augmentation options: ") + e.what());
    }
    return a;
}

namespace {

std::string_view author_token(Author a) {
    return a == Author::patient ? kSpecialTokens[kPatientId] : kSpecialTokens[kProviderId];
}

bool starts_with_author(std::string_view text) {
    const auto start = text.find_first_not_of(" \t\r\n");
    if (start == std::string_view::npos) {
        return false;
    }
    text.remove_prefix(start);
    return text.starts_with(kSpecialTokens[kPatientId]) || text.starts_with(kSpecialTokens[kProviderId]);
}

} // namespace

std::string AugmentedInput::text() const {
    std::string out;
    if (author) {
        out += author_token(*author);
        out += ' ';
    }
    out += body;
    if (!keywords.empty()) {
        out += ' ';
        out += kSpecialTokens[kTopicId];
        for (const auto& k : keywords) {
            out += ' ';
            out += k;
        }
    }
    return out;
}

AugmentedInput augment(const AnnotatedMessage& message, const TopicContext& topics, const AugmentOptions& options) {
    if (starts_with_author(message.text)) {
        throw InvalidArgument("message '" + message.id + "' is already augmented (leading author token)");
    }
    AugmentedInput in;
    in.body = message.text;
    if (options.author) {
        in.author = message.author;
    }
    if (!options.topic || options.keywords == 0) {
        return in;
    }
    if (!topics.model || !topics.model->fitted() || !topics.embedder) {
        throw InvalidState("topic augmentation requested without a fitted topic model");
    }
    std::vector<float> e;
    try {
        e = topics.embedder(message.text);
    } catch (const InvalidArgument&) {
        return in; // nothing to embed, so no topic cue
    }
    in.topic = assign_embedding(*topics.model, e);
    in.keywords = top_keywords(*topics.model, in.topic, options.keywords);
    return in;
}

TokenSequence input_ids(const Vocabulary& vocab, const AugmentedInput& input, std::size_t max_length) {
    TokenSequence body = encode(vocab, input.body, false);
    if (body.empty()) {
        throw InvalidArgument("input has no tokens");
    }
    TokenSequence suffix;
    if (!input.keywords.empty()) {
        suffix.push_back(kTopicId);
        for (const auto& k : input.keywords) {
            const auto ids = encode(vocab, k, false);
            suffix.insert(suffix.end(), ids.begin(), ids.end());
        }
    }
    const std::size_t limit = std::min(max_length, kMaxSequenceLength);
    const std::size_t fixed = 2 + (input.author ? 1 : 0) + suffix.size();
    if (fixed + 1 > limit) {
        throw InvalidArgument("augmentation leaves no room for the message body within " + std::to_string(limit) +
                              " tokens");
    }
    body.resize(std::min(body.size(), limit - fixed));

    TokenSequence ids{kClsId};
    if (input.author) {
        ids.push_back(*input.author == Author::patient ? kPatientId : kProviderId);
    }
    ids.insert(ids.end(), body.begin(), body.end());
    ids.insert(ids.end(), suffix.begin(), suffix.end());
    ids.push_back(kSepId);
    return ids;
}

template <class T>
ag::Var<T> head_logits(BoundEncoder<T>& encoder, ag::Var<T> weight, ag::Var<T> bias, std::span<const int> ids) {
    auto hidden = forward(encoder, ids);
    const std::size_t first[] = {0};
    return ag::add_row(ag::matmul_nt(ag::select_rows(hidden, std::span<const std::size_t>(first)), weight), bias);
}

template ag::Var<float> head_logits(BoundEncoder<float>&, ag::Var<float>, ag::Var<float>, std::span<const int>);
template ag::Var<double> head_logits(BoundEncoder<double>&, ag::Var<double>, ag::Var<double>, std::span<const int>);

namespace {

std::vector<double> head_values(const Encoder& encoder, const LinearHead& head, std::span<const int> ids) {
    ag::Tape<float> tape;
    auto bound = encoder.bind(tape, false);
    auto z = head_logits(bound, tape.constant(head.weight), tape.constant(head.bias), ids);
    const auto& v = z.value();
    return {v.data().begin(), v.data().end()};
}

std::vector<std::string> active(const std::vector<std::string>& labels, const MultiHot& bits) {
    std::vector<std::string> out;
    for (std::size_t j = 0; j < bits.size(); ++j) {
        if (bits[j]) {
            out.push_back(labels[j]);
        }
    }
    return out;
}

MultiHot hot(const std::vector<std::string>& labels, const std::vector<std::string>& on) {
    MultiHot bits(labels.size(), 0);
    for (const auto& l : on) {
        bits[static_cast<std::size_t>(std::lower_bound(labels.begin(), labels.end(), l) - labels.begin())] = 1;
    }
    return bits;
}

LinearHead init_head(std::size_t outputs, std::size_t hidden, std::mt19937_64& rng) {
    LinearHead h{Tensor({outputs, hidden}), Tensor({outputs})};
    std::normal_distribution<float> normal(0.0f, 0.02f);
    for (auto& w : h.weight.data()) {
        w = normal(rng);
    }
    return h;
}

std::vector<float> to_float(const MultiHot& bits) {
    return {bits.begin(), bits.end()};
}

struct Example {
    TokenSequence ids;
    MultiHot combo;
    MultiHot code;
    MultiHot subcode;
};

std::vector<Example> prepare(std::span<const AnnotatedMessage> messages, const Vocabulary& vocab,
                             std::size_t max_length, const TopicContext& topics, const LabelSchema& schema,
                             const AugmentOptions& augmentation) {
    const auto code_labels = schema.code_names();
    const auto sub_labels = schema.subcode_names();
    std::vector<Example> out;
    for (const auto& m : messages) {
        if (!m.labels) {
            throw InvalidArgument("message '" + m.id + "' has no gold labels");
        }
        out.push_back({input_ids(vocab, augment(m, topics, augmentation), max_length),
                       encode_labels(schema, *m.labels), hot(code_labels, decomposed_codes(*m.labels)),
                       hot(sub_labels, decomposed_subcodes(*m.labels))});
    }
    return out;
}

} // namespace

std::vector<double> logits(const ClassifierModel& model, std::span<const int> ids) {
    if (ids.empty()) {
        throw InvalidArgument("logits: empty input");
    }
    return head_values(model.encoder, model.combo_head, ids);
}

std::vector<double> probabilities(std::span<const double> z) {
    std::vector<double> p;
    p.reserve(z.size());
    for (double v : z) {
        p.push_back(sigmoid(v));
    }
    return p;
}

MultiHot predict(std::span<const double> p, double threshold) {
    MultiHot bits;
    bits.reserve(p.size());
    for (double v : p) {
        bits.push_back(v >= threshold ? 1 : 0);
    }
    return bits;
}

double bce_loss(std::span<const double> z, const MultiHot& gold) {
    if (z.size() != gold.size() || z.empty()) {
        throw InvalidArgument("bce_loss: " + std::to_string(z.size()) + " logits for " + std::to_string(gold.size()) +
                              " labels");
    }
    double total = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) {
        total += softplus(z[j]) - z[j] * (gold[j] ? 1.0 : 0.0);
    }
    return total / static_cast<double>(z.size());
}

FinetuneResult finetune(std::span<const AnnotatedMessage> train, std::span<const AnnotatedMessage> validation,
                        const Encoder& encoder, const Vocabulary& vocab, const TopicContext& topics,
                        const LabelSchema& schema, const AugmentOptions& augmentation, const TrainConfig& config) {
    config.validate();
    if (train.empty()) {
        throw InvalidArgument("finetune: training set is empty");
    }
    if (validation.empty()) {
        throw InvalidArgument("finetune: validation set is empty");
    }
    if (vocab.size() != encoder.config().vocab_size) {
        throw InvalidState("finetune: vocabulary does not match the encoder");
    }
    validate_messages(schema, train);
    validate_messages(schema, validation);
    const std::size_t max_length = encoder.config().max_position;
    const auto train_set = prepare(train, vocab, max_length, topics, schema, augmentation);
    const auto val_set = prepare(validation, vocab, max_length, topics, schema, augmentation);

    std::mt19937_64 rng(config.seed);
    ClassifierModel model{encoder, vocab, schema, {}, {}, {}, augmentation, config, {}};
    if (augmentation.topic && augmentation.keywords > 0) {
        model.topic_hash = topics.model->fingerprint();
    }
    const std::size_t hidden = encoder.config().hidden;
    model.combo_head = init_head(schema.size(), hidden, rng);
    const bool with_subcodes = config.per_task && !schema.subcode_names().empty();
    if (config.per_task) {
        model.code_head = init_head(schema.code_names().size(), hidden, rng);
        if (with_subcodes) {
            model.subcode_head = init_head(schema.subcode_names().size(), hidden, rng);
        }
    }

    auto trainable = [&] {
        std::vector<Tensor*> p;
        for (auto& t : model.encoder.parameters()) {
            p.push_back(&t);
        }
        for (auto* h : {&model.combo_head, &model.code_head, &model.subcode_head}) {
            if (!h->empty()) {
                p.push_back(&h->weight);
                p.push_back(&h->bias);
            }
        }
        return p;
    };

    const std::size_t steps_per_epoch = (train_set.size() + config.batch_size - 1) / config.batch_size;
    const LrSchedule schedule{config.learning_rate, static_cast<std::int64_t>(config.max_epochs * steps_per_epoch),
                              config.warmup_ratio};
    OptimizerState state(AdamWConfig{.weight_decay = config.weight_decay});
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    FinetuneResult result{model, {}, 0, -1.0};
    std::size_t stale = 0;
    std::int64_t step = 0;
    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            const float inv = 1.0f / static_cast<float>(end - start);
            ag::Tape<float> tape;
            auto bound = model.encoder.bind(tape);
            std::vector<ag::Var<float>> heads;
            for (auto* h : {&model.combo_head, &model.code_head, &model.subcode_head}) {
                if (!h->empty()) {
                    heads.push_back(tape.leaf(h->weight));
                    heads.push_back(tape.leaf(h->bias));
                }
            }
            std::optional<ag::Var<float>> loss;
            for (std::size_t i = start; i < end; ++i) {
                const auto& ex = train_set[order[i]];
                auto hidden_states = forward(bound, std::span<const int>(ex.ids));
                const std::size_t first[] = {0};
                auto cls = ag::select_rows(hidden_states, std::span<const std::size_t>(first));
                const MultiHot* targets[] = {&ex.combo, &ex.code, &ex.subcode};
                for (std::size_t h = 0; h < heads.size() / 2; ++h) {
                    auto z = ag::add_row(ag::matmul_nt(cls, heads[2 * h]), heads[2 * h + 1]);
                    const auto y = to_float(*targets[h]);
                    auto term = ag::scale(ag::bce_with_logits(z, std::span<const float>(y)), inv);
                    loss = loss ? ag::add(*loss, term) : term;
                }
            }
            tape.backward(*loss);
            epoch_loss += static_cast<double>(loss->value()[0]) * static_cast<double>(end - start);

            auto params = trainable();
            std::vector<Tensor> grads;
            for (const auto& v : bound.params) {
                grads.push_back(tape.grad(v));
            }
            for (const auto& v : heads) {
                grads.push_back(tape.grad(v));
            }
            std::vector<const Tensor*> grad_ptrs;
            for (const auto& g : grads) {
                grad_ptrs.push_back(&g);
            }
            state.learning_rate = lr_at(schedule, step++);
            adamw_step(state, params, grad_ptrs);
        }

        std::vector<MultiHot> predicted, gold;
        for (const auto& ex : val_set) {
            const auto z = head_values(model.encoder, model.combo_head, ex.ids);
            predicted.push_back(predict(probabilities(z), config.threshold));
            gold.push_back(ex.combo);
        }
        const double f1 = micro_metrics(predicted, gold).f1;
        result.trace.push_back({epoch, epoch_loss / static_cast<double>(train_set.size()), f1});
        if (f1 > result.best_f1) {
            result.best_f1 = f1;
            result.best_epoch = epoch;
            result.model = model;
            stale = 0;
        } else if (++stale >= std::max<std::size_t>(config.patience, 1)) {
            break;
        }
    }
    return result;
}

Classification classify(const ClassifierModel& model, const AnnotatedMessage& message, const TopicContext& topics) {
    if (model.augmentation.topic && model.augmentation.keywords > 0) {
        if (!topics.model || !topics.model->fitted()) {
            throw InvalidState("classify: the topic model is not fitted");
        }
        if (topics.model->fingerprint() != model.topic_hash) {
            throw InvalidState("classify: topic model differs from the one the classifier was trained with");
        }
    }
    const auto ids = input_ids(model.vocab, augment(message, topics, model.augmentation), model.encoder.config().max_position);
    Classification out;
    out.probabilities = probabilities(logits(model, ids));
    out.combos = decode_labels(model.schema, predict(out.probabilities, model.config.threshold));
    out.codes = decomposed_codes(out.combos);
    out.subcodes = decomposed_subcodes(out.combos);
    if (model.per_task()) {
        const auto threshold = model.config.threshold;
        out.task_codes = active(model.schema.code_names(),
                                predict(probabilities(head_values(model.encoder, model.code_head, ids)), threshold));
        if (!model.subcode_head.empty()) {
            out.task_subcodes =
                active(model.schema.subcode_names(),
                       predict(probabilities(head_values(model.encoder, model.subcode_head, ids)), threshold));
        }
    }
    return out;
}

void save_classifier(const ClassifierModel& model, const std::filesystem::path& dir) {
    CheckpointMeta meta{model.vocab.fingerprint(), 0, model.config.seed};
    nlohmann::json manifest{{"format", "pvminer-classifier"},
                            {"version", 1},
                            {"encoder", encoder_manifest(model.encoder, meta, dir)},
                            {"schema", model.schema.to_json()},
                            {"schema_hash", model.schema.fingerprint()},
                            {"topic_hash", model.topic_hash},
                            {"augmentation", model.augmentation.to_json()},
                            {"train_config", model.config.to_json()}};
    io::NamedTensors heads{{"head.combo.weight", &model.combo_head.weight}, {"head.combo.bias", &model.combo_head.bias}};
    if (!model.code_head.empty()) {
        heads.emplace_back("head.code.weight", &model.code_head.weight);
        heads.emplace_back("head.code.bias", &model.code_head.bias);
    }
    if (!model.subcode_head.empty()) {
        heads.emplace_back("head.subcode.weight", &model.subcode_head.weight);
        heads.emplace_back("head.subcode.bias", &model.subcode_head.bias);
    }
    manifest["heads"] = io::write_tensors(dir, heads);
    save_vocab(model.vocab, dir / "vocab.txt");
    io::write_json_atomic(dir / "manifest.json", manifest);
}

ClassifierModel load_classifier(const std::filesystem::path& dir) {
    const auto path = dir / "manifest.json";
    io::require_file(path, "finetune");
    const auto manifest = io::read_json(path);
    ClassifierModel model;
    const auto& enc = io::field(manifest, "encoder", path);
    model.encoder = encoder_from_manifest(enc, dir);
    model.vocab = load_vocab(dir / "vocab.txt");
    try {
        model.schema = LabelSchema::from_json(manifest.at("schema"));
        model.topic_hash = manifest.at("topic_hash").get<std::string>();
        model.augmentation = AugmentOptions::from_json(manifest.at("augmentation"));
        model.config = TrainConfig::from_json(manifest.at("train_config"));
        if (model.vocab.fingerprint() != enc.at("vocab_hash").get<std::string>()) {
            throw InvalidState("classifier '" + dir.string() + "': vocabulary does not match the encoder");
        }
        if (model.schema.fingerprint() != manifest.at("schema_hash").get<std::string>()) {
            throw InvalidState("classifier '" + dir.string() + "': embedded schema does not match its hash");
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed classifier manifest '" + path.string() + "': " + e.what());
    }
    auto tensors = io::read_tensors(dir, io::field(manifest, "heads", path));
    auto take = [&](const std::string& name) {
        auto it = tensors.find(name);
        return it == tensors.end() ? Tensor{} : std::move(it->second);
    };
    model.combo_head = {take("head.combo.weight"), take("head.combo.bias")};
    model.code_head = {take("head.code.weight"), take("head.code.bias")};
    model.subcode_head = {take("head.subcode.weight"), take("head.subcode.bias")};
    if (model.combo_head.empty() || model.combo_head.weight.rows() != model.schema.size() ||
        model.combo_head.weight.cols() != model.encoder.config().hidden) {
        throw IoError("classifier '" + dir.string() + "': combo head shape does not match schema and encoder");
    }
    return model;
}

} // namespace pvminer
