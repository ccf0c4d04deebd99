#include "pvminer/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <memory>
#include <sstream>

#include "pvminer/container.hpp"
#include "pvminer/errors.hpp"
#include "pvminer/io.hpp"

extern char** environ;

namespace pvminer {

namespace fs = std::filesystem;

namespace {

nlohmann::json pretrain_json(const PretrainOptions& p) {
    return {{"steps", p.steps},
            {"batch_size", p.batch_size},
            {"mask_probability", p.mask_probability},
            {"learning_rate", p.learning_rate},
            {"weight_decay", p.weight_decay},
            {"warmup_fraction", p.warmup_fraction}};
}

PretrainOptions pretrain_from_json(const nlohmann::json& j) {
    PretrainOptions p;
    p.steps = j.value("steps", p.steps);
    p.batch_size = j.value("batch_size", p.batch_size);
    p.mask_probability = j.value("mask_probability", p.mask_probability);
    p.learning_rate = j.value("learning_rate", p.learning_rate);
    p.weight_decay = j.value("weight_decay", p.weight_decay);
    p.warmup_fraction = j.value("warmup_fraction", p.warmup_fraction);
    return p;
}

nlohmann::json path_list(const std::vector<fs::path>& paths) {
    auto out = nlohmann::json::array();
    for (const auto& p : paths) {
        out.push_back(p.string());
    }
    return out;
}

std::vector<fs::path> paths_from(const nlohmann::json& j) {
    std::vector<fs::path> out;
    if (j.is_string()) {
        out.emplace_back(j.get<std::string>());
    } else {
        for (const auto& p : j) {
            out.emplace_back(p.get<std::string>());
        }
    }
    return out;
}

// Merges `patch` into `target`, refusing keys that `target` does not have.
void merge_known(nlohmann::json& target, const nlohmann::json& patch, const std::string& where) {
    if (!patch.is_object()) {
        throw InvalidArgument("config" + where + ": expected an object");
    }
    for (const auto& [key, value] : patch.items()) {
        const auto path = where + "." + key;
        if (!target.contains(key)) {
            throw InvalidArgument("config: unknown field '" + path.substr(1) + "'");
        }
        auto& slot = target[key];
        if (slot.is_object()) {
            merge_known(slot, value, path);
        } else {
            slot = value;
        }
    }
}

std::string env_name(const std::string& path) {
    std::string out = "PVMINER_";
    for (char c : path) {
        out += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    }
    return out;
}

nlohmann::json parse_env_value(const nlohmann::json& current, const std::string& name, const std::string& raw) {
    try {
        if (current.is_string()) {
            return raw;
        }
        if (current.is_boolean()) {
            if (raw == "1" || raw == "true") {
                return true;
            }
            if (raw == "0" || raw == "false") {
                return false;
            }
            throw InvalidArgument("expected true/false");
        }
        auto v = nlohmann::json::parse(raw);
        if (current.is_number() && !v.is_number()) {
            throw InvalidArgument("expected a number");
        }
        if (current.is_number_unsigned() && !v.is_number_unsigned()) {
            throw InvalidArgument("expected a non-negative integer");
        }
        if (current.is_array() && v.is_string()) {
            return nlohmann::json::array({v});
        }
        if (current.is_array() && !v.is_array()) {
            throw InvalidArgument("expected a JSON array");
        }
        return v;
    } catch (const nlohmann::json::exception&) {
        if (current.is_array()) {
            return nlohmann::json::array({raw});
        }
        throw InvalidArgument(name + "='" + raw + "' is not a valid value");
    } catch (const InvalidArgument& e) {
        throw InvalidArgument(name + "='" + raw + "': " + e.what());
    }
}

void apply_env_at(nlohmann::json& node, const std::string& path, const Environment& env) {
    for (auto& [key, value] : node.items()) {
        const auto child = path.empty() ? key : path + "." + key;
        if (value.is_object()) {
            apply_env_at(value, child, env);
            continue;
        }
        const auto name = env_name(child);
        if (auto it = env.find(name); it != env.end()) {
            value = parse_env_value(value, name, it->second);
        }
    }
}

void absolutize(nlohmann::json& j, const fs::path& base) {
    auto fix = [&](nlohmann::json& v) {
        if (v.is_string()) {
            const fs::path p = v.get<std::string>();
            if (!p.empty() && p.is_relative()) {
                v = (base / p).lexically_normal().string();
            }
        }
    };
    for (const char* key : {"messages", "schema"}) {
        if (j.contains(key)) {
            fix(j[key]);
        }
    }
    for (const char* key : {"corpus", "topic_corpus"}) {
        if (!j.contains(key)) {
            continue;
        }
        if (j[key].is_array()) {
            for (auto& v : j[key]) {
                fix(v);
            }
        } else {
            fix(j[key]);
        }
    }
}

std::string display_name(const std::string& preset) {
    return preset.rfind("pv-", 0) == 0 ? "PV-" + preset.substr(3) : preset;
}

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::vector<AnnotatedMessage> require_messages(const fs::path& path, const std::string& stage) {
    io::require_file(path, stage);
    return read_messages(path);
}

void label_sets_of(std::span<const AnnotatedMessage> messages, std::vector<std::vector<std::string>>& out) {
    out.clear();
    for (const auto& m : messages) {
        out.push_back(m.labels.value_or(std::vector<std::string>{}));
    }
}

std::pair<std::vector<AnnotatedMessage>, std::vector<AnnotatedMessage>> carve(std::span<const AnnotatedMessage> train,
                                                                              double fraction, std::uint64_t seed) {
    std::vector<std::vector<std::string>> sets;
    label_sets_of(train, sets);
    const auto parts = iterative_stratified_split(sets, std::vector<double>{1.0 - fraction, fraction}, seed);
    std::pair<std::vector<AnnotatedMessage>, std::vector<AnnotatedMessage>> out;
    for (std::size_t i : parts[0]) {
        out.first.push_back(train[i]);
    }
    for (std::size_t i : parts[1]) {
        out.second.push_back(train[i]);
    }
    if (out.first.empty() || out.second.empty()) {
        throw InvalidArgument("training split of " + std::to_string(train.size()) +
                              " messages is too small to carve a validation set");
    }
    return out;
}

bool uses_topics(const AugmentOptions& a) {
    return a.topic && a.keywords > 0;
}

} // namespace

void PipelineConfig::validate() const {
    if (vocab_size <= kSpecialCount) {
        throw InvalidArgument("config: vocab_size must exceed the special token count");
    }
    if (max_position < 3 || max_position > kMaxSequenceLength) {
        throw InvalidArgument("config: max_position must lie in [3, 512]");
    }
    if (pretrain.batch_size == 0 || !(pretrain.learning_rate > 0.0)) {
        throw InvalidArgument("config: pretrain batch size and learning rate must be positive");
    }
    if (!(pretrain.mask_probability > 0.0 && pretrain.mask_probability <= 1.0)) {
        throw InvalidArgument("config: pretrain mask probability must lie in (0, 1]");
    }
    if (split_fractions.size() < 2) {
        throw InvalidArgument("config: split_fractions needs at least two entries");
    }
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
        throw InvalidArgument("config: validation_fraction must lie in (0, 1)");
    }
    if (seeds.empty()) {
        throw InvalidArgument("config: seeds must not be empty");
    }
    if (topic.dimensions == 0 || !(topic.eps > 0.0) || topic.min_samples == 0) {
        throw InvalidArgument("config: topic dimensions, eps and min_samples must be positive");
    }
    train.validate();
}

nlohmann::json PipelineConfig::to_json() const {
    auto t = train.to_json();
    t.erase("seed");
    return {{"preset", preset},
            {"seed", seed},
            {"out_dir", out_dir.string()},
            {"quiet", quiet},
            {"corpus", path_list(corpus)},
            {"messages", messages.string()},
            {"schema", schema.string()},
            {"vocab_size", vocab_size},
            {"min_frequency", min_frequency},
            {"max_position", max_position},
            {"pretrain", pretrain_json(pretrain)},
            {"topic", topic.to_json()},
            {"topic_corpus", path_list(topic_corpus)},
            {"topic_documents", topic_documents},
            {"split_fractions", split_fractions},
            {"validation_fraction", validation_fraction},
            {"train", t},
            {"augmentation", augmentation.to_json()},
            {"seeds", seeds}};
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j, const fs::path& base) {
    auto merged = PipelineConfig{}.to_json();
    auto patch = j;
    if (!base.empty()) {
        absolutize(patch, base);
    }
    merge_known(merged, patch, "");
    PipelineConfig c;
    try {
        c.preset = merged.at("preset").get<std::string>();
        c.seed = merged.at("seed").get<std::uint64_t>();
        c.out_dir = merged.at("out_dir").get<std::string>();
        c.quiet = merged.at("quiet").get<bool>();
        c.corpus = paths_from(merged.at("corpus"));
        c.messages = merged.at("messages").get<std::string>();
        c.schema = merged.at("schema").get<std::string>();
        c.vocab_size = merged.at("vocab_size").get<std::size_t>();
        c.min_frequency = merged.at("min_frequency").get<std::size_t>();
        c.max_position = merged.at("max_position").get<std::size_t>();
        c.pretrain = pretrain_from_json(merged.at("pretrain"));
        c.topic = TopicParams::from_json(merged.at("topic"));
        c.topic_corpus = paths_from(merged.at("topic_corpus"));
        c.topic_documents = merged.at("topic_documents").get<std::size_t>();
        c.split_fractions = merged.at("split_fractions").get<std::vector<double>>();
        c.validation_fraction = merged.at("validation_fraction").get<double>();
        c.train = TrainConfig::from_json(merged.at("train"));
        c.augmentation = AugmentOptions::from_json(merged.at("augmentation"));
        c.seeds = merged.at("seeds").get<std::vector<std::uint64_t>>();
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("config: ") + e.what());
    }
    c.pretrain.seed = c.seed;
    c.train.seed = c.seed;
    return c;
}

LabelSchema PipelineConfig::label_schema() const {
    return schema.empty() ? LabelSchema::default_schema() : load_schema(schema);
}

Environment process_environment() {
    Environment env;
    for (char** e = environ; e && *e; ++e) {
        const std::string_view kv(*e);
        if (kv.rfind("PVMINER_", 0) == 0) {
            const auto eq = kv.find('=');
            if (eq != std::string_view::npos) {
                env.emplace(std::string(kv.substr(0, eq)), std::string(kv.substr(eq + 1)));
            }
        }
    }
    return env;
}

void apply_environment(nlohmann::json& config, const Environment& env) {
    apply_env_at(config, "", env);
}

PipelineConfig resolve_config(const std::optional<fs::path>& file, const Environment& env,
                              const nlohmann::json& flags) {
    auto merged = PipelineConfig{}.to_json();
    if (file) {
        io::require_file(*file, "config");
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(io::read_text(*file));
        } catch (const nlohmann::json::parse_error& e) {
            throw IoError("config '" + file->string() + "' is not valid JSON: " + e.what());
        }
        absolutize(j, fs::absolute(*file).parent_path());
        merge_known(merged, j, "");
    }
    apply_environment(merged, env);
    if (!flags.is_null()) {
        merge_known(merged, flags, "");
    }
    auto config = PipelineConfig::from_json(merged);
    config.validate();
    return config;
}

std::vector<std::string> read_corpus(const std::vector<fs::path>& files) {
    if (files.empty()) {
        throw InvalidArgument("no corpus files configured");
    }
    std::vector<std::string> docs;
    for (const auto& f : files) {
        if (f.extension() == ".jsonl") {
            for (auto& m : read_messages(f)) {
                docs.push_back(std::move(m.text));
            }
            continue;
        }
        std::istringstream in(io::read_text(f));
        for (std::string line; std::getline(in, line);) {
            if (line.find_first_not_of(" \t\r") != std::string::npos) {
                docs.push_back(line);
            }
        }
    }
    return docs;
}

VocabSummary build_corpus_vocab(const std::vector<std::string>& documents, std::size_t size,
                                std::size_t min_frequency, Vocabulary& out) {
    std::vector<std::string> segments;
    for (const auto& d : documents) {
        for (auto& s : segment_sentences(d)) {
            segments.push_back(std::move(s));
        }
    }
    if (segments.empty()) {
        throw InvalidArgument("build-vocab: corpus has no text");
    }
    auto provisional = build_vocab(segments, size, min_frequency);
    std::vector<std::string> kept;
    for (const auto& s : segments) {
        if (filter_segment(encode(provisional, s, false))) {
            kept.push_back(s);
        }
    }
    VocabSummary summary{kept.size(), segments.size() - kept.size(), 0};
    if (kept.empty()) {
        throw InvalidArgument("build-vocab: every segment exceeds the length budget");
    }
    out = summary.segments_dropped == 0 ? std::move(provisional) : build_vocab(kept, size, min_frequency);
    summary.vocab_size = out.size();
    return summary;
}

TopicContext TopicBundle::context() const {
    return {&model, [this](std::string_view t) { return embed(encoder, vocab, t); }};
}

void save_topic_bundle(const TopicBundle& bundle, const fs::path& dir) {
    save_topic_model(bundle.model, dir);
    save_encoder(bundle.encoder, bundle.vocab, CheckpointMeta{bundle.vocab.fingerprint(), 0, 0}, dir / "embedder");
}

TopicBundle load_topic_bundle(const fs::path& dir) {
    TopicBundle b;
    b.model = load_topic_model(dir);
    io::require_file(dir / "embedder" / "manifest.json", "topic-fit");
    auto loaded = load_encoder(dir / "embedder");
    b.encoder = std::move(loaded.model);
    b.vocab = std::move(loaded.vocab);
    return b;
}

std::vector<fs::path> split_files(const PipelineConfig& config) {
    const auto n = config.split_fractions.size();
    std::vector<fs::path> out;
    if (n == 2) {
        out = {"train.jsonl", "test.jsonl"};
    } else if (n == 3) {
        out = {"train.jsonl", "validation.jsonl", "test.jsonl"};
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            out.emplace_back("part" + std::to_string(i) + ".jsonl");
        }
    }
    for (auto& p : out) {
        p = config.split_dir() / p;
    }
    return out;
}

nlohmann::ordered_json prediction_json(const AnnotatedMessage& message, const Classification& c, const LabelSchema& schema) {
    nlohmann::ordered_json probs = nlohmann::ordered_json::object();
    for (std::size_t j = 0; j < c.probabilities.size(); ++j) {
        probs[schema.combos()[j]] = c.probabilities[j];
    }
    nlohmann::ordered_json out{{"id", message.id},
                       {"combos", c.combos},
                       {"codes", c.codes},
                       {"subcodes", c.subcodes},
                       {"probs", probs}};
    if (!c.task_codes.empty() || !c.task_subcodes.empty()) {
        out["task_codes"] = c.task_codes;
        out["task_subcodes"] = c.task_subcodes;
    }
    return out;
}

std::string run_build_vocab(const PipelineConfig& config, const Log&) {
    Vocabulary vocab;
    const auto s = build_corpus_vocab(read_corpus(config.corpus), config.vocab_size, config.min_frequency, vocab);
    fs::create_directories(config.out_dir);
    save_vocab(vocab, config.vocab_path());
    return "build-vocab: kept " + std::to_string(s.segments_kept) + " segments, dropped " +
           std::to_string(s.segments_dropped) + ", vocabulary " + std::to_string(s.vocab_size) + " tokens -> " +
           config.vocab_path().string();
}

std::string run_pretrain(const PipelineConfig& config, const Log& log) {
    io::require_file(config.vocab_path(), "build-vocab");
    const auto vocab = load_vocab(config.vocab_path());
    std::vector<TokenSequence> corpus;
    std::size_t dropped = 0;
    for (const auto& d : read_corpus(config.corpus)) {
        for (const auto& s : segment_sentences(d)) {
            const auto content = encode(vocab, s, false);
            if (content.empty()) {
                continue;
            }
            if (!filter_segment(content) || content.size() + 2 > config.max_position) {
                ++dropped;
                continue;
            }
            corpus.push_back(encode(vocab, s, true));
        }
    }
    auto cfg = EncoderConfig::from_preset(config.preset, vocab.size());
    cfg.max_position = config.max_position;
    const auto result = pretrain(corpus, cfg, config.pretrain);
    save_encoder(result.model, vocab, CheckpointMeta{vocab.fingerprint(), static_cast<std::int64_t>(config.pretrain.steps), config.seed},
                 config.encoder_dir());

    const std::size_t window = std::min<std::size_t>(20, std::max<std::size_t>(1, result.trace.size()));
    const auto smoothed = smooth(result.trace, window);
    nlohmann::json trace = nlohmann::json::array();
    for (const auto& p : result.trace) {
        trace.push_back({{"step", p.step}, {"loss", p.loss}});
    }
    io::write_json_atomic(config.encoder_dir() / "trace.json",
                          {{"seed", config.seed}, {"segments", corpus.size()}, {"dropped", dropped}, {"trace", trace}});
    std::string losses;
    if (!smoothed.empty()) {
        losses = ", smoothed loss " + fixed(smoothed.front(), 3) + " -> " + fixed(smoothed.back(), 3);
        log("initial loss " + fixed(result.trace.front().loss, 3) + " (ln V = " +
            fixed(std::log(static_cast<double>(vocab.size())), 3) + ")");
    }
    return "pretrain: " + std::to_string(config.pretrain.steps) + " steps on " + std::to_string(corpus.size()) +
           " segments (" + std::to_string(dropped) + " dropped)" + losses + " -> " + config.encoder_dir().string();
}

std::string run_topic_fit(const PipelineConfig& config, const Log& log) {
    auto loaded = load_encoder(config.encoder_dir());
    auto docs = read_corpus(config.topic_corpus.empty() ? config.corpus : config.topic_corpus);
    if (config.topic_documents > 0 && docs.size() > config.topic_documents) {
        docs.resize(config.topic_documents);
    }
    TopicBundle bundle{{}, std::move(loaded.model), std::move(loaded.vocab)};
    const auto ctx = bundle.context();
    bundle.model = fit_topics(docs, ctx.embedder, config.topic);
    save_topic_bundle(bundle, config.topic_dir());
    std::size_t outliers = 0;
    for (int t : bundle.model.document_topics()) {
        outliers += t == kOutlierTopic ? 1 : 0;
    }
    for (std::size_t t = 0; t < bundle.model.topic_count(); ++t) {
        std::string line = "topic " + std::to_string(t) + ":";
        for (const auto& k : top_keywords(bundle.model, static_cast<int>(t), config.topic.top_k)) {
            line += " " + k;
        }
        log(line);
    }
    return "topic-fit: " + std::to_string(bundle.model.topic_count()) + " topics over " + std::to_string(docs.size()) +
           " documents (" + std::to_string(outliers) + " outliers) -> " + config.topic_dir().string();
}

std::string run_split(const PipelineConfig& config, const Log&) {
    if (config.messages.empty()) {
        throw InvalidArgument("split: no messages file configured");
    }
    const auto messages = read_messages(config.messages);
    validate_messages(config.label_schema(), messages);
    std::vector<std::vector<std::string>> sets;
    label_sets_of(messages, sets);
    const auto parts = iterative_stratified_split(sets, config.split_fractions, config.seed);
    const auto files = split_files(config);
    fs::create_directories(config.split_dir());
    std::string sizes;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        std::vector<AnnotatedMessage> subset;
        for (std::size_t i : parts[p]) {
            subset.push_back(messages[i]);
        }
        write_messages(files[p], subset);
        sizes += (p ? "/" : "") + std::to_string(subset.size());
    }
    return "split: " + std::to_string(messages.size()) + " messages -> " + sizes + " in " + config.split_dir().string();
}

std::string run_finetune(const PipelineConfig& config, const Log& log) {
    const auto files = split_files(config);
    auto train = require_messages(files.front(), "split");
    std::vector<AnnotatedMessage> validation;
    if (files.size() == 3) {
        validation = require_messages(files[1], "split");
    } else {
        auto [fit, val] = carve(train, config.validation_fraction, config.seed);
        train = std::move(fit);
        validation = std::move(val);
    }
    const auto loaded = load_encoder(config.encoder_dir());
    std::optional<TopicBundle> bundle;
    TopicContext ctx;
    if (uses_topics(config.augmentation)) {
        bundle = load_topic_bundle(config.topic_dir());
        ctx = bundle->context();
    }
    const auto schema = config.label_schema();
    const auto result = finetune(train, validation, loaded.model, loaded.vocab, ctx, schema, config.augmentation,
                                 config.train);
    save_classifier(result.model, config.classifier_dir());
    nlohmann::json trace = nlohmann::json::array();
    for (const auto& e : result.trace) {
        trace.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"validation_f1", e.validation_f1}});
        log("epoch " + std::to_string(e.epoch) + " loss " + fixed(e.train_loss, 4) + " validation Combo F1 " +
            percent(e.validation_f1));
    }
    io::write_json_atomic(config.classifier_dir() / "trace.json",
                          {{"seed", config.seed},
                           {"train", train.size()},
                           {"validation", validation.size()},
                           {"best_epoch", result.best_epoch},
                           {"best_f1", result.best_f1},
                           {"trace", trace}});
    return "finetune: best epoch " + std::to_string(result.best_epoch) + " of " + std::to_string(result.trace.size()) +
           ", validation Combo F1 " + percent(result.best_f1) + " on " + std::to_string(validation.size()) +
           " messages -> " + config.classifier_dir().string();
}

namespace {

struct Bundle {
    ClassifierModel model;
    std::optional<TopicBundle> topics;
    TopicContext context;
};

// The classifier plus the topic model it was trained against.
std::unique_ptr<Bundle> load_bundle(const PipelineConfig& config) {
    auto b = std::make_unique<Bundle>();
    b->model = load_classifier(config.classifier_dir());
    if (uses_topics(b->model.augmentation)) {
        b->topics = load_topic_bundle(config.topic_dir());
        if (b->topics->model.fingerprint() != b->model.topic_hash) {
            throw InvalidState("bundle mismatch: topic model in '" + config.topic_dir().string() +
                               "' is not the one the classifier was trained with");
        }
        b->context = b->topics->context();
    }
    return b;
}

} // namespace

std::string run_predict(const PipelineConfig& config, const fs::path& input, const fs::path& output, const Log&) {
    const auto bundle = load_bundle(config);
    const auto messages = read_messages(input);
    std::string out;
    for (const auto& m : messages) {
        out += prediction_json(m, classify(bundle->model, m, bundle->context), bundle->model.schema).dump() + "\n";
    }
    if (output.has_parent_path()) {
        fs::create_directories(output.parent_path());
    }
    io::write_text_atomic(output, out);
    return "predict: " + std::to_string(messages.size()) + " messages -> " + output.string();
}

std::string run_evaluate(const PipelineConfig& config, const std::optional<fs::path>& gold_path,
                         const std::optional<fs::path>& predictions, const Log& log) {
    const auto gold_file = gold_path ? *gold_path : split_files(config).back();
    const auto gold = gold_path ? read_messages(gold_file) : require_messages(gold_file, "split");
    std::vector<std::vector<std::string>> predicted, golds;
    LabelSchema schema = config.label_schema();
    if (predictions) {
        std::map<std::string, std::vector<std::string>> by_id;
        std::istringstream in(io::read_text(*predictions));
        std::size_t line_no = 0;
        for (std::string line; std::getline(in, line);) {
            ++line_no;
            if (line.find_first_not_of(" \t\r") == std::string::npos) {
                continue;
            }
            try {
                const auto j = nlohmann::json::parse(line);
                by_id[j.at("id").get<std::string>()] = j.at("combos").get<std::vector<std::string>>();
            } catch (const nlohmann::json::exception& e) {
                throw IoError(predictions->string() + ":" + std::to_string(line_no) + ": " + e.what());
            }
        }
        for (const auto& m : gold) {
            const auto it = by_id.find(m.id);
            if (it == by_id.end()) {
                throw InvalidArgument("evaluate: no prediction for message '" + m.id + "'");
            }
            predicted.push_back(it->second);
        }
    } else {
        const auto bundle = load_bundle(config);
        schema = bundle->model.schema;
        for (const auto& m : gold) {
            predicted.push_back(classify(bundle->model, m, bundle->context).combos);
        }
    }
    for (const auto& m : gold) {
        if (!m.labels) {
            throw InvalidArgument("evaluate: message '" + m.id + "' has no gold labels");
        }
        golds.push_back(*m.labels);
    }
    const auto report = hierarchical_report(predicted, golds, schema);
    const std::vector<EvalReport> runs{report};
    const auto agg = aggregate_runs(runs, {config.seed});
    const std::vector<std::pair<std::string, RunAggregate>> rows{{display_name(config.preset), agg}};
    std::string tables;
    for (Task t : kTasks) {
        tables += std::string(task_name(t)) + "\n" + render_model_table(rows, t) + "\n";
        tables += std::string(task_name(t)) + " by class\n" + render_class_table(agg, t) + "\n";
    }
    fs::create_directories(config.report_dir());
    io::write_json_atomic(config.report_dir() / "evaluation.json",
                          {{"messages", gold.size()}, {"report", report.to_json()}, {"aggregate", agg.to_json()}});
    io::write_text_atomic(config.report_dir() / "evaluation.txt", tables);
    log(tables);
    return "evaluate: " + std::to_string(gold.size()) + " messages, F1 Code " + percent(report.code.micro.f1) +
           " Subcode " + percent(report.subcode.micro.f1) + " Combo " + percent(report.combo.micro.f1) + " -> " +
           (config.report_dir() / "evaluation.json").string();
}

std::string run_ablate(const PipelineConfig& config, const Log& log) {
    const auto files = split_files(config);
    std::vector<AnnotatedMessage> train;
    for (std::size_t i = 0; i + 1 < files.size(); ++i) {
        for (auto& m : require_messages(files[i], "split")) {
            train.push_back(std::move(m));
        }
    }
    const auto test = require_messages(files.back(), "split");
    const auto loaded = load_encoder(config.encoder_dir());
    const auto bundle = load_topic_bundle(config.topic_dir());
    AblationSetup setup;
    setup.encoder_name = display_name(config.preset);
    setup.validation_fraction = config.validation_fraction;
    setup.keywords = config.augmentation.keywords == 0 ? 3 : config.augmentation.keywords;
    const auto rows = ablation(train, test, loaded.model, loaded.vocab, bundle.context(), config.label_schema(),
                               config.train, config.seeds, setup);
    const auto table = render_ablation_table(rows);
    fs::create_directories(config.report_dir());
    io::write_json_atomic(config.report_dir() / "ablation.json",
                          {{"seeds", config.seeds}, {"std", "population"}, {"rows", ablation_json(rows)}});
    io::write_text_atomic(config.report_dir() / "ablation.txt", table);
    log(table);
    std::string f1s;
    for (const auto& r : rows) {
        f1s += (f1s.empty() ? "" : " / ") + percent(r.aggregate.combo.micro.f1.mean);
    }
    return "ablate: 3 configurations x " + std::to_string(config.seeds.size()) + " seeds, Combo F1 " + f1s + " -> " +
           (config.report_dir() / "ablation.json").string();
}

} // namespace pvminer
