#include "pvminer/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pvminer/container.hpp"
#include "pvminer/errors.hpp"
#include "pvminer/io.hpp"

namespace pvminer {

namespace {

constexpr std::size_t kPerLayer = 16;
constexpr double kInitStd = 0.02;
constexpr double kLayerNormEps = 1e-5;

// Offsets inside one layer's block of parameters.
enum LayerParam : std::size_t {
    kLn1Gamma, kLn1Beta, kQw, kQb, kKw, kKb, kVw, kVb, kOw, kOb,
    kLn2Gamma, kLn2Beta, kFfnInW, kFfnInB, kFfnOutW, kFfnOutB,
};

std::size_t layer_base(std::size_t layer) { return 2 + layer * kPerLayer; }
std::size_t final_base(const EncoderConfig& c) { return 2 + c.layers * kPerLayer; }

} // namespace

void EncoderConfig::validate() const {
    if (layers == 0 || heads == 0 || hidden == 0 || ffn == 0) {
        throw InvalidArgument("encoder config: layers, heads, hidden and ffn sizes must be positive");
    }
    if (hidden % heads != 0) {
        throw InvalidArgument("encoder config: hidden size " + std::to_string(hidden) +
                              " is not divisible by " + std::to_string(heads) + " heads");
    }
    if (max_position == 0 || max_position > kMaxSequenceLength) {
        throw InvalidArgument("encoder config: max position must lie in [1, 512]");
    }
    if (vocab_size <= kSpecialCount) {
        throw InvalidArgument("encoder config: vocabulary size " + std::to_string(vocab_size) +
                              " leaves no room beyond the special tokens");
    }
}

EncoderConfig EncoderConfig::from_preset(const std::string& name, std::size_t vocab_size) {
    EncoderConfig c;
    c.preset = name;
    c.vocab_size = vocab_size;
    if (name == "pv-base-mini") {
        c.layers = 2;
        c.heads = 2;
        c.hidden = 64;
        c.ffn = 256;
    } else if (name == "pv-large-mini") {
        c.layers = 4;
        c.heads = 4;
        c.hidden = 128;
        c.ffn = 512;
    } else {
        throw InvalidArgument("unknown encoder preset '" + name + "' (expected pv-base-mini or pv-large-mini)");
    }
    return c;
}

nlohmann::json EncoderConfig::to_json() const {
    return {{"preset", preset},       {"layers", layers},
            {"heads", heads},         {"hidden", hidden},
            {"ffn", ffn},             {"max_position", max_position},
            {"vocab_size", vocab_size}};
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& j) {
    EncoderConfig c;
    try {
        c.preset = j.at("preset").get<std::string>();
        c.layers = j.at("layers").get<std::size_t>();
        c.heads = j.at("heads").get<std::size_t>();
        c.hidden = j.at("hidden").get<std::size_t>();
        c.ffn = j.at("ffn").get<std::size_t>();
        c.max_position = j.at("max_position").get<std::size_t>();
        c.vocab_size = j.at("vocab_size").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("encoder config: ") + e.what());
    }
    c.validate();
    return c;
}

template <class T>
BasicEncoder<T>::BasicEncoder(EncoderConfig config, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    *this = BasicEncoder(std::move(config), rng);
}

template <class T>
BasicEncoder<T>::BasicEncoder(EncoderConfig config, std::mt19937_64& rng) : m_config(std::move(config)) {
    m_config.validate();
    std::normal_distribution<double> normal(0.0, kInitStd);
    const std::size_t H = m_config.hidden, F = m_config.ffn;
    constexpr int kZero = 0, kRandom = 1, kOne = 2;

    auto add = [&](std::string name, std::vector<std::size_t> shape, int kind) {
        BasicTensor<T> t(std::move(shape));
        if (kind == kRandom) {
            for (auto& x : t.values()) {
                x = static_cast<T>(normal(rng));
            }
        } else if (kind == kOne) {
            t.fill(T{1});
        }
        m_names.push_back(std::move(name));
        m_params.push_back(std::move(t));
    };

    add("embeddings.token", {m_config.vocab_size, H}, kRandom);
    add("embeddings.position", {m_config.max_position, H}, kRandom);
    for (std::size_t l = 0; l < m_config.layers; ++l) {
        const std::string p = "layers." + std::to_string(l) + ".";
        add(p + "attention_norm.gamma", {H}, kOne);
        add(p + "attention_norm.beta", {H}, kZero);
        add(p + "attention.query.weight", {H, H}, kRandom);
        add(p + "attention.query.bias", {H}, kZero);
        add(p + "attention.key.weight", {H, H}, kRandom);
        add(p + "attention.key.bias", {H}, kZero);
        add(p + "attention.value.weight", {H, H}, kRandom);
        add(p + "attention.value.bias", {H}, kZero);
        add(p + "attention.output.weight", {H, H}, kRandom);
        add(p + "attention.output.bias", {H}, kZero);
        add(p + "ffn_norm.gamma", {H}, kOne);
        add(p + "ffn_norm.beta", {H}, kZero);
        add(p + "ffn.in.weight", {H, F}, kRandom);
        add(p + "ffn.in.bias", {F}, kZero);
        add(p + "ffn.out.weight", {F, H}, kRandom);
        add(p + "ffn.out.bias", {H}, kZero);
    }
    add("final_norm.gamma", {H}, kOne);
    add("final_norm.beta", {H}, kZero);
    add("mlm.bias", {m_config.vocab_size}, kZero);
}

template <class T>
std::size_t BasicEncoder<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : m_params) {
        n += p.size();
    }
    return n;
}

template <class T>
BasicTensor<T>& BasicEncoder<T>::parameter(const std::string& name) {
    auto it = std::find(m_names.begin(), m_names.end(), name);
    if (it == m_names.end()) {
        throw InvalidArgument("encoder has no parameter '" + name + "'");
    }
    return m_params[static_cast<std::size_t>(it - m_names.begin())];
}

template <class T>
const BasicTensor<T>& BasicEncoder<T>::parameter(const std::string& name) const {
    return const_cast<BasicEncoder*>(this)->parameter(name);
}

template <class T>
BoundEncoder<T> BasicEncoder<T>::bind(ag::Tape<T>& tape, bool trainable) const {
    BoundEncoder<T> bound{&m_config, &tape, {}};
    bound.params.reserve(m_params.size());
    for (const auto& p : m_params) {
        bound.params.push_back(tape.leaf(p, trainable));
    }
    return bound;
}

template <class T>
ag::Var<T> forward(BoundEncoder<T>& model, std::span<const int> ids, std::span<const std::uint8_t> attention_mask) {
    const EncoderConfig& c = *model.config;
    const std::size_t len = ids.size();
    if (len == 0) {
        throw InvalidArgument("encoder forward: empty input");
    }
    if (len > c.max_position) {
        throw InvalidArgument("encoder forward: sequence length " + std::to_string(len) + " exceeds max position " +
                              std::to_string(c.max_position));
    }
    if (!attention_mask.empty() && attention_mask.size() != len) {
        throw InvalidArgument("encoder forward: attention mask length differs from sequence length");
    }
    const auto& P = model.params;
    std::vector<int> positions(len);
    std::iota(positions.begin(), positions.end(), 0);

    auto x = ag::add(ag::gather_rows(P[0], ids), ag::gather_rows(P[1], std::span<const int>(positions)));
    const std::size_t d = c.hidden / c.heads;
    const T inv_sqrt_d = static_cast<T>(1.0 / std::sqrt(static_cast<double>(d)));
    const T eps = static_cast<T>(kLayerNormEps);

    for (std::size_t l = 0; l < c.layers; ++l) {
        const std::size_t b = layer_base(l);
        auto h = ag::layer_norm(x, P[b + kLn1Gamma], P[b + kLn1Beta], eps);
        auto q = ag::add_row(ag::matmul(h, P[b + kQw]), P[b + kQb]);
        auto k = ag::add_row(ag::matmul(h, P[b + kKw]), P[b + kKb]);
        auto v = ag::add_row(ag::matmul(h, P[b + kVw]), P[b + kVb]);
        std::vector<ag::Var<T>> heads;
        for (std::size_t head = 0; head < c.heads; ++head) {
            auto qh = c.heads == 1 ? q : ag::slice_cols(q, head * d, (head + 1) * d);
            auto kh = c.heads == 1 ? k : ag::slice_cols(k, head * d, (head + 1) * d);
            auto vh = c.heads == 1 ? v : ag::slice_cols(v, head * d, (head + 1) * d);
            auto probs = ag::softmax_rows(ag::scale(ag::matmul_nt(qh, kh), inv_sqrt_d), attention_mask);
            heads.push_back(ag::matmul(probs, vh));
        }
        auto context = c.heads == 1 ? heads[0] : ag::concat_cols(std::span<const ag::Var<T>>(heads));
        x = ag::add(x, ag::add_row(ag::matmul(context, P[b + kOw]), P[b + kOb]));

        auto h2 = ag::layer_norm(x, P[b + kLn2Gamma], P[b + kLn2Beta], eps);
        auto inner = ag::gelu(ag::add_row(ag::matmul(h2, P[b + kFfnInW]), P[b + kFfnInB]));
        x = ag::add(x, ag::add_row(ag::matmul(inner, P[b + kFfnOutW]), P[b + kFfnOutB]));
    }
    const std::size_t f = final_base(c);
    return ag::layer_norm(x, P[f], P[f + 1], eps);
}

template <class T>
BasicTensor<T> hidden_states(const BasicEncoder<T>& model, std::span<const int> ids,
                             std::span<const std::uint8_t> attention_mask) {
    ag::Tape<T> tape;
    auto bound = model.bind(tape, false);
    return forward(bound, ids, attention_mask).value();
}

template <class T>
ag::Var<T> mlm_logits(BoundEncoder<T>& model, ag::Var<T> hidden, std::span<const std::size_t> rows) {
    const std::size_t f = final_base(*model.config);
    auto selected = ag::select_rows(hidden, rows);
    return ag::add_row(ag::matmul_nt(selected, model.params[0]), model.params[f + 2]);
}

std::size_t MlmBatch::masked_count() const {
    return static_cast<std::size_t>(std::count_if(targets.begin(), targets.end(), [](int t) { return t >= 0; }));
}

std::vector<std::size_t> MlmBatch::masked_positions() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        if (targets[i] >= 0) {
            out.push_back(i);
        }
    }
    return out;
}

MlmBatch mlm_mask(std::span<const int> seq, double probability, std::size_t vocab_size, std::mt19937_64& rng) {
    if (!(probability >= 0.0 && probability <= 1.0)) {
        throw InvalidArgument("mlm_mask: probability must lie in [0, 1]");
    }
    if (vocab_size <= kSpecialCount) {
        throw InvalidArgument("mlm_mask: vocabulary has no non-special tokens");
    }
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> random_token(static_cast<int>(kSpecialCount), static_cast<int>(vocab_size) - 1);
    MlmBatch batch{TokenSequence(seq.begin(), seq.end()), std::vector<int>(seq.size(), -1)};
    for (std::size_t i = 0; i < seq.size(); ++i) {
        if (Vocabulary::is_special(seq[i]) || unit(rng) >= probability) {
            continue;
        }
        batch.targets[i] = seq[i];
        const double r = unit(rng);
        if (r < 0.8) {
            batch.input_ids[i] = kMaskId;
        } else if (r < 0.9) {
            batch.input_ids[i] = random_token(rng);
        }
    }
    return batch;
}

template <class T>
ag::Var<T> mlm_loss(BoundEncoder<T>& model, std::span<const MlmBatch> batch) {
    std::size_t total = 0;
    for (const auto& b : batch) {
        total += b.masked_count();
    }
    if (total == 0) {
        throw InvalidArgument("mlm_loss: batch has no masked positions");
    }
    ag::Var<T> loss{};
    bool first = true;
    for (const auto& b : batch) {
        const auto rows = b.masked_positions();
        if (rows.empty()) {
            continue;
        }
        std::vector<int> targets;
        for (auto r : rows) {
            targets.push_back(b.targets[r]);
        }
        auto hidden = forward(model, std::span<const int>(b.input_ids));
        auto ce = ag::cross_entropy(mlm_logits(model, hidden, rows), std::span<const int>(targets));
        auto weighted = ag::scale(ce, static_cast<T>(static_cast<double>(rows.size()) / static_cast<double>(total)));
        loss = first ? weighted : ag::add(loss, weighted);
        first = false;
    }
    return loss;
}

template <class T>
double mlm_loss_value(const BasicEncoder<T>& model, std::span<const MlmBatch> batch) {
    ag::Tape<T> tape;
    auto bound = model.bind(tape, false);
    return static_cast<double>(mlm_loss(bound, batch).value()[0]);
}

PretrainResult pretrain(std::span<const TokenSequence> corpus, const EncoderConfig& config,
                        const PretrainOptions& options) {
    config.validate();
    if (corpus.empty()) {
        throw InvalidArgument("pretrain: corpus is empty");
    }
    if (!(options.mask_probability > 0.0 && options.mask_probability <= 1.0)) {
        throw InvalidArgument("pretrain: masking probability must lie in (0, 1]");
    }
    if (options.batch_size == 0) {
        throw InvalidArgument("pretrain: batch size must be positive");
    }
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const auto& seq = corpus[i];
        if (seq.size() > config.max_position || seq.size() > kMaxSequenceLength) {
            throw InvalidArgument("pretrain: segment " + std::to_string(i) + " has " + std::to_string(seq.size()) +
                                  " tokens, over the position limit");
        }
        for (int id : seq) {
            if (id < 0 || static_cast<std::size_t>(id) >= config.vocab_size) {
                throw InvalidArgument("pretrain: segment " + std::to_string(i) + " holds out-of-vocabulary id " +
                                      std::to_string(id));
            }
        }
        if (std::any_of(seq.begin(), seq.end(), [](int id) { return !Vocabulary::is_special(id); })) {
            eligible.push_back(i);
        }
    }
    if (eligible.empty()) {
        throw InvalidArgument("pretrain: no segment has maskable tokens");
    }

    std::mt19937_64 rng(options.seed);
    PretrainResult result{Encoder(config, rng), {}};

    OptimizerState state(AdamWConfig{.weight_decay = options.weight_decay});
    const LrSchedule schedule{options.learning_rate, static_cast<std::int64_t>(std::max<std::size_t>(options.steps, 1)),
                              options.warmup_fraction};
    std::vector<std::size_t> order = eligible;
    std::size_t cursor = order.size();

    for (std::size_t step = 0; step < options.steps; ++step) {
        std::vector<std::size_t> picks;
        while (picks.size() < options.batch_size) {
            if (cursor == order.size()) {
                std::shuffle(order.begin(), order.end(), rng);
                cursor = 0;
            }
            picks.push_back(order[cursor++]);
        }
        std::vector<MlmBatch> batch;
        do {
            batch.clear();
            for (auto i : picks) {
                batch.push_back(mlm_mask(corpus[i], options.mask_probability, config.vocab_size, rng));
            }
        } while (std::all_of(batch.begin(), batch.end(), [](const MlmBatch& b) { return b.masked_count() == 0; }));

        ag::Tape<float> tape;
        auto bound = result.model.bind(tape);
        auto loss = mlm_loss(bound, std::span<const MlmBatch>(batch));
        tape.backward(loss);
        std::vector<Tensor> grads;
        grads.reserve(bound.params.size());
        for (const auto& v : bound.params) {
            grads.push_back(tape.grad(v));
        }
        std::vector<Tensor*> params;
        std::vector<const Tensor*> grad_ptrs;
        for (std::size_t i = 0; i < grads.size(); ++i) {
            params.push_back(&result.model.parameters()[i]);
            grad_ptrs.push_back(&grads[i]);
        }
        state.learning_rate = lr_at(schedule, static_cast<std::int64_t>(step));
        adamw_step(state, params, grad_ptrs);
        result.trace.push_back({step, static_cast<double>(loss.value()[0])});
    }
    return result;
}

std::vector<float> embed(const Encoder& model, const Vocabulary& vocab, std::string_view text) {
    TokenSequence content = encode(vocab, text, false);
    if (content.empty()) {
        throw InvalidArgument("embed: text has no tokens");
    }
    const std::size_t budget = std::min(model.config().max_position, kMaxSequenceLength) - 2;
    if (content.size() > budget) {
        content.resize(budget);
    }
    TokenSequence ids;
    ids.push_back(kClsId);
    ids.insert(ids.end(), content.begin(), content.end());
    ids.push_back(kSepId);

    const auto hidden = hidden_states(model, std::span<const int>(ids));
    std::vector<std::size_t> rows;
    for (std::size_t i = 1; i + 1 < ids.size(); ++i) {
        if (!Vocabulary::is_special(ids[i])) {
            rows.push_back(i);
        }
    }
    if (rows.empty()) {
        // only [UNK] or marker tokens: pool over them rather than fail
        for (std::size_t i = 1; i + 1 < ids.size(); ++i) {
            rows.push_back(i);
        }
    }
    std::vector<double> acc(hidden.cols(), 0.0);
    for (auto r : rows) {
        for (std::size_t j = 0; j < acc.size(); ++j) {
            acc[j] += hidden.at(r, j);
        }
    }
    std::vector<float> out(acc.size());
    for (std::size_t j = 0; j < acc.size(); ++j) {
        out[j] = static_cast<float>(acc[j] / static_cast<double>(rows.size()));
    }
    return out;
}

std::vector<double> smooth(std::span<const TracePoint> trace, std::size_t window) {
    if (window == 0) {
        throw InvalidArgument("smooth: window must be positive");
    }
    std::vector<double> out;
    double acc = 0.0;
    for (std::size_t i = 0; i < trace.size(); ++i) {
        acc += trace[i].loss;
        if (i >= window) {
            acc -= trace[i - window].loss;
        }
        if (i + 1 >= window) {
            out.push_back(acc / static_cast<double>(window));
        }
    }
    return out;
}

nlohmann::json encoder_manifest(const Encoder& model, const CheckpointMeta& meta, const std::filesystem::path& dir) {
    io::NamedTensors named;
    model.visit([&](const std::string& name, const Tensor& t) { named.emplace_back(name, &t); });
    return {{"preset", model.config().preset},
            {"config", model.config().to_json()},
            {"vocab_hash", meta.vocab_hash},
            {"step", meta.step},
            {"seed", meta.seed},
            {"weights", io::write_tensors(dir, named)}};
}

Encoder encoder_from_manifest(const nlohmann::json& manifest, const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    Encoder model(EncoderConfig::from_json(io::field(manifest, "config", manifest_path)), 0);
    auto tensors = io::read_tensors(dir, io::field(manifest, "weights", manifest_path));
    for (const auto& name : model.names()) {
        auto it = tensors.find(name);
        if (it == tensors.end()) {
            throw IoError("checkpoint '" + dir.string() + "' lacks weight '" + name + "'");
        }
        auto& target = model.parameter(name);
        if (!it->second.same_shape(target)) {
            throw IoError("checkpoint weight '" + name + "' has shape " + shape_string(it->second.shape()) +
                          ", config expects " + shape_string(target.shape()));
        }
        target = std::move(it->second);
    }
    return model;
}

void save_encoder(const Encoder& model, const Vocabulary& vocab, const CheckpointMeta& meta,
                  const std::filesystem::path& dir) {
    if (vocab.size() != model.config().vocab_size) {
        throw InvalidArgument("save_encoder: vocabulary size " + std::to_string(vocab.size()) +
                              " differs from model vocabulary size " + std::to_string(model.config().vocab_size));
    }
    CheckpointMeta stamped = meta;
    stamped.vocab_hash = vocab.fingerprint();
    auto manifest = encoder_manifest(model, stamped, dir);
    manifest["format"] = "pvminer-encoder";
    manifest["version"] = 1;
    save_vocab(vocab, dir / "vocab.txt");
    io::write_json_atomic(dir / "manifest.json", manifest);
}

LoadedEncoder load_encoder(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    io::require_file(manifest_path, "pretrain");
    const auto manifest = io::read_json(manifest_path);
    LoadedEncoder out{encoder_from_manifest(manifest, dir), {}, load_vocab(dir / "vocab.txt")};
    try {
        out.meta.vocab_hash = manifest.at("vocab_hash").get<std::string>();
        out.meta.step = manifest.at("step").get<std::int64_t>();
        out.meta.seed = manifest.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed manifest '" + manifest_path.string() + "': " + e.what());
    }
    if (out.vocab.fingerprint() != out.meta.vocab_hash) {
        throw InvalidState("vocabulary in '" + dir.string() + "' does not match the checkpoint's vocabulary hash");
    }
    if (out.vocab.size() != out.model.config().vocab_size) {
        throw InvalidState("vocabulary size differs from the checkpoint's model config");
    }
    return out;
}

#define PVMINER_INSTANTIATE_ENCODER(T)                                                                            \
    template class BasicEncoder<T>;                                                                               \
    template ag::Var<T> forward(BoundEncoder<T>&, std::span<const int>, std::span<const std::uint8_t>);         \
    template BasicTensor<T> hidden_states(const BasicEncoder<T>&, std::span<const int>,                          \
                                          std::span<const std::uint8_t>);                                        \
    template ag::Var<T> mlm_logits(BoundEncoder<T>&, ag::Var<T>, std::span<const std::size_t>);                  \
    template ag::Var<T> mlm_loss(BoundEncoder<T>&, std::span<const MlmBatch>);                                   \
    template double mlm_loss_value(const BasicEncoder<T>&, std::span<const MlmBatch>);

PVMINER_INSTANTIATE_ENCODER(float)
PVMINER_INSTANTIATE_ENCODER(double)

} // namespace pvminer
