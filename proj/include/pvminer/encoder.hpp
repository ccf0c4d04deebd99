#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pvminer/autograd.hpp"
#include "pvminer/optim.hpp"
#include "pvminer/tensor.hpp"
#include "pvminer/tokenizer.hpp"

namespace pvminer {

struct EncoderConfig {
    std::string preset = "custom";
    std::size_t layers = 2;
    std::size_t heads = 2;
    std::size_t hidden = 64;
    std::size_t ffn = 256;
    std::size_t max_position = kMaxSequenceLength;
    std::size_t vocab_size = 0;

    /// Throws InvalidArgument on inconsistent sizes.
    void validate() const;

    /// "pv-base-mini" or "pv-large-mini".
    static EncoderConfig from_preset(const std::string& name, std::size_t vocab_size);

    nlohmann::json to_json() const;
    static EncoderConfig from_json(const nlohmann::json& j);

    friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

template <class T>
struct BoundEncoder;

/// Pre-LN transformer encoder with learned positions and an MLM head whose
/// output projection is tied to the token embedding.
template <class T>
class BasicEncoder {
public:
    BasicEncoder() = default;
    BasicEncoder(EncoderConfig config, std::uint64_t seed);
    /// Weights normal(0, 0.02), biases 0, norm gains 1.
    BasicEncoder(EncoderConfig config, std::mt19937_64& rng);

    const EncoderConfig& config() const noexcept { return m_config; }

    std::size_t parameter_tensor_count() const noexcept { return m_params.size(); }
    std::size_t parameter_count() const;

    const std::vector<std::string>& names() const noexcept { return m_names; }
    std::vector<BasicTensor<T>>& parameters() noexcept { return m_params; }
    const std::vector<BasicTensor<T>>& parameters() const noexcept { return m_params; }

    /// f(name, tensor) over every weight in checkpoint order.
    template <class F>
    void visit(F&& f) {
        for (std::size_t i = 0; i < m_params.size(); ++i) {
            f(m_names[i], m_params[i]);
        }
    }
    template <class F>
    void visit(F&& f) const {
        for (std::size_t i = 0; i < m_params.size(); ++i) {
            f(m_names[i], m_params[i]);
        }
    }

    BasicTensor<T>& parameter(const std::string& name);
    const BasicTensor<T>& parameter(const std::string& name) const;

    template <class U>
    BasicEncoder<U> cast() const {
        BasicEncoder<U> out;
        out.m_config = m_config;
        out.m_names = m_names;
        for (const auto& p : m_params) {
            out.m_params.push_back(p.template cast<U>());
        }
        return out;
    }

    /// Records every weight as a tape leaf.
    BoundEncoder<T> bind(ag::Tape<T>& tape, bool trainable = true) const;

    friend bool operator==(const BasicEncoder&, const BasicEncoder&) = default;

private:
    template <class U>
    friend class BasicEncoder;

    EncoderConfig m_config;
    std::vector<std::string> m_names;
    std::vector<BasicTensor<T>> m_params;
};

using Encoder = BasicEncoder<float>;

template <class T>
struct BoundEncoder {
    const EncoderConfig* config = nullptr;
    ag::Tape<T>* tape = nullptr;
    std::vector<ag::Var<T>> params;
};

/// Hidden states [len, hidden]. `attention_mask` marks real tokens (1) vs
/// padding (0); empty means all real. Padding keys receive zero attention.
template <class T>
ag::Var<T> forward(BoundEncoder<T>& model, std::span<const int> ids, std::span<const std::uint8_t> attention_mask = {});

template <class T>
BasicTensor<T> hidden_states(const BasicEncoder<T>& model, std::span<const int> ids,
                             std::span<const std::uint8_t> attention_mask = {});

/// Logits over the vocabulary for the selected rows of `hidden`.
template <class T>
ag::Var<T> mlm_logits(BoundEncoder<T>& model, ag::Var<T> hidden, std::span<const std::size_t> rows);

struct MlmBatch {
    TokenSequence input_ids;
    /// Original id at selected positions, -1 elsewhere.
    std::vector<int> targets;

    std::size_t masked_count() const;
    std::vector<std::size_t> masked_positions() const;
};

/// Selects each non-special position with `probability`; selected positions
/// become [MASK] 80% of the time, a random non-special token 10%, unchanged 10%.
MlmBatch mlm_mask(std::span<const int> seq, double probability, std::size_t vocab_size, std::mt19937_64& rng);

/// Mean cross-entropy over all masked positions of the given sequences.
template <class T>
ag::Var<T> mlm_loss(BoundEncoder<T>& model, std::span<const MlmBatch> batch);

template <class T>
double mlm_loss_value(const BasicEncoder<T>& model, std::span<const MlmBatch> batch);

struct PretrainOptions {
    std::size_t steps = 200;
    std::size_t batch_size = 8;
    double mask_probability = 0.15;
    double learning_rate = 5e-5;
    double weight_decay = 0.01;
    double warmup_fraction = 0.1;
    std::uint64_t seed = 0;
};

struct TracePoint {
    std::size_t step = 0;
    double loss = 0.0;
    friend bool operator==(const TracePoint&, const TracePoint&) = default;
};

struct PretrainResult {
    Encoder model;
    std::vector<TracePoint> trace;
};

/// `corpus` holds [CLS] ... [SEP] sequences. Each step draws the next batch of
/// an epoch-wise shuffle, masks it and applies one AdamW update.
PretrainResult pretrain(std::span<const TokenSequence> corpus, const EncoderConfig& config,
                        const PretrainOptions& options);

/// Mean of final hidden states over the content positions of `text`.
std::vector<float> embed(const Encoder& model, const Vocabulary& vocab, std::string_view text);

/// Moving average with the given window, one value per full window.
std::vector<double> smooth(std::span<const TracePoint> trace, std::size_t window);

struct CheckpointMeta {
    std::string vocab_hash;
    std::int64_t step = 0;
    std::uint64_t seed = 0;
};

struct LoadedEncoder {
    Encoder model;
    CheckpointMeta meta;
    Vocabulary vocab;
};

/// Writes <dir>/manifest.json, <dir>/weights/*.f32 and <dir>/vocab.txt.
void save_encoder(const Encoder& model, const Vocabulary& vocab, const CheckpointMeta& meta,
                  const std::filesystem::path& dir);
LoadedEncoder load_encoder(const std::filesystem::path& dir);

/// Manifest fragment shared with the classifier checkpoint.
nlohmann::json encoder_manifest(const Encoder& model, const CheckpointMeta& meta, const std::filesystem::path& dir);
Encoder encoder_from_manifest(const nlohmann::json& manifest, const std::filesystem::path& dir);

} // namespace pvminer
