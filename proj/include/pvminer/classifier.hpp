#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pvminer/encoder.hpp"
#include "pvminer/labels.hpp"
#include "pvminer/topic.hpp"

namespace pvminer {

struct TrainConfig {
    std::size_t max_epochs = 75;
    std::size_t batch_size = 8;
    double learning_rate = 5e-5;
    double weight_decay = 0.01;
    double warmup_ratio = 0.1;
    std::size_t patience = 5;
    double threshold = 0.5;
    std::uint64_t seed = 0;
    /// Extra Code and Subcode heads trained alongside the Combo head.
    bool per_task = false;

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct AugmentOptions {
    bool author = true;
    bool topic = true;
    std::size_t keywords = 3;

    nlohmann::json to_json() const;
    static AugmentOptions from_json(const nlohmann::json& j);
    friend bool operator==(const AugmentOptions&, const AugmentOptions&) = default;
};

/// The fitted topic model plus the embedder it was fitted with.
struct TopicContext {
    const TopicModel* model = nullptr;
    Embedder embedder;
};

struct AugmentedInput {
    std::optional<Author> author;
    std::string body;
    int topic = kOutlierTopic;
    std::vector<std::string> keywords;

    /// "[PATIENT] body [TOPIC] kw1 kw2 kw3"
    std::string text() const;
};

/// Throws InvalidArgument when the body already starts with an author token,
/// InvalidState when topic keywords are requested without a fitted model.
AugmentedInput augment(const AnnotatedMessage& message, const TopicContext& topics, const AugmentOptions& options);

/// [CLS] author body [TOPIC] keywords [SEP], truncating body tokens from the
/// end to fit `max_length`. Throws InvalidArgument when the body has no tokens.
TokenSequence input_ids(const Vocabulary& vocab, const AugmentedInput& input, std::size_t max_length);

/// Linear head over the [CLS] hidden state: z = W h_0 + b.
template <class T>
ag::Var<T> head_logits(BoundEncoder<T>& encoder, ag::Var<T> weight, ag::Var<T> bias, std::span<const int> ids);

struct LinearHead {
    Tensor weight; // [outputs, hidden]
    Tensor bias;   // [outputs]

    bool empty() const noexcept { return weight.empty(); }
    friend bool operator==(const LinearHead&, const LinearHead&) = default;
};

struct ClassifierModel {
    Encoder encoder;
    Vocabulary vocab;
    LabelSchema schema;
    LinearHead combo_head;
    LinearHead code_head;    // per-task mode only
    LinearHead subcode_head; // per-task mode only
    AugmentOptions augmentation;
    TrainConfig config;
    std::string topic_hash;

    bool per_task() const noexcept { return !code_head.empty(); }
    friend bool operator==(const ClassifierModel&, const ClassifierModel&) = default;
};

/// Combo logits for an encoded input.
std::vector<double> logits(const ClassifierModel& model, std::span<const int> ids);

std::vector<double> probabilities(std::span<const double> z);
/// Inclusive: bit j is set iff p_j >= threshold.
MultiHot predict(std::span<const double> p, double threshold = 0.5);
/// Mean over labels of the logit-form binary cross-entropy.
double bce_loss(std::span<const double> z, const MultiHot& gold);

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double validation_f1 = 0.0;
    friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct FinetuneResult {
    ClassifierModel model;
    std::vector<EpochRecord> trace;
    std::size_t best_epoch = 0;
    double best_f1 = 0.0;
};

/// Trains the combo head (and task heads in per-task mode) together with the
/// encoder, keeping the weights of the epoch with the best validation Combo
/// micro-F1.
FinetuneResult finetune(std::span<const AnnotatedMessage> train, std::span<const AnnotatedMessage> validation,
                        const Encoder& encoder, const Vocabulary& vocab, const TopicContext& topics,
                        const LabelSchema& schema, const AugmentOptions& augmentation, const TrainConfig& config);

struct Classification {
    std::vector<std::string> combos;
    std::vector<std::string> codes;
    std::vector<std::string> subcodes;
    std::vector<double> probabilities; // per combo id
    /// Per-task mode: labels read from the Code and Subcode heads.
    std::vector<std::string> task_codes;
    std::vector<std::string> task_subcodes;
};

Classification classify(const ClassifierModel& model, const AnnotatedMessage& message, const TopicContext& topics);

/// Writes the encoder weights, heads, vocab.txt and a manifest embedding the
/// schema and the topic model fingerprint.
void save_classifier(const ClassifierModel& model, const std::filesystem::path& dir);
ClassifierModel load_classifier(const std::filesystem::path& dir);

} // namespace pvminer
