#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pvminer/classifier.hpp"
#include "pvminer/eval.hpp"

namespace pvminer {

struct AblationRow {
    std::string method;
    AugmentOptions augmentation;
    RunAggregate aggregate;
};

/// Encoder alone, + author token, + author + topic keywords.
std::vector<std::pair<std::string, AugmentOptions>> ablation_configurations(const std::string& encoder_name,
                                                                            std::size_t keywords = 3);

struct AblationSetup {
    std::string encoder_name = "PV-base-mini";
    /// Share of the training set held out for early stopping. The carve is
    /// made once and reused by every configuration and seed.
    double validation_fraction = 0.1;
    std::size_t keywords = 3;
};

/// Trains and scores each configuration once per seed on a fixed split.
/// Throws InvalidArgument when `seeds` is empty.
std::vector<AblationRow> ablation(std::span<const AnnotatedMessage> train, std::span<const AnnotatedMessage> test,
                                  const Encoder& encoder, const Vocabulary& vocab, const TopicContext& topics,
                                  const LabelSchema& schema, const TrainConfig& config,
                                  std::span<const std::uint64_t> seeds, const AblationSetup& setup = {});

/// Scores a model on labelled messages.
EvalReport evaluate_model(const ClassifierModel& model, std::span<const AnnotatedMessage> messages,
                          const TopicContext& topics);

/// Method | Code F1_mean | Code F1_std | Subcode F1_mean | ... | Combo F1_std
std::vector<std::string> ablation_columns();
std::string render_ablation_table(std::span<const AblationRow> rows);
nlohmann::json ablation_json(std::span<const AblationRow> rows);

} // namespace pvminer
