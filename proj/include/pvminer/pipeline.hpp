#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pvminer/ablation.hpp"
#include "pvminer/classifier.hpp"
#include "pvminer/encoder.hpp"
#include "pvminer/labels.hpp"
#include "pvminer/topic.hpp"

namespace pvminer {

/// Everything a pipeline command reads. Artifact locations derive from
/// `out_dir`; input paths resolve against the config file's directory.
struct PipelineConfig {
    std::string preset = "pv-base-mini";
    std::uint64_t seed = 0;
    std::filesystem::path out_dir = "pvminer-out";
    bool quiet = false;

    /// Plain text (one message per line) or message JSONL files.
    std::vector<std::filesystem::path> corpus;
    std::filesystem::path messages;
    /// Empty means the built-in codebook.
    std::filesystem::path schema;

    std::size_t vocab_size = 8000;
    std::size_t min_frequency = 2;
    std::size_t max_position = kMaxSequenceLength;
    PretrainOptions pretrain;

    TopicParams topic;
    /// Files whose lines the topic model is fitted on; empty means `corpus`.
    std::vector<std::filesystem::path> topic_corpus;
    /// Cap on topic documents, 0 for all.
    std::size_t topic_documents = 0;

    std::vector<double> split_fractions{0.8, 0.2};
    double validation_fraction = 0.1;
    TrainConfig train;
    AugmentOptions augmentation;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};

    /// Throws InvalidArgument on out-of-range fields.
    void validate() const;
    nlohmann::json to_json() const;
    /// Unknown keys are rejected. Relative input paths resolve against `base`.
    static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base = {});

    std::filesystem::path vocab_path() const { return out_dir / "vocab.txt"; }
    std::filesystem::path encoder_dir() const { return out_dir / "encoder"; }
    std::filesystem::path topic_dir() const { return out_dir / "topic"; }
    std::filesystem::path split_dir() const { return out_dir / "split"; }
    std::filesystem::path classifier_dir() const { return out_dir / "classifier"; }
    std::filesystem::path report_dir() const { return out_dir / "reports"; }

    LabelSchema label_schema() const;
};

using Environment = std::map<std::string, std::string>;

/// PVMINER_* variables of the current process.
Environment process_environment();

/// Rewrites every leaf whose PVMINER_<PATH> variable is set, where PATH is
/// the upper-cased key path joined by '_' (PVMINER_TRAIN_LEARNING_RATE).
void apply_environment(nlohmann::json& config, const Environment& env);

/// Defaults, then the config file, then the environment, then `flags`
/// (a JSON patch built from command-line options).
PipelineConfig resolve_config(const std::optional<std::filesystem::path>& file, const Environment& env,
                              const nlohmann::json& flags);

/// Lines of text files and "text" fields of JSONL files, blank lines skipped.
std::vector<std::string> read_corpus(const std::vector<std::filesystem::path>& files);

struct VocabSummary {
    std::size_t segments_kept = 0;
    std::size_t segments_dropped = 0;
    std::size_t vocab_size = 0;
};

/// segment_sentences, then filter_segment under a provisional vocabulary,
/// then the final vocabulary from the kept segments.
VocabSummary build_corpus_vocab(const std::vector<std::string>& documents, std::size_t size,
                                std::size_t min_frequency, Vocabulary& out);

/// The encoder and vocabulary a topic model was fitted with, so the model can
/// embed new text without the pretrain stage's files.
struct TopicBundle {
    TopicModel model;
    Encoder encoder;
    Vocabulary vocab;

    TopicContext context() const;
};

void save_topic_bundle(const TopicBundle& bundle, const std::filesystem::path& dir);
TopicBundle load_topic_bundle(const std::filesystem::path& dir);

std::vector<std::filesystem::path> split_files(const PipelineConfig& config);

/// The JSONL record written by predict.
nlohmann::ordered_json prediction_json(const AnnotatedMessage& message, const Classification& c,
                                       const LabelSchema& schema);

using Log = std::function<void(const std::string&)>;

/// One function per CLI verb. Each returns the summary line (without timing).
std::string run_build_vocab(const PipelineConfig& config, const Log& log);
std::string run_pretrain(const PipelineConfig& config, const Log& log);
std::string run_topic_fit(const PipelineConfig& config, const Log& log);
std::string run_split(const PipelineConfig& config, const Log& log);
std::string run_finetune(const PipelineConfig& config, const Log& log);
std::string run_predict(const PipelineConfig& config, const std::filesystem::path& input,
                        const std::filesystem::path& output, const Log& log);
/// Scores the classifier on `gold` (default: the last split file), or scores
/// `predictions` (predict JSONL) against `gold` when given.
std::string run_evaluate(const PipelineConfig& config, const std::optional<std::filesystem::path>& gold,
                         const std::optional<std::filesystem::path>& predictions, const Log& log);
std::string run_ablate(const PipelineConfig& config, const Log& log);

} // namespace pvminer
