#include "pvminer/ablation.hpp"

#include "pvminer/errors.hpp"

namespace pvminer {

std::vector<std::pair<std::string, AugmentOptions>> ablation_configurations(const std::string& encoder_name,
                                                                            std::size_t keywords) {
    return {{encoder_name, {false, false, keywords}},
            {encoder_name + " + author", {true, false, keywords}},
            {encoder_name + " + author + topic", {true, true, keywords}}};
}

EvalReport evaluate_model(const ClassifierModel& model, std::span<const AnnotatedMessage> messages,
                          const TopicContext& topics) {
    std::vector<std::vector<std::string>> predicted, gold;
    for (const auto& m : messages) {
        if (!m.labels) {
            throw InvalidArgument("message '" + m.id + "' has no gold labels");
        }
        predicted.push_back(classify(model, m, topics).combos);
        gold.push_back(*m.labels);
    }
    return hierarchical_report(predicted, gold, model.schema);
}

std::vector<AblationRow> ablation(std::span<const AnnotatedMessage> train, std::span<const AnnotatedMessage> test,
                                  const Encoder& encoder, const Vocabulary& vocab, const TopicContext& topics,
                                  const LabelSchema& schema, const TrainConfig& config,
                                  std::span<const std::uint64_t> seeds, const AblationSetup& setup) {
    if (seeds.empty()) {
        throw InvalidArgument("ablation: at least one seed is required");
    }
    if (train.empty() || test.empty()) {
        throw InvalidArgument("ablation: training and test sets must be non-empty");
    }
    if (!(setup.validation_fraction > 0.0 && setup.validation_fraction < 1.0)) {
        throw InvalidArgument("ablation: validation fraction must lie in (0, 1)");
    }
    std::vector<std::vector<std::string>> label_sets;
    for (const auto& m : train) {
        label_sets.push_back(m.labels.value_or(std::vector<std::string>{}));
    }
    const std::vector<double> fractions{1.0 - setup.validation_fraction, setup.validation_fraction};
    const auto parts = iterative_stratified_split(label_sets, fractions, config.seed);
    std::vector<AnnotatedMessage> fit, validation;
    for (std::size_t i : parts[0]) {
        fit.push_back(train[i]);
    }
    for (std::size_t i : parts[1]) {
        validation.push_back(train[i]);
    }
    if (fit.empty() || validation.empty()) {
        throw InvalidArgument("ablation: training set too small to carve a validation set");
    }

    std::vector<AblationRow> rows;
    for (const auto& [method, options] : ablation_configurations(setup.encoder_name, setup.keywords)) {
        std::vector<EvalReport> reports;
        for (std::uint64_t seed : seeds) {
            auto run = config;
            run.seed = seed;
            const auto model = finetune(fit, validation, encoder, vocab, topics, schema, options, run).model;
            reports.push_back(evaluate_model(model, test, topics));
        }
        rows.push_back({method, options, aggregate_runs(reports, {seeds.begin(), seeds.end()})});
    }
    return rows;
}

std::vector<std::string> ablation_columns() {
    std::vector<std::string> cols{"Method"};
    for (Task t : kTasks) {
        cols.push_back(std::string(task_name(t)) + " F1_mean");
        cols.push_back(std::string(task_name(t)) + " F1_std");
    }
    return cols;
}

std::string render_ablation_table(std::span<const AblationRow> rows) {
    std::vector<std::vector<std::string>> cells;
    for (const auto& r : rows) {
        std::vector<std::string> row{r.method};
        for (Task t : kTasks) {
            const auto& f1 = r.aggregate.task(t).micro.f1;
            row.push_back(percent(f1.mean));
            row.push_back(percent(f1.std));
        }
        cells.push_back(std::move(row));
    }
    return render_table(ablation_columns(), cells);
}

nlohmann::json ablation_json(std::span<const AblationRow> rows) {
    auto out = nlohmann::json::array();
    for (const auto& r : rows) {
        out.push_back({{"method", r.method}, {"augmentation", r.augmentation.to_json()}, {"report", r.aggregate.to_json()}});
    }
    return out;
}

} // namespace pvminer
