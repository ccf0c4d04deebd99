#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pvminer/labels.hpp"

namespace pvminer {

struct Counts {
    std::size_t true_positive = 0;
    std::size_t predicted = 0;
    std::size_t gold = 0;

    Counts& operator+=(const Counts& o);
    friend bool operator==(const Counts&, const Counts&) = default;
};

/// P, R and F1 with every zero denominator mapped to 0.
struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;

    static Prf from(const Counts& c);
    friend bool operator==(const Prf&, const Prf&) = default;
};

Counts micro_counts(std::span<const MultiHot> predictions, std::span<const MultiHot> golds);
Prf micro_metrics(std::span<const MultiHot> predictions, std::span<const MultiHot> golds);

struct ClassRow {
    std::string label;
    Counts counts;
    Prf metrics;
};

std::vector<ClassRow> per_class_metrics(std::span<const MultiHot> predictions, std::span<const MultiHot> golds,
                                        const std::vector<std::string>& labels);
std::vector<ClassRow> per_class_metrics(std::span<const MultiHot> predictions, std::span<const MultiHot> golds,
                                        const LabelSchema& schema);

enum class Task { code, subcode, combo };
inline constexpr Task kTasks[] = {Task::code, Task::subcode, Task::combo};
std::string_view task_name(Task t);

struct TaskReport {
    Counts counts;
    Prf micro;
    std::vector<ClassRow> classes;
};

struct EvalReport {
    TaskReport code;
    TaskReport subcode;
    TaskReport combo;

    const TaskReport& task(Task t) const;
    TaskReport& task(Task t);

    nlohmann::json to_json() const;
};

/// Code and Subcode label spaces of a schema, and the decomposed label sets
/// of a message. Subcode sets never contain None.
std::vector<std::string> decomposed_codes(std::span<const std::string> combos);
std::vector<std::string> decomposed_subcodes(std::span<const std::string> combos);

/// Scores combo sets directly and their Code/Subcode decompositions.
/// Throws InvalidArgument for unknown combos or mismatched lengths.
EvalReport hierarchical_report(std::span<const std::vector<std::string>> predicted,
                               std::span<const std::vector<std::string>> gold, const LabelSchema& schema);

struct Stat {
    double mean = 0.0;
    double std = 0.0;
};

struct PrfStat {
    Stat precision;
    Stat recall;
    Stat f1;
};

struct TaskAggregate {
    PrfStat micro;
    std::vector<std::pair<std::string, PrfStat>> classes;
};

/// Mean and population standard deviation over runs.
struct RunAggregate {
    std::size_t runs = 0;
    std::vector<std::uint64_t> seeds;
    TaskAggregate code;
    TaskAggregate subcode;
    TaskAggregate combo;

    const TaskAggregate& task(Task t) const;
    nlohmann::json to_json() const;
};

RunAggregate aggregate_runs(std::span<const EvalReport> reports, std::vector<std::uint64_t> seeds = {});

Stat mean_std(std::span<const double> values);

/// Percent with two decimals, e.g. 0.8225 -> "82.25".
std::string percent(double fraction);

/// Column headers shared by the class-level and model-level tables.
std::vector<std::string> metric_columns(const std::string& first);

/// One row per model over the micro metrics of a task.
std::string render_model_table(std::span<const std::pair<std::string, RunAggregate>> rows, Task task);
/// "All" followed by one row per class of the task.
std::string render_class_table(const RunAggregate& aggregate, Task task);

/// Aligned text table; the first column is left aligned, the rest right aligned.
std::string render_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows);

} // namespace pvminer
