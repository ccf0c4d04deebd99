#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "pvminer/errors.hpp"
#include "pvminer/eval.hpp"

namespace pvminer {

Counts& Counts::operator+=(const Counts& o) {
    true_positive += o.true_positive;
    predicted += o.predicted;
    gold += o.gold;
    return *this;
}

Prf Prf::from(const Counts& c) {
    Prf m;
    if (c.predicted > 0) {
        m.precision = static_cast<double>(c.true_positive) / static_cast<double>(c.predicted);
    }
    if (c.gold > 0) {
        m.recall = static_cast<double>(c.true_positive) / static_cast<double>(c.gold);
    }
    if (m.precision + m.recall > 0.0) {
        m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    }
    return m;
}

namespace {

void check_shapes(std::span<const MultiHot> predictions, std::span<const MultiHot> golds, std::size_t width) {
    if (predictions.size() != golds.size()) {
        throw InvalidArgument("metrics: " + std::to_string(predictions.size()) + " predictions but " +
                              std::to_string(golds.size()) + " gold vectors");
    }
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        if (predictions[i].size() != width || golds[i].size() != width) {
            throw InvalidArgument("metrics: vector " + std::to_string(i) + " has length " +
                                  std::to_string(predictions[i].size()) + "/" + std::to_string(golds[i].size()) +
                                  ", expected " + std::to_string(width));
        }
    }
}

} // namespace

Counts micro_counts(std::span<const MultiHot> predictions, std::span<const MultiHot> golds) {
    check_shapes(predictions, golds, predictions.empty() ? 0 : predictions.front().size());
    Counts c;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        for (std::size_t j = 0; j < predictions[i].size(); ++j) {
            const bool p = predictions[i][j] != 0, g = golds[i][j] != 0;
            c.true_positive += p && g;
            c.predicted += p;
            c.gold += g;
        }
    }
    return c;
}

Prf micro_metrics(std::span<const MultiHot> predictions, std::span<const MultiHot> golds) {
    return Prf::from(micro_counts(predictions, golds));
}

std::vector<ClassRow> per_class_metrics(std::span<const MultiHot> predictions, std::span<const MultiHot> golds,
                                        const std::vector<std::string>& labels) {
    check_shapes(predictions, golds, labels.size());
    std::vector<ClassRow> rows;
    rows.reserve(labels.size());
    for (std::size_t j = 0; j < labels.size(); ++j) {
        ClassRow r{labels[j], {}, {}};
        for (std::size_t i = 0; i < predictions.size(); ++i) {
            const bool p = predictions[i][j] != 0, g = golds[i][j] != 0;
            r.counts.true_positive += p && g;
            r.counts.predicted += p;
            r.counts.gold += g;
        }
        r.metrics = Prf::from(r.counts);
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<ClassRow> per_class_metrics(std::span<const MultiHot> predictions, std::span<const MultiHot> golds,
                                        const LabelSchema& schema) {
    return per_class_metrics(predictions, golds, schema.combos());
}

std::string_view task_name(Task t) {
    switch (t) {
    case Task::code:
        return "Code";
    case Task::subcode:
        return "Subcode";
    case Task::combo:
        return "Combo";
    }
    return "";
}

const TaskReport& EvalReport::task(Task t) const {
    return t == Task::code ? code : t == Task::subcode ? subcode : combo;
}

TaskReport& EvalReport::task(Task t) {
    return t == Task::code ? code : t == Task::subcode ? subcode : combo;
}

namespace {

nlohmann::json prf_json(const Prf& m) {
    return {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}};
}

nlohmann::json counts_json(const Counts& c) {
    return {{"true_positive", c.true_positive}, {"predicted", c.predicted}, {"gold", c.gold}};
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

} // namespace

nlohmann::json EvalReport::to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (Task t : kTasks) {
        const auto& r = task(t);
        nlohmann::json classes = nlohmann::json::array();
        for (const auto& row : r.classes) {
            auto c = prf_json(row.metrics);
            c["label"] = row.label;
            c["counts"] = counts_json(row.counts);
            classes.push_back(std::move(c));
        }
        j[lower(task_name(t))] = {{"micro", prf_json(r.micro)}, {"counts", counts_json(r.counts)}, {"classes", classes}};
    }
    return j;
}

std::vector<std::string> decomposed_codes(std::span<const std::string> combos) {
    std::set<std::string> out;
    for (const auto& c : combos) {
        out.insert(decompose(c).code);
    }
    return {out.begin(), out.end()};
}

std::vector<std::string> decomposed_subcodes(std::span<const std::string> combos) {
    std::set<std::string> out;
    for (const auto& c : combos) {
        if (auto s = decompose(c).subcode) {
            out.insert(*s);
        }
    }
    return {out.begin(), out.end()};
}

namespace {

MultiHot hot(const std::vector<std::string>& labels, const std::vector<std::string>& active) {
    MultiHot bits(labels.size(), 0);
    for (const auto& a : active) {
        auto it = std::lower_bound(labels.begin(), labels.end(), a);
        if (it == labels.end() || *it != a) {
            throw InvalidArgument("label '" + a + "' is outside the label space");
        }
        bits[static_cast<std::size_t>(it - labels.begin())] = 1;
    }
    return bits;
}

TaskReport score(const std::vector<MultiHot>& pred, const std::vector<MultiHot>& gold,
                 const std::vector<std::string>& labels) {
    TaskReport r;
    r.counts = micro_counts(pred, gold);
    r.micro = Prf::from(r.counts);
    r.classes = per_class_metrics(pred, gold, labels);
    return r;
}

} // namespace

EvalReport hierarchical_report(std::span<const std::vector<std::string>> predicted,
                               std::span<const std::vector<std::string>> gold, const LabelSchema& schema) {
    if (predicted.size() != gold.size()) {
        throw InvalidArgument("hierarchical_report: " + std::to_string(predicted.size()) + " predictions but " +
                              std::to_string(gold.size()) + " gold label sets");
    }
    const auto code_labels = schema.code_names();
    const auto sub_labels = schema.subcode_names();
    std::vector<MultiHot> pc, gc, ps, gs, pb, gb;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        pb.push_back(encode_labels(schema, predicted[i]));
        gb.push_back(encode_labels(schema, gold[i]));
        pc.push_back(hot(code_labels, decomposed_codes(predicted[i])));
        gc.push_back(hot(code_labels, decomposed_codes(gold[i])));
        ps.push_back(hot(sub_labels, decomposed_subcodes(predicted[i])));
        gs.push_back(hot(sub_labels, decomposed_subcodes(gold[i])));
    }
    EvalReport report;
    report.code = score(pc, gc, code_labels);
    report.subcode = score(ps, gs, sub_labels);
    report.combo = score(pb, gb, schema.combos());
    return report;
}

Stat mean_std(std::span<const double> values) {
    if (values.empty()) {
        throw InvalidArgument("mean_std: no values");
    }
    Stat s;
    for (double v : values) {
        s.mean += v;
    }
    s.mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) {
        var += (v - s.mean) * (v - s.mean);
    }
    s.std = std::sqrt(var / static_cast<double>(values.size()));
    return s;
}

const TaskAggregate& RunAggregate::task(Task t) const {
    return t == Task::code ? code : t == Task::subcode ? subcode : combo;
}

namespace {

PrfStat prf_stat(const std::vector<Prf>& runs) {
    std::vector<double> p, r, f;
    for (const auto& m : runs) {
        p.push_back(m.precision);
        r.push_back(m.recall);
        f.push_back(m.f1);
    }
    return {mean_std(p), mean_std(r), mean_std(f)};
}

nlohmann::json stat_json(const PrfStat& s) {
    auto one = [](const Stat& x) { return nlohmann::json{{"mean", x.mean}, {"std", x.std}}; };
    return {{"precision", one(s.precision)}, {"recall", one(s.recall)}, {"f1", one(s.f1)}};
}

} // namespace

RunAggregate aggregate_runs(std::span<const EvalReport> reports, std::vector<std::uint64_t> seeds) {
    if (reports.empty()) {
        throw InvalidArgument("aggregate_runs: no reports");
    }
    if (!seeds.empty() && seeds.size() != reports.size()) {
        throw InvalidArgument("aggregate_runs: seed count differs from report count");
    }
    RunAggregate agg;
    agg.runs = reports.size();
    agg.seeds = std::move(seeds);
    for (Task t : kTasks) {
        auto& out = t == Task::code ? agg.code : t == Task::subcode ? agg.subcode : agg.combo;
        std::vector<Prf> micro;
        for (const auto& r : reports) {
            micro.push_back(r.task(t).micro);
        }
        out.micro = prf_stat(micro);
        const auto& first = reports.front().task(t).classes;
        for (std::size_t j = 0; j < first.size(); ++j) {
            std::vector<Prf> runs;
            for (const auto& r : reports) {
                const auto& rows = r.task(t).classes;
                if (rows.size() != first.size() || rows[j].label != first[j].label) {
                    throw InvalidArgument("aggregate_runs: reports use different label spaces");
                }
                runs.push_back(rows[j].metrics);
            }
            out.classes.emplace_back(first[j].label, prf_stat(runs));
        }
    }
    return agg;
}

nlohmann::json RunAggregate::to_json() const {
    nlohmann::json j{{"runs", runs}, {"seeds", seeds}, {"std", "population"}};
    for (Task t : kTasks) {
        const auto& a = task(t);
        nlohmann::json classes = nlohmann::json::array();
        for (const auto& [label, s] : a.classes) {
            auto c = stat_json(s);
            c["label"] = label;
            classes.push_back(std::move(c));
        }
        j[lower(task_name(t))] = {{"micro", stat_json(a.micro)}, {"classes", classes}};
    }
    return j;
}

std::string percent(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", fraction * 100.0);
    std::string s = buf;
    return s == "-0.00" ? "0.00" : s;
}

std::vector<std::string> metric_columns(const std::string& first) {
    return {first, "Precision_mean", "Precision_std", "Recall_mean", "Recall_std", "F1_mean", "F1_std"};
}

namespace {

std::vector<std::string> stat_cells(const std::string& label, const PrfStat& s) {
    return {label,           percent(s.precision.mean), percent(s.precision.std), percent(s.recall.mean),
            percent(s.recall.std), percent(s.f1.mean),       percent(s.f1.std)};
}

} // namespace

std::string render_model_table(std::span<const std::pair<std::string, RunAggregate>> rows, Task task) {
    std::vector<std::vector<std::string>> cells;
    for (const auto& [name, agg] : rows) {
        cells.push_back(stat_cells(name, agg.task(task).micro));
    }
    return render_table(metric_columns("Model"), cells);
}

std::string render_class_table(const RunAggregate& aggregate, Task task) {
    const auto& a = aggregate.task(task);
    std::vector<std::vector<std::string>> cells{stat_cells("All", a.micro)};
    for (const auto& [label, s] : a.classes) {
        cells.push_back(stat_cells(label, s));
    }
    return render_table(metric_columns("Class Label"), cells);
}

std::string render_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> width(header.size(), 0);
    auto measure = [&](const std::vector<std::string>& r) {
        if (r.size() != header.size()) {
            throw InvalidArgument("render_table: row has " + std::to_string(r.size()) + " cells, header has " +
                                  std::to_string(header.size()));
        }
        for (std::size_t c = 0; c < r.size(); ++c) {
            width[c] = std::max(width[c], r[c].size());
        }
    };
    measure(header);
    for (const auto& r : rows) {
        measure(r);
    }
    auto line = [&](const std::vector<std::string>& r) {
        std::string out;
        for (std::size_t c = 0; c < r.size(); ++c) {
            const std::string pad(width[c] - r[c].size(), ' ');
            if (c > 0) {
                out += " | ";
            }
            out += c == 0 ? r[c] + pad : pad + r[c];
        }
        return out + "\n";
    };
    std::string rule;
    for (std::size_t c = 0; c < width.size(); ++c) {
        rule += std::string(width[c] + (c == 0 || c + 1 == width.size() ? 1 : 2), '-');
        if (c + 1 < width.size()) {
            rule += "+";
        }
    }
    rule += "\n";
    std::string out = line(header) + rule;
    for (const auto& r : rows) {
        out += line(r);
    }
    return out;
}

} // namespace pvminer
