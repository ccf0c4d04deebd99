#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "pvminer/ablation.hpp"
#include "pvminer/errors.hpp"
#include "pvminer/eval.hpp"

using namespace pvminer;

namespace {

// Counts from explicit label sets, independent of the MultiHot path.
Counts oracle(const std::vector<std::set<int>>& pred, const std::vector<std::set<int>>& gold) {
    Counts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        for (int l : pred[i]) {
            c.true_positive += gold[i].count(l);
        }
        c.predicted += pred[i].size();
        c.gold += gold[i].size();
    }
    return c;
}

MultiHot bits(const std::set<int>& s, std::size_t n) {
    MultiHot b(n, 0);
    for (int l : s) {
        b[static_cast<std::size_t>(l)] = 1;
    }
    return b;
}

std::set<int> random_set(std::mt19937_64& rng, std::size_t n, double density) {
    std::bernoulli_distribution coin(density);
    std::set<int> s;
    for (std::size_t j = 0; j < n; ++j) {
        if (coin(rng)) {
            s.insert(static_cast<int>(j));
        }
    }
    return s;
}

EvalReport report_with_f1(double f1) {
    EvalReport r;
    for (Task t : kTasks) {
        r.task(t).micro = {f1, f1, f1};
    }
    return r;
}

std::vector<std::string> table_lines(const std::string& table) {
    std::vector<std::string> lines;
    std::istringstream in(table);
    for (std::string l; std::getline(in, l);) {
        lines.push_back(l);
    }
    return lines;
}

std::vector<std::string> cells(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto bar = line.find(" | ", start);
        auto cell = line.substr(start, bar == std::string::npos ? std::string::npos : bar - start);
        cell.erase(0, cell.find_first_not_of(' '));
        cell.erase(cell.find_last_not_of(' ') + 1);
        out.push_back(cell);
        if (bar == std::string::npos) {
            return out;
        }
        start = bar + 3;
    }
}

} // namespace

TEST_CASE("micro metrics examples") {
    // labels a, b, c at columns 0, 1, 2
    const std::vector<MultiHot> pred{{1, 1, 0}}, gold{{0, 1, 1}};
    const auto m = micro_metrics(pred, gold);
    CHECK(m.precision == 0.5);
    CHECK(m.recall == 0.5);
    CHECK(m.f1 == 0.5);
    const auto same = micro_metrics(gold, gold);
    CHECK(same == Prf{1.0, 1.0, 1.0});

    const std::vector<MultiHot> empty{{0, 0, 0}};
    CHECK(micro_metrics(empty, gold) == Prf{0.0, 0.0, 0.0});
    CHECK(micro_metrics(gold, empty) == Prf{0.0, 0.0, 0.0});
    CHECK_THROWS_AS(micro_metrics(pred, std::vector<MultiHot>{}), InvalidArgument);
    CHECK_THROWS_AS(micro_metrics(pred, std::vector<MultiHot>{{1, 0}}), InvalidArgument);
}

TEST_CASE("micro and per-class metrics agree with a counting oracle") {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<std::size_t> len(1, 10), msgs(1, 12);
    std::uniform_real_distribution<double> dens(0.0, 0.7);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t L = len(rng);
        const std::size_t n = msgs(rng);
        std::vector<std::set<int>> ps, gs;
        std::vector<MultiHot> pb, gb;
        for (std::size_t i = 0; i < n; ++i) {
            ps.push_back(random_set(rng, L, dens(rng)));
            gs.push_back(random_set(rng, L, dens(rng)));
            pb.push_back(bits(ps.back(), L));
            gb.push_back(bits(gs.back(), L));
        }
        const auto expected = oracle(ps, gs);
        REQUIRE(micro_counts(pb, gb) == expected);
        const auto m = micro_metrics(pb, gb);
        const double p = expected.predicted ? static_cast<double>(expected.true_positive) / expected.predicted : 0.0;
        const double r = expected.gold ? static_cast<double>(expected.true_positive) / expected.gold : 0.0;
        CHECK(m.precision == p);
        CHECK(m.recall == r);
        CHECK(m.f1 == (p + r > 0 ? 2 * p * r / (p + r) : 0.0));
        if (m.precision + m.recall > 0) {
            CHECK(m.f1 <= std::max(m.precision, m.recall) + 1e-15);
            CHECK(m.f1 >= std::min(m.precision, m.recall) - 1e-15);
        }

        std::vector<std::string> labels;
        for (std::size_t j = 0; j < L; ++j) {
            labels.push_back("L" + std::to_string(j));
        }
        const auto rows = per_class_metrics(pb, gb, labels);
        REQUIRE(rows.size() == L);
        Counts sum;
        for (std::size_t j = 0; j < L; ++j) {
            std::vector<std::set<int>> pj, gj;
            for (std::size_t i = 0; i < n; ++i) {
                pj.push_back(ps[i].count(static_cast<int>(j)) ? std::set<int>{0} : std::set<int>{});
                gj.push_back(gs[i].count(static_cast<int>(j)) ? std::set<int>{0} : std::set<int>{});
            }
            CHECK(rows[j].label == labels[j]);
            CHECK(rows[j].counts == oracle(pj, gj));
            CHECK(rows[j].metrics == Prf::from(oracle(pj, gj)));
            sum += rows[j].counts;
        }
        // per-class counts recombine into the micro counts
        CHECK(sum == expected);
    }
}

TEST_CASE("per-class rows for unsupported and perfect labels") {
    const std::vector<MultiHot> pred{{1, 0, 0}, {1, 0, 1}}, gold{{1, 0, 0}, {1, 0, 0}};
    const auto rows = per_class_metrics(pred, gold, {"a", "build trust", "c"});
    CHECK(rows[0].metrics == Prf{1.0, 1.0, 1.0});
    CHECK(rows[1].metrics == Prf{0.0, 0.0, 0.0});
    CHECK(rows[2].metrics == Prf{0.0, 0.0, 0.0});
    CHECK(rows[2].counts == Counts{0, 1, 0});
    CHECK_THROWS_AS(per_class_metrics(pred, gold, {"a", "b"}), InvalidArgument);
}

TEST_CASE("hierarchical report decomposes combos") {
    const auto schema = LabelSchema::default_schema();
    using Sets = std::vector<std::vector<std::string>>;
    const Sets pred{{"SDOH_EconomicStability"}}, gold{{"SDOH_SocialAndCommunityContext"}};
    const auto r = hierarchical_report(pred, gold, schema);
    CHECK(r.combo.micro.f1 == 0.0);
    CHECK(r.code.micro.f1 == 1.0);
    CHECK(r.subcode.micro.f1 == 0.0);
    CHECK(r.code.classes.size() == schema.code_names().size());
    CHECK(r.combo.classes.size() == schema.size());

    const auto same = hierarchical_report(gold, gold, schema);
    for (Task t : kTasks) {
        CHECK(same.task(t).micro == Prf{1.0, 1.0, 1.0});
    }
    const Sets bare{{"CareCoordinationPatient_None"}};
    const auto none = hierarchical_report(bare, bare, schema);
    CHECK(none.subcode.counts == Counts{0, 0, 0});
    CHECK(none.code.counts == Counts{1, 1, 1});
    CHECK(decomposed_subcodes(bare[0]).empty());

    CHECK_THROWS_AS(hierarchical_report(Sets{{"SDOH_Nope"}}, gold, schema), InvalidArgument);
    CHECK_THROWS_AS(hierarchical_report(Sets{}, gold, schema), InvalidArgument);

    const Sets dup{{"PartnershipPatient_salutation", "PartnershipPatient_signoff"}};
    CHECK(decomposed_codes(dup[0]) == std::vector<std::string>{"PartnershipPatient"});
    CHECK(hierarchical_report(dup, dup, schema).code.counts == Counts{1, 1, 1});
}

TEST_CASE("code recall never falls below combo recall") {
    const auto schema = LabelSchema::default_schema();
    const auto& combos = schema.combos();
    std::mt19937_64 rng(31);
    std::bernoulli_distribution coin(0.08);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<std::vector<std::string>> pred(6), gold(6);
        for (std::size_t i = 0; i < pred.size(); ++i) {
            for (const auto& c : combos) {
                if (coin(rng)) {
                    pred[i].push_back(c);
                }
                if (coin(rng)) {
                    gold[i].push_back(c);
                }
            }
        }
        const auto r = hierarchical_report(pred, gold, schema);
        CHECK(r.code.micro.recall >= r.combo.micro.recall);
        for (Task t : kTasks) {
            CHECK(r.task(t).micro == Prf::from(r.task(t).counts));
        }
    }
}

TEST_CASE("aggregate runs uses population std") {
    const std::vector<EvalReport> two{report_with_f1(0.80), report_with_f1(0.82)};
    const auto agg = aggregate_runs(two, {1, 2});
    CHECK(agg.runs == 2);
    CHECK(agg.combo.micro.f1.mean == doctest::Approx(0.81).epsilon(1e-12));
    CHECK(agg.combo.micro.f1.std == doctest::Approx(0.01).epsilon(1e-9));
    CHECK(percent(agg.combo.micro.f1.mean) == "81.00");
    CHECK(percent(agg.combo.micro.f1.std) == "1.00");
    CHECK(agg.to_json()["std"] == "population");
    CHECK(agg.to_json()["seeds"] == nlohmann::json::array({1, 2}));

    const std::vector<EvalReport> one{report_with_f1(0.7)};
    const auto single = aggregate_runs(one);
    CHECK(single.code.micro.f1.mean == 0.7);
    CHECK(single.code.micro.f1.std == 0.0);
    const std::vector<EvalReport> same{report_with_f1(0.6), report_with_f1(0.6), report_with_f1(0.6)};
    CHECK(aggregate_runs(same).subcode.micro.recall.std == 0.0);

    CHECK_THROWS_AS(aggregate_runs(std::vector<EvalReport>{}), InvalidArgument);
    CHECK_THROWS_AS(aggregate_runs(two, {1}), InvalidArgument);
    CHECK(mean_std(std::vector<double>{1.0, 3.0}).std == 1.0);
}

TEST_CASE("percent formatting") {
    CHECK(percent(0.8225) == "82.25");
    CHECK(percent(0.0) == "0.00");
    CHECK(percent(-0.0) == "0.00");
    CHECK(percent(1.0) == "100.00");
    CHECK(percent(0.0033) == "0.33");
}

TEST_CASE("class table lists every class with zero-support rows at 0.00") {
    const auto schema = LabelSchema::default_schema();
    const std::vector<std::vector<std::string>> gold{{"SDOH_EconomicStability"}, {"PartnershipPatient_salutation"}};
    const std::vector<EvalReport> reports{hierarchical_report(gold, gold, schema)};
    const auto table = render_class_table(aggregate_runs(reports), Task::combo);
    const auto lines = table_lines(table);
    REQUIRE(lines.size() == 2 + 1 + schema.size());
    CHECK(cells(lines[0]) == metric_columns("Class Label"));
    CHECK(cells(lines[2])[0] == "All");
    CHECK(cells(lines[2])[5] == "100.00");
    bool saw_trust = false;
    for (std::size_t i = 3; i < lines.size(); ++i) {
        const auto row = cells(lines[i]);
        REQUIRE(row.size() == 7);
        CHECK(row[0] == schema.combos()[i - 3]);
        if (row[0] == "PartnershipPatient_build trust") {
            saw_trust = true;
            CHECK(std::all_of(row.begin() + 1, row.end(), [](const std::string& c) { return c == "0.00"; }));
        }
        CHECK(lines[i].size() == lines[0].size());
    }
    CHECK(saw_trust);
    const auto codes = table_lines(render_class_table(aggregate_runs(reports), Task::code));
    CHECK(codes.size() == 3 + schema.code_names().size());
}

TEST_CASE("model table has one row per model") {
    const std::vector<EvalReport> a{report_with_f1(0.8), report_with_f1(0.84)};
    const std::vector<std::pair<std::string, RunAggregate>> rows{{"PV-base-mini", aggregate_runs(a)},
                                                                 {"PV-large-mini", aggregate_runs(a)}};
    const auto lines = table_lines(render_model_table(rows, Task::code));
    REQUIRE(lines.size() == 4);
    CHECK(cells(lines[0]) == metric_columns("Model"));
    CHECK(cells(lines[3]) == std::vector<std::string>{"PV-large-mini", "82.00", "2.00", "82.00", "2.00", "82.00", "2.00"});
    CHECK(lines[1].find_first_not_of("-+") == std::string::npos);
    CHECK_THROWS_AS(render_table({"a", "b"}, {{"x"}}), InvalidArgument);
}

TEST_CASE("ablation table shape") {
    CHECK(ablation_configurations("PV-base-mini").size() == 3);
    CHECK(ablation_configurations("X")[0].second == AugmentOptions{false, false, 3});
    CHECK(ablation_configurations("X")[1].second == AugmentOptions{true, false, 3});
    CHECK(ablation_configurations("X")[2].second == AugmentOptions{true, true, 3});
    CHECK(ablation_columns() == std::vector<std::string>{"Method", "Code F1_mean", "Code F1_std", "Subcode F1_mean",
                                                         "Subcode F1_std", "Combo F1_mean", "Combo F1_std"});
    std::vector<AblationRow> rows;
    double f1 = 0.7;
    for (const auto& [name, opts] : ablation_configurations("PV-base-mini")) {
        const std::vector<EvalReport> r{report_with_f1(f1)};
        rows.push_back({name, opts, aggregate_runs(r)});
        f1 += 0.05;
    }
    const auto lines = table_lines(render_ablation_table(rows));
    REQUIRE(lines.size() == 5);
    CHECK(cells(lines[4]) == std::vector<std::string>{"PV-base-mini + author + topic", "80.00", "0.00", "80.00",
                                                      "0.00", "80.00", "0.00"});
    CHECK(ablation_json(rows).size() == 3);
}

TEST_CASE("ablation rejects an empty seed list") {
    const auto schema = LabelSchema::default_schema();
    const std::vector<AnnotatedMessage> msgs{
        {"a", Author::patient, "hello", std::vector<std::string>{"PartnershipPatient_salutation"}}};
    const Encoder encoder;
    const Vocabulary vocab;
    CHECK_THROWS_AS(ablation(msgs, msgs, encoder, vocab, TopicContext{}, schema, TrainConfig{},
                             std::span<const std::uint64_t>{}),
                    InvalidArgument);
}
