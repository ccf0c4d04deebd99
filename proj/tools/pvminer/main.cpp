// pvminer: command-line driver for the pipeline stages.
//
//   pvminer build-vocab | pretrain | topic-fit | split | finetune |
//           predict | evaluate | ablate  [--config FILE] [--seed N]
//           [--out-dir DIR] [--quiet]
//
// Settings come from built-in defaults, then the config file, then PVMINER_*
// environment variables, then flags.

#include <chrono>
#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "pvminer/errors.hpp"
#include "pvminer/pipeline.hpp"

namespace fs = std::filesystem;
using namespace pvminer;

namespace {

enum Exit : int {
    kOk = 0,
    kFailure = 1,
    kUsage = 2,
    kIo = 3,
    kDependency = 4,
    kState = 5,
    kFit = 6,
};

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    bool quiet = false;

    std::vector<std::string> corpus;
    std::string messages;
    std::optional<std::size_t> size;
    std::string input;
    std::string output;
    std::string gold;
    std::string predictions;
};

nlohmann::json flag_patch(const Options& o) {
    nlohmann::json j = nlohmann::json::object();
    if (o.seed) {
        j["seed"] = *o.seed;
    }
    if (!o.out_dir.empty()) {
        j["out_dir"] = o.out_dir;
    }
    if (o.quiet) {
        j["quiet"] = true;
    }
    if (!o.corpus.empty()) {
        auto files = nlohmann::json::array();
        for (const auto& c : o.corpus) {
            files.push_back(fs::absolute(c).lexically_normal().string());
        }
        j["corpus"] = files;
    }
    if (!o.messages.empty()) {
        j["messages"] = fs::absolute(o.messages).lexically_normal().string();
    }
    if (o.size) {
        j["vocab_size"] = *o.size;
    }
    return j;
}

int run(const std::string& verb, const Options& o) {
    const auto start = std::chrono::steady_clock::now();
    const auto config = resolve_config(o.config.empty() ? std::nullopt : std::optional<fs::path>(o.config),
                                       process_environment(), flag_patch(o));
    const Log log = [&](const std::string& line) {
        if (!config.quiet) {
            std::cout << line << (line.ends_with('\n') ? "" : "\n");
        }
    };
    std::string summary;
    if (verb == "build-vocab") {
        summary = run_build_vocab(config, log);
    } else if (verb == "pretrain") {
        summary = run_pretrain(config, log);
    } else if (verb == "topic-fit") {
        summary = run_topic_fit(config, log);
    } else if (verb == "split") {
        summary = run_split(config, log);
    } else if (verb == "finetune") {
        summary = run_finetune(config, log);
    } else if (verb == "predict") {
        const fs::path input = o.input.empty() ? split_files(config).back() : fs::path(o.input);
        const fs::path output = o.output.empty() ? config.out_dir / "predictions.jsonl" : fs::path(o.output);
        summary = run_predict(config, input, output, log);
    } else if (verb == "evaluate") {
        summary = run_evaluate(config, o.gold.empty() ? std::nullopt : std::optional<fs::path>(o.gold),
                               o.predictions.empty() ? std::nullopt : std::optional<fs::path>(o.predictions), log);
    } else if (verb == "ablate") {
        summary = run_ablate(config, log);
    }
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!config.quiet) {
        char timing[32];
        std::snprintf(timing, sizeof timing, " (%.1fs)", elapsed);
        std::cout << summary << timing << std::endl;
    }
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"pvminer: patient voice mining pipeline"};
    app.require_subcommand(1);
    Options o;
    app.add_option("--config", o.config, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("--seed", o.seed, "Seed for every random choice of the run");
    app.add_option("--out-dir", o.out_dir, "Directory for artifacts and reports");
    app.add_flag("--quiet", o.quiet, "Print nothing on success");

    auto* vocab = app.add_subcommand("build-vocab", "Segment a corpus and induce the WordPiece vocabulary");
    vocab->add_option("--corpus", o.corpus, "Text or message JSONL files");
    vocab->add_option("--size", o.size, "Target vocabulary size");
    auto* pretrain = app.add_subcommand("pretrain", "Masked language model pre-training");
    pretrain->add_option("--corpus", o.corpus, "Text or message JSONL files");
    app.add_subcommand("topic-fit", "Fit the topic model on encoder embeddings");
    auto* split = app.add_subcommand("split", "Iterative stratified split of the labelled messages");
    split->add_option("--messages", o.messages, "Labelled message JSONL");
    app.add_subcommand("finetune", "Fine-tune the classifier with early stopping");
    auto* predict = app.add_subcommand("predict", "Classify messages into combos, codes and subcodes");
    predict->add_option("--input", o.input, "Message JSONL (default: the test split)");
    predict->add_option("--output", o.output, "Prediction JSONL (default: <out-dir>/predictions.jsonl)");
    auto* evaluate = app.add_subcommand("evaluate", "Score the classifier or a prediction file");
    evaluate->add_option("--gold", o.gold, "Labelled message JSONL (default: the test split)");
    evaluate->add_option("--predictions", o.predictions, "Prediction JSONL to score instead of the classifier");
    app.add_subcommand("ablate", "Base / + author / + author + topic over the configured seeds");
    for (auto* sub : app.get_subcommands({})) {
        sub->fallthrough();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    const std::string verb = app.get_subcommands().front()->get_name();
    try {
        return run(verb, o);
    } catch (const InvalidArgument& e) {
        std::cerr << "pvminer " << verb << ": invalid argument: " << e.what() << "\n";
        return kUsage;
    } catch (const DependencyError& e) {
        std::cerr << "pvminer " << verb << ": " << e.what() << "\n";
        return kDependency;
    } catch (const IoError& e) {
        std::cerr << "pvminer " << verb << ": I/O error: " << e.what() << "\n";
        return kIo;
    } catch (const InvalidState& e) {
        std::cerr << "pvminer " << verb << ": invalid state: " << e.what() << "\n";
        return kState;
    } catch (const FitFailure& e) {
        std::cerr << "pvminer " << verb << ": fit failure: " << e.what() << "\n";
        return kFit;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "pvminer " << verb << ": I/O error: " << e.what() << "\n";
        return kIo;
    } catch (const std::exception& e) {
        std::cerr << "pvminer " << verb << ": error: " << e.what() << "\n";
        return kFailure;
    }
}
