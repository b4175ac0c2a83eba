#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "deepq/error.hpp"
#include "deepq/http_transport.hpp"
#include "deepq/pipeline.hpp"

namespace fs = std::filesystem;
using namespace deepq;

namespace {

enum Exit : int {
    ok = 0,
    other = 1,
    config = 2,
    non_convergence = 3,
    rejection = 4,
    stage_dependency = 5,
    provider = 6,
    data = 7,
    skip_ceiling = 8,
};

int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::config_error:
        case ErrorCode::invalid_argument: return config;
        case ErrorCode::non_convergence: return non_convergence;
        case ErrorCode::rejected: return rejection;
        case ErrorCode::stage_dependency: return stage_dependency;
        case ErrorCode::auth_failure:
        case ErrorCode::retries_exhausted:
        case ErrorCode::provider_error:
        case ErrorCode::empty_generation:
        case ErrorCode::unparseable_evaluation: return provider;
        case ErrorCode::file_missing:
        case ErrorCode::malformed_record:
        case ErrorCode::duplicate_id:
        case ErrorCode::size_out_of_range:
        case ErrorCode::checksum_mismatch:
        case ErrorCode::translation_verification: return data;
        case ErrorCode::skip_ceiling: return skip_ceiling;
        default: return other;
    }
}

void print_stats(std::string_view stage, const GatewayStats& s) {
    std::cerr << fmt::format("{}: network calls {}, cache hits {}, cache misses {}, retries {}\n", stage,
                             s.network_calls, s.cache_hits, s.cache_misses, s.retries);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"deepq: deepen QA benchmarks and evaluate models on them"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string workdir = "./runs";
    std::string run_id;
    std::string config_path = "deepq.json";
    bool verbose = false;
    app.add_option("--workdir", workdir, "Directory holding run directories")->capture_default_str();
    app.add_option("--run-id", run_id, "Run identifier (default: UTC timestamp)");
    app.add_option("--config", config_path, "Pipeline config (JSON)")->capture_default_str();
    app.add_flag("-v,--verbose", verbose, "Log provider calls to stderr");

    ForgeStageArgs forge_args;
    std::string forge_dataset, forge_task = "q2s";
    std::optional<std::size_t> batch_size;
    std::optional<std::uint64_t> seed;
    std::optional<int> threshold, max_iter;
    bool auto_approve = false;
    auto* forge_cmd = app.add_subcommand("forge", "Optimize a transformation prompt");
    forge_cmd->add_option("--dataset", forge_dataset, "QA dataset (JSONL)");
    forge_cmd->add_option("--task", forge_task, "q2s or q2i")->check(CLI::IsMember({"q2s", "q2i", "Q2S", "Q2I"}));
    forge_cmd->add_option("--batch-size", batch_size, "Items shown to the generator");
    forge_cmd->add_option("--seed", seed, "Batch sampling seed");
    forge_cmd->add_option("--threshold", threshold, "Acceptance score, 1-10");
    forge_cmd->add_option("--max-iter", max_iter, "Evaluation budget");
    forge_cmd->add_flag("--auto-approve", auto_approve, "Skip the interactive review");

    TransformStageArgs transform_args;
    std::string prompt_file, transform_dataset, transform_out, transform_task;
    auto* transform_cmd = app.add_subcommand("transform", "Rewrite the dataset with an approved prompt");
    transform_cmd->add_option("--prompt-file", prompt_file, "Accepted prompt file");
    transform_cmd->add_option("--task", transform_task, "Use this run's forged q2s or q2i prompt")
        ->check(CLI::IsMember({"q2s", "q2i", "Q2S", "Q2I"}));
    transform_cmd->add_option("--dataset", transform_dataset, "Source dataset (default: the run's)");
    transform_cmd->add_option("--out", transform_out, "Output file (default: deep/<kind>.<lang>.jsonl)");

    TranslateStageArgs translate_args;
    auto* translate_cmd = app.add_subcommand("translate", "Translate run data into another language");
    translate_cmd->add_option("--dataset", translate_args.dataset, "all, original, q2s, q2i or a file")
        ->capture_default_str();
    translate_cmd->add_option("--to-lang", translate_args.to_lang, "Target language tag")->required();

    std::vector<std::string> eval_models;
    std::string variant = "original", eval_lang, q2i_mode;
    auto* eval_cmd = app.add_subcommand("eval", "Solve and grade one variant");
    eval_cmd->add_option("--models", eval_models, "Solver names from the config")->delimiter(',');
    eval_cmd->add_option("--variant", variant, "original, q2s or q2i")
        ->check(CLI::IsMember({"original", "q2s", "q2i", "Original", "Q2S", "Q2I"}))
        ->capture_default_str();
    eval_cmd->add_option("--lang", eval_lang, "Language of the data to evaluate");
    eval_cmd->add_option("--q2i-correctness", q2i_mode, "checker, self or both")
        ->check(CLI::IsMember({"checker", "self", "both"}));

    JudgeStageArgs judge_args;
    std::string judge_model, judge_lang;
    auto* judge_cmd = app.add_subcommand("judge", "Pairwise judging of original and generated questions");
    judge_cmd->add_option("--pairs", judge_args.pairs, "Pairs file, or a solver whose q2i records to judge")
        ->required();
    judge_cmd->add_option("--judge-model", judge_model, "Judge name from the config");
    judge_cmd->add_option("--lang", judge_lang, "Language of the q2i records");

    std::string report_run;
    auto* report_cmd = app.add_subcommand("report", "Write tables, charts and the run manifest");
    report_cmd->add_option("--run", report_run, "Run id (default: --run-id)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? ok : config;
    }

    try {
        if (report_cmd->parsed()) {
            std::string id = !report_run.empty() ? report_run : run_id;
            if (id.empty()) throw Error(ErrorCode::invalid_argument, "report needs --run or --run-id");
            if (!fs::exists(fs::path(workdir) / id)) {
                throw Error(ErrorCode::stage_dependency, fmt::format("no run '{}' under {}", id, workdir));
            }
            RunContext run(workdir, id);
            auto out = report_stage(run);
            std::cout << "report written to " << run.report_dir().string() << "\n";
            return ok;
        }

        PipelineConfig cfg = load_config(config_path);
        if (threshold && (*threshold < 1 || *threshold > 10)) {
            throw Error(ErrorCode::config_error, fmt::format("--threshold {} is outside [1, 10]", *threshold));
        }
        if (max_iter && *max_iter < 1) throw Error(ErrorCode::config_error, "--max-iter must be at least 1");
        if (batch_size && *batch_size < 1) throw Error(ErrorCode::config_error, "--batch-size must be at least 1");

        if (run_id.empty()) run_id = default_run_id();
        RunContext run(workdir, run_id);
        auto options = gateway_options(cfg, workdir);
        if (verbose) options.log = [](std::string_view line) { std::cerr << line << "\n"; };
        Gateway gateway(std::make_shared<RoutingTransport>(), options);

        std::string stage;
        int rc = ok;
        try {
            if (forge_cmd->parsed()) {
                stage = "forge";
                if (!forge_dataset.empty()) forge_args.dataset = forge_dataset;
                forge_args.kind = *parse_deep_kind(forge_task);
                forge_args.batch_size = batch_size;
                forge_args.seed = seed;
                forge_args.threshold = threshold;
                forge_args.max_iterations = max_iter;
                forge_args.review = auto_approve ? ReviewMode::auto_approve : ReviewMode::interactive;
                auto prompt = forge_stage(gateway, cfg, run, forge_args, std::cin, std::cout);
                std::cout << fmt::format("accepted {} (score {}, {} iterations)\n", prompt.id, prompt.score,
                                         prompt.iterations_used);
            } else if (transform_cmd->parsed()) {
                stage = "transform";
                if (!prompt_file.empty()) transform_args.prompt_file = prompt_file;
                if (!transform_task.empty()) transform_args.kind = parse_deep_kind(transform_task);
                if (!transform_dataset.empty()) transform_args.dataset = transform_dataset;
                if (!transform_out.empty()) transform_args.out = transform_out;
                auto result = transform_stage(gateway, cfg, run, transform_args);
                std::cout << fmt::format("{} items written, {} skipped\n", result.items.size(), result.skipped.size());
            } else if (translate_cmd->parsed()) {
                stage = "translate";
                for (const auto& p : translate_stage(gateway, cfg, run, translate_args)) {
                    std::cout << "wrote " << p.string() << "\n";
                }
            } else if (eval_cmd->parsed()) {
                stage = "eval";
                EvalStageArgs args;
                args.models = eval_models;
                args.variant = *parse_variant(variant);
                if (!eval_lang.empty()) args.lang = eval_lang;
                if (!q2i_mode.empty()) args.q2i_correctness = parse_q2i_correctness(q2i_mode);
                for (const auto& s : eval_stage(gateway, cfg, run, args)) {
                    std::cout << fmt::format("{} {} {}: {}/{} = {:.2f}%\n", s.model_name, s.dataset_name,
                                             to_string(s.variant), s.n_correct, s.n_items, s.accuracy_percent);
                }
            } else if (judge_cmd->parsed()) {
                stage = "judge";
                if (!judge_model.empty()) judge_args.judge_model = judge_model;
                if (!judge_lang.empty()) judge_args.lang = judge_lang;
                auto verdicts = judge_stage(gateway, cfg, run, judge_args);
                std::cout << verdicts.size() << " verdicts written\n";
            }
        } catch (...) {
            run.record_stats(stage, gateway.stats());
            print_stats(stage, gateway.stats());
            throw;
        }
        run.record_stats(stage, gateway.stats());
        print_stats(stage, gateway.stats());
        std::cout << "run " << run.run_id() << "\n";
        return rc;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return other;
    }
}
