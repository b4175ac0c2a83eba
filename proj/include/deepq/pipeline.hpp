#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "deepq/dataset_io.hpp"
#include "deepq/eval_harness.hpp"
#include "deepq/judge.hpp"
#include "deepq/llm_gateway.hpp"
#include "deepq/prompt_forge.hpp"
#include "deepq/reporting.hpp"
#include "deepq/transformer.hpp"

namespace deepq {

struct NamedModel {
    std::string name;  // handle used on the command line
    ModelSpec spec;
};

struct ForgeSettings {
    int threshold = 8;
    int max_iterations = 10;
    std::size_t batch_size = 5;
    std::uint64_t seed = 0;
    std::optional<std::string> output_language;
    std::map<DeepKind, GoalSpec> goals;  // overrides of default_goal()
};

struct PipelineConfig {
    std::vector<NamedModel> models;
    std::map<std::string, std::string> roles;  // role or "grader" -> model name
    std::size_t parallelism = 4;
    int timeout_s = 60;
    int max_retries = 3;
    int backoff_ms = 500;
    double rel_tol = 1e-6;
    double skip_ceiling = 0.20;
    Q2ICorrectness q2i_correctness = Q2ICorrectness::checker;
    std::filesystem::path cache_dir = "cache";  // relative to the workdir
    ForgeSettings forge;
    std::vector<Criterion> criteria;
    ordered_json snapshot;

    const ModelSpec& model_named(std::string_view name) const;
    // The model named in "roles", else the first model carrying that role tag.
    const ModelSpec& model_for(Role role) const;
    std::optional<ModelSpec> grader_model() const;
    std::vector<NamedModel> solvers() const;
};

// Throws config_error with the offending key.
PipelineConfig parse_config(const ordered_json& j);
PipelineConfig load_config(const std::filesystem::path& path);

GatewayOptions gateway_options(const PipelineConfig& cfg, const std::filesystem::path& workdir);

// One run directory, `<workdir>/<run-id>/`, and its persisted state (run.json).
class RunContext {
public:
    RunContext(std::filesystem::path workdir, std::string run_id);

    const std::string& run_id() const { return run_id_; }
    const std::filesystem::path& workdir() const { return workdir_; }
    const std::filesystem::path& dir() const { return dir_; }
    ordered_json& state() { return state_; }
    const ordered_json& state() const { return state_; }
    void save() const;

    bool has_dataset() const;
    std::string dataset_name() const;
    std::string base_language() const;
    std::filesystem::path originals_path(std::string_view lang) const;
    std::filesystem::path deep_path(DeepKind kind, std::string_view lang) const;
    std::filesystem::path transcript_path(DeepKind kind) const;
    std::filesystem::path prompt_path(DeepKind kind) const;
    std::filesystem::path eval_records_path(std::string_view model, Variant variant, std::string_view lang) const;
    std::filesystem::path eval_summary_path(std::string_view model, Variant variant, std::string_view lang) const;
    std::filesystem::path judge_path(std::string_view criterion) const;
    std::filesystem::path report_dir() const;
    std::string dataset_label(std::string_view lang) const;

    // Copies the dataset into the run; a run stays bound to one dataset.
    std::vector<QAItem> register_dataset(const std::filesystem::path& path);
    std::vector<QAItem> originals(std::string_view lang) const;

    void mark_aborted(std::string_view stage, std::string_view reason);
    void clear_aborted(std::string_view stage);
    void record_stats(std::string_view stage, const GatewayStats& stats) const;

private:
    std::filesystem::path workdir_;
    std::string run_id_;
    std::filesystem::path dir_;
    ordered_json state_;
};

std::string default_run_id();
// Model names with '/' or ':' are flattened for file names.
std::string file_safe(std::string_view name);

struct ForgeStageArgs {
    std::optional<std::filesystem::path> dataset;
    DeepKind kind = DeepKind::q2s;
    std::optional<std::size_t> batch_size;
    std::optional<std::uint64_t> seed;
    std::optional<int> threshold;
    std::optional<int> max_iterations;
    ReviewMode review = ReviewMode::interactive;
};

AcceptedPrompt forge_stage(Gateway& gateway, const PipelineConfig& cfg, RunContext& run, const ForgeStageArgs& args,
                           std::istream& in, std::ostream& out);

struct TransformStageArgs {
    std::optional<std::filesystem::path> prompt_file;
    std::optional<DeepKind> kind;  // selects the run's forged prompt when no file is given
    std::optional<std::filesystem::path> dataset;
    std::optional<std::filesystem::path> out;
};

TransformResult transform_stage(Gateway& gateway, const PipelineConfig& cfg, RunContext& run,
                                const TransformStageArgs& args);

struct TranslateStageArgs {
    // "all", "original", "q2s", "q2i" or a record file path.
    std::string dataset = "all";
    std::string to_lang;
};

std::vector<std::filesystem::path> translate_stage(Gateway& gateway, const PipelineConfig& cfg, RunContext& run,
                                                   const TranslateStageArgs& args);

struct EvalStageArgs {
    std::vector<std::string> models;  // config names; empty means every solver
    Variant variant = Variant::original;
    std::optional<std::string> lang;  // defaults to the run's base language
    std::optional<Q2ICorrectness> q2i_correctness;
};

std::vector<AccuracySummary> eval_stage(Gateway& gateway, const PipelineConfig& cfg, RunContext& run,
                                        const EvalStageArgs& args);

struct JudgeStageArgs {
    // A pairs file, or the config name of a model whose q2i records to judge.
    std::string pairs;
    std::optional<std::string> judge_model;
    std::optional<std::string> lang;
};

std::vector<JudgeVerdict> judge_stage(Gateway& gateway, const PipelineConfig& cfg, RunContext& run,
                                      const JudgeStageArgs& args);

struct ReportOutput {
    std::vector<AccuracySummary> summaries;
    AccuracyTable table;
    std::vector<HierarchyCheck> hierarchy;
    std::map<std::string, std::vector<WinRateSummary>> win_rates;
    RunManifest manifest;
};

ReportOutput report_stage(const RunContext& run);

}  // namespace deepq
