#include "deepq/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "deepq/error.hpp"
#include "deepq/hashing.hpp"
#include "deepq/http_transport.hpp"
#include "deepq/parallel.hpp"
#include "deepq/text.hpp"

namespace fs = std::filesystem;

namespace deepq {

namespace {

[[noreturn]] void config_fail(const std::string& what) { throw Error(ErrorCode::config_error, what); }

template <typename T>
T get_or(const ordered_json& j, const char* key, T fallback) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return fallback;
    try {
        return it->template get<T>();
    } catch (const nlohmann::json::exception&) {
        config_fail(fmt::format("config key '{}' has the wrong type", key));
    }
}

ordered_json read_json_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::file_missing, fmt::format("cannot open {}", path.string()));
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return ordered_json::parse(ss.str());
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::malformed_record, fmt::format("{}: {}", path.string(), e.what()));
    }
}

void write_json_file(const fs::path& path, const ordered_json& j) { write_text_file(path, j.dump(2) + "\n"); }

ordered_json model_json(const NamedModel& m) {
    return {{"name", m.name},
            {"model", m.spec.model_name},
            {"base_url", m.spec.provider_base_url},
            {"api_key_env", m.spec.api_key_ref},
            {"role", std::string(to_string(m.spec.role_tag))},
            {"accepts_seed", m.spec.accepts_seed},
            {"temperature", m.spec.temperature}};
}

NamedModel parse_model(const ordered_json& j, std::size_t index) {
    if (!j.is_object()) config_fail(fmt::format("models[{}] must be an object", index));
    NamedModel m;
    m.spec.model_name = get_or<std::string>(j, "model", "");
    if (m.spec.model_name.empty()) config_fail(fmt::format("models[{}] needs 'model'", index));
    m.name = get_or<std::string>(j, "name", m.spec.model_name);
    m.spec.provider_base_url = get_or<std::string>(j, "base_url", "");
    if (m.spec.provider_base_url.empty()) config_fail(fmt::format("model {} needs 'base_url'", m.name));
    m.spec.api_key_ref = get_or<std::string>(j, "api_key_env", "");
    auto role = get_or<std::string>(j, "role", "solver");
    auto parsed = parse_role(role);
    if (!parsed) config_fail(fmt::format("model {} has unknown role '{}'", m.name, role));
    m.spec.role_tag = *parsed;
    m.spec.accepts_seed = get_or<bool>(j, "accepts_seed", false);
    m.spec.temperature = get_or<double>(j, "temperature", 0.0);
    if (m.spec.temperature < 0.0 || m.spec.temperature > 2.0) {
        config_fail(fmt::format("model {} temperature must be in [0, 2]", m.name));
    }
    return m;
}

ordered_json summary_json(const AccuracySummary& s) {
    return {{"model", s.model_name},         {"dataset", s.dataset_name}, {"variant", std::string(to_string(s.variant))},
            {"n", s.n_items},                {"correct", s.n_correct},    {"accuracy", s.accuracy_percent}};
}

AccuracySummary summary_from_json(const ordered_json& j) {
    AccuracySummary s;
    s.model_name = j.at("model").get<std::string>();
    s.dataset_name = j.at("dataset").get<std::string>();
    auto v = parse_variant(j.at("variant").get<std::string>());
    if (!v) throw Error(ErrorCode::malformed_record, "summary with unknown variant");
    s.variant = *v;
    s.n_items = j.at("n").get<std::size_t>();
    s.n_correct = j.at("correct").get<std::size_t>();
    s.accuracy_percent = j.at("accuracy").get<double>();
    return s;
}

std::vector<JudgeVerdict> load_verdicts(const fs::path& path) {
    std::vector<JudgeVerdict> out;
    std::ifstream in(path, std::ios::binary);
    if (!in) return out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (text::is_blank(line)) continue;
        try {
            out.push_back(judge_verdict_from_json(ordered_json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::malformed_record, fmt::format("{}: {}", path.string(), e.what()), n);
        }
    }
    return out;
}

std::vector<JudgePair> load_pairs(const fs::path& path) {
    std::vector<JudgePair> out;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::file_missing, fmt::format("cannot open {}", path.string()));
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (text::is_blank(line)) continue;
        try {
            out.push_back(judge_pair_from_json(ordered_json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::malformed_record, fmt::format("{}: {}", path.string(), e.what()), n);
        }
    }
    return out;
}

void require_file(const fs::path& path, std::string_view hint) {
    if (!fs::exists(path)) {
        throw Error(ErrorCode::stage_dependency, fmt::format("{} not found; {}", path.string(), hint));
    }
}

template <typename Fn>
auto guarded(RunContext& run, std::string_view stage, Fn&& fn) -> decltype(fn()) {
    try {
        auto result = fn();
        run.clear_aborted(stage);
        return result;
    } catch (const std::exception& e) {
        run.mark_aborted(stage, e.what());
        throw;
    }
}

void remember_config(RunContext& run, const PipelineConfig& cfg) {
    run.state()["config"] = cfg.snapshot;
    ordered_json models = ordered_json::array();
    for (const auto& m : cfg.models) models.push_back(model_json(m));
    run.state()["models"] = models;
}

void append_unique(ordered_json& arr, const std::string& value) {
    for (const auto& v : arr) {
        if (v == value) return;
    }
    arr.push_back(value);
}

std::function<void(std::string_view)> stderr_warn() {
    return [](std::string_view line) { std::cerr << "warning: " << line << "\n"; };
}

}  // namespace

// ---- config ----

const ModelSpec& PipelineConfig::model_named(std::string_view name) const {
    for (const auto& m : models) {
        if (m.name == name) return m.spec;
    }
    config_fail(fmt::format("no model named '{}' in config", name));
}

const ModelSpec& PipelineConfig::model_for(Role role) const {
    auto it = roles.find(std::string(to_string(role)));
    if (it != roles.end()) return model_named(it->second);
    for (const auto& m : models) {
        if (m.spec.role_tag == role) return m.spec;
    }
    config_fail(fmt::format("config has no model for role '{}'", to_string(role)));
}

std::optional<ModelSpec> PipelineConfig::grader_model() const {
    auto it = roles.find("grader");
    if (it == roles.end()) return std::nullopt;
    return model_named(it->second);
}

std::vector<NamedModel> PipelineConfig::solvers() const {
    std::vector<NamedModel> out;
    for (const auto& m : models) {
        if (m.spec.role_tag == Role::solver) out.push_back(m);
    }
    return out;
}

PipelineConfig parse_config(const ordered_json& j) {
    if (!j.is_object()) config_fail("config must be a JSON object");
    static const std::set<std::string> known = {"models",      "roles",        "parallelism",     "timeout_s",
                                                "max_retries", "backoff_ms",   "rel_tol",         "skip_ceiling",
                                                "q2i_correctness", "cache_dir", "forge",          "judge"};
    for (const auto& [key, _] : j.items()) {
        if (!known.contains(key)) config_fail(fmt::format("unknown config key '{}'", key));
    }

    PipelineConfig cfg;
    cfg.snapshot = j;
    auto models = j.find("models");
    if (models == j.end() || !models->is_array() || models->empty()) config_fail("config needs a nonempty 'models' list");
    std::set<std::string> names;
    for (std::size_t i = 0; i < models->size(); ++i) {
        auto m = parse_model((*models)[i], i);
        if (!names.insert(m.name).second) config_fail(fmt::format("duplicate model name '{}'", m.name));
        cfg.models.push_back(std::move(m));
    }

    if (auto roles = j.find("roles"); roles != j.end()) {
        if (!roles->is_object()) config_fail("'roles' must map role names to model names");
        for (const auto& [role, name] : roles->items()) {
            if (role != "grader" && !parse_role(role)) config_fail(fmt::format("unknown role '{}'", role));
            if (!name.is_string()) config_fail(fmt::format("roles.{} must be a model name", role));
            cfg.roles[role] = name.get<std::string>();
            cfg.model_named(cfg.roles[role]);
        }
    }

    auto parallelism = get_or<long long>(j, "parallelism", 4);
    if (parallelism < 1 || parallelism > 256) config_fail("parallelism must be in [1, 256]");
    cfg.parallelism = static_cast<std::size_t>(parallelism);
    cfg.timeout_s = get_or<int>(j, "timeout_s", 60);
    if (cfg.timeout_s < 1) config_fail("timeout_s must be positive");
    cfg.max_retries = get_or<int>(j, "max_retries", 3);
    if (cfg.max_retries < 0 || cfg.max_retries > 20) config_fail("max_retries must be in [0, 20]");
    cfg.backoff_ms = get_or<int>(j, "backoff_ms", 500);
    if (cfg.backoff_ms < 0) config_fail("backoff_ms must not be negative");
    cfg.rel_tol = get_or<double>(j, "rel_tol", 1e-6);
    if (!(cfg.rel_tol >= 0.0 && cfg.rel_tol < 1.0)) config_fail("rel_tol must be in [0, 1)");
    cfg.skip_ceiling = get_or<double>(j, "skip_ceiling", 0.20);
    if (!(cfg.skip_ceiling >= 0.0 && cfg.skip_ceiling <= 1.0)) config_fail("skip_ceiling must be in [0, 1]");
    auto mode = get_or<std::string>(j, "q2i_correctness", "checker");
    auto parsed_mode = parse_q2i_correctness(mode);
    if (!parsed_mode) config_fail(fmt::format("unknown q2i_correctness '{}'", mode));
    cfg.q2i_correctness = *parsed_mode;
    cfg.cache_dir = get_or<std::string>(j, "cache_dir", "cache");

    if (auto forge = j.find("forge"); forge != j.end()) {
        if (!forge->is_object()) config_fail("'forge' must be an object");
        cfg.forge.threshold = get_or<int>(*forge, "threshold", 8);
        cfg.forge.max_iterations = get_or<int>(*forge, "max_iterations", 10);
        auto batch = get_or<long long>(*forge, "batch_size", 5);
        if (batch < 1) config_fail("forge.batch_size must be positive");
        cfg.forge.batch_size = static_cast<std::size_t>(batch);
        cfg.forge.seed = get_or<std::uint64_t>(*forge, "seed", 0);
        if (auto lang = forge->find("output_language"); lang != forge->end() && !lang->is_null()) {
            if (!lang->is_string() || !text::is_language_tag(lang->get<std::string>())) {
                config_fail("forge.output_language must be a language tag");
            }
            cfg.forge.output_language = lang->get<std::string>();
        }
        for (DeepKind kind : {DeepKind::q2s, DeepKind::q2i}) {
            auto goal = forge->find(file_tag(kind));
            if (goal == forge->end()) continue;
            if (!goal->is_object()) config_fail(fmt::format("forge.{} must be an object", file_tag(kind)));
            GoalSpec g;
            g.task_kind = kind;
            g.goal_description = get_or<std::string>(*goal, "goal", "");
            g.evaluation_criteria = get_or<std::string>(*goal, "criteria", "");
            if (text::is_blank(g.goal_description) || text::is_blank(g.evaluation_criteria)) {
                config_fail(fmt::format("forge.{} needs nonempty 'goal' and 'criteria'", file_tag(kind)));
            }
            cfg.forge.goals[kind] = std::move(g);
        }
    }
    if (cfg.forge.threshold < 1 || cfg.forge.threshold > 10) config_fail("forge.threshold must be in [1, 10]");
    if (cfg.forge.max_iterations < 1) config_fail("forge.max_iterations must be at least 1");

    cfg.criteria = default_criteria();
    if (auto judge = j.find("judge"); judge != j.end()) {
        if (!judge->is_object()) config_fail("'judge' must be an object");
        auto read_list = [&](const char* key) {
            std::vector<Criterion> list;
            auto it = judge->find(key);
            if (it == judge->end()) return list;
            if (!it->is_array()) config_fail(fmt::format("judge.{} must be a list", key));
            for (const auto& c : *it) {
                Criterion crit{get_or<std::string>(c, "key", ""), get_or<std::string>(c, "rubric", "")};
                if (crit.key.empty() || text::is_blank(crit.rubric)) {
                    config_fail(fmt::format("judge.{} entries need 'key' and 'rubric'", key));
                }
                list.push_back(std::move(crit));
            }
            return list;
        };
        if (judge->contains("criteria")) cfg.criteria = read_list("criteria");
        for (auto& c : read_list("extra_criteria")) cfg.criteria.push_back(std::move(c));
        std::set<std::string> keys;
        for (const auto& c : cfg.criteria) {
            if (!keys.insert(c.key).second) config_fail(fmt::format("duplicate judge criterion '{}'", c.key));
        }
    }
    return cfg;
}

PipelineConfig load_config(const fs::path& path) {
    if (!fs::exists(path)) config_fail(fmt::format("config file {} not found", path.string()));
    try {
        return parse_config(read_json_file(path));
    } catch (const Error& e) {
        if (e.code() == ErrorCode::config_error) throw;
        config_fail(e.what());
    }
}

GatewayOptions gateway_options(const PipelineConfig& cfg, const fs::path& workdir) {
    GatewayOptions o;
    o.max_in_flight = cfg.parallelism;
    o.max_retries = cfg.max_retries;
    o.initial_backoff = std::chrono::milliseconds(cfg.backoff_ms);
    o.timeout = std::chrono::seconds(cfg.timeout_s);
    o.cache_dir = cfg.cache_dir.is_absolute() ? cfg.cache_dir : workdir / cfg.cache_dir;
    return o;
}

// ---- run directory ----

std::string default_run_id() {
    auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
    return buf;
}

std::string file_safe(std::string_view name) {
    std::string out;
    for (char c : name) {
        bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
                  c == '_' || c == '.';
        out += ok ? c : '_';
    }
    return out;
}

RunContext::RunContext(fs::path workdir, std::string run_id)
    : workdir_(std::move(workdir)), run_id_(std::move(run_id)), dir_(workdir_ / run_id_) {
    if (run_id_.empty() || run_id_ != file_safe(run_id_) || run_id_ == "." || run_id_ == "..") {
        throw Error(ErrorCode::invalid_argument, fmt::format("invalid run id '{}'", run_id_));
    }
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw Error(ErrorCode::io_failure, fmt::format("cannot create {}: {}", dir_.string(), ec.message()));
    auto state_file = dir_ / "run.json";
    if (fs::exists(state_file)) {
        state_ = read_json_file(state_file);
    } else {
        state_ = {{"run_id", run_id_},
                  {"dataset", nullptr},
                  {"languages", ordered_json::array()},
                  {"eval_models", ordered_json::array()},
                  {"seeds", ordered_json::object()},
                  {"skips", ordered_json::object()},
                  {"aborted", nullptr}};
    }
}

void RunContext::save() const { write_json_file(dir_ / "run.json", state_); }

bool RunContext::has_dataset() const { return state_.contains("dataset") && !state_["dataset"].is_null(); }

std::string RunContext::dataset_name() const {
    if (!has_dataset()) throw Error(ErrorCode::stage_dependency, "run has no dataset; run forge with --dataset first");
    return state_["dataset"]["name"].get<std::string>();
}

std::string RunContext::base_language() const {
    if (!has_dataset()) throw Error(ErrorCode::stage_dependency, "run has no dataset; run forge with --dataset first");
    return state_["dataset"]["language"].get<std::string>();
}

fs::path RunContext::originals_path(std::string_view lang) const {
    return dir_ / "data" / fmt::format("original.{}.jsonl", lang);
}

fs::path RunContext::deep_path(DeepKind kind, std::string_view lang) const {
    return dir_ / "deep" / fmt::format("{}.{}.jsonl", file_tag(kind), lang);
}

fs::path RunContext::transcript_path(DeepKind kind) const { return dir_ / "forge" / (file_tag(kind) + ".json"); }

fs::path RunContext::prompt_path(DeepKind kind) const { return dir_ / "forge" / (file_tag(kind) + ".prompt.json"); }

fs::path RunContext::eval_records_path(std::string_view model, Variant variant, std::string_view lang) const {
    fs::path base = dir_ / "eval";
    if (has_dataset() && lang != base_language()) base /= std::string(lang);
    return base / fmt::format("{}.{}.jsonl", file_safe(model), to_string(variant));
}

fs::path RunContext::eval_summary_path(std::string_view model, Variant variant, std::string_view lang) const {
    auto p = eval_records_path(model, variant, lang);
    return p.replace_extension(".summary.json");
}

fs::path RunContext::judge_path(std::string_view criterion) const {
    return dir_ / "judge" / (file_safe(criterion) + ".jsonl");
}

fs::path RunContext::report_dir() const { return dir_ / "report"; }

std::string RunContext::dataset_label(std::string_view lang) const {
    if (lang == base_language()) return dataset_name();
    return fmt::format("{}-{}", dataset_name(), lang);
}

std::vector<QAItem> RunContext::register_dataset(const fs::path& path) {
    auto items = load_dataset(path);
    if (items.empty()) throw Error(ErrorCode::size_out_of_range, fmt::format("{} holds no records", path.string()));
    auto checksum = "sha256:" + sha256_file_hex(path);
    if (has_dataset()) {
        if (state_["dataset"]["checksum"] != checksum) {
            throw Error(ErrorCode::invalid_argument,
                        fmt::format("run {} is bound to dataset {}; use a new run id for {}", run_id_,
                                    dataset_name(), path.string()));
        }
        return originals(base_language());
    }
    std::string lang = items.front().language;
    for (const auto& i : items) {
        if (i.language != lang) lang = "mixed";
    }
    save_items(std::span<const QAItem>(items), originals_path(lang));
    state_["dataset"] = {{"name", path.stem().string()}, {"language", lang}, {"checksum", checksum}};
    save();
    return items;
}

std::vector<QAItem> RunContext::originals(std::string_view lang) const {
    auto path = originals_path(lang);
    require_file(path, lang == base_language() ? "run forge with --dataset first"
                                               : fmt::format("run translate --to-lang {} first", lang));
    return load_dataset(path);
}

void RunContext::mark_aborted(std::string_view stage, std::string_view reason) {
    state_["aborted"] = {{"stage", std::string(stage)}, {"reason", std::string(reason)}};
    save();
}

void RunContext::clear_aborted(std::string_view stage) {
    if (state_["aborted"].is_object() && state_["aborted"]["stage"] == std::string(stage)) {
        state_["aborted"] = nullptr;
    }
    save();
}

void RunContext::record_stats(std::string_view stage, const GatewayStats& stats) const {
    write_json_file(dir_ / "stats" / fmt::format("{}.json", stage),
                    {{"network_calls", stats.network_calls},
                     {"cache_hits", stats.cache_hits},
                     {"cache_misses", stats.cache_misses},
                     {"retries", stats.retries}});
}

// ---- stages ----

AcceptedPrompt forge_stage(Gateway& gateway, const PipelineConfig& cfg, RunContext& run, const ForgeStageArgs& args,
                           std::istream& in, std::ostream& out) {
    int threshold = args.threshold.value_or(cfg.forge.threshold);
    if (threshold < 1 || threshold > 10) config_fail(fmt::format("threshold {} is outside [1, 10]", threshold));
    int max_iterations = args.max_iterations.value_or(cfg.forge.max_iterations);
    if (max_iterations < 1) config_fail("max-iter must be at least 1");
    std::size_t batch_size = args.batch_size.value_or(cfg.forge.batch_size);
    if (batch_size < 1) config_fail("batch-size must be at least 1");
    const ModelSpec& generator = cfg.model_for(Role::generator);
    const ModelSpec& evaluator = cfg.model_for(Role::evaluator);

    std::vector<QAItem> items;
    if (args.dataset) {
        items = run.register_dataset(*args.dataset);
    } else {
        items = run.originals(run.base_language());
    }
    remember_config(run, cfg);

    const std::string tag = file_tag(args.kind);
    return guarded(run, "forge", [&] {
        std::uint64_t seed = args.seed.value_or(cfg.forge.seed);
        auto batch = sample_batch(items, batch_size, seed);

        std::string lang = cfg.forge.output_language.value_or(run.base_language());
        if (!text::is_language_tag(lang)) lang = "en";
        GoalSpec goal;
        if (auto it = cfg.forge.goals.find(args.kind); it != cfg.forge.goals.end()) {
            goal = it->second;
        } else {
            goal = default_goal(args.kind, lang);
        }
        goal.task_kind = args.kind;
        goal.output_language = lang;

        ForgeTranscript transcript;
        AcceptedPrompt prompt;
        try {
            prompt = forge(gateway, generator, evaluator, goal, batch,
                           ForgeOptions{threshold, max_iterations, seed}, transcript);
        } catch (...) {
            write_json_file(run.transcript_path(args.kind), to_json(transcript));
            throw;
        }
        write_json_file(run.transcript_path(args.kind), to_json(transcript));

        prompt = review_gate(std::move(prompt), args.review, in, out);
        save_prompt(prompt, run.prompt_path(args.kind));
        run.state()["seeds"]["forge_" + tag] = seed;
        run.save();
        if (prompt.approval != Approval::approved) {
            throw Error(ErrorCode::rejected, fmt::format("{} prompt {} rejected at review", tag, prompt.id));
        }
        return prompt;
    });
}

TransformResult transform_stage(Gateway& gateway, const PipelineConfig& cfg, RunContext& run,
                                const TransformStageArgs& args) {
    fs::path prompt_file;
    if (args.prompt_file) {
        prompt_file = *args.prompt_file;
        if (!fs::exists(prompt_file)) {
            throw Error(ErrorCode::file_missing, fmt::format("prompt file {} not found", prompt_file.string()));
        }
    } else if (args.kind) {
        prompt_file = run.prompt_path(*args.kind);
        require_file(prompt_file, fmt::format("run forge --task {} first", file_tag(*args.kind)));
    } else {
        throw Error(ErrorCode::invalid_argument, "transform needs --prompt-file or --task");
    }
    AcceptedPrompt prompt = load_prompt(prompt_file);
    if (args.kind && *args.kind != prompt.task_kind) {
        throw Error(ErrorCode::invalid_argument,
                    fmt::format("{} holds a {} prompt", prompt_file.string(), to_string(prompt.task_kind)));
    }
    require_usable(prompt);
    const ModelSpec& qgen = cfg.model_for(Role::question_generator);

    std::vector<QAItem> items;
    if (args.dataset && !run.has_dataset()) {
        items = run.register_dataset(*args.dataset);
    } else if (args.dataset) {
        items = load_dataset(*args.dataset);
    } else {
        items = run.originals(run.base_language());
    }
    remember_config(run, cfg);
    run.save();

    auto run_prompt = run.prompt_path(prompt.task_kind);
    std::error_code ec;
    if (!fs::exists(run_prompt) || !fs::equivalent(run_prompt, prompt_file, ec)) save_prompt(prompt, run_prompt);

    return guarded(run, "transform", [&] {
        auto result = transform_dataset(gateway, qgen, prompt, items,
                                        TransformOptions{cfg.skip_ceiling, cfg.parallelism});
        validate_deep_items(result.items, items);
        fs::path out = args.out.value_or(run.deep_path(prompt.task_kind, run.base_language()));
        save_items(std::span<const DeepItem>(result.items), out);

        ordered_json skips = ordered_json::array();
        for (const auto& s : result.skipped) skips.push_back({{"item_id", s.item_id}, {"reason", s.reason}});
        run.state()["skips"][file_tag(prompt.task_kind)] = skips;
        run.save();
        return result;
    });
}

std::vector<fs::path> translate_stage(Gateway& gateway, const PipelineConfig& cfg, RunContext& run,
                                      const TranslateStageArgs& args) {
    if (!text::is_language_tag(args.to_lang)) {
        throw Error(ErrorCode::invalid_argument, fmt::format("'{}' is not a language tag", args.to_lang));
    }
    const ModelSpec& translator = cfg.model_for(Role::translator);
    const std::string base = run.base_language();
    if (args.to_lang == base) {
        throw Error(ErrorCode::invalid_argument, fmt::format("run data is already in '{}'", base));
    }
    remember_config(run, cfg);

    struct Job {
        fs::path in;
        fs::path out;
        bool deep;
    };
    std::vector<Job> jobs;
    auto add_original = [&] {
        jobs.push_back({run.originals_path(base), run.originals_path(args.to_lang), false});
        require_file(jobs.back().in, "run forge with --dataset first");
    };
    auto add_deep = [&](DeepKind kind, bool required) {
        auto in = run.deep_path(kind, base);
        if (!fs::exists(in)) {
            if (required) require_file(in, fmt::format("run transform --task {} first", file_tag(kind)));
            return;
        }
        jobs.push_back({in, run.deep_path(kind, args.to_lang), true});
    };

    if (args.dataset == "all") {
        add_original();
        add_deep(DeepKind::q2s, false);
        add_deep(DeepKind::q2i, false);
    } else if (args.dataset == "original") {
        add_original();
    } else if (auto kind = parse_deep_kind(args.dataset)) {
        add_deep(*kind, true);
    } else {
        fs::path in = args.dataset;
        if (!fs::exists(in)) throw Error(ErrorCode::file_missing, fmt::format("{} not found", in.string()));
        if (is_deep_item_file(in)) {
            auto kind = load_deep_items(in).at(0).kind;
            jobs.push_back({in, run.deep_path(kind, args.to_lang), true});
        } else {
            jobs.push_back({in, run.originals_path(args.to_lang), false});
        }
    }

    return guarded(run, "translate", [&] {
        std::vector<fs::path> written;
        TranslateOptions opts{cfg.parallelism};
        for (const auto& job : jobs) {
            if (job.deep) {
                auto items = load_deep_items(job.in);
                auto out = translate_items(gateway, translator, std::span<const DeepItem>(items), args.to_lang, opts);
                save_items(std::span<const DeepItem>(out), job.out);
            } else {
                auto items = load_dataset(job.in);
                auto out = translate_items(gateway, translator, std::span<const QAItem>(items), args.to_lang, opts);
                save_items(std::span<const QAItem>(out), job.out);
            }
            written.push_back(job.out);
        }
        append_unique(run.state()["languages"], args.to_lang);
        run.save();
        return written;
    });
}

std::vector<AccuracySummary> eval_stage(Gateway& gateway, const PipelineConfig& cfg, RunContext& run,
                                        const EvalStageArgs& args) {
    const std::string base = run.base_language();
    const std::string lang = args.lang.value_or(base);

    std::vector<NamedModel> solvers;
    if (args.models.empty()) {
        solvers = cfg.solvers();
        if (solvers.empty()) config_fail("config has no solver models; pass --models");
    } else {
        for (const auto& name : args.models) solvers.push_back({name, cfg.model_named(name)});
    }

    std::vector<EvalItem> items;
    if (args.variant == Variant::original) {
        auto originals = run.originals(lang);
        items = eval_items(originals);
    } else {
        DeepKind kind = args.variant == Variant::q2s ? DeepKind::q2s : DeepKind::q2i;
        auto path = run.deep_path(kind, lang);
        require_file(path, lang == base ? fmt::format("run transform --task {} first", file_tag(kind))
                                        : fmt::format("run transform and translate --to-lang {} first", lang));
        auto deep = load_deep_items(path);
        auto sources = run.originals(base);
        items = eval_items(deep, sources);
    }

    EvalOptions opts;
    opts.grade = GradeOptions{cfg.rel_tol, cfg.grader_model()};
    opts.q2i_correctness = args.q2i_correctness.value_or(cfg.q2i_correctness);
    opts.parallelism = cfg.parallelism;
    opts.warn = stderr_warn();
    if (args.variant == Variant::q2i) opts.checker = cfg.model_for(Role::checker);
    remember_config(run, cfg);

    return guarded(run, "eval", [&] {
        std::vector<AccuracySummary> out;
        for (const auto& solver : solvers) {
            auto result = run_eval(gateway, solver.spec, items, args.variant, run.dataset_label(lang), opts);
            save_records(result.records, run.eval_records_path(solver.name, args.variant, lang));
            write_json_file(run.eval_summary_path(solver.name, args.variant, lang), summary_json(result.summary));
            append_unique(run.state()["eval_models"], result.summary.model_name);
            out.push_back(result.summary);
        }
        run.state()["seeds"]["q2i_correctness"] = std::string(to_string(opts.q2i_correctness));
        run.save();
        return out;
    });
}

std::vector<JudgeVerdict> judge_stage(Gateway& gateway, const PipelineConfig& cfg, RunContext& run,
                                      const JudgeStageArgs& args) {
    const std::string base = run.base_language();
    const std::string lang = args.lang.value_or(base);
    const ModelSpec& judge_model = args.judge_model ? cfg.model_named(*args.judge_model) : cfg.model_for(Role::judge);

    std::vector<JudgePair> pairs;
    if (fs::exists(args.pairs) && fs::is_regular_file(args.pairs)) {
        pairs = load_pairs(args.pairs);
    } else {
        const ModelSpec& solver = cfg.model_named(args.pairs);
        auto path = run.eval_records_path(args.pairs, Variant::q2i, lang);
        require_file(path, fmt::format("run eval --variant q2i --models {} first", args.pairs));
        auto records = load_records(path);
        auto originals = run.originals(lang);
        if (lang != base) {
            // Translated originals carry a "-<lang>" id suffix; records point at the base ids.
            const std::string suffix = "-" + lang;
            for (auto& o : originals) {
                if (o.id.ends_with(suffix)) o.id.resize(o.id.size() - suffix.size());
            }
        }
        pairs = pairs_from_records(records, originals);
        for (auto& p : pairs) {
            if (p.model_name.empty()) p.model_name = solver.model_name;
        }
    }
    if (pairs.empty()) throw Error(ErrorCode::precondition, "no question pairs to judge");
    remember_config(run, cfg);

    return guarded(run, "judge", [&] {
        const auto& criteria = cfg.criteria;
        const std::size_t n = pairs.size() * criteria.size();
        auto verdicts = parallel_map(n, cfg.parallelism, [&](std::size_t i) {
            return compare_pair(gateway, judge_model, pairs[i % pairs.size()], criteria[i / pairs.size()]);
        });
        for (const auto& v : verdicts) {
            if (v.warning) std::cerr << "warning: judge reply unparseable for " << v.pair_id << " / " << v.criterion << "\n";
        }

        std::set<std::pair<std::string, std::string>> fresh;
        for (const auto& p : pairs) fresh.insert({p.model_name, p.pair_id});
        for (const auto& c : criteria) {
            auto path = run.judge_path(c.key);
            auto merged = load_verdicts(path);
            std::erase_if(merged, [&](const JudgeVerdict& v) { return fresh.contains({v.model_name, v.pair_id}); });
            for (const auto& v : verdicts) {
                if (v.criterion == c.key) merged.push_back(v);
            }
            std::stable_sort(merged.begin(), merged.end(), [](const JudgeVerdict& a, const JudgeVerdict& b) {
                return std::tie(a.model_name, a.pair_id) < std::tie(b.model_name, b.pair_id);
            });
            std::string body;
            for (const auto& v : merged) body += to_json(v).dump() + "\n";
            write_text_file(path, body);
        }
        run.save();
        return verdicts;
    });
}

ReportOutput report_stage(const RunContext& run) {
    ReportOutput out;
    const auto& state = run.state();

    std::vector<fs::path> summary_files;
    if (fs::exists(run.dir() / "eval")) {
        for (const auto& e : fs::recursive_directory_iterator(run.dir() / "eval")) {
            if (e.is_regular_file() && e.path().string().ends_with(".summary.json")) summary_files.push_back(e.path());
        }
    }
    std::sort(summary_files.begin(), summary_files.end());
    for (const auto& f : summary_files) out.summaries.push_back(summary_from_json(read_json_file(f)));

    std::vector<fs::path> judge_files;
    if (fs::exists(run.dir() / "judge")) {
        for (const auto& e : fs::directory_iterator(run.dir() / "judge")) {
            if (e.is_regular_file() && e.path().extension() == ".jsonl") judge_files.push_back(e.path());
        }
    }
    std::sort(judge_files.begin(), judge_files.end());
    std::map<std::string, std::vector<JudgeVerdict>> verdicts_by_model;
    for (const auto& f : judge_files) {
        for (auto& v : load_verdicts(f)) verdicts_by_model[v.model_name].push_back(std::move(v));
    }

    if (out.summaries.empty() && verdicts_by_model.empty()) {
        throw Error(ErrorCode::stage_dependency, fmt::format("run {} has no eval or judge results to report", run.run_id()));
    }

    const fs::path dir = run.report_dir();
    if (!out.summaries.empty()) {
        TableLayout layout;
        if (state.contains("eval_models")) {
            for (const auto& m : state["eval_models"]) layout.models.push_back(m.get<std::string>());
        }
        layout.datasets.push_back(run.dataset_label(run.base_language()));
        if (state.contains("languages")) {
            for (const auto& l : state["languages"]) layout.datasets.push_back(run.dataset_label(l.get<std::string>()));
        }
        out.table = accuracy_table(out.summaries, layout);
        out.hierarchy = hierarchy_checks(out.table);
        write_text_file(dir / "accuracy.csv", accuracy_csv(out.summaries));
        write_text_file(dir / "accuracy_table.csv", render_csv(out.table));
        write_text_file(dir / "accuracy.md", render_markdown(out.table) + "\n" + render_hierarchy_markdown(out.hierarchy));
    }

    for (const auto& [model, verdicts] : verdicts_by_model) {
        out.win_rates[model] = win_rates(verdicts);
    }
    if (!out.win_rates.empty()) {
        write_text_file(dir / "winrate.csv", winrate_csv(out.win_rates));
        for (const auto& [model, rates] : out.win_rates) {
            write_winrate_chart(rates, fmt::format("Original vs generated questions ({})", model),
                                dir / fmt::format("winrate_{}.svg", file_safe(model)));
        }
    }

    RunManifest& m = out.manifest;
    m.run_id = run.run_id();
    if (state.contains("aborted") && state["aborted"].is_object()) {
        m.status = "aborted";
        m.abort_stage = state["aborted"]["stage"].get<std::string>();
        m.abort_reason = state["aborted"]["reason"].get<std::string>();
    }
    std::vector<fs::path> data_files;
    for (const char* sub : {"data", "deep"}) {
        if (!fs::exists(run.dir() / sub)) continue;
        for (const auto& e : fs::directory_iterator(run.dir() / sub)) {
            if (e.is_regular_file() && e.path().extension() == ".jsonl") data_files.push_back(e.path());
        }
    }
    std::sort(data_files.begin(), data_files.end());
    for (const auto& f : data_files) {
        auto mp = manifest_path_for(f);
        if (!fs::exists(mp)) continue;
        auto dm = read_manifest(mp);
        dm.source_path = fs::relative(f, run.dir()).generic_string();
        m.datasets.push_back(std::move(dm));
    }
    if (state.contains("models")) {
        for (const auto& j : state["models"]) {
            ModelSpec s;
            s.model_name = j.value("model", "");
            s.provider_base_url = j.value("base_url", "");
            s.api_key_ref = j.value("api_key_env", "");
            s.role_tag = parse_role(j.value("role", "solver")).value_or(Role::solver);
            s.accepts_seed = j.value("accepts_seed", false);
            s.temperature = j.value("temperature", 0.0);
            m.models.push_back(std::move(s));
        }
    }
    for (DeepKind kind : {DeepKind::q2s, DeepKind::q2i}) {
        if (fs::exists(run.prompt_path(kind))) m.prompts.push_back(load_prompt(run.prompt_path(kind)));
    }
    if (state.contains("seeds")) m.seeds = state["seeds"];
    if (state.contains("skips")) {
        for (const auto& [key, list] : state["skips"].items()) {
            auto& entries = m.skips[key];
            for (const auto& e : list) entries.push_back({e.at("item_id").get<std::string>(), e.at("reason").get<std::string>()});
        }
    }
    if (state.contains("config")) m.config = state["config"];
    write_run_manifest(m, dir / "manifest.json");
    return out;
}

}  // namespace deepq
