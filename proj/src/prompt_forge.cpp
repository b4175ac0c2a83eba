#include "deepq/prompt_forge.hpp"

#include <fstream>
#include <iostream>
#include <regex>

#include <fmt/format.h>

#include "deepq/error.hpp"
#include "deepq/hashing.hpp"
#include "deepq/text.hpp"

namespace fs = std::filesystem;

namespace deepq {

namespace {

constexpr int kEvaluationAttempts = 3;

const char* const kQ2sGoal =
    "Write a prompt that turns a question and its answer into a scenario-based question. "
    "The scenario places the original problem inside a realistic situation and adds details "
    "that are not needed for the solution, so the solver has to pick out the relevant data and "
    "apply the underlying knowledge on their own. The core data of the question and the final "
    "answer must stay exactly the same.";

const char* const kQ2iGoal =
    "Write a prompt that turns a question and its answer into an instruction for another model. "
    "The instruction asks that model to design one new question on the same topic whose solution "
    "follows the same reasoning steps and ends in exactly the given answer. The instruction must "
    "not contain the original question text.";

const char* const kQ2sCriteria =
    "Score the prompt from 0 to 10. Reward prompts that keep the original answer valid, require "
    "a realistic narrative with irrelevant details, never hint at which details matter, and do "
    "not name the formulas or concepts needed. Penalize prompts that leak the answer, change the "
    "underlying problem, or are ambiguous about the output format.";

const char* const kQ2iCriteria =
    "Score the prompt from 0 to 10. Reward prompts whose instructions pin down the topic, the "
    "solution path and the exact target answer, so that any capable model would design a "
    "matching question. Penalize prompts that copy the original question, allow a different "
    "answer, or leave the expected output unclear.";

std::string describe_kind(DeepKind kind) {
    return kind == DeepKind::q2s ? "scenario-based questions (Q2S)" : "question-design instructions (Q2I)";
}

std::string prompt_id(DeepKind kind, std::string_view text) {
    return file_tag(kind) + "-" + sha256_hex(text).substr(0, 12);
}

std::optional<int> integral_score(const ordered_json& v) {
    if (v.is_number_integer()) {
        auto s = v.get<long long>();
        if (s < 0 || s > 10) return std::nullopt;
        return static_cast<int>(s);
    }
    if (v.is_number_float()) {
        double d = v.get<double>();
        if (d != static_cast<double>(static_cast<long long>(d)) || d < 0 || d > 10) return std::nullopt;
        return static_cast<int>(d);
    }
    if (v.is_string()) {
        static const std::regex kInt(R"(^\s*(\d+)\s*(/\s*10\s*)?$)");
        std::smatch m;
        std::string s = v.get<std::string>();
        if (!std::regex_match(s, m, kInt)) return std::nullopt;
        int score = std::stoi(m[1]);
        if (score > 10) return std::nullopt;
        return score;
    }
    return std::nullopt;
}

// Position one past the '}' matching the '{' at `open`, honouring JSON strings.
std::optional<std::size_t> matching_brace(std::string_view s, std::size_t open) {
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = open; i < s.size(); ++i) {
        char c = s[i];
        if (in_string) {
            if (c == '\\') {
                ++i;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '"') {
            in_string = true;
        } else if (c == '{') {
            ++depth;
        } else if (c == '}') {
            if (--depth == 0) return i + 1;
        }
    }
    return std::nullopt;
}

}  // namespace

GoalSpec default_goal(DeepKind kind, std::string_view output_language) {
    return GoalSpec{
        .goal_description = kind == DeepKind::q2s ? kQ2sGoal : kQ2iGoal,
        .evaluation_criteria = kind == DeepKind::q2s ? kQ2sCriteria : kQ2iCriteria,
        .task_kind = kind,
        .output_language = std::string(output_language),
    };
}

std::string_view to_string(Approval a) {
    switch (a) {
        case Approval::pending: return "pending";
        case Approval::approved: return "approved";
        case Approval::rejected: return "rejected";
    }
    return "pending";
}

std::string_view to_string(Approver a) { return a == Approver::human ? "human" : "auto"; }

ordered_json to_json(const AcceptedPrompt& p) {
    ordered_json j;
    j["id"] = p.id;
    j["task_kind"] = std::string(to_string(p.task_kind));
    j["score"] = p.score;
    j["threshold"] = p.threshold;
    j["iterations_used"] = p.iterations_used;
    j["approval"] = std::string(to_string(p.approval));
    j["approver"] = p.approver ? ordered_json(std::string(to_string(*p.approver))) : ordered_json(nullptr);
    j["batch_seed"] = p.batch_seed;
    j["batch_ids"] = p.batch_ids;
    j["output_language"] = p.output_language;
    j["text"] = p.text;
    return j;
}

AcceptedPrompt accepted_prompt_from_json(const ordered_json& j) {
    try {
        AcceptedPrompt p;
        p.id = j.at("id").get<std::string>();
        p.text = j.at("text").get<std::string>();
        auto kind = parse_deep_kind(j.at("task_kind").get<std::string>());
        if (!kind) throw Error(ErrorCode::malformed_record, "bad task_kind");
        p.task_kind = *kind;
        p.score = j.at("score").get<int>();
        p.threshold = j.at("threshold").get<int>();
        p.iterations_used = j.at("iterations_used").get<int>();
        std::string approval = j.at("approval").get<std::string>();
        if (approval == "approved") {
            p.approval = Approval::approved;
        } else if (approval == "rejected") {
            p.approval = Approval::rejected;
        } else if (approval == "pending") {
            p.approval = Approval::pending;
        } else {
            throw Error(ErrorCode::malformed_record, "bad approval");
        }
        if (j.contains("approver") && j["approver"].is_string()) {
            p.approver = j["approver"] == "human" ? Approver::human : Approver::automatic;
        }
        p.batch_seed = j.value("batch_seed", std::uint64_t{0});
        p.batch_ids = j.value("batch_ids", std::vector<std::string>{});
        p.output_language = j.value("output_language", std::string("en"));
        return p;
    } catch (const ordered_json::exception& e) {
        throw Error(ErrorCode::malformed_record, fmt::format("accepted prompt: {}", e.what()));
    }
}

void save_prompt(const AcceptedPrompt& p, const fs::path& path) {
    std::error_code ec;
    if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out || !(out << to_json(p).dump(2) << '\n')) {
        throw Error(ErrorCode::io_failure, fmt::format("cannot write {}", path.string()));
    }
}

AcceptedPrompt load_prompt(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::file_missing, path.string());
    }
    auto j = ordered_json::parse(in, nullptr, false);
    if (j.is_discarded()) {
        throw Error(ErrorCode::malformed_record, fmt::format("{} is not JSON", path.string()));
    }
    return accepted_prompt_from_json(j);
}

void require_usable(const AcceptedPrompt& p) {
    if (p.approval != Approval::approved) {
        throw Error(ErrorCode::precondition,
                    fmt::format("prompt {} is {}, not approved", p.id, to_string(p.approval)));
    }
    if (p.score < p.threshold) {
        throw Error(ErrorCode::precondition,
                    fmt::format("prompt {} scored {} below threshold {}", p.id, p.score, p.threshold));
    }
}

PromptCandidate generate_prompt(Gateway& gateway, const ModelSpec& generator, const GoalSpec& goal,
                                std::span<const QAItem> batch, const std::optional<Revision>& revision,
                                int iteration) {
    if (batch.empty()) {
        throw Error(ErrorCode::invalid_argument, "prompt generation needs a nonempty sample batch");
    }
    std::string user = fmt::format("Goal:\n{}\n\nThe prompt you write will be used to produce {}.\n\n",
                                   goal.goal_description, describe_kind(goal.task_kind));
    user += "Sample questions and answers from the source benchmark:\n";
    for (std::size_t i = 0; i < batch.size(); ++i) {
        user += fmt::format("\n[{}] Question:\n{}\nAnswer:\n{}\n", i + 1, batch[i].question, batch[i].answer);
    }
    user += fmt::format(
        "\nOutput language: the prompt must require every generated text to be written in {0}. "
        "Include the line \"All your answers must be in {0}.\"\n",
        text::language_name(goal.output_language));
    if (revision) {
        user += fmt::format("\nYour previous prompt:\n<<<\n{}\n>>>\n\nEvaluator feedback:\n{}\n\n"
                            "Revise the prompt so that it addresses the feedback.\n",
                            revision->previous_text, revision->feedback);
    }
    user += "\nReply with the prompt text only.";

    ChatRequest req;
    req.system_text =
        "You design reusable prompts that transform benchmark questions for another language model.";
    req.turns.push_back({"user", std::move(user)});
    req.max_output_tokens = 4096;
    req.request_tag = fmt::format("forge:{}:generate:{}", file_tag(goal.task_kind), iteration);

    ChatResponse response = gateway.call(generator, req);
    if (response.finish_state != FinishState::complete) {
        throw Error(ErrorCode::provider_error,
                    fmt::format("prompt generator returned a {} response", to_string(response.finish_state)));
    }
    std::string_view trimmed = text::trim(response.text);
    if (trimmed.empty()) {
        throw Error(ErrorCode::empty_generation, "prompt generator returned blank text");
    }
    return PromptCandidate{.text = std::string(trimmed), .iteration = iteration, .score = {}, .feedback = {}};
}

std::optional<Evaluation> parse_evaluation(std::string_view reply) {
    for (std::size_t open = reply.find('{'); open != std::string_view::npos; open = reply.find('{', open + 1)) {
        auto close = matching_brace(reply, open);
        if (!close) break;
        auto j = ordered_json::parse(reply.substr(open, *close - open), nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("score")) continue;
        auto score = integral_score(j["score"]);
        if (!score) return std::nullopt;
        std::string feedback;
        if (j.contains("feedback") && j["feedback"].is_string()) {
            feedback = j["feedback"].get<std::string>();
        } else {
            std::string rest = std::string(reply.substr(0, open)) + std::string(reply.substr(*close));
            feedback = std::string(text::trim(rest));
        }
        return Evaluation{*score, std::move(feedback)};
    }

    static const std::regex kScore(R"re("?score"?\s*[:=]\s*"?(-?\d+(?:\.\d+)?)(\s*/\s*10)?)re",
                                   std::regex::icase);
    static const std::regex kFeedback(R"re("?feedback"?\s*[:=]\s*)re", std::regex::icase);
    std::string s(reply);
    std::smatch m;
    if (!std::regex_search(s, m, kScore)) return std::nullopt;
    std::string number = m[1];
    if (number.find('.') != std::string::npos) {
        double d = std::stod(number);
        if (d != static_cast<double>(static_cast<long long>(d))) return std::nullopt;
    }
    long long value = std::stoll(number);
    if (value < 0 || value > 10) return std::nullopt;

    std::string feedback;
    std::smatch f;
    if (std::regex_search(s, f, kFeedback)) {
        feedback = std::string(text::trim(f.suffix().str()));
        if (feedback.size() >= 2 && feedback.front() == '"' && feedback.back() == '"') {
            feedback = feedback.substr(1, feedback.size() - 2);
        }
    } else {
        feedback = std::string(text::trim(m.prefix().str() + m.suffix().str()));
    }
    return Evaluation{static_cast<int>(value), std::move(feedback)};
}

Evaluation evaluate_prompt(Gateway& gateway, const ModelSpec& evaluator, std::string_view criteria,
                           const PromptCandidate& candidate) {
    if (text::is_blank(candidate.text)) {
        throw Error(ErrorCode::invalid_argument, "cannot evaluate an empty prompt");
    }
    ChatRequest req;
    req.system_text = fmt::format(
        "You evaluate prompts written for a language model.\n\nEvaluation criteria:\n{}\n\n"
        "Reply with a JSON object {{\"score\": <integer from 0 to 10>, \"feedback\": \"<strengths and "
        "weaknesses>\"}}.",
        criteria);
    req.turns.push_back({"user", fmt::format("Prompt to evaluate:\n<<<\n{}\n>>>", candidate.text)});
    req.max_output_tokens = 2048;
    req.request_tag = fmt::format("forge:evaluate:{}", candidate.iteration);

    std::string last;
    for (int attempt = 1; attempt <= kEvaluationAttempts; ++attempt) {
        ChatResponse response = gateway.call(evaluator, req);
        last = response.text;
        if (response.finish_state == FinishState::complete) {
            if (auto parsed = parse_evaluation(response.text)) return *parsed;
        }
        req.turns.push_back({"assistant", response.text});
        req.turns.push_back({"user", "Your reply could not be read. Answer again with only the JSON object "
                                     "{\"score\": <integer from 0 to 10>, \"feedback\": \"...\"}."});
    }
    throw Error(ErrorCode::unparseable_evaluation,
                fmt::format("no score in {} evaluator replies; last: {}", kEvaluationAttempts, last.substr(0, 200)));
}

ordered_json to_json(const ForgeTranscript& t) {
    ordered_json j;
    j["task_kind"] = std::string(to_string(t.task_kind));
    j["threshold"] = t.threshold;
    j["max_iterations"] = t.max_iterations;
    j["batch_seed"] = t.batch_seed;
    j["batch_ids"] = t.batch_ids;
    j["outcome"] = t.outcome;
    j["entries"] = ordered_json::array();
    for (const auto& e : t.entries) {
        ordered_json entry;
        entry["iteration"] = e.iteration;
        entry["score"] = e.score ? ordered_json(*e.score) : ordered_json(nullptr);
        entry["feedback"] = e.feedback ? ordered_json(*e.feedback) : ordered_json(nullptr);
        entry["prompt"] = e.text;
        j["entries"].push_back(std::move(entry));
    }
    return j;
}

AcceptedPrompt forge(Gateway& gateway, const ModelSpec& generator, const ModelSpec& evaluator, const GoalSpec& goal,
                     std::span<const QAItem> batch, const ForgeOptions& options, ForgeTranscript& transcript) {
    if (options.threshold < 1 || options.threshold > 10) {
        throw Error(ErrorCode::invalid_argument, fmt::format("threshold {} outside [1, 10]", options.threshold));
    }
    if (options.max_iterations < 1) {
        throw Error(ErrorCode::invalid_argument, "max_iterations must be >= 1");
    }
    if (text::is_blank(goal.goal_description) || text::is_blank(goal.evaluation_criteria)) {
        throw Error(ErrorCode::invalid_argument, "goal description and evaluation criteria must be nonempty");
    }

    transcript = ForgeTranscript{};
    transcript.task_kind = goal.task_kind;
    transcript.threshold = options.threshold;
    transcript.max_iterations = options.max_iterations;
    transcript.batch_seed = options.batch_seed;
    for (const auto& item : batch) transcript.batch_ids.push_back(item.id);
    transcript.outcome = "running";

    std::optional<Revision> revision;
    try {
        for (int iteration = 1; iteration <= options.max_iterations; ++iteration) {
            PromptCandidate candidate = generate_prompt(gateway, generator, goal, batch, revision, iteration);
            Evaluation evaluation = evaluate_prompt(gateway, evaluator, goal.evaluation_criteria, candidate);
            candidate.score = evaluation.score;
            candidate.feedback = evaluation.feedback;
            transcript.entries.push_back(candidate);

            if (evaluation.score >= options.threshold) {
                transcript.outcome = "accepted";
                return AcceptedPrompt{
                    .id = prompt_id(goal.task_kind, candidate.text),
                    .text = candidate.text,
                    .task_kind = goal.task_kind,
                    .score = evaluation.score,
                    .threshold = options.threshold,
                    .iterations_used = iteration,
                    .approval = Approval::pending,
                    .approver = std::nullopt,
                    .batch_seed = options.batch_seed,
                    .batch_ids = transcript.batch_ids,
                    .output_language = goal.output_language,
                };
            }
            revision = Revision{candidate.text, evaluation.feedback};
        }
    } catch (...) {
        transcript.outcome = "error";
        throw;
    }
    transcript.outcome = "non_convergence";
    throw Error(ErrorCode::non_convergence,
                fmt::format("no prompt reached score {} in {} iterations (last score {})", options.threshold,
                            options.max_iterations, transcript.entries.back().score.value_or(0)));
}

AcceptedPrompt review_gate(AcceptedPrompt prompt, ReviewMode mode, std::istream& in, std::ostream& out) {
    if (prompt.approval != Approval::pending) {
        throw Error(ErrorCode::precondition,
                    fmt::format("prompt {} already {}", prompt.id, to_string(prompt.approval)));
    }
    if (mode == ReviewMode::auto_approve) {
        prompt.approval = Approval::approved;
        prompt.approver = Approver::automatic;
        return prompt;
    }
    out << "---- " << to_string(prompt.task_kind) << " prompt " << prompt.id << " (score " << prompt.score << ", "
        << prompt.iterations_used << " iterations) ----\n"
        << prompt.text << "\n----\napprove this prompt? [y/N] " << std::flush;
    std::string answer;
    std::getline(in, answer);
    answer = text::to_lower_ascii(text::trim(answer));
    prompt.approver = Approver::human;
    prompt.approval = (answer == "y" || answer == "yes") ? Approval::approved : Approval::rejected;
    return prompt;
}

}  // namespace deepq
