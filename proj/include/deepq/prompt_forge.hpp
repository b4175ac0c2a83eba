#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "deepq/dataset_io.hpp"
#include "deepq/llm_gateway.hpp"

namespace deepq {

struct GoalSpec {
    std::string goal_description;
    std::string evaluation_criteria;
    DeepKind task_kind = DeepKind::q2s;
    std::string output_language = "en";
};

// Starter goal and criteria texts. They are placeholders meant to be replaced
// with domain-specific wording in the run config.
GoalSpec default_goal(DeepKind kind, std::string_view output_language);

struct PromptCandidate {
    std::string text;
    int iteration = 1;
    std::optional<int> score;
    std::optional<std::string> feedback;
};

enum class Approval { pending, approved, rejected };
enum class Approver { human, automatic };

std::string_view to_string(Approval a);
std::string_view to_string(Approver a);

struct AcceptedPrompt {
    std::string id;
    std::string text;
    DeepKind task_kind = DeepKind::q2s;
    int score = 0;
    int threshold = 8;
    int iterations_used = 0;
    Approval approval = Approval::pending;
    std::optional<Approver> approver;
    std::uint64_t batch_seed = 0;
    std::vector<std::string> batch_ids;
    std::string output_language = "en";

    bool operator==(const AcceptedPrompt&) const = default;
};

ordered_json to_json(const AcceptedPrompt& p);
AcceptedPrompt accepted_prompt_from_json(const ordered_json& j);
void save_prompt(const AcceptedPrompt& p, const std::filesystem::path& path);
AcceptedPrompt load_prompt(const std::filesystem::path& path);

// Throws Error{precondition} unless the prompt is approved and meets its threshold.
void require_usable(const AcceptedPrompt& p);

struct Revision {
    std::string previous_text;
    std::string feedback;
};

PromptCandidate generate_prompt(Gateway& gateway, const ModelSpec& generator, const GoalSpec& goal,
                                std::span<const QAItem> batch, const std::optional<Revision>& revision = std::nullopt,
                                int iteration = 1);

struct Evaluation {
    int score = 0;
    std::string feedback;
};

// Finds an integer score in [0, 10] and the feedback text in an evaluator reply.
// Accepts a JSON object with "score"/"feedback" anywhere in the text, or
// "score: N" / "feedback: ..." lines.
std::optional<Evaluation> parse_evaluation(std::string_view reply);

// Asks up to three times before failing with unparseable_evaluation.
Evaluation evaluate_prompt(Gateway& gateway, const ModelSpec& evaluator, std::string_view criteria,
                           const PromptCandidate& candidate);

struct ForgeOptions {
    int threshold = 8;
    int max_iterations = 10;
    std::uint64_t batch_seed = 0;
};

struct ForgeTranscript {
    DeepKind task_kind = DeepKind::q2s;
    int threshold = 8;
    int max_iterations = 10;
    std::uint64_t batch_seed = 0;
    std::vector<std::string> batch_ids;
    std::vector<PromptCandidate> entries;
    std::string outcome;  // "running", "accepted", "non_convergence" or "error"
};

ordered_json to_json(const ForgeTranscript& t);

// Generate/evaluate until the score reaches the threshold. The transcript is
// filled as the session progresses so it can be persisted on failure too.
AcceptedPrompt forge(Gateway& gateway, const ModelSpec& generator, const ModelSpec& evaluator, const GoalSpec& goal,
                     std::span<const QAItem> batch, const ForgeOptions& options, ForgeTranscript& transcript);

enum class ReviewMode { interactive, auto_approve };

// Interactive mode shows the prompt on `out` and reads y/N from `in`.
AcceptedPrompt review_gate(AcceptedPrompt prompt, ReviewMode mode, std::istream& in, std::ostream& out);

}  // namespace deepq
