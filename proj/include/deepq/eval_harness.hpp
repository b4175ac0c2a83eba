#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "deepq/dataset_io.hpp"
#include "deepq/llm_gateway.hpp"

namespace deepq {

enum class Variant { original, q2s, q2i };
enum class Grader { exact, tolerant_numeric, llm_fallback };
enum class Q2ICorrectness { checker, self, both };

std::string_view to_string(Variant v);
std::string_view to_string(Grader g);
std::string_view to_string(Q2ICorrectness c);
std::optional<Variant> parse_variant(std::string_view s);
std::optional<Q2ICorrectness> parse_q2i_correctness(std::string_view s);

struct Q2IDetail {
    std::string generated_question;
    bool failed_generation = false;
    bool checker_valid = false;
    bool self_valid = false;
    std::string checker_response;
    std::string self_response;

    bool operator==(const Q2IDetail&) const = default;
};

struct SolveRecord {
    std::string model_name;
    std::string item_id;
    std::string source_id;
    Variant variant = Variant::original;
    std::string raw_response;
    std::optional<std::string> extracted_answer;
    std::optional<bool> correct;  // unset when the item could not be graded
    Grader grader = Grader::exact;
    std::string note;
    std::optional<Q2IDetail> q2i;

    bool operator==(const SolveRecord&) const = default;
};

ordered_json to_json(const SolveRecord& r);
SolveRecord solve_record_from_json(const ordered_json& j);
void save_records(std::span<const SolveRecord> records, const std::filesystem::path& path);
std::vector<SolveRecord> load_records(const std::filesystem::path& path);

struct AccuracySummary {
    std::string model_name;
    Variant variant = Variant::original;
    std::string dataset_name;
    std::size_t n_items = 0;
    std::size_t n_correct = 0;
    double accuracy_percent = 0.0;  // rounded to 2 decimals

    bool operator==(const AccuracySummary&) const = default;
};

// 100 * numerator / denominator rounded half-away-from-zero to 2 decimals; 0 when
// the denominator is 0.
double percent_2dp(std::size_t numerator, std::size_t denominator);

// Counts graded records only.
AccuracySummary summarize(std::string_view model_name, Variant variant, std::string_view dataset_name,
                          std::span<const SolveRecord> records);

// Solver call with the fixed solving instruction.
ChatResponse solve(Gateway& gateway, const ModelSpec& solver, std::string_view question_text,
                   std::string_view tag = "solve");

// Pulls the final answer out of a model response. Persian and Arabic-Indic
// digits are mapped to ASCII first. A terminal "Answer:", "####" or \boxed{}
// marker narrows the search to its region.
//   numeric          last number, separators stripped, canonical form
//   multiple_choice  last standalone option letter (A-E) or option number
//   expression       last line containing '='
//   free_text        marker region, else last nonempty line
std::optional<std::string> extract_answer(std::string_view raw, AnswerKind kind);

// Symmetric relative comparison: |a - b| <= rel_tol * max(|a|, |b|).
bool numbers_match(double a, double b, double rel_tol);

struct GradeOptions {
    double rel_tol = 1e-6;
    std::optional<ModelSpec> grader_model;
};

struct GradeOutcome {
    bool correct = false;
    Grader grader = Grader::exact;
    bool warning = false;
    std::string note;
};

// The gateway is only used for the grader-model fallback and may be null.
GradeOutcome grade(Gateway* gateway, const std::optional<std::string>& extracted, std::string_view reference,
                   AnswerKind kind, const GradeOptions& options = {});

struct GeneratedQuestion {
    std::string text;
    std::string source_id;  // DeepItem id of the instruction
    std::string model_name;
    bool failed = false;
};

GeneratedQuestion q2i_generate_question(Gateway& gateway, const ModelSpec& solver, const DeepItem& instruction);

struct Answerability {
    bool checker_valid = false;
    bool self_valid = false;
    std::string checker_response;
    std::string self_response;
};

// Both models solve the generated question; each answer is graded against the
// reference answer.
Answerability answerability_check(Gateway& gateway, const GeneratedQuestion& generated,
                                  std::string_view reference_answer, AnswerKind kind, const ModelSpec& checker,
                                  const ModelSpec& self_model, const GradeOptions& options = {});

bool q2i_correct(const Answerability& a, Q2ICorrectness mode);

struct EvalItem {
    std::string id;
    std::string source_id;
    std::string question;  // instruction text for the q2i variant
    std::string reference;
    AnswerKind kind = AnswerKind::numeric;
};

std::vector<EvalItem> eval_items(std::span<const QAItem> items);
// Answer kinds come from the source items the deep items point to.
std::vector<EvalItem> eval_items(std::span<const DeepItem> items, std::span<const QAItem> sources);

struct EvalOptions {
    GradeOptions grade;
    std::optional<ModelSpec> checker;  // required for the q2i variant
    Q2ICorrectness q2i_correctness = Q2ICorrectness::checker;
    std::size_t parallelism = 4;
    std::function<void(std::string_view)> warn;
};

struct EvalRun {
    AccuracySummary summary;
    std::vector<SolveRecord> records;  // item order
};

EvalRun run_eval(Gateway& gateway, const ModelSpec& solver, std::span<const EvalItem> items, Variant variant,
                 std::string_view dataset_name, const EvalOptions& options = {});

}  // namespace deepq
