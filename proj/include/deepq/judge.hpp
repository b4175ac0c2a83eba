#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "deepq/dataset_io.hpp"
#include "deepq/eval_harness.hpp"
#include "deepq/llm_gateway.hpp"

namespace deepq {

struct Criterion {
    std::string key;
    std::string rubric;

    bool operator==(const Criterion&) const = default;
};

// reasoning_demand, numerical_quality, physical_realism, clarity_brevity,
// solution_spoiling, in that order.
const std::vector<Criterion>& default_criteria();

enum class Side { original, generated, tie };
// What the judge said in one presentation order, before un-swapping.
enum class RawVerdict { a, b, tie, unparseable };

std::string_view to_string(Side s);
std::string_view to_string(RawVerdict v);

struct JudgeVerdict {
    std::string pair_id;
    std::string model_name;  // model that generated the question
    std::string criterion;
    Side winner = Side::tie;
    // Order A shows the original first; order B shows the generated question first.
    RawVerdict order_a_raw = RawVerdict::tie;
    RawVerdict order_b_raw = RawVerdict::tie;
    std::string judge_model;
    bool warning = false;

    bool operator==(const JudgeVerdict&) const = default;
};

ordered_json to_json(const JudgeVerdict& v);
JudgeVerdict judge_verdict_from_json(const ordered_json& j);

// Map a raw verdict back to original/generated.
Side unswap(RawVerdict raw, bool original_first);
// Agreement between the two orders gives that side; anything else is a tie.
Side combine(RawVerdict order_a, RawVerdict order_b);

// Reads {"winner": "A"|"B"|"tie"} or a "winner: X" line.
std::optional<RawVerdict> parse_verdict(std::string_view reply);

struct JudgePair {
    std::string pair_id;
    std::string model_name;
    std::string original;
    std::string generated;
};

ordered_json to_json(const JudgePair& p);
JudgePair judge_pair_from_json(const ordered_json& j);

// Queries the judge once per presentation order.
JudgeVerdict compare_pair(Gateway& gateway, const ModelSpec& judge_model, const JudgePair& pair,
                          const Criterion& criterion);

struct WinRateSummary {
    std::string criterion;
    std::size_t n_pairs = 0;
    std::size_t original_wins = 0;
    std::size_t generated_wins = 0;
    std::size_t ties = 0;
    double original_win_rate = 0.0;
    double generated_win_rate = 0.0;
    double tie_rate = 0.0;

    bool operator==(const WinRateSummary&) const = default;
};

// One summary per criterion present, default criteria first, then others in
// order of first appearance.
std::vector<WinRateSummary> win_rates(std::span<const JudgeVerdict> verdicts);

// Pairs from Q2I solve records: each successfully generated question against
// the original question of its source item.
std::vector<JudgePair> pairs_from_records(std::span<const SolveRecord> records, std::span<const QAItem> originals);

}  // namespace deepq
