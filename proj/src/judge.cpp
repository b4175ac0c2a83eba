#include "deepq/judge.hpp"

#include <algorithm>
#include <regex>
#include <unordered_map>

#include <fmt/format.h>

#include "deepq/error.hpp"
#include "deepq/text.hpp"

namespace deepq {

namespace {

constexpr int kJudgeAttempts = 3;

std::optional<RawVerdict> verdict_from_token(std::string token) {
    token = text::to_lower_ascii(text::trim(token));
    if (token == "a") return RawVerdict::a;
    if (token == "b") return RawVerdict::b;
    if (token == "tie") return RawVerdict::tie;
    return std::nullopt;
}

RawVerdict ask(Gateway& gateway, const ModelSpec& judge_model, const Criterion& criterion, std::string_view first,
               std::string_view second, const std::string& tag, bool& warning) {
    ChatRequest req;
    req.system_text = fmt::format(
        "You compare two questions on a single criterion.\n\nCriterion: {}\n{}\n\n"
        "Reply with a JSON object {{\"winner\": \"A\"}}, {{\"winner\": \"B\"}} or {{\"winner\": \"tie\"}}.",
        criterion.key, criterion.rubric);
    req.turns.push_back({"user", fmt::format("Question A:\n{}\n\nQuestion B:\n{}", first, second)});
    req.max_output_tokens = 1024;
    req.request_tag = tag;
    for (int attempt = 1; attempt <= kJudgeAttempts; ++attempt) {
        ChatResponse response = gateway.call(judge_model, req);
        if (response.finish_state == FinishState::complete) {
            if (auto v = parse_verdict(response.text)) return *v;
        }
        req.turns.push_back({"assistant", response.text});
        req.turns.push_back({"user", "Your reply could not be read. Answer with only {\"winner\": \"A\"}, "
                                     "{\"winner\": \"B\"} or {\"winner\": \"tie\"}."});
    }
    warning = true;
    return RawVerdict::unparseable;
}

}  // namespace

const std::vector<Criterion>& default_criteria() {
    static const std::vector<Criterion> kCriteria = {
        {"reasoning_demand",
         "Which question demands more real thinking: deciding what to compute, weighing options and "
         "making decisions rather than recalling a formula?"},
        {"numerical_quality",
         "Which question uses numbers that are realistic, meaningful and consistent with each other?"},
        {"physical_realism",
         "Which question describes a situation that could plausibly happen and does not contradict itself?"},
        {"clarity_brevity", "Which question is easier to understand and states what it asks without excess words?"},
        {"solution_spoiling",
         "Which question better avoids giving away its own answer or the steps needed to reach it?"},
    };
    return kCriteria;
}

std::string_view to_string(Side s) {
    switch (s) {
        case Side::original: return "original";
        case Side::generated: return "generated";
        case Side::tie: return "tie";
    }
    return "tie";
}

std::string_view to_string(RawVerdict v) {
    switch (v) {
        case RawVerdict::a: return "A";
        case RawVerdict::b: return "B";
        case RawVerdict::tie: return "tie";
        case RawVerdict::unparseable: return "unparseable";
    }
    return "tie";
}

Side unswap(RawVerdict raw, bool original_first) {
    switch (raw) {
        case RawVerdict::a: return original_first ? Side::original : Side::generated;
        case RawVerdict::b: return original_first ? Side::generated : Side::original;
        default: return Side::tie;
    }
}

Side combine(RawVerdict order_a, RawVerdict order_b) {
    Side first = unswap(order_a, true);
    Side second = unswap(order_b, false);
    return first == second ? first : Side::tie;
}

std::optional<RawVerdict> parse_verdict(std::string_view reply) {
    std::string s(reply);
    for (std::size_t open = s.find('{'); open != std::string::npos; open = s.find('{', open + 1)) {
        auto close = s.find('}', open);
        if (close == std::string::npos) break;
        auto j = ordered_json::parse(s.substr(open, close - open + 1), nullptr, false);
        if (!j.is_discarded() && j.is_object() && j.contains("winner") && j["winner"].is_string()) {
            return verdict_from_token(j["winner"].get<std::string>());
        }
    }
    static const std::regex kWinner(R"re("?winner"?\s*[:=]\s*"?(A|B|tie)\b)re", std::regex::icase);
    std::smatch m;
    if (std::regex_search(s, m, kWinner)) return verdict_from_token(m[1]);
    return std::nullopt;
}

ordered_json to_json(const JudgeVerdict& v) {
    ordered_json j;
    j["pair_id"] = v.pair_id;
    j["model_name"] = v.model_name;
    j["criterion"] = v.criterion;
    j["winner"] = std::string(to_string(v.winner));
    j["order_a_winner"] = std::string(to_string(v.order_a_raw));
    j["order_b_winner"] = std::string(to_string(v.order_b_raw));
    j["judge_model"] = v.judge_model;
    j["warning"] = v.warning;
    return j;
}

JudgeVerdict judge_verdict_from_json(const ordered_json& j) {
    auto raw = [](const std::string& s) {
        if (s == "A") return RawVerdict::a;
        if (s == "B") return RawVerdict::b;
        if (s == "tie") return RawVerdict::tie;
        return RawVerdict::unparseable;
    };
    try {
        JudgeVerdict v;
        v.pair_id = j.at("pair_id").get<std::string>();
        v.model_name = j.value("model_name", "");
        v.criterion = j.at("criterion").get<std::string>();
        std::string w = j.at("winner").get<std::string>();
        v.winner = w == "original" ? Side::original : w == "generated" ? Side::generated : Side::tie;
        v.order_a_raw = raw(j.at("order_a_winner").get<std::string>());
        v.order_b_raw = raw(j.at("order_b_winner").get<std::string>());
        v.judge_model = j.value("judge_model", "");
        v.warning = j.value("warning", false);
        return v;
    } catch (const ordered_json::exception& e) {
        throw Error(ErrorCode::malformed_record, fmt::format("judge verdict: {}", e.what()));
    }
}

ordered_json to_json(const JudgePair& p) {
    ordered_json j;
    j["pair_id"] = p.pair_id;
    j["model_name"] = p.model_name;
    j["original"] = p.original;
    j["generated"] = p.generated;
    return j;
}

JudgePair judge_pair_from_json(const ordered_json& j) {
    try {
        return JudgePair{j.at("pair_id").get<std::string>(), j.value("model_name", ""),
                         j.at("original").get<std::string>(), j.at("generated").get<std::string>()};
    } catch (const ordered_json::exception& e) {
        throw Error(ErrorCode::malformed_record, fmt::format("judge pair: {}", e.what()));
    }
}

JudgeVerdict compare_pair(Gateway& gateway, const ModelSpec& judge_model, const JudgePair& pair,
                          const Criterion& criterion) {
    if (text::is_blank(pair.original) || text::is_blank(pair.generated)) {
        throw Error(ErrorCode::invalid_argument, fmt::format("pair {} has an empty question", pair.pair_id));
    }
    JudgeVerdict v;
    v.pair_id = pair.pair_id;
    v.model_name = pair.model_name;
    v.criterion = criterion.key;
    v.judge_model = judge_model.model_name;
    v.order_a_raw = ask(gateway, judge_model, criterion, pair.original, pair.generated,
                        fmt::format("judge:{}:{}:a", criterion.key, pair.pair_id), v.warning);
    v.order_b_raw = ask(gateway, judge_model, criterion, pair.generated, pair.original,
                        fmt::format("judge:{}:{}:b", criterion.key, pair.pair_id), v.warning);
    v.winner = combine(v.order_a_raw, v.order_b_raw);
    return v;
}

std::vector<WinRateSummary> win_rates(std::span<const JudgeVerdict> verdicts) {
    std::vector<std::string> order;
    for (const auto& c : default_criteria()) order.push_back(c.key);
    for (const auto& v : verdicts) {
        if (std::find(order.begin(), order.end(), v.criterion) == order.end()) order.push_back(v.criterion);
    }

    std::unordered_map<std::string, WinRateSummary> by_key;
    for (const auto& v : verdicts) {
        auto& s = by_key[v.criterion];
        s.criterion = v.criterion;
        ++s.n_pairs;
        switch (v.winner) {
            case Side::original: ++s.original_wins; break;
            case Side::generated: ++s.generated_wins; break;
            case Side::tie: ++s.ties; break;
        }
    }

    std::vector<WinRateSummary> out;
    for (const auto& key : order) {
        auto it = by_key.find(key);
        if (it == by_key.end()) continue;
        WinRateSummary s = it->second;
        s.original_win_rate = percent_2dp(s.original_wins, s.n_pairs);
        s.generated_win_rate = percent_2dp(s.generated_wins, s.n_pairs);
        s.tie_rate = percent_2dp(s.ties, s.n_pairs);
        out.push_back(s);
    }
    return out;
}

std::vector<JudgePair> pairs_from_records(std::span<const SolveRecord> records, std::span<const QAItem> originals) {
    std::unordered_map<std::string_view, const QAItem*> by_id;
    for (const auto& o : originals) by_id[o.id] = &o;
    std::vector<JudgePair> out;
    for (const auto& r : records) {
        if (!r.q2i || r.q2i->failed_generation || text::is_blank(r.q2i->generated_question)) continue;
        auto it = by_id.find(r.source_id);
        if (it == by_id.end()) {
            throw Error(ErrorCode::precondition, fmt::format("record {} has unknown source {}", r.item_id, r.source_id));
        }
        out.push_back(JudgePair{r.item_id, r.model_name, it->second->question, r.q2i->generated_question});
    }
    return out;
}

}  // namespace deepq
