#include <gtest/gtest.h>

#include <random>

#include "deepq/error.hpp"
#include "deepq/judge.hpp"
#include "support.hpp"

using namespace deepq;
using namespace deepq::testing;
using nlohmann::json;

namespace {

const Criterion& reasoning() { return default_criteria().front(); }

JudgePair pair(std::string id = "p1") {
    return JudgePair{id, "gen-model", "A car travels 60 km in 1 h. Speed?", "Plan a delivery route under a deadline."};
}

// Judge that prefers whichever question mentions `marker`, whichever slot it sits in.
std::shared_ptr<ScriptedTransport> prefers(std::string marker) {
    return std::make_shared<ScriptedTransport>([marker](const json& body) {
        auto user = mock::last_user_text(body);
        auto b = user.find("Question B:");
        bool in_a = user.substr(0, b).find(marker) != std::string::npos;
        return mock::reply(in_a ? R"({"winner": "A"})" : R"({"winner": "B"})");
    });
}

JudgeVerdict verdict(std::string criterion, Side winner) {
    JudgeVerdict v;
    v.pair_id = "x";
    v.criterion = std::move(criterion);
    v.winner = winner;
    return v;
}

}  // namespace

TEST(Judge, DefaultCriteriaInOrder) {
    std::vector<std::string> keys;
    for (const auto& c : default_criteria()) keys.push_back(c.key);
    EXPECT_EQ(keys, (std::vector<std::string>{"reasoning_demand", "numerical_quality", "physical_realism",
                                              "clarity_brevity", "solution_spoiling"}));
}

TEST(Judge, SameSlotBothOrdersIsTie) {
    auto t = ScriptedTransport::sequence({mock::reply(R"({"winner": "A"})")});
    Gateway gw(t, fast_options());
    auto v = compare_pair(gw, model("judge", Role::judge), pair(), reasoning());
    EXPECT_EQ(v.order_a_raw, RawVerdict::a);
    EXPECT_EQ(v.order_b_raw, RawVerdict::a);
    EXPECT_EQ(v.winner, Side::tie);
    EXPECT_EQ(t->calls(), 2u);
}

TEST(Judge, PresentationOrdersSwapQuestions) {
    auto t = prefers("60 km");
    Gateway gw(t, fast_options());
    auto p = pair();
    auto v = compare_pair(gw, model("judge", Role::judge), p, reasoning());
    EXPECT_EQ(v.winner, Side::original);
    auto reqs = t->requests();
    ASSERT_EQ(reqs.size(), 2u);
    auto first = mock::last_user_text(reqs[0]);
    auto second = mock::last_user_text(reqs[1]);
    EXPECT_LT(first.find(p.original), first.find(p.generated));
    EXPECT_LT(second.find(p.generated), second.find(p.original));
    EXPECT_NE(mock::system_text(reqs[0]).find(reasoning().rubric), std::string::npos);
}

TEST(Judge, ConsistentPreferenceForGenerated) {
    Gateway gw(prefers("delivery"), fast_options());
    EXPECT_EQ(compare_pair(gw, model("judge"), pair(), reasoning()).winner, Side::generated);
}

TEST(Judge, CombineTable) {
    EXPECT_EQ(combine(RawVerdict::a, RawVerdict::b), Side::original);
    EXPECT_EQ(combine(RawVerdict::b, RawVerdict::a), Side::generated);
    EXPECT_EQ(combine(RawVerdict::a, RawVerdict::a), Side::tie);
    EXPECT_EQ(combine(RawVerdict::b, RawVerdict::b), Side::tie);
    EXPECT_EQ(combine(RawVerdict::tie, RawVerdict::tie), Side::tie);
    EXPECT_EQ(combine(RawVerdict::a, RawVerdict::tie), Side::tie);
    EXPECT_EQ(combine(RawVerdict::unparseable, RawVerdict::b), Side::tie);
}

TEST(Judge, ParseVerdictForms) {
    EXPECT_EQ(parse_verdict(R"({"winner": "B"})"), RawVerdict::b);
    EXPECT_EQ(parse_verdict("Sure. {\"winner\":\"tie\"} done"), RawVerdict::tie);
    EXPECT_EQ(parse_verdict("After thinking it over,\nwinner: B\nbecause it is longer."), RawVerdict::b);
    EXPECT_EQ(parse_verdict("Winner = a"), RawVerdict::a);
    EXPECT_EQ(parse_verdict("Both are fine."), std::nullopt);
    EXPECT_EQ(parse_verdict(R"({"winner": "C"})"), std::nullopt);
}

TEST(Judge, ProseVerdictIsParsed) {
    auto t = ScriptedTransport::sequence({mock::reply("Question A is dull.\nwinner: B"), mock::reply("winner: A")});
    Gateway gw(t, fast_options());
    auto v = compare_pair(gw, model("judge"), pair(), reasoning());
    EXPECT_EQ(v.winner, Side::generated);
    EXPECT_FALSE(v.warning);
}

TEST(Judge, UnparseableAfterThreeTriesIsTieWithWarning) {
    auto t = ScriptedTransport::sequence({mock::reply("I like both.")});
    Gateway gw(t, fast_options());
    auto v = compare_pair(gw, model("judge"), pair(), reasoning());
    EXPECT_EQ(v.winner, Side::tie);
    EXPECT_TRUE(v.warning);
    EXPECT_EQ(v.order_a_raw, RawVerdict::unparseable);
    EXPECT_EQ(t->calls(), 6u);
}

TEST(Judge, EmptyQuestionRejected) {
    auto t = ScriptedTransport::sequence({mock::reply(R"({"winner": "A"})")});
    Gateway gw(t, fast_options());
    auto p = pair();
    p.generated = "  ";
    EXPECT_THROW(compare_pair(gw, model("judge"), p, reasoning()), Error);
    EXPECT_EQ(t->calls(), 0u);
}

TEST(WinRates, EighteenSixSixOfThirty) {
    std::vector<JudgeVerdict> vs;
    for (int i = 0; i < 18; ++i) vs.push_back(verdict("reasoning_demand", Side::generated));
    for (int i = 0; i < 6; ++i) vs.push_back(verdict("reasoning_demand", Side::original));
    for (int i = 0; i < 6; ++i) vs.push_back(verdict("reasoning_demand", Side::tie));
    auto s = win_rates(vs);
    ASSERT_EQ(s.size(), 1u);
    EXPECT_EQ(s[0].n_pairs, 30u);
    EXPECT_DOUBLE_EQ(s[0].generated_win_rate, 60.00);
    EXPECT_DOUBLE_EQ(s[0].original_win_rate, 20.00);
    EXPECT_DOUBLE_EQ(s[0].tie_rate, 20.00);
}

TEST(WinRates, OneOfThirtyThree) {
    std::vector<JudgeVerdict> vs(32, verdict("clarity_brevity", Side::tie));
    vs.push_back(verdict("clarity_brevity", Side::original));
    auto s = win_rates(vs);
    EXPECT_DOUBLE_EQ(s.at(0).original_win_rate, 3.03);
}

TEST(WinRates, EmptyAndOrdering) {
    EXPECT_TRUE(win_rates({}).empty());
    std::vector<JudgeVerdict> vs = {verdict("creativity", Side::tie), verdict("solution_spoiling", Side::tie),
                                    verdict("reasoning_demand", Side::tie)};
    auto s = win_rates(vs);
    ASSERT_EQ(s.size(), 3u);
    EXPECT_EQ(s[0].criterion, "reasoning_demand");
    EXPECT_EQ(s[1].criterion, "solution_spoiling");
    EXPECT_EQ(s[2].criterion, "creativity");
}

// Counts always partition the pairs, and the rates sum to 100 up to rounding.
TEST(WinRates, PartitionProperty) {
    std::mt19937 rng(7);
    for (int trial = 0; trial < 1000; ++trial) {
        std::size_t n = 1 + rng() % 80;
        std::vector<JudgeVerdict> vs;
        for (std::size_t i = 0; i < n; ++i) vs.push_back(verdict("reasoning_demand", static_cast<Side>(rng() % 3)));
        auto s = win_rates(vs).at(0);
        ASSERT_EQ(s.original_wins + s.generated_wins + s.ties, n);
        ASSERT_NEAR(s.original_win_rate + s.generated_win_rate + s.tie_rate, 100.0, 0.015 + 1e-9);
    }
}

// Swapping the two raw verdicts (and the sides) mirrors the combined result.
TEST(Judge, SwapSymmetryProperty) {
    const RawVerdict all[] = {RawVerdict::a, RawVerdict::b, RawVerdict::tie, RawVerdict::unparseable};
    auto flip = [](RawVerdict r) {
        return r == RawVerdict::a ? RawVerdict::b : r == RawVerdict::b ? RawVerdict::a : r;
    };
    auto mirror = [](Side s) {
        return s == Side::original ? Side::generated : s == Side::generated ? Side::original : Side::tie;
    };
    for (auto x : all) {
        for (auto y : all) EXPECT_EQ(combine(flip(x), flip(y)), mirror(combine(x, y)));
    }
}

TEST(Judge, PositionBiasedJudgeYieldsOnlyTies) {
    auto t = ScriptedTransport::sequence({mock::reply(R"({"winner": "A"})")});
    Gateway gw(t, fast_options());
    std::vector<JudgeVerdict> vs;
    for (int i = 0; i < 20; ++i) vs.push_back(compare_pair(gw, model("judge"), pair("p" + std::to_string(i)), reasoning()));
    auto s = win_rates(vs).at(0);
    EXPECT_DOUBLE_EQ(s.tie_rate, 100.0);
}

TEST(Judge, VerdictJsonRoundTrip) {
    JudgeVerdict v{"p1-q2i", "m", "numerical_quality", Side::generated, RawVerdict::b, RawVerdict::a, "j", true};
    EXPECT_EQ(judge_verdict_from_json(to_json(v)), v);
    JudgePair p = pair();
    auto back = judge_pair_from_json(to_json(p));
    EXPECT_EQ(back.original, p.original);
    EXPECT_EQ(back.generated, p.generated);
    EXPECT_THROW(judge_verdict_from_json(ordered_json::object()), Error);
}

TEST(Judge, PairsFromRecordsSkipsFailedGenerations) {
    std::vector<QAItem> originals = {qa("a", "orig a", "1"), qa("b", "orig b", "2")};
    SolveRecord ok;
    ok.model_name = "m";
    ok.item_id = "a-q2i";
    ok.source_id = "a";
    ok.variant = Variant::q2i;
    ok.q2i = Q2IDetail{"new a", false, true, true, "", ""};
    SolveRecord failed = ok;
    failed.item_id = "b-q2i";
    failed.source_id = "b";
    failed.q2i = Q2IDetail{"", true, false, false, "", ""};
    std::vector<SolveRecord> recs = {ok, failed};
    auto pairs = pairs_from_records(recs, originals);
    ASSERT_EQ(pairs.size(), 1u);
    EXPECT_EQ(pairs[0].pair_id, "a-q2i");
    EXPECT_EQ(pairs[0].original, "orig a");
    EXPECT_EQ(pairs[0].generated, "new a");

    ok.source_id = "zzz";
    std::vector<SolveRecord> bad = {ok};
    EXPECT_THROW(pairs_from_records(bad, originals), Error);
}
