#include <gtest/gtest.h>

#include <fstream>
#include <cmath>
#include <random>
#include <set>

#include <fmt/format.h>

#include "deepq/error.hpp"
#include "deepq/eval_harness.hpp"
#include "deepq/text.hpp"
#include "support.hpp"

using namespace deepq;
using namespace deepq::testing;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::vector<json> grading_cases() {
    std::ifstream in(fs::path(DEEPQ_FIXTURE_DIR) / "grading_cases.jsonl");
    std::vector<json> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) out.push_back(json::parse(line));
    }
    return out;
}

// Solver that answers "Answer: <n>" where n is the number in the question, or
// a wrong number for the ids listed in `wrong`.
std::shared_ptr<ScriptedTransport> echo_solver(std::set<std::string> wrong = {}) {
    return std::make_shared<ScriptedTransport>([wrong](const json& body) {
        auto q = mock::last_user_text(body);
        auto id = q.substr(0, q.find(':'));
        auto n = std::stoi(q.substr(q.find("value ") + 6));
        if (wrong.count(id)) n += 1;
        return mock::reply("Working it out.\nAnswer: " + std::to_string(n));
    });
}

std::vector<EvalItem> valued_items(int n) {
    std::vector<EvalItem> out;
    for (int i = 0; i < n; ++i) {
        std::string id = "i" + std::to_string(i);
        out.push_back(EvalItem{id, id, id + ": report the value " + std::to_string(i * 7), std::to_string(i * 7),
                               AnswerKind::numeric});
    }
    return out;
}

}  // namespace

TEST(GradingSuite, FiftyCasesAgreeWithOracle) {
    auto cases = grading_cases();
    ASSERT_EQ(cases.size(), 50u);
    std::size_t agree = 0;
    for (const auto& c : cases) {
        auto kind = parse_answer_kind(c["kind"].get<std::string>()).value();
        auto extracted = extract_answer(c["raw"].get<std::string>(), kind);
        GradeOptions opts;
        if (c.contains("rel_tol")) opts.rel_tol = c["rel_tol"].get<double>();
        bool correct = grade(nullptr, extracted, c["reference"].get<std::string>(), kind, opts).correct;

        std::optional<std::string> want_extracted;
        if (!c["expected_extracted"].is_null()) want_extracted = c["expected_extracted"].get<std::string>();
        bool ok = extracted == want_extracted && correct == c["expected_correct"].get<bool>();
        EXPECT_TRUE(ok) << c["id"] << ": extracted " << extracted.value_or("<unset>") << ", correct " << correct;
        agree += ok;
    }
    EXPECT_EQ(agree, cases.size());
}

TEST(ExtractAnswer, SpecExamples) {
    EXPECT_EQ(extract_answer("...so she pays 18 dollars. Answer: 18", AnswerKind::numeric), "18");
    EXPECT_EQ(extract_answer("گزینه صحیح: ۳", AnswerKind::multiple_choice), "3");
    EXPECT_EQ(extract_answer("I cannot determine this.", AnswerKind::numeric), std::nullopt);
}

TEST(ExtractAnswer, EveryPersianDigitMapsToItsAsciiValue) {
    for (int d = 0; d <= 9; ++d) {
        std::string persian = text::to_persian_digits(std::to_string(d));
        EXPECT_EQ(extract_answer("پاسخ: " + persian, AnswerKind::numeric), std::to_string(d));
        if (d > 0) EXPECT_EQ(extract_answer("گزینه صحیح: " + persian, AnswerKind::multiple_choice), std::to_string(d));
    }
}

TEST(Grade, SpecExamples) {
    EXPECT_TRUE(grade(nullptr, std::string("18"), "18", AnswerKind::numeric).correct);
    EXPECT_FALSE(grade(nullptr, std::nullopt, "18", AnswerKind::numeric).correct);
    EXPECT_TRUE(grade(nullptr, std::string("b"), "B", AnswerKind::multiple_choice).correct);
    EXPECT_THROW(grade(nullptr, std::string("1"), " ", AnswerKind::numeric), Error);
}

TEST(Grade, ToleranceBoundary) {
    GradeOptions tight{1e-6, {}};
    GradeOptions loose{1e-5, {}};
    EXPECT_FALSE(grade(nullptr, std::string("18.0001"), "18", AnswerKind::numeric, tight).correct);
    EXPECT_TRUE(grade(nullptr, std::string("18.0001"), "18", AnswerKind::numeric, loose).correct);
    // A relative error of 5.6e-9 is inside either tolerance.
    EXPECT_TRUE(grade(nullptr, std::string("18.0000001"), "18", AnswerKind::numeric, tight).correct);
    auto g = grade(nullptr, std::string("18.0001"), "18", AnswerKind::numeric, loose);
    EXPECT_EQ(g.grader, Grader::tolerant_numeric);
}

TEST(Grade, ExpressionFallsBackToGraderModel) {
    auto t = ScriptedTransport::sequence({mock::reply("Yes.")});
    Gateway gw(t, fast_options());
    GradeOptions opts{1e-6, model("grader")};
    auto g = grade(&gw, std::string("x = t^2 + 5t"), "x = 5t + t^2", AnswerKind::expression, opts);
    EXPECT_TRUE(g.correct);
    EXPECT_EQ(g.grader, Grader::llm_fallback);
    EXPECT_NE(mock::last_user_text(t->requests().at(0)).find("Same final answer? yes/no"), std::string::npos);

    // Exact normalized matches never reach the grader.
    auto exact = grade(&gw, std::string("x=5t+t^2"), "x = 5t + t^2", AnswerKind::expression, opts);
    EXPECT_TRUE(exact.correct);
    EXPECT_EQ(exact.grader, Grader::exact);
    EXPECT_EQ(t->calls(), 1u);
}

TEST(Grade, UnparseableGraderVerdictIsFalseWithWarning) {
    auto t = ScriptedTransport::sequence({mock::reply("hard to say")});
    Gateway gw(t, fast_options());
    GradeOptions opts{1e-6, model("grader")};
    auto g = grade(&gw, std::string("v = 3"), "v = 4 - 1", AnswerKind::expression, opts);
    EXPECT_FALSE(g.correct);
    EXPECT_TRUE(g.warning);
    EXPECT_EQ(t->calls(), 3u);
}

// grade(a, b) == grade(b, a) for numeric answers.
TEST(Grade, NumericSymmetryProperty) {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> base(-1e6, 1e6);
    std::uniform_real_distribution<double> jitter(-3e-6, 3e-6);
    const double tolerances[] = {0.0, 1e-9, 1e-6, 1e-5, 1e-3};
    for (int i = 0; i < 2000; ++i) {
        double a = base(rng);
        if (i % 7 == 0) a = std::round(a);
        double b = a * (1.0 + jitter(rng));
        auto sa = fmt::format("{:.10g}", a);
        auto sb = fmt::format("{:.10g}", b);
        for (double tol : tolerances) {
            GradeOptions o{tol, {}};
            EXPECT_EQ(grade(nullptr, sa, sb, AnswerKind::numeric, o).correct,
                      grade(nullptr, sb, sa, AnswerKind::numeric, o).correct)
                << sa << " vs " << sb << " tol " << tol;
        }
    }
}

TEST(Solve, RawTextCapturedExactly) {
    auto t = ScriptedTransport::sequence({mock::reply("The answer is 42.")});
    Gateway gw(t, fast_options());
    auto r = solve(gw, model("s"), "What is 6*7?");
    EXPECT_EQ(r.text, "The answer is 42.");
    EXPECT_NE(mock::system_text(t->requests().at(0)).find("Answer:"), std::string::npos);
    EXPECT_THROW(solve(gw, model("s"), "  "), Error);
}

TEST(RunEval, RefusalIsIncorrectWithNote) {
    auto t = ScriptedTransport::sequence({mock::refusal()});
    Gateway gw(t, fast_options());
    auto items = valued_items(1);
    auto r = run_eval(gw, model("s"), items, Variant::original, "ds");
    ASSERT_EQ(r.records.size(), 1u);
    EXPECT_EQ(r.records[0].correct, false);
    EXPECT_EQ(r.records[0].note, "refusal");
    EXPECT_EQ(r.summary.n_items, 1u);
}

TEST(RunEval, SixtyItemsInOrderFiftyEightCorrect) {
    Gateway gw(echo_solver({"i4", "i40"}), fast_options());
    auto items = valued_items(60);
    auto r = run_eval(gw, model("llama"), items, Variant::original, "gsm8k", EvalOptions{{}, {}, {}, 8, {}});
    ASSERT_EQ(r.records.size(), 60u);
    for (std::size_t i = 0; i < 60; ++i) EXPECT_EQ(r.records[i].item_id, items[i].id);
    EXPECT_EQ(r.summary.n_correct, 58u);
    EXPECT_DOUBLE_EQ(r.summary.accuracy_percent, 96.67);
    EXPECT_EQ(r.summary.model_name, "llama");
    EXPECT_EQ(r.summary.dataset_name, "gsm8k");
}

TEST(RunEval, NoneAndAllCorrect) {
    std::set<std::string> all;
    for (int i = 0; i < 60; ++i) all.insert("i" + std::to_string(i));
    Gateway none(echo_solver(all), fast_options());
    Gateway every(echo_solver(), fast_options());
    auto items = valued_items(60);
    EXPECT_DOUBLE_EQ(run_eval(none, model("m"), items, Variant::original, "d").summary.accuracy_percent, 0.0);
    EXPECT_DOUBLE_EQ(run_eval(every, model("m"), items, Variant::original, "d").summary.accuracy_percent, 100.0);
}

TEST(RunEval, GatewayFailuresAreUngradedAndExcluded) {
    auto t = std::make_shared<ScriptedTransport>([](const json& body) {
        auto q = mock::last_user_text(body);
        if (q.rfind("i1:", 0) == 0) return mock::status(503);
        return mock::reply("Answer: " + q.substr(q.find("value ") + 6));
    });
    Gateway gw(t, fast_options());
    std::vector<std::string> warnings;
    EvalOptions opts;
    opts.warn = [&](std::string_view w) { warnings.emplace_back(w); };
    opts.parallelism = 1;
    auto r = run_eval(gw, model("m"), valued_items(3), Variant::original, "d", opts);
    EXPECT_FALSE(r.records[1].correct.has_value());
    EXPECT_EQ(r.summary.n_items, 2u);
    EXPECT_EQ(r.summary.n_correct, 2u);
    ASSERT_EQ(warnings.size(), 1u);
}

TEST(PercentTwoDecimals, TableCells) {
    EXPECT_DOUBLE_EQ(percent_2dp(58, 60), 96.67);
    EXPECT_DOUBLE_EQ(percent_2dp(15, 60), 25.00);
    EXPECT_DOUBLE_EQ(percent_2dp(50, 60), 83.33);
    EXPECT_DOUBLE_EQ(percent_2dp(46, 60), 76.67);
    EXPECT_DOUBLE_EQ(percent_2dp(48, 60), 80.00);
    EXPECT_DOUBLE_EQ(percent_2dp(1, 33), 3.03);
    EXPECT_DOUBLE_EQ(percent_2dp(1, 8), 12.5);
    EXPECT_DOUBLE_EQ(percent_2dp(0, 0), 0.0);
}

TEST(Q2I, GenerateQuestionRecordsTextOrFailure) {
    auto t = ScriptedTransport::sequence({mock::reply("A cart starts at 5 m/s ... find x(t)."), mock::reply("  ")});
    Gateway gw(t, fast_options());
    DeepItem instr{"p1-q2i", "p1", DeepKind::q2i, "Design a problem whose solution is x = 5t + t^2.", "x = 5t + t^2",
                   "q2i-x", "en", {}};
    auto g = q2i_generate_question(gw, model("solver"), instr);
    EXPECT_FALSE(g.failed);
    EXPECT_EQ(g.text, "A cart starts at 5 m/s ... find x(t).");
    EXPECT_EQ(g.source_id, "p1-q2i");
    EXPECT_EQ(g.model_name, "solver");
    EXPECT_EQ(mock::last_user_text(t->requests().at(0)), instr.payload);
    auto empty = q2i_generate_question(gw, model("solver"), instr);
    EXPECT_TRUE(empty.failed);

    auto q2s = instr;
    q2s.kind = DeepKind::q2s;
    EXPECT_THROW(q2i_generate_question(gw, model("solver"), q2s), Error);
}

TEST(Q2I, AnswerabilityCheckerRightSelfWrong) {
    auto t = std::make_shared<ScriptedTransport>([](const json& body) {
        return mock::reply(mock::model_of(body) == "checker" ? "Answer: 12" : "Answer: 13");
    });
    Gateway gw(t, fast_options());
    GeneratedQuestion gen{"How many?", "x-q2i", "self", false};
    auto a = answerability_check(gw, gen, "12", AnswerKind::numeric, model("checker"), model("self"));
    EXPECT_TRUE(a.checker_valid);
    EXPECT_FALSE(a.self_valid);
    EXPECT_TRUE(q2i_correct(a, Q2ICorrectness::checker));
    EXPECT_FALSE(q2i_correct(a, Q2ICorrectness::self));
    EXPECT_FALSE(q2i_correct(a, Q2ICorrectness::both));
}

TEST(Q2I, AnswerabilityBothRightAndEmptyQuestion) {
    auto t = ScriptedTransport::sequence({mock::reply("Answer: 12")});
    Gateway gw(t, fast_options());
    auto a = answerability_check(gw, GeneratedQuestion{"How many?", "x", "self", false}, "12", AnswerKind::numeric,
                                 model("checker"), model("self"));
    EXPECT_TRUE(a.checker_valid && a.self_valid);
    EXPECT_TRUE(q2i_correct(a, Q2ICorrectness::both));

    auto calls = t->calls();
    auto none = answerability_check(gw, GeneratedQuestion{"", "x", "self", true}, "12", AnswerKind::numeric,
                                    model("checker"), model("self"));
    EXPECT_FALSE(none.checker_valid || none.self_valid);
    EXPECT_EQ(t->calls(), calls);
}

TEST(Q2I, RunEvalUsesCheckerByDefaultAndRecordsBoth) {
    auto t = std::make_shared<ScriptedTransport>([](const json& body) {
        auto sys = mock::system_text(body);
        if (sys.find("design exactly one question") != std::string::npos) {
            auto instr = mock::last_user_text(body);
            if (instr.find("EMPTY") != std::string::npos) return mock::reply("");
            return mock::reply("Designed: " + instr);
        }
        return mock::reply(mock::model_of(body) == "checker" ? "Answer: 12" : "Answer: 99");
    });
    Gateway gw(t, fast_options());
    std::vector<QAItem> sources = {qa("a", "orig a", "12"), qa("b", "orig b", "12")};
    std::vector<DeepItem> deep = {DeepItem{"a-q2i", "a", DeepKind::q2i, "make one for 12", "12", "p", "en", {}},
                                  DeepItem{"b-q2i", "b", DeepKind::q2i, "EMPTY", "12", "p", "en", {}}};
    auto items = eval_items(deep, sources);
    EvalOptions opts;
    opts.checker = model("checker");
    auto r = run_eval(gw, model("self"), items, Variant::q2i, "d", opts);
    ASSERT_EQ(r.records.size(), 2u);
    ASSERT_TRUE(r.records[0].q2i);
    EXPECT_EQ(r.records[0].correct, true);
    EXPECT_TRUE(r.records[0].q2i->checker_valid);
    EXPECT_FALSE(r.records[0].q2i->self_valid);
    EXPECT_EQ(r.records[0].q2i->generated_question, "Designed: make one for 12");
    EXPECT_EQ(r.records[1].correct, false);
    EXPECT_TRUE(r.records[1].q2i->failed_generation);
    EXPECT_EQ(r.records[1].note, "failed-generation");
    EXPECT_EQ(r.summary.n_correct, 1u);

    opts.q2i_correctness = Q2ICorrectness::self;
    EXPECT_EQ(run_eval(gw, model("self"), items, Variant::q2i, "d", opts).summary.n_correct, 0u);

    opts.checker.reset();
    EXPECT_THROW(run_eval(gw, model("self"), items, Variant::q2i, "d", opts), Error);
}

TEST(SolveRecords, RoundTripFile) {
    TempDir dir;
    SolveRecord a{"m", "i1", "i1", Variant::original, "Answer: ۱۲", std::string("12"), true, Grader::exact, "", {}};
    SolveRecord b{"m", "i2-q2i", "i2", Variant::q2i, "Q?", std::nullopt, std::nullopt, Grader::exact, "ungraded: x",
                  Q2IDetail{"Q?", false, true, false, "Answer: 1", "Answer: 2"}};
    std::vector<SolveRecord> recs = {a, b};
    save_records(recs, dir / "r.jsonl");
    EXPECT_EQ(load_records(dir / "r.jsonl"), recs);
}

TEST(Summarize, CountsGradedOnly) {
    std::vector<SolveRecord> recs(4);
    recs[0].correct = true;
    recs[1].correct = false;
    recs[2].correct = true;
    auto s = summarize("m", Variant::q2s, "d", recs);
    EXPECT_EQ(s.n_items, 3u);
    EXPECT_EQ(s.n_correct, 2u);
    EXPECT_DOUBLE_EQ(s.accuracy_percent, 66.67);
}
