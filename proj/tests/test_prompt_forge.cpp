#include <gtest/gtest.h>

#include <mutex>
#include <sstream>

#include "deepq/error.hpp"
#include "deepq/prompt_forge.hpp"
#include "support.hpp"

using namespace deepq;
using namespace deepq::testing;
using nlohmann::json;

namespace {

std::vector<QAItem> batch() {
    return {qa("g1", "Tom has 3 apples and buys 4 more. How many?", "7"),
            qa("g2", "A train travels 60 km in 1.5 hours. Speed in km/h?", "40")};
}

// Generator drafts "prompt v<n>"; evaluator scores from a script and says
// "feedback <n>" so each reply can be traced.
struct ForgeScript {
    std::vector<int> scores;
    std::size_t generated = 0;
    std::size_t evaluated = 0;
    std::mutex m;

    std::shared_ptr<ScriptedTransport> transport() {
        return std::make_shared<ScriptedTransport>([this](const json& body) {
            std::lock_guard lock(m);
            if (mock::model_of(body) == "gen") {
                ++generated;
                return mock::reply("prompt v" + std::to_string(generated));
            }
            int score = scores[std::min(evaluated, scores.size() - 1)];
            ++evaluated;
            return mock::reply(json{{"score", score}, {"feedback", "feedback " + std::to_string(evaluated)}}.dump());
        });
    }
};

ModelSpec gen() { return model("gen", Role::generator); }
ModelSpec evl() { return model("eval", Role::evaluator); }

}  // namespace

TEST(GeneratePrompt, PassThroughIterationOneScoreUnset) {
    auto t = ScriptedTransport::sequence({mock::reply("  Rewrite each question as a story.  ")});
    Gateway gw(t, fast_options());
    auto c = generate_prompt(gw, gen(), default_goal(DeepKind::q2s, "en"), batch());
    EXPECT_EQ(c.text, "Rewrite each question as a story.");
    EXPECT_EQ(c.iteration, 1);
    EXPECT_FALSE(c.score.has_value());
    auto user = mock::last_user_text(t->requests().at(0));
    EXPECT_NE(user.find("Tom has 3 apples"), std::string::npos);
    EXPECT_NE(user.find("40"), std::string::npos);
}

TEST(GeneratePrompt, FeedbackAndPreviousPromptAreSentVerbatim) {
    auto t = ScriptedTransport::sequence({mock::reply("v2")});
    Gateway gw(t, fast_options());
    generate_prompt(gw, gen(), default_goal(DeepKind::q2s, "en"), batch(), Revision{"the old prompt", "add distractors"},
                    2);
    auto user = mock::last_user_text(t->requests().at(0));
    EXPECT_NE(user.find("add distractors"), std::string::npos);
    EXPECT_NE(user.find("the old prompt"), std::string::npos);
}

TEST(GeneratePrompt, OutputLanguageDirective) {
    auto t = ScriptedTransport::sequence({mock::reply("p")});
    Gateway gw(t, fast_options());
    generate_prompt(gw, gen(), default_goal(DeepKind::q2s, "fa"), batch());
    EXPECT_NE(mock::all_text(t->requests().at(0)).find("All your answers must be in Persian"), std::string::npos);
}

TEST(GeneratePrompt, BlankOutputAndEmptyBatch) {
    auto t = ScriptedTransport::sequence({mock::reply("   \n")});
    Gateway gw(t, fast_options());
    try {
        generate_prompt(gw, gen(), default_goal(DeepKind::q2s, "en"), batch());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::empty_generation);
    }
    EXPECT_THROW(generate_prompt(gw, gen(), default_goal(DeepKind::q2s, "en"), {}), Error);
}

TEST(EvaluatePrompt, StructuredReply) {
    auto t = ScriptedTransport::sequence({mock::reply(R"({"score": 9, "feedback": "solid"})")});
    Gateway gw(t, fast_options());
    auto e = evaluate_prompt(gw, evl(), "criteria text", PromptCandidate{"p", 1, {}, {}});
    EXPECT_EQ(e.score, 9);
    EXPECT_EQ(e.feedback, "solid");
    auto body = t->requests().at(0);
    EXPECT_NE(mock::system_text(body).find("criteria text"), std::string::npos);
    EXPECT_NE(mock::last_user_text(body).find("p"), std::string::npos);
}

TEST(EvaluatePrompt, ScoreElevenThreeTimesIsUnparseable) {
    auto t = ScriptedTransport::sequence({mock::reply("score: eleven")});
    Gateway gw(t, fast_options());
    try {
        evaluate_prompt(gw, evl(), "c", PromptCandidate{"p", 1, {}, {}});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::unparseable_evaluation);
    }
    EXPECT_EQ(t->calls(), 3u);
}

TEST(EvaluatePrompt, RetryRequestsDifferSoTheCacheCannotReplayThem) {
    TempDir dir;
    auto t = ScriptedTransport::sequence({mock::reply("no idea"), mock::reply(R"({"score": 6, "feedback": "ok"})")});
    auto opts = fast_options();
    opts.cache_dir = dir.path();
    Gateway gw(t, opts);
    auto e = evaluate_prompt(gw, evl(), "c", PromptCandidate{"p", 1, {}, {}});
    EXPECT_EQ(e.score, 6);
    EXPECT_EQ(t->calls(), 2u);
}

TEST(ParseEvaluation, Variants) {
    auto prose = parse_evaluation("Overall this is decent.\n```json\n{\"score\": 7, \"feedback\": \"tighten wording\"}\n```");
    ASSERT_TRUE(prose);
    EXPECT_EQ(prose->score, 7);
    EXPECT_EQ(prose->feedback, "tighten wording");

    auto embedded = parse_evaluation("I would give \"score\": 7 because the distractors are weak.");
    ASSERT_TRUE(embedded);
    EXPECT_EQ(embedded->score, 7);
    EXPECT_FALSE(embedded->feedback.empty());

    auto lines = parse_evaluation("Score: 8/10\nFeedback: add a units check");
    ASSERT_TRUE(lines);
    EXPECT_EQ(lines->score, 8);
    EXPECT_EQ(lines->feedback, "add a units check");

    EXPECT_FALSE(parse_evaluation("score: eleven"));
    EXPECT_FALSE(parse_evaluation(R"({"score": 11})"));
    EXPECT_FALSE(parse_evaluation(R"({"score": -1})"));
    EXPECT_FALSE(parse_evaluation(R"({"score": 7.5})"));
    EXPECT_FALSE(parse_evaluation("looks great"));
    ASSERT_TRUE(parse_evaluation(R"({"score": "9"})"));
    EXPECT_EQ(parse_evaluation(R"({"score": 10, "feedback": ""})")->score, 10);
}

TEST(Forge, ScoresFiveSevenNineAcceptAtIterationThree) {
    ForgeScript script{{5, 7, 9}};
    auto t = script.transport();
    Gateway gw(t, fast_options());
    ForgeTranscript tr;
    auto p = forge(gw, gen(), evl(), default_goal(DeepKind::q2s, "en"), batch(), ForgeOptions{8, 10, 42}, tr);
    EXPECT_EQ(p.iterations_used, 3);
    EXPECT_EQ(p.score, 9);
    EXPECT_EQ(p.text, "prompt v3");
    EXPECT_EQ(p.approval, Approval::pending);
    EXPECT_EQ(p.batch_seed, 42u);
    EXPECT_EQ(p.batch_ids, (std::vector<std::string>{"g1", "g2"}));
    EXPECT_EQ(p.id.rfind("q2s-", 0), 0u);

    ASSERT_EQ(tr.entries.size(), 3u);
    EXPECT_EQ(tr.entries[0].score, 5);
    EXPECT_EQ(tr.entries[1].score, 7);
    EXPECT_EQ(tr.entries[2].score, 9);
    EXPECT_EQ(tr.outcome, "accepted");
    for (std::size_t i = 0; i < tr.entries.size(); ++i) EXPECT_EQ(tr.entries[i].iteration, static_cast<int>(i + 1));

    // Feedback of evaluation i is inside generation request i+1.
    std::vector<std::string> gen_requests;
    for (const auto& body : t->requests()) {
        if (mock::model_of(body) == "gen") gen_requests.push_back(mock::last_user_text(body));
    }
    ASSERT_EQ(gen_requests.size(), 3u);
    EXPECT_EQ(gen_requests[0].find("feedback"), gen_requests[0].find("feedback 1"));
    EXPECT_NE(gen_requests[1].find("feedback 1"), std::string::npos);
    EXPECT_NE(gen_requests[1].find("prompt v1"), std::string::npos);
    EXPECT_NE(gen_requests[2].find("feedback 2"), std::string::npos);
    EXPECT_NE(gen_requests[2].find("prompt v2"), std::string::npos);
}

TEST(Forge, ImmediateTen) {
    ForgeScript script{{10}};
    Gateway gw(script.transport(), fast_options());
    ForgeTranscript tr;
    auto p = forge(gw, gen(), evl(), default_goal(DeepKind::q2i, "en"), batch(), ForgeOptions{}, tr);
    EXPECT_EQ(p.iterations_used, 1);
    EXPECT_EQ(p.task_kind, DeepKind::q2i);
}

TEST(Forge, AlwaysFourIsNonConvergenceAfterExactlyTenEvaluations) {
    ForgeScript script{{4}};
    Gateway gw(script.transport(), fast_options());
    ForgeTranscript tr;
    try {
        forge(gw, gen(), evl(), default_goal(DeepKind::q2s, "en"), batch(), ForgeOptions{8, 10, 0}, tr);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::non_convergence);
    }
    EXPECT_EQ(script.evaluated, 10u);
    EXPECT_EQ(tr.entries.size(), 10u);
    EXPECT_EQ(tr.outcome, "non_convergence");
}

TEST(Forge, ValidatesOptionsAndGoal) {
    ForgeScript script{{9}};
    Gateway gw(script.transport(), fast_options());
    ForgeTranscript tr;
    auto goal = default_goal(DeepKind::q2s, "en");
    EXPECT_THROW(forge(gw, gen(), evl(), goal, batch(), ForgeOptions{11, 10, 0}, tr), Error);
    EXPECT_THROW(forge(gw, gen(), evl(), goal, batch(), ForgeOptions{0, 10, 0}, tr), Error);
    EXPECT_THROW(forge(gw, gen(), evl(), goal, batch(), ForgeOptions{8, 0, 0}, tr), Error);
    goal.evaluation_criteria = " ";
    EXPECT_THROW(forge(gw, gen(), evl(), goal, batch(), ForgeOptions{}, tr), Error);
    EXPECT_EQ(script.generated, 0u);
}

TEST(Forge, ThresholdIsInclusive) {
    ForgeScript script{{7, 8}};
    Gateway gw(script.transport(), fast_options());
    ForgeTranscript tr;
    auto p = forge(gw, gen(), evl(), default_goal(DeepKind::q2s, "en"), batch(), ForgeOptions{8, 5, 0}, tr);
    EXPECT_EQ(p.iterations_used, 2);
    EXPECT_EQ(p.score, 8);
}

TEST(ReviewGate, AutoApprove) {
    AcceptedPrompt p;
    p.id = "q2s-x";
    p.score = 9;
    std::istringstream in;
    std::ostringstream out;
    auto r = review_gate(p, ReviewMode::auto_approve, in, out);
    EXPECT_EQ(r.approval, Approval::approved);
    EXPECT_EQ(r.approver, Approver::automatic);
    EXPECT_TRUE(out.str().empty());
}

TEST(ReviewGate, InteractiveAnswers) {
    AcceptedPrompt p;
    p.text = "Rewrite as a story.";
    p.score = 9;
    {
        std::istringstream in("n\n");
        std::ostringstream out;
        auto r = review_gate(p, ReviewMode::interactive, in, out);
        EXPECT_EQ(r.approval, Approval::rejected);
        EXPECT_EQ(r.approver, Approver::human);
        EXPECT_NE(out.str().find("approve this prompt? [y/N]"), std::string::npos);
        EXPECT_NE(out.str().find("Rewrite as a story."), std::string::npos);
    }
    {
        std::istringstream in("Y\n");
        std::ostringstream out;
        EXPECT_EQ(review_gate(p, ReviewMode::interactive, in, out).approval, Approval::approved);
    }
    {
        std::istringstream in("");
        std::ostringstream out;
        EXPECT_EQ(review_gate(p, ReviewMode::interactive, in, out).approval, Approval::rejected);
    }
}

TEST(RequireUsable, PendingRejectedAndLowScoreRefused) {
    AcceptedPrompt p;
    p.score = 9;
    p.threshold = 8;
    EXPECT_THROW(require_usable(p), Error);
    p.approval = Approval::rejected;
    EXPECT_THROW(require_usable(p), Error);
    p.approval = Approval::approved;
    EXPECT_NO_THROW(require_usable(p));
    p.score = 7;
    EXPECT_THROW(require_usable(p), Error);
}

TEST(AcceptedPromptFile, RoundTrip) {
    TempDir dir;
    AcceptedPrompt p;
    p.id = "q2i-abc";
    p.text = "متن فارسی\nline two";
    p.task_kind = DeepKind::q2i;
    p.score = 9;
    p.iterations_used = 3;
    p.approval = Approval::approved;
    p.approver = Approver::human;
    p.batch_seed = 77;
    p.batch_ids = {"a", "b"};
    p.output_language = "fa";
    save_prompt(p, dir / "p.json");
    EXPECT_EQ(load_prompt(dir / "p.json"), p);
}

TEST(ReferencePrompt, ShippedQ2sPhysicsFixture) {
    auto text = read_file(std::filesystem::path(DEEPQ_SHARE_DIR) / "prompts" / "q2s_physics_reference.txt");
    EXPECT_NE(text.find("All your answers must be in Persian"), std::string::npos);
}
