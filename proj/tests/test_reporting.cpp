#include <gtest/gtest.h>

#include <regex>

#include "deepq/error.hpp"
#include "deepq/reporting.hpp"
#include "support.hpp"

using namespace deepq;
using namespace deepq::testing;

namespace {

AccuracySummary summary(std::string model, Variant v, std::string dataset, std::size_t correct, std::size_t n = 60) {
    return AccuracySummary{std::move(model), v, std::move(dataset), n, correct, percent_2dp(correct, n)};
}

std::vector<double> bar_heights(const std::string& svg, const std::string& cls) {
    std::regex re("class=\"bar " + cls + "\"[^>]*height=\"([0-9.]+)\"");
    std::vector<double> out;
    for (std::sregex_iterator it(svg.begin(), svg.end(), re), end; it != end; ++it) out.push_back(std::stod((*it)[1]));
    return out;
}

}  // namespace

TEST(AccuracyTable, ThreeModelsThreeVariantsTwoLanguages) {
    std::vector<AccuracySummary> s;
    std::size_t k = 0;
    for (std::string m : {"gpt-4.1", "o4-mini", "llama"}) {
        for (auto v : {Variant::original, Variant::q2s, Variant::q2i}) {
            s.push_back(summary(m, v, "physics", 50 - k));
            s.push_back(summary(m, v, "physics-en", 45 - k));
            ++k;
        }
    }
    auto t = accuracy_table(s);
    ASSERT_EQ(t.rows.size(), 3u);
    ASSERT_EQ(t.column_labels.size(), 6u);
    EXPECT_EQ(t.column_labels, (std::vector<std::string>{"gpt-4.1", "gpt-4.1-Trans", "o4-mini", "o4-mini-Trans",
                                                         "llama", "llama-Trans"}));
    EXPECT_EQ(t.cells[0][0], percent_2dp(50, 60));
    EXPECT_EQ(t.cells[2][5], percent_2dp(45 - 8, 60));

    auto md = render_markdown(t);
    EXPECT_NE(md.find("| Models | gpt-4.1 | gpt-4.1-Trans |"), std::string::npos);
    EXPECT_NE(md.find("| Original | 83.33% |"), std::string::npos);
}

TEST(AccuracyTable, SingleSummary) {
    std::vector<AccuracySummary> s = {summary("m", Variant::original, "gsm8k", 58)};
    auto t = accuracy_table(s);
    ASSERT_EQ(t.rows.size(), 1u);
    ASSERT_EQ(t.column_labels.size(), 1u);
    EXPECT_EQ(t.cells[0][0], 96.67);
    EXPECT_EQ(render_csv(t), "Models,m\nOriginal,96.67%\n");
}

TEST(AccuracyTable, DuplicateCellRejected) {
    std::vector<AccuracySummary> s = {summary("m", Variant::q2s, "d", 1), summary("m", Variant::q2s, "d", 2)};
    try {
        accuracy_table(s);
        FAIL() << "expected duplicate_cell";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::duplicate_cell);
    }
}

TEST(AccuracyTable, MissingCellsRenderAsDash) {
    std::vector<AccuracySummary> s = {summary("a", Variant::original, "d", 30), summary("b", Variant::q2s, "d", 20)};
    auto t = accuracy_table(s);
    EXPECT_FALSE(t.cells[0][1].has_value());
    auto md = render_markdown(t);
    EXPECT_NE(md.find("| Original | 50.00% | — |"), std::string::npos);
    EXPECT_NE(md.find("| Q2S | — | 33.33% |"), std::string::npos);
}

TEST(AccuracyTable, ExplicitLayoutOrdersColumns) {
    std::vector<AccuracySummary> s = {summary("a", Variant::original, "d-fa", 30), summary("a", Variant::original, "d", 20),
                                      summary("a", Variant::original, "d-de", 10)};
    auto t = accuracy_table(s, TableLayout{{"a"}, {"d", "d-fa", "d-de"}});
    EXPECT_EQ(t.column_labels, (std::vector<std::string>{"a", "a-Trans-d-fa", "a-Trans-d-de"}));
    EXPECT_EQ(t.cells[0][0], percent_2dp(20, 60));
}

TEST(AccuracyCsv, RoundTrip) {
    std::vector<AccuracySummary> s = {summary("gpt,4", Variant::original, "gsm8k", 58),
                                      summary("o4-mini", Variant::q2i, "physics-fa", 12, 33)};
    auto csv = accuracy_csv(s);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "model,dataset,variant,n,correct,accuracy");
    EXPECT_EQ(parse_accuracy_csv(csv), s);
    EXPECT_THROW(parse_accuracy_csv("model,dataset,variant,n,correct,accuracy\nx,y\n"), Error);
}

TEST(Hierarchy, HoldsAndViolated) {
    std::vector<AccuracySummary> s = {
        summary("good", Variant::original, "d", 50), summary("good", Variant::q2s, "d", 40),
        summary("good", Variant::q2i, "d", 30),      summary("bad", Variant::original, "d", 40),
        summary("bad", Variant::q2s, "d", 45),       summary("bad", Variant::q2i, "d", 10),
        summary("part", Variant::original, "d", 10),
    };
    auto checks = hierarchy_checks(accuracy_table(s));
    ASSERT_EQ(checks.size(), 3u);
    EXPECT_TRUE(checks[0].complete && checks[0].holds);
    EXPECT_TRUE(checks[1].complete);
    EXPECT_FALSE(checks[1].holds);
    EXPECT_FALSE(checks[2].complete);
    auto md = render_hierarchy_markdown(checks);
    EXPECT_NE(md.find("| good | holds |"), std::string::npos);
    EXPECT_NE(md.find("| bad | VIOLATED |"), std::string::npos);
    EXPECT_NE(md.find("| part | incomplete |"), std::string::npos);
}

TEST(WinRateChart, FiveGroupsProportionalBars) {
    std::vector<WinRateSummary> s;
    for (const auto& c : default_criteria()) {
        WinRateSummary w;
        w.criterion = c.key;
        w.n_pairs = 100;
        w.original_wins = 10;
        w.generated_wins = 60;
        w.ties = 30;
        s.push_back(w);
    }
    auto svg = winrate_chart_svg(s, "Q2I vs original");
    std::regex group("<g class=\"criterion\"");
    EXPECT_EQ(std::distance(std::sregex_iterator(svg.begin(), svg.end(), group), std::sregex_iterator()), 5);
    auto gen = bar_heights(svg, "generated");
    auto tie = bar_heights(svg, "tie");
    auto orig = bar_heights(svg, "original");
    ASSERT_EQ(gen.size(), 5u);
    ASSERT_EQ(tie.size(), 5u);
    ASSERT_EQ(orig.size(), 5u);
    for (std::size_t i = 0; i < 5; ++i) {
        EXPECT_NEAR(gen[i] / orig[i], 6.0, 1e-6);
        EXPECT_NEAR(tie[i] / orig[i], 3.0, 1e-6);
    }
    EXPECT_NE(svg.find("<title>Q2I vs original</title>"), std::string::npos);
}

TEST(WinRateChart, EmptyInputIsPrecondition) {
    try {
        winrate_chart_svg({}, "x");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::precondition);
    }
}

TEST(WinRateCsv, OneRowPerModelCriterion) {
    WinRateSummary w{"reasoning_demand", 30, 6, 18, 6, 20.0, 60.0, 20.0};
    auto csv = winrate_csv({{"m1", {w}}, {"m2", {w}}});
    EXPECT_NE(csv.find("m1,reasoning_demand,30,6,18,6,20.00,60.00,20.00\n"), std::string::npos);
    EXPECT_NE(csv.find("m2,reasoning_demand"), std::string::npos);
}

TEST(Manifest, CompletedRun) {
    TempDir dir;
    RunManifest m;
    m.run_id = "r1";
    m.datasets.push_back(DatasetManifest{"gsm8k", 60, "en", "data/original.en.jsonl", "sha256:ab"});
    m.models.push_back(model("solver"));
    AcceptedPrompt p;
    p.id = "q2s-1";
    p.approval = Approval::approved;
    p.approver = Approver::human;
    p.score = 9;
    m.prompts.push_back(p);
    m.seeds["forge.q2s"] = 42;
    m.skips["transform.q2s"] = {SkipEntry{"i3", "refused"}};
    write_run_manifest(m, dir / "manifest.json");
    auto j = ordered_json::parse(read_file(dir / "manifest.json"));
    EXPECT_EQ(j["status"], "completed");
    EXPECT_TRUE(j["abort_stage"].is_null());
    EXPECT_EQ(j["datasets"][0]["item_count"], 60);
    EXPECT_EQ(j["models"][0]["model_name"], "solver");
    EXPECT_EQ(j["prompts"][0]["approver"], "human");
    EXPECT_EQ(j["seeds"]["forge.q2s"], 42);
    EXPECT_EQ(j["skips"]["transform.q2s"][0]["reason"], "refused");
    EXPECT_EQ(j["prompts"][0].count("text"), 0u);
}

TEST(Manifest, AbortedRun) {
    RunManifest m;
    m.run_id = "r2";
    m.status = "aborted";
    m.abort_stage = "transform";
    m.abort_reason = "skip_ceiling: 15 of 60 items skipped";
    auto j = to_json(m);
    EXPECT_EQ(j["status"], "aborted");
    EXPECT_EQ(j["abort_stage"], "transform");
    EXPECT_EQ(j["abort_reason"], "skip_ceiling: 15 of 60 items skipped");
}
