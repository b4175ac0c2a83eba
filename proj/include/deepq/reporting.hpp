#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "deepq/dataset_io.hpp"
#include "deepq/eval_harness.hpp"
#include "deepq/judge.hpp"
#include "deepq/llm_gateway.hpp"
#include "deepq/prompt_forge.hpp"
#include "deepq/transformer.hpp"

namespace deepq {

// Columns are models x datasets; the first dataset is the base one and the
// rest are translations. Empty lists are filled from the summaries in order
// of first appearance.
struct TableLayout {
    std::vector<std::string> models;
    std::vector<std::string> datasets;
};

struct AccuracyTable {
    std::vector<Variant> rows;
    std::vector<std::string> column_labels;
    std::vector<std::vector<std::optional<double>>> cells;  // [row][column]
};

// Throws duplicate_cell when two summaries land in the same cell.
AccuracyTable accuracy_table(std::span<const AccuracySummary> summaries, const TableLayout& layout = {});

std::string row_label(Variant v);
std::string format_percent(double value);  // "96.67%"

std::string render_markdown(const AccuracyTable& table);
std::string render_csv(const AccuracyTable& table);

// Long form, one row per summary: model,dataset,variant,n,correct,accuracy
std::string accuracy_csv(std::span<const AccuracySummary> summaries);
std::vector<AccuracySummary> parse_accuracy_csv(std::string_view csv);

struct HierarchyCheck {
    std::string column;
    std::optional<double> original;
    std::optional<double> q2s;
    std::optional<double> q2i;
    bool complete = false;
    bool holds = false;  // original >= q2s >= q2i
};

std::vector<HierarchyCheck> hierarchy_checks(const AccuracyTable& table);
std::string render_hierarchy_markdown(std::span<const HierarchyCheck> checks);

std::string winrate_csv(const std::map<std::string, std::vector<WinRateSummary>>& by_model);

// Grouped bars (original / generated / tie) per criterion, heights
// proportional to counts. Throws precondition on empty input.
std::string winrate_chart_svg(std::span<const WinRateSummary> summaries, std::string_view title);
void write_winrate_chart(std::span<const WinRateSummary> summaries, std::string_view title,
                         const std::filesystem::path& path);

struct RunManifest {
    std::string run_id;
    std::string status = "completed";  // or "aborted"
    std::optional<std::string> abort_stage;
    std::string abort_reason;
    std::vector<DatasetManifest> datasets;
    std::vector<ModelSpec> models;
    std::vector<AcceptedPrompt> prompts;
    ordered_json seeds = ordered_json::object();
    std::map<std::string, std::vector<SkipEntry>> skips;
    ordered_json config = ordered_json::object();
};

ordered_json to_json(const RunManifest& m);
void write_run_manifest(const RunManifest& m, const std::filesystem::path& path);

// Writes `content` to `path`, creating parent directories.
void write_text_file(const std::filesystem::path& path, std::string_view content);

}  // namespace deepq
