#include "deepq/reporting.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "deepq/error.hpp"
#include "deepq/text.hpp"

namespace fs = std::filesystem;

namespace deepq {

namespace {

std::string csv_field(std::string_view s) {
    if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::vector<std::vector<std::string>> parse_csv(std::string_view csv) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false;
    bool any = false;
    for (std::size_t i = 0; i < csv.size(); ++i) {
        char c = csv[i];
        if (quoted) {
            if (c == '"' && i + 1 < csv.size() && csv[i + 1] == '"') {
                field += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                field += c;
            }
            continue;
        }
        if (c == '"') {
            quoted = true;
            any = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
            any = true;
        } else if (c == '\n') {
            row.push_back(std::move(field));
            field.clear();
            rows.push_back(std::move(row));
            row.clear();
            any = false;
        } else if (c != '\r') {
            field += c;
            any = true;
        }
    }
    if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string xml_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

template <typename T>
void append_unique(std::vector<T>& v, const T& x) {
    if (std::find(v.begin(), v.end(), x) == v.end()) v.push_back(x);
}

}  // namespace

std::string row_label(Variant v) {
    switch (v) {
        case Variant::original: return "Original";
        case Variant::q2s: return "Q2S";
        case Variant::q2i: return "Q2I";
    }
    return "Original";
}

std::string format_percent(double value) { return fmt::format("{:.2f}%", value); }

AccuracyTable accuracy_table(std::span<const AccuracySummary> summaries, const TableLayout& layout) {
    std::vector<std::string> models = layout.models;
    std::vector<std::string> datasets = layout.datasets;
    if (models.empty()) {
        for (const auto& s : summaries) append_unique(models, s.model_name);
    }
    if (datasets.empty()) {
        for (const auto& s : summaries) append_unique(datasets, s.dataset_name);
    }

    AccuracyTable table;
    for (auto v : {Variant::original, Variant::q2s, Variant::q2i}) {
        if (std::any_of(summaries.begin(), summaries.end(), [v](const auto& s) { return s.variant == v; })) {
            table.rows.push_back(v);
        }
    }
    for (const auto& m : models) {
        for (std::size_t d = 0; d < datasets.size(); ++d) {
            std::string label = m;
            if (d > 0) label += datasets.size() == 2 ? "-Trans" : "-Trans-" + datasets[d];
            table.column_labels.push_back(label);
        }
    }
    table.cells.assign(table.rows.size(), std::vector<std::optional<double>>(table.column_labels.size()));

    for (const auto& s : summaries) {
        auto row = std::find(table.rows.begin(), table.rows.end(), s.variant) - table.rows.begin();
        auto mi = std::find(models.begin(), models.end(), s.model_name) - models.begin();
        auto di = std::find(datasets.begin(), datasets.end(), s.dataset_name) - datasets.begin();
        if (mi == static_cast<std::ptrdiff_t>(models.size()) || di == static_cast<std::ptrdiff_t>(datasets.size())) {
            continue;
        }
        auto col = static_cast<std::size_t>(mi) * datasets.size() + static_cast<std::size_t>(di);
        auto& cell = table.cells[static_cast<std::size_t>(row)][col];
        if (cell) {
            throw Error(ErrorCode::duplicate_cell,
                        fmt::format("two summaries for ({}, {})", row_label(s.variant), table.column_labels[col]));
        }
        cell = s.accuracy_percent;
    }
    return table;
}

std::string render_markdown(const AccuracyTable& table) {
    std::string out = "| Models |";
    for (const auto& c : table.column_labels) out += " " + c + " |";
    out += "\n|---|";
    for (std::size_t i = 0; i < table.column_labels.size(); ++i) out += "---|";
    out += "\n";
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        out += "| " + row_label(table.rows[r]) + " |";
        for (const auto& cell : table.cells[r]) out += " " + (cell ? format_percent(*cell) : std::string("—")) + " |";
        out += "\n";
    }
    return out;
}

std::string render_csv(const AccuracyTable& table) {
    std::string out = "Models";
    for (const auto& c : table.column_labels) out += "," + csv_field(c);
    out += "\n";
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        out += row_label(table.rows[r]);
        for (const auto& cell : table.cells[r]) out += "," + (cell ? format_percent(*cell) : std::string("—"));
        out += "\n";
    }
    return out;
}

std::string accuracy_csv(std::span<const AccuracySummary> summaries) {
    std::string out = "model,dataset,variant,n,correct,accuracy\n";
    for (const auto& s : summaries) {
        out += fmt::format("{},{},{},{},{},{:.2f}\n", csv_field(s.model_name), csv_field(s.dataset_name),
                           to_string(s.variant), s.n_items, s.n_correct, s.accuracy_percent);
    }
    return out;
}

std::vector<AccuracySummary> parse_accuracy_csv(std::string_view csv) {
    auto rows = parse_csv(csv);
    std::vector<AccuracySummary> out;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.size() == 1 && r[0].empty()) continue;
        if (r.size() != 6) {
            throw Error(ErrorCode::malformed_record, fmt::format("accuracy csv row {} has {} fields", i + 1, r.size()));
        }
        auto variant = parse_variant(r[2]);
        if (!variant) throw Error(ErrorCode::malformed_record, fmt::format("accuracy csv row {}: bad variant", i + 1));
        out.push_back(AccuracySummary{r[0], *variant, r[1], std::stoul(r[3]), std::stoul(r[4]), std::stod(r[5])});
    }
    return out;
}

std::vector<HierarchyCheck> hierarchy_checks(const AccuracyTable& table) {
    std::vector<HierarchyCheck> out;
    for (std::size_t c = 0; c < table.column_labels.size(); ++c) {
        HierarchyCheck h;
        h.column = table.column_labels[c];
        for (std::size_t r = 0; r < table.rows.size(); ++r) {
            const auto& cell = table.cells[r][c];
            switch (table.rows[r]) {
                case Variant::original: h.original = cell; break;
                case Variant::q2s: h.q2s = cell; break;
                case Variant::q2i: h.q2i = cell; break;
            }
        }
        h.complete = h.original && h.q2s && h.q2i;
        h.holds = h.complete && *h.original >= *h.q2s && *h.q2s >= *h.q2i;
        out.push_back(h);
    }
    return out;
}

std::string render_hierarchy_markdown(std::span<const HierarchyCheck> checks) {
    std::string out = "| Column | Original ≥ Q2S ≥ Q2I |\n|---|---|\n";
    for (const auto& h : checks) {
        std::string verdict = !h.complete ? "incomplete" : h.holds ? "holds" : "VIOLATED";
        out += fmt::format("| {} | {} |\n", h.column, verdict);
    }
    return out;
}

std::string winrate_csv(const std::map<std::string, std::vector<WinRateSummary>>& by_model) {
    std::string out =
        "model,criterion,n_pairs,original_wins,generated_wins,ties,original_win_rate,generated_win_rate,tie_rate\n";
    for (const auto& [model, summaries] : by_model) {
        for (const auto& s : summaries) {
            out += fmt::format("{},{},{},{},{},{},{:.2f},{:.2f},{:.2f}\n", csv_field(model), csv_field(s.criterion),
                               s.n_pairs, s.original_wins, s.generated_wins, s.ties, s.original_win_rate,
                               s.generated_win_rate, s.tie_rate);
        }
    }
    return out;
}

std::string winrate_chart_svg(std::span<const WinRateSummary> summaries, std::string_view title) {
    if (summaries.empty()) {
        throw Error(ErrorCode::precondition, "win-rate chart needs at least one criterion");
    }
    constexpr double kPlotTop = 50.0;
    constexpr double kPlotHeight = 200.0;
    constexpr double kBarWidth = 28.0;
    constexpr double kGroupWidth = 130.0;
    constexpr double kLeft = 60.0;
    const double baseline = kPlotTop + kPlotHeight;
    const double width = kLeft + kGroupWidth * static_cast<double>(summaries.size()) + 20.0;
    const double height = baseline + 70.0;

    std::string svg = fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" viewBox=\"0 0 {:.0f} {:.0f}\" "
        "font-family=\"sans-serif\" font-size=\"11\">\n",
        width, height, width, height);
    svg += fmt::format("<title>{}</title>\n", xml_escape(title));
    svg += fmt::format("<text x=\"{:.0f}\" y=\"20\" font-size=\"14\" text-anchor=\"middle\">{}</text>\n", width / 2,
                       xml_escape(title));
    for (int pct = 0; pct <= 100; pct += 25) {
        double y = baseline - kPlotHeight * pct / 100.0;
        svg += fmt::format(
            "<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"#ddd\"/>"
            "<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"end\">{}%</text>\n",
            kLeft - 5, y, width - 10, y, kLeft - 8, y + 4, pct);
    }

    struct Series {
        const char* name;
        const char* color;
        std::size_t WinRateSummary::*count;
    };
    static constexpr Series kSeries[] = {
        {"original", "#4c72b0", &WinRateSummary::original_wins},
        {"generated", "#dd8452", &WinRateSummary::generated_wins},
        {"tie", "#8c8c8c", &WinRateSummary::ties},
    };

    for (std::size_t g = 0; g < summaries.size(); ++g) {
        const auto& s = summaries[g];
        double x0 = kLeft + kGroupWidth * static_cast<double>(g) + 15.0;
        svg += fmt::format("<g class=\"criterion\" data-criterion=\"{}\">\n", xml_escape(s.criterion));
        for (std::size_t k = 0; k < 3; ++k) {
            std::size_t count = s.*kSeries[k].count;
            double h = s.n_pairs == 0 ? 0.0 : kPlotHeight * static_cast<double>(count) / static_cast<double>(s.n_pairs);
            double x = x0 + static_cast<double>(k) * (kBarWidth + 4.0);
            svg += fmt::format(
                "  <rect class=\"bar {}\" x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"{}\">"
                "<title>{}: {} of {}</title></rect>\n",
                kSeries[k].name, x, baseline - h, kBarWidth, h, kSeries[k].color, kSeries[k].name, count, s.n_pairs);
        }
        svg += fmt::format("  <text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">{}</text>\n",
                           x0 + 1.5 * kBarWidth + 4.0, baseline + 16.0, xml_escape(s.criterion));
        svg += "</g>\n";
    }
    for (std::size_t k = 0; k < 3; ++k) {
        double x = kLeft + 110.0 * static_cast<double>(k);
        svg += fmt::format(
            "<rect class=\"legend\" x=\"{:.2f}\" y=\"{:.2f}\" width=\"10\" height=\"10\" fill=\"{}\"/>"
            "<text x=\"{:.2f}\" y=\"{:.2f}\">{}</text>\n",
            x, baseline + 40.0, kSeries[k].color, x + 14.0, baseline + 49.0, kSeries[k].name);
    }
    svg += "</svg>\n";
    return svg;
}

void write_winrate_chart(std::span<const WinRateSummary> summaries, std::string_view title, const fs::path& path) {
    write_text_file(path, winrate_chart_svg(summaries, title));
}

ordered_json to_json(const RunManifest& m) {
    ordered_json j;
    j["run_id"] = m.run_id;
    j["status"] = m.status;
    j["abort_stage"] = m.abort_stage ? ordered_json(*m.abort_stage) : ordered_json(nullptr);
    j["abort_reason"] = m.abort_reason;
    j["datasets"] = ordered_json::array();
    for (const auto& d : m.datasets) j["datasets"].push_back(to_json(d));
    j["models"] = ordered_json::array();
    for (const auto& s : m.models) {
        ordered_json model;
        model["model_name"] = s.model_name;
        model["provider_base_url"] = s.provider_base_url;
        model["api_key_ref"] = s.api_key_ref;
        model["role"] = std::string(to_string(s.role_tag));
        j["models"].push_back(std::move(model));
    }
    j["prompts"] = ordered_json::array();
    for (const auto& p : m.prompts) {
        ordered_json prompt;
        prompt["id"] = p.id;
        prompt["task_kind"] = std::string(to_string(p.task_kind));
        prompt["score"] = p.score;
        prompt["threshold"] = p.threshold;
        prompt["iterations_used"] = p.iterations_used;
        prompt["approval"] = std::string(to_string(p.approval));
        prompt["approver"] = p.approver ? ordered_json(std::string(to_string(*p.approver))) : ordered_json(nullptr);
        prompt["batch_seed"] = p.batch_seed;
        j["prompts"].push_back(std::move(prompt));
    }
    j["seeds"] = m.seeds;
    j["skips"] = ordered_json::object();
    for (const auto& [key, entries] : m.skips) {
        ordered_json list = ordered_json::array();
        for (const auto& e : entries) list.push_back({{"item_id", e.item_id}, {"reason", e.reason}});
        j["skips"][key] = std::move(list);
    }
    j["config"] = m.config;
    return j;
}

void write_run_manifest(const RunManifest& m, const fs::path& path) { write_text_file(path, to_json(m).dump(2) + "\n"); }

void write_text_file(const fs::path& path, std::string_view content) {
    std::error_code ec;
    if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out || !out.write(content.data(), static_cast<std::streamsize>(content.size()))) {
        throw Error(ErrorCode::io_failure, fmt::format("cannot write {}", path.string()));
    }
}

}  // namespace deepq
