#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace deepq {

using ordered_json = nlohmann::ordered_json;

enum class AnswerKind { numeric, expression, multiple_choice, free_text };
enum class DeepKind { q2s, q2i };

std::string_view to_string(AnswerKind kind);
std::string_view to_string(DeepKind kind);
std::optional<AnswerKind> parse_answer_kind(std::string_view s);
// Accepts "Q2S"/"q2s" and "Q2I"/"q2i".
std::optional<DeepKind> parse_deep_kind(std::string_view s);
// Lowercase form used in file names: "q2s", "q2i".
std::string file_tag(DeepKind kind);

struct QAItem {
    std::string id;
    std::string question;
    std::string answer;
    AnswerKind answer_kind = AnswerKind::numeric;
    std::string language;
    std::string domain;
    // Fields not listed above, kept in their original order.
    ordered_json extra = ordered_json::object();

    bool operator==(const QAItem&) const = default;
};

struct DeepItem {
    std::string id;
    std::string source_id;
    DeepKind kind = DeepKind::q2s;
    std::string payload;
    std::string reference_answer;
    std::string prompt_id;
    std::string language;
    ordered_json extra = ordered_json::object();

    bool operator==(const DeepItem&) const = default;
};

struct DatasetManifest {
    std::string name;
    std::size_t item_count = 0;
    std::string language;
    std::string source_path;
    std::string checksum;  // "sha256:<hex>" over the record file bytes

    bool operator==(const DatasetManifest&) const = default;
};

ordered_json to_json(const QAItem& item);
ordered_json to_json(const DeepItem& item);
ordered_json to_json(const DatasetManifest& manifest);

// Throw Error{malformed_record} on missing or mistyped fields.
QAItem qa_item_from_json(const ordered_json& j);
DeepItem deep_item_from_json(const ordered_json& j);

std::vector<QAItem> load_dataset(const std::filesystem::path& path);
std::vector<DeepItem> load_deep_items(const std::filesystem::path& path);

// True when the first record of the file looks like a DeepItem.
bool is_deep_item_file(const std::filesystem::path& path);

// Deterministic for a fixed seed; no repetition; source order preserved.
std::vector<QAItem> sample_batch(std::span<const QAItem> items, std::size_t size, std::uint64_t seed);

// Writes one record per line plus `<stem>.manifest` next to the file.
DatasetManifest save_items(std::span<const QAItem> items, const std::filesystem::path& path);
DatasetManifest save_items(std::span<const DeepItem> items, const std::filesystem::path& path);

std::filesystem::path manifest_path_for(const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& manifest_path);
// Recomputes the checksum and record count of the file the manifest describes.
void verify_manifest(const DatasetManifest& manifest);

// DeepItem invariants against the source corpus: source_id resolves to exactly
// one source, reference answers are byte-identical, payload is nonempty and
// differs from the source question.
void validate_deep_items(std::span<const DeepItem> deep, std::span<const QAItem> sources);

}  // namespace deepq
