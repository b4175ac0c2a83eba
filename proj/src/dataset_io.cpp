#include "deepq/dataset_io.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <fmt/format.h>

#include "deepq/error.hpp"
#include "deepq/hashing.hpp"
#include "deepq/text.hpp"

namespace fs = std::filesystem;

namespace deepq {

std::string_view to_string(AnswerKind kind) {
    switch (kind) {
        case AnswerKind::numeric: return "numeric";
        case AnswerKind::expression: return "expression";
        case AnswerKind::multiple_choice: return "multiple_choice";
        case AnswerKind::free_text: return "free_text";
    }
    return "numeric";
}

std::string_view to_string(DeepKind kind) { return kind == DeepKind::q2s ? "Q2S" : "Q2I"; }

std::string file_tag(DeepKind kind) { return kind == DeepKind::q2s ? "q2s" : "q2i"; }

std::optional<AnswerKind> parse_answer_kind(std::string_view s) {
    for (auto k : {AnswerKind::numeric, AnswerKind::expression, AnswerKind::multiple_choice,
                   AnswerKind::free_text}) {
        if (s == to_string(k)) return k;
    }
    return std::nullopt;
}

std::optional<DeepKind> parse_deep_kind(std::string_view s) {
    if (s == "Q2S" || s == "q2s") return DeepKind::q2s;
    if (s == "Q2I" || s == "q2i") return DeepKind::q2i;
    return std::nullopt;
}

namespace {

constexpr std::string_view kQaFields[] = {"id", "question", "answer", "answer_kind", "language", "domain"};
constexpr std::string_view kDeepFields[] = {"id",        "source_id", "kind",    "payload",
                                            "reference_answer", "prompt_id", "language"};

template <std::size_t N>
bool is_known(std::string_view key, const std::string_view (&fields)[N]) {
    return std::find(std::begin(fields), std::end(fields), key) != std::end(fields);
}

std::string required_string(const ordered_json& j, const char* field) {
    auto it = j.find(field);
    if (it == j.end()) {
        throw Error(ErrorCode::malformed_record, fmt::format("missing field '{}'", field));
    }
    if (!it->is_string()) {
        throw Error(ErrorCode::malformed_record, fmt::format("field '{}' must be a string", field));
    }
    return it->get<std::string>();
}

std::string nonblank_string(const ordered_json& j, const char* field) {
    std::string value = required_string(j, field);
    if (text::is_blank(value)) {
        throw Error(ErrorCode::malformed_record, fmt::format("field '{}' is blank", field));
    }
    return value;
}

std::string language_field(const ordered_json& j) {
    std::string lang = required_string(j, "language");
    if (!text::is_language_tag(lang)) {
        throw Error(ErrorCode::malformed_record, fmt::format("unrecognized language tag '{}'", lang));
    }
    return lang;
}

template <std::size_t N>
ordered_json collect_extra(const ordered_json& j, const std::string_view (&fields)[N]) {
    ordered_json extra = ordered_json::object();
    for (const auto& [key, value] : j.items()) {
        if (!is_known(key, fields)) extra[key] = value;
    }
    return extra;
}

void append_extra(ordered_json& out, const ordered_json& extra) {
    if (!extra.is_object()) return;
    for (const auto& [key, value] : extra.items()) out[key] = value;
}

template <typename Record, typename Parse>
std::vector<Record> load_records(const fs::path& path, Parse parse) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::file_missing, path.string());
    }
    std::vector<Record> out;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (text::is_blank(line)) continue;
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        } catch (const ordered_json::parse_error& e) {
            throw Error(ErrorCode::malformed_record,
                        fmt::format("{} line {}: invalid JSON ({})", path.string(), line_no, e.what()), line_no);
        }
        if (!j.is_object()) {
            throw Error(ErrorCode::malformed_record,
                        fmt::format("{} line {}: record is not an object", path.string(), line_no), line_no);
        }
        Record record;
        try {
            record = parse(j);
        } catch (const Error& e) {
            throw Error(ErrorCode::malformed_record, fmt::format("{} line {}: {}", path.string(), line_no, e.what()),
                        line_no);
        }
        if (!seen.insert(record.id).second) {
            throw Error(ErrorCode::duplicate_id,
                        fmt::format("{} line {}: duplicate id '{}'", path.string(), line_no, record.id), line_no);
        }
        out.push_back(std::move(record));
    }
    return out;
}

template <typename Record>
DatasetManifest save_records(std::span<const Record> items, const fs::path& path) {
    std::string body;
    std::unordered_set<std::string> seen;
    std::string language;
    for (const auto& item : items) {
        if (!seen.insert(item.id).second) {
            throw Error(ErrorCode::duplicate_id, fmt::format("duplicate id '{}'", item.id));
        }
        if (language.empty()) {
            language = item.language;
        } else if (language != item.language) {
            language = "mixed";
        }
        body += to_json(item).dump(-1, ' ', false, ordered_json::error_handler_t::strict);
        body += '\n';
    }

    std::error_code ec;
    if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out || !out.write(body.data(), static_cast<std::streamsize>(body.size()))) {
            throw Error(ErrorCode::io_failure, fmt::format("cannot write {}", path.string()));
        }
    }

    DatasetManifest manifest{
        .name = path.stem().string(),
        .item_count = items.size(),
        .language = language,
        .source_path = path.string(),
        .checksum = "sha256:" + sha256_hex(body),
    };
    std::ofstream mout(manifest_path_for(path), std::ios::binary | std::ios::trunc);
    if (!mout || !(mout << to_json(manifest).dump(2) << '\n')) {
        throw Error(ErrorCode::io_failure, fmt::format("cannot write manifest for {}", path.string()));
    }
    return manifest;
}

}  // namespace

ordered_json to_json(const QAItem& item) {
    ordered_json j;
    j["id"] = item.id;
    j["question"] = item.question;
    j["answer"] = item.answer;
    j["answer_kind"] = std::string(to_string(item.answer_kind));
    j["language"] = item.language;
    j["domain"] = item.domain;
    append_extra(j, item.extra);
    return j;
}

ordered_json to_json(const DeepItem& item) {
    ordered_json j;
    j["id"] = item.id;
    j["source_id"] = item.source_id;
    j["kind"] = std::string(to_string(item.kind));
    j["payload"] = item.payload;
    j["reference_answer"] = item.reference_answer;
    j["prompt_id"] = item.prompt_id;
    j["language"] = item.language;
    append_extra(j, item.extra);
    return j;
}

ordered_json to_json(const DatasetManifest& m) {
    ordered_json j;
    j["name"] = m.name;
    j["item_count"] = m.item_count;
    j["language"] = m.language;
    j["source_path"] = m.source_path;
    j["checksum"] = m.checksum;
    return j;
}

QAItem qa_item_from_json(const ordered_json& j) {
    QAItem item;
    item.id = nonblank_string(j, "id");
    item.question = nonblank_string(j, "question");
    item.answer = nonblank_string(j, "answer");
    auto kind = parse_answer_kind(required_string(j, "answer_kind"));
    if (!kind) {
        throw Error(ErrorCode::malformed_record, "answer_kind must be one of numeric, expression, "
                                                 "multiple_choice, free_text");
    }
    item.answer_kind = *kind;
    item.language = language_field(j);
    if (j.contains("domain")) item.domain = required_string(j, "domain");
    item.extra = collect_extra(j, kQaFields);
    return item;
}

DeepItem deep_item_from_json(const ordered_json& j) {
    DeepItem item;
    item.id = nonblank_string(j, "id");
    item.source_id = nonblank_string(j, "source_id");
    auto kind = parse_deep_kind(required_string(j, "kind"));
    if (!kind) {
        throw Error(ErrorCode::malformed_record, "kind must be Q2S or Q2I");
    }
    item.kind = *kind;
    item.payload = nonblank_string(j, "payload");
    item.reference_answer = nonblank_string(j, "reference_answer");
    item.prompt_id = required_string(j, "prompt_id");
    item.language = language_field(j);
    item.extra = collect_extra(j, kDeepFields);
    return item;
}

std::vector<QAItem> load_dataset(const fs::path& path) {
    return load_records<QAItem>(path, qa_item_from_json);
}

std::vector<DeepItem> load_deep_items(const fs::path& path) {
    return load_records<DeepItem>(path, deep_item_from_json);
}

bool is_deep_item_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::file_missing, path.string());
    }
    std::string line;
    while (std::getline(in, line)) {
        if (text::is_blank(line)) continue;
        auto j = ordered_json::parse(line, nullptr, false);
        return j.is_object() && j.contains("payload") && j.contains("source_id");
    }
    return false;
}

std::vector<QAItem> sample_batch(std::span<const QAItem> items, std::size_t size, std::uint64_t seed) {
    if (size < 1 || size > items.size()) {
        throw Error(ErrorCode::size_out_of_range,
                    fmt::format("batch size {} outside [1, {}]", size, items.size()));
    }
    std::mt19937_64 rng(seed);
    std::vector<QAItem> out;
    out.reserve(size);
    // Selection sampling over a forward range keeps source order.
    std::sample(items.begin(), items.end(), std::back_inserter(out), size, rng);
    return out;
}

DatasetManifest save_items(std::span<const QAItem> items, const fs::path& path) {
    return save_records(items, path);
}

DatasetManifest save_items(std::span<const DeepItem> items, const fs::path& path) {
    return save_records(items, path);
}

fs::path manifest_path_for(const fs::path& path) {
    fs::path out = path;
    out.replace_extension(".manifest");
    return out;
}

DatasetManifest read_manifest(const fs::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) {
        throw Error(ErrorCode::file_missing, manifest_path.string());
    }
    try {
        auto j = ordered_json::parse(in);
        return DatasetManifest{
            .name = j.at("name").get<std::string>(),
            .item_count = j.at("item_count").get<std::size_t>(),
            .language = j.at("language").get<std::string>(),
            .source_path = j.at("source_path").get<std::string>(),
            .checksum = j.at("checksum").get<std::string>(),
        };
    } catch (const ordered_json::exception& e) {
        throw Error(ErrorCode::malformed_record, fmt::format("{}: {}", manifest_path.string(), e.what()));
    }
}

void verify_manifest(const DatasetManifest& manifest) {
    std::string actual = "sha256:" + sha256_file_hex(manifest.source_path);
    if (actual != manifest.checksum) {
        throw Error(ErrorCode::checksum_mismatch,
                    fmt::format("{}: expected {}, found {}", manifest.source_path, manifest.checksum, actual));
    }
    std::ifstream in(manifest.source_path, std::ios::binary);
    std::size_t records = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (!text::is_blank(line)) ++records;
    }
    if (records != manifest.item_count) {
        throw Error(ErrorCode::checksum_mismatch, fmt::format("{}: manifest lists {} records, file has {}",
                                                              manifest.source_path, manifest.item_count, records));
    }
}

void validate_deep_items(std::span<const DeepItem> deep, std::span<const QAItem> sources) {
    std::unordered_map<std::string_view, std::size_t> count;
    std::unordered_map<std::string_view, const QAItem*> by_id;
    for (const auto& s : sources) {
        ++count[s.id];
        by_id[s.id] = &s;
    }
    for (const auto& d : deep) {
        auto it = count.find(d.source_id);
        if (it == count.end() || it->second != 1) {
            throw Error(ErrorCode::precondition,
                        fmt::format("deep item '{}' does not resolve to exactly one source '{}'", d.id, d.source_id));
        }
        const QAItem& src = *by_id.at(d.source_id);
        if (d.reference_answer != src.answer) {
            throw Error(ErrorCode::precondition,
                        fmt::format("deep item '{}' reference answer differs from source '{}'", d.id, src.id));
        }
        if (text::is_blank(d.payload) || d.payload == src.question) {
            throw Error(ErrorCode::precondition, fmt::format("deep item '{}' payload is blank or unchanged", d.id));
        }
    }
}

}  // namespace deepq
