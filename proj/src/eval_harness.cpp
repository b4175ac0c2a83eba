#include "deepq/eval_harness.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <unordered_map>

#include <fmt/format.h>

#include "deepq/error.hpp"
#include "deepq/parallel.hpp"
#include "deepq/text.hpp"

namespace fs = std::filesystem;

namespace deepq {

std::string_view to_string(Variant v) {
    switch (v) {
        case Variant::original: return "original";
        case Variant::q2s: return "q2s";
        case Variant::q2i: return "q2i";
    }
    return "original";
}

std::string_view to_string(Grader g) {
    switch (g) {
        case Grader::exact: return "exact";
        case Grader::tolerant_numeric: return "tolerant_numeric";
        case Grader::llm_fallback: return "llm_fallback";
    }
    return "exact";
}

std::string_view to_string(Q2ICorrectness c) {
    switch (c) {
        case Q2ICorrectness::checker: return "checker";
        case Q2ICorrectness::self: return "self";
        case Q2ICorrectness::both: return "both";
    }
    return "checker";
}

std::optional<Variant> parse_variant(std::string_view s) {
    for (auto v : {Variant::original, Variant::q2s, Variant::q2i}) {
        if (s == to_string(v)) return v;
    }
    return std::nullopt;
}

std::optional<Q2ICorrectness> parse_q2i_correctness(std::string_view s) {
    for (auto c : {Q2ICorrectness::checker, Q2ICorrectness::self, Q2ICorrectness::both}) {
        if (s == to_string(c)) return c;
    }
    return std::nullopt;
}

namespace {

constexpr int kGraderAttempts = 3;

bool is_ascii_alnum(char c) {
    auto u = static_cast<unsigned char>(c);
    return u < 0x80 && std::isalnum(u);
}

bool is_digit(char c) { return c >= '0' && c <= '9'; }

std::string first_nonblank_line(std::string_view s) {
    while (!s.empty()) {
        auto nl = s.find('\n');
        std::string_view line = s.substr(0, nl);
        if (!text::is_blank(line)) return std::string(text::trim(line));
        if (nl == std::string_view::npos) break;
        s.remove_prefix(nl + 1);
    }
    return {};
}

// Text after the last answer marker, limited to that line (or the next
// nonblank one when the marker ends its line).
std::optional<std::string> answer_region(const std::string& s) {
    std::string lower = text::to_lower_ascii(s);

    if (auto boxed = lower.rfind("\\boxed{"); boxed != std::string::npos) {
        std::size_t start = boxed + 7;
        int depth = 1;
        for (std::size_t i = start; i < s.size(); ++i) {
            if (s[i] == '{') ++depth;
            if (s[i] == '}' && --depth == 0) return s.substr(start, i - start);
        }
        return s.substr(start);
    }

    static const std::string_view kMarkers[] = {"answer:", "answer is", "####", "پاسخ:", "جواب:"};
    std::size_t best = std::string::npos;
    std::size_t best_len = 0;
    for (auto marker : kMarkers) {
        auto pos = lower.rfind(marker);
        if (pos != std::string::npos && (best == std::string::npos || pos > best)) {
            best = pos;
            best_len = marker.size();
        }
    }
    if (best == std::string::npos) return std::nullopt;
    std::string region = first_nonblank_line(std::string_view(s).substr(best + best_len));
    if (region.empty()) return std::nullopt;
    return region;
}

std::string canonical_number(std::string n) {
    n.erase(std::remove(n.begin(), n.end(), ','), n.end());
    bool negative = !n.empty() && n.front() == '-';
    if (negative || (!n.empty() && n.front() == '+')) n.erase(0, 1);
    std::string int_part = n;
    std::string frac;
    if (auto dot = n.find('.'); dot != std::string::npos) {
        int_part = n.substr(0, dot);
        frac = n.substr(dot + 1);
    }
    int_part.erase(0, std::min(int_part.find_first_not_of('0'), int_part.size()));
    if (int_part.empty()) int_part = "0";
    while (!frac.empty() && frac.back() == '0') frac.pop_back();
    std::string out = int_part;
    if (!frac.empty()) out += "." + frac;
    if (negative && out != "0") out = "-" + out;
    return out;
}

std::optional<std::string> last_number(const std::string& s) {
    static const std::regex kNumber(R"((^|[^0-9A-Za-z.])(-?)(\d{1,3}(?:,\d{3})+(?:\.\d+)?|\d+(?:\.\d+)?|\.\d+))");
    std::optional<std::string> last;
    for (auto it = std::sregex_iterator(s.begin(), s.end(), kNumber); it != std::sregex_iterator(); ++it) {
        last = canonical_number((*it)[2].str() + (*it)[3].str());
    }
    return last;
}

std::optional<std::string> last_option(const std::string& s, bool strict) {
    std::optional<std::string> letter;
    std::optional<std::string> digit;
    for (std::size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        bool upper = c >= 'A' && c <= 'E';
        bool lower = c >= 'a' && c <= 'e';
        bool num = c >= '1' && c <= '9';
        if (!upper && !lower && !num) continue;
        if (lower && strict) continue;
        char prev = i > 0 ? s[i - 1] : ' ';
        char next = i + 1 < s.size() ? s[i + 1] : ' ';
        if (is_ascii_alnum(prev) || is_ascii_alnum(next)) continue;
        if (num) {
            bool prev_numeric = (prev == '.' || prev == ',') && i >= 2 && is_digit(s[i - 2]);
            bool next_numeric = (next == '.' || next == ',') && i + 2 < s.size() && is_digit(s[i + 2]);
            if (prev_numeric || next_numeric) continue;
            digit = std::string(1, c);
            continue;
        }
        // "A car ..." reads as an article, not an option.
        if (strict && c == 'A' && next == ' ' && i + 2 < s.size() && s[i + 2] >= 'a' && s[i + 2] <= 'z') continue;
        letter = std::string(1, static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    }
    return letter ? letter : digit;
}

std::string strip_math_wrappers(std::string s) {
    s = text::collapse_whitespace(s);
    while (!s.empty() && (s.back() == '.' || s.back() == '$')) s.pop_back();
    while (!s.empty() && s.front() == '$') s.erase(0, 1);
    if (s.rfind("\\(", 0) == 0 && s.size() >= 4 && s.substr(s.size() - 2) == "\\)") {
        s = s.substr(2, s.size() - 4);
    }
    return std::string(text::trim(s));
}

std::optional<std::string> last_equation_line(const std::string& s) {
    std::optional<std::string> last;
    std::size_t start = 0;
    while (start <= s.size()) {
        auto nl = s.find('\n', start);
        std::string line = s.substr(start, nl == std::string::npos ? std::string::npos : nl - start);
        if (line.find('=') != std::string::npos) last = line;
        if (nl == std::string::npos) break;
        start = nl + 1;
    }
    return last;
}

std::string last_nonblank_line(const std::string& s) {
    std::string last;
    std::size_t start = 0;
    while (start <= s.size()) {
        auto nl = s.find('\n', start);
        std::string line = s.substr(start, nl == std::string::npos ? std::string::npos : nl - start);
        if (!text::is_blank(line)) last = line;
        if (nl == std::string::npos) break;
        start = nl + 1;
    }
    return last;
}

std::string normalize_expression(std::string_view s) {
    std::string out;
    for (char c : strip_math_wrappers(std::string(s))) {
        if (c == ' ' || c == '\t' || c == '$') continue;
        out.push_back(c);
    }
    return out;
}

std::string normalize_free_text(std::string_view s) {
    std::string out = text::to_lower_ascii(text::collapse_whitespace(s));
    while (!out.empty() && (out.back() == '.' || out.back() == '!')) out.pop_back();
    return out;
}

std::string normalize_reference(std::string_view reference, AnswerKind kind) {
    std::string ascii = text::to_ascii_digits(text::trim(reference));
    switch (kind) {
        case AnswerKind::numeric:
            if (auto n = last_number(ascii)) return *n;
            return ascii;
        case AnswerKind::multiple_choice: {
            std::string s = ascii;
            s.erase(std::remove_if(s.begin(), s.end(), [](char c) { return c == '(' || c == ')' || c == '.'; }),
                    s.end());
            s = std::string(text::trim(s));
            if (s.size() == 1) return std::string(1, static_cast<char>(std::toupper(static_cast<unsigned char>(s[0]))));
            if (auto o = last_option(ascii, false)) return *o;
            return ascii;
        }
        case AnswerKind::expression: return normalize_expression(ascii);
        case AnswerKind::free_text: return normalize_free_text(ascii);
    }
    return ascii;
}

std::optional<bool> parse_yes_no(std::string_view reply) {
    std::string lower = text::to_lower_ascii(text::trim(reply));
    static const std::regex kYes(R"(\byes\b)");
    static const std::regex kNo(R"(\bno\b)");
    bool yes = std::regex_search(lower, kYes);
    bool no = std::regex_search(lower, kNo);
    if (yes == no) return std::nullopt;
    return yes;
}

GradeOutcome ask_grader(Gateway& gateway, const ModelSpec& grader, std::string_view candidate,
                        std::string_view reference) {
    ChatRequest req;
    req.system_text = "You check whether two answers to the same problem agree. Reply with yes or no.";
    req.turns.push_back({"user", fmt::format("Reference answer:\n{}\n\nCandidate answer:\n{}\n\n"
                                             "Same final answer? yes/no",
                                             reference, candidate)});
    req.max_output_tokens = 16;
    req.request_tag = "grade:fallback";
    for (int attempt = 1; attempt <= kGraderAttempts; ++attempt) {
        ChatResponse response = gateway.call(grader, req);
        if (response.finish_state == FinishState::complete) {
            if (auto verdict = parse_yes_no(response.text)) {
                return GradeOutcome{*verdict, Grader::llm_fallback, false, ""};
            }
        }
        req.turns.push_back({"assistant", response.text});
        req.turns.push_back({"user", "Reply with exactly one word: yes or no."});
    }
    return GradeOutcome{false, Grader::llm_fallback, true, "grader verdict unparseable"};
}

}  // namespace

ordered_json to_json(const SolveRecord& r) {
    ordered_json j;
    j["model_name"] = r.model_name;
    j["item_id"] = r.item_id;
    j["source_id"] = r.source_id;
    j["variant"] = std::string(to_string(r.variant));
    j["raw_response"] = r.raw_response;
    j["extracted_answer"] = r.extracted_answer ? ordered_json(*r.extracted_answer) : ordered_json(nullptr);
    j["correct"] = r.correct ? ordered_json(*r.correct) : ordered_json(nullptr);
    j["grader"] = std::string(to_string(r.grader));
    j["note"] = r.note;
    if (r.q2i) {
        ordered_json q;
        q["generated_question"] = r.q2i->generated_question;
        q["failed_generation"] = r.q2i->failed_generation;
        q["checker_valid"] = r.q2i->checker_valid;
        q["self_valid"] = r.q2i->self_valid;
        q["checker_response"] = r.q2i->checker_response;
        q["self_response"] = r.q2i->self_response;
        j["q2i"] = std::move(q);
    }
    return j;
}

SolveRecord solve_record_from_json(const ordered_json& j) {
    try {
        SolveRecord r;
        r.model_name = j.at("model_name").get<std::string>();
        r.item_id = j.at("item_id").get<std::string>();
        r.source_id = j.value("source_id", "");
        auto variant = parse_variant(j.at("variant").get<std::string>());
        if (!variant) throw Error(ErrorCode::malformed_record, "bad variant");
        r.variant = *variant;
        r.raw_response = j.at("raw_response").get<std::string>();
        if (j.at("extracted_answer").is_string()) r.extracted_answer = j["extracted_answer"].get<std::string>();
        if (j.at("correct").is_boolean()) r.correct = j["correct"].get<bool>();
        std::string grader = j.at("grader").get<std::string>();
        r.grader = grader == "tolerant_numeric" ? Grader::tolerant_numeric
                   : grader == "llm_fallback"   ? Grader::llm_fallback
                                                : Grader::exact;
        r.note = j.value("note", "");
        if (j.contains("q2i") && j["q2i"].is_object()) {
            const auto& q = j["q2i"];
            r.q2i = Q2IDetail{q.at("generated_question").get<std::string>(), q.at("failed_generation").get<bool>(),
                              q.at("checker_valid").get<bool>(),         q.at("self_valid").get<bool>(),
                              q.value("checker_response", ""),             q.value("self_response", "")};
        }
        return r;
    } catch (const ordered_json::exception& e) {
        throw Error(ErrorCode::malformed_record, fmt::format("solve record: {}", e.what()));
    }
}

void save_records(std::span<const SolveRecord> records, const fs::path& path) {
    std::error_code ec;
    if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io_failure, fmt::format("cannot write {}", path.string()));
    for (const auto& r : records) out << to_json(r).dump() << '\n';
    if (!out) throw Error(ErrorCode::io_failure, fmt::format("cannot write {}", path.string()));
}

std::vector<SolveRecord> load_records(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::file_missing, path.string());
    std::vector<SolveRecord> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::is_blank(line)) continue;
        auto j = ordered_json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            throw Error(ErrorCode::malformed_record, fmt::format("{} line {}", path.string(), line_no), line_no);
        }
        out.push_back(solve_record_from_json(j));
    }
    return out;
}

double percent_2dp(std::size_t numerator, std::size_t denominator) {
    if (denominator == 0) return 0.0;
    // Integer rounding keeps values like 58/60 -> 96.67 exact.
    unsigned long long scaled = (20000ULL * numerator + denominator) / (2ULL * denominator);
    return static_cast<double>(scaled) / 100.0;
}

AccuracySummary summarize(std::string_view model_name, Variant variant, std::string_view dataset_name,
                          std::span<const SolveRecord> records) {
    AccuracySummary s;
    s.model_name = std::string(model_name);
    s.variant = variant;
    s.dataset_name = std::string(dataset_name);
    for (const auto& r : records) {
        if (!r.correct) continue;
        ++s.n_items;
        if (*r.correct) ++s.n_correct;
    }
    s.accuracy_percent = percent_2dp(s.n_correct, s.n_items);
    return s;
}

ChatResponse solve(Gateway& gateway, const ModelSpec& solver, std::string_view question_text, std::string_view tag) {
    if (text::is_blank(question_text)) {
        throw Error(ErrorCode::invalid_argument, "cannot solve an empty question");
    }
    ChatRequest req;
    req.system_text =
        "Solve the problem. Show your reasoning briefly, then end with a final line of the form "
        "'Answer: <final answer>'.";
    req.turns.push_back({"user", std::string(question_text)});
    req.max_output_tokens = 4096;
    req.request_tag = std::string(tag);
    return gateway.call(solver, req);
}

std::optional<std::string> extract_answer(std::string_view raw, AnswerKind kind) {
    const std::string normalized = text::to_ascii_digits(raw);
    const std::optional<std::string> region = answer_region(normalized);
    switch (kind) {
        case AnswerKind::numeric: return last_number(region ? *region : normalized);
        case AnswerKind::multiple_choice:
            return region ? last_option(*region, false) : last_option(normalized, true);
        case AnswerKind::expression: {
            std::optional<std::string> line = region ? region : last_equation_line(normalized);
            if (!line) return std::nullopt;
            std::string cleaned = strip_math_wrappers(*line);
            if (cleaned.empty()) return std::nullopt;
            return cleaned;
        }
        case AnswerKind::free_text: {
            std::string s = text::collapse_whitespace(region ? *region : last_nonblank_line(normalized));
            if (s.empty()) return std::nullopt;
            return s;
        }
    }
    return std::nullopt;
}

bool numbers_match(double a, double b, double rel_tol) {
    if (a == b) return true;
    return std::fabs(a - b) <= rel_tol * std::max(std::fabs(a), std::fabs(b));
}

GradeOutcome grade(Gateway* gateway, const std::optional<std::string>& extracted, std::string_view reference,
                   AnswerKind kind, const GradeOptions& options) {
    if (text::is_blank(reference)) {
        throw Error(ErrorCode::invalid_argument, "reference answer is empty");
    }
    if (!extracted || text::is_blank(*extracted)) {
        return GradeOutcome{false, Grader::exact, false, "no answer extracted"};
    }
    const std::string ref = normalize_reference(reference, kind);
    switch (kind) {
        case AnswerKind::numeric: {
            std::string cand = normalize_reference(*extracted, kind);
            if (cand == ref) return GradeOutcome{true, Grader::exact, false, ""};
            char* end_a = nullptr;
            char* end_b = nullptr;
            double a = std::strtod(cand.c_str(), &end_a);
            double b = std::strtod(ref.c_str(), &end_b);
            if (end_a == cand.c_str() || *end_a != '\0' || end_b == ref.c_str() || *end_b != '\0') {
                return GradeOutcome{false, Grader::exact, false, "not a number"};
            }
            return GradeOutcome{numbers_match(a, b, options.rel_tol), Grader::tolerant_numeric, false, ""};
        }
        case AnswerKind::multiple_choice: {
            std::string cand = normalize_reference(*extracted, kind);
            return GradeOutcome{text::to_lower_ascii(cand) == text::to_lower_ascii(ref), Grader::exact, false, ""};
        }
        case AnswerKind::expression:
        case AnswerKind::free_text: {
            std::string cand = normalize_reference(*extracted, kind);
            if (cand == ref) return GradeOutcome{true, Grader::exact, false, ""};
            if (options.grader_model && gateway) {
                return ask_grader(*gateway, *options.grader_model, *extracted, reference);
            }
            return GradeOutcome{false, Grader::exact, false, ""};
        }
    }
    return GradeOutcome{};
}

GeneratedQuestion q2i_generate_question(Gateway& gateway, const ModelSpec& solver, const DeepItem& instruction) {
    if (instruction.kind != DeepKind::q2i) {
        throw Error(ErrorCode::precondition, fmt::format("{} is not a Q2I instruction", instruction.id));
    }
    ChatRequest req;
    req.system_text = "Follow the instruction and design exactly one question. Reply with the question text only.";
    req.turns.push_back({"user", instruction.payload});
    req.max_output_tokens = 4096;
    req.request_tag = "q2i:design:" + instruction.id;

    ChatResponse response = gateway.call(solver, req);
    GeneratedQuestion out;
    out.source_id = instruction.id;
    out.model_name = solver.model_name;
    if (response.finish_state == FinishState::refused || text::is_blank(response.text)) {
        out.failed = true;
        return out;
    }
    out.text = std::string(text::trim(response.text));
    return out;
}

Answerability answerability_check(Gateway& gateway, const GeneratedQuestion& generated,
                                  std::string_view reference_answer, AnswerKind kind, const ModelSpec& checker,
                                  const ModelSpec& self_model, const GradeOptions& options) {
    if (text::is_blank(reference_answer)) {
        throw Error(ErrorCode::invalid_argument, "reference answer is empty");
    }
    Answerability out;
    if (generated.failed || text::is_blank(generated.text)) return out;

    auto attempt = [&](const ModelSpec& model, std::string& raw) {
        ChatResponse r = solve(gateway, model, generated.text, "q2i:answerability:" + generated.source_id);
        raw = r.text;
        if (r.finish_state == FinishState::refused) return false;
        return grade(&gateway, extract_answer(r.text, kind), reference_answer, kind, options).correct;
    };
    out.checker_valid = attempt(checker, out.checker_response);
    out.self_valid = attempt(self_model, out.self_response);
    return out;
}

bool q2i_correct(const Answerability& a, Q2ICorrectness mode) {
    switch (mode) {
        case Q2ICorrectness::checker: return a.checker_valid;
        case Q2ICorrectness::self: return a.self_valid;
        case Q2ICorrectness::both: return a.checker_valid && a.self_valid;
    }
    return a.checker_valid;
}

std::vector<EvalItem> eval_items(std::span<const QAItem> items) {
    std::vector<EvalItem> out;
    out.reserve(items.size());
    for (const auto& i : items) out.push_back(EvalItem{i.id, i.id, i.question, i.answer, i.answer_kind});
    return out;
}

std::vector<EvalItem> eval_items(std::span<const DeepItem> items, std::span<const QAItem> sources) {
    std::unordered_map<std::string_view, const QAItem*> by_id;
    for (const auto& s : sources) by_id[s.id] = &s;
    std::vector<EvalItem> out;
    out.reserve(items.size());
    for (const auto& d : items) {
        auto it = by_id.find(d.source_id);
        if (it == by_id.end()) {
            throw Error(ErrorCode::precondition, fmt::format("deep item {} has unknown source {}", d.id, d.source_id));
        }
        out.push_back(EvalItem{d.id, d.source_id, d.payload, d.reference_answer, it->second->answer_kind});
    }
    return out;
}

EvalRun run_eval(Gateway& gateway, const ModelSpec& solver, std::span<const EvalItem> items, Variant variant,
                 std::string_view dataset_name, const EvalOptions& options) {
    if (variant == Variant::q2i && !options.checker) {
        throw Error(ErrorCode::config_error, "q2i evaluation needs a checker model");
    }
    auto warn = [&](const std::string& line) {
        if (options.warn) options.warn(line);
    };

    auto records = parallel_map(items.size(), options.parallelism, [&](std::size_t i) {
        const EvalItem& item = items[i];
        SolveRecord rec;
        rec.model_name = solver.model_name;
        rec.item_id = item.id;
        rec.source_id = item.source_id;
        rec.variant = variant;
        try {
            if (variant == Variant::q2i) {
                DeepItem instruction{item.id, item.source_id, DeepKind::q2i, item.question, item.reference, "", "en", {}};
                GeneratedQuestion gen = q2i_generate_question(gateway, solver, instruction);
                rec.raw_response = gen.text;
                Q2IDetail detail;
                detail.generated_question = gen.text;
                detail.failed_generation = gen.failed;
                if (gen.failed) {
                    rec.correct = false;
                    rec.note = "failed-generation";
                } else {
                    Answerability a = answerability_check(gateway, gen, item.reference, item.kind, *options.checker,
                                                          solver, options.grade);
                    detail.checker_valid = a.checker_valid;
                    detail.self_valid = a.self_valid;
                    detail.checker_response = a.checker_response;
                    detail.self_response = a.self_response;
                    rec.correct = q2i_correct(a, options.q2i_correctness);
                    rec.note = fmt::format("q2i correctness: {}", to_string(options.q2i_correctness));
                }
                rec.q2i = std::move(detail);
                return rec;
            }

            ChatResponse response = solve(gateway, solver, item.question, fmt::format("solve:{}", item.id));
            rec.raw_response = response.text;
            if (response.finish_state == FinishState::refused) {
                rec.correct = false;
                rec.note = "refusal";
                return rec;
            }
            if (response.finish_state == FinishState::truncated) rec.note = "truncated";
            rec.extracted_answer = extract_answer(response.text, item.kind);
            GradeOutcome g = grade(&gateway, rec.extracted_answer, item.reference, item.kind, options.grade);
            rec.correct = g.correct;
            rec.grader = g.grader;
            if (!g.note.empty()) rec.note = rec.note.empty() ? g.note : rec.note + "; " + g.note;
            if (g.warning) warn(fmt::format("{}: {}", item.id, g.note));
        } catch (const Error& e) {
            if (e.code() != ErrorCode::retries_exhausted && e.code() != ErrorCode::provider_error) throw;
            rec.correct.reset();
            rec.note = fmt::format("ungraded: {}", e.what());
            warn(fmt::format("{} excluded from accuracy: {}", item.id, e.what()));
        }
        return rec;
    });

    EvalRun run;
    run.summary = summarize(solver.model_name, variant, dataset_name, records);
    run.records = std::move(records);
    return run;
}

}  // namespace deepq
