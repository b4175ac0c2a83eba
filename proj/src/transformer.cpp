#include "deepq/transformer.hpp"

#include <algorithm>
#include <unordered_set>

#include <fmt/format.h>

#include "deepq/error.hpp"
#include "deepq/parallel.hpp"
#include "deepq/text.hpp"

namespace deepq {

namespace {

bool is_item_level_failure(ErrorCode code) {
    return code == ErrorCode::empty_generation || code == ErrorCode::provider_error ||
           code == ErrorCode::retries_exhausted;
}

std::string translate_text(Gateway& gateway, const ModelSpec& translator, std::string_view text,
                           std::string_view from, std::string_view to, const std::string& tag) {
    ChatRequest req;
    req.system_text = fmt::format(
        "Translate the user's text from {} to {}. Keep every number, variable, formula and LaTeX "
        "expression exactly as written. Reply with the translation only.",
        text::language_name(from), text::language_name(to));
    req.turns.push_back({"user", std::string(text)});
    req.max_output_tokens = 4096;
    req.request_tag = tag;

    ChatResponse response = gateway.call(translator, req);
    if (response.finish_state != FinishState::complete) {
        throw Error(ErrorCode::provider_error,
                    fmt::format("{}: translator returned a {} response", tag, to_string(response.finish_state)));
    }
    std::string out(text::trim(response.text));
    if (out.empty()) {
        throw Error(ErrorCode::empty_generation, fmt::format("{}: translator returned blank text", tag));
    }
    if (!digits_preserved(text, out)) {
        throw Error(ErrorCode::translation_verification,
                    fmt::format("{}: translation dropped a number present in the source", tag));
    }
    return out;
}

void check_target(std::string_view source_language, std::string_view target, const std::string& id) {
    if (!text::is_language_tag(target)) {
        throw Error(ErrorCode::invalid_argument, fmt::format("'{}' is not a language tag", target));
    }
    if (source_language == target) {
        throw Error(ErrorCode::invalid_argument, fmt::format("item {} is already in {}", id, target));
    }
}

}  // namespace

TransformOutcome transform_item(Gateway& gateway, const ModelSpec& qgen, const AcceptedPrompt& prompt,
                                const QAItem& item) {
    require_usable(prompt);

    ChatRequest req;
    req.system_text = prompt.text;
    req.turns.push_back({"user", fmt::format("Question:\n{}\n\nAnswer:\n{}", item.question, item.answer)});
    req.max_output_tokens = 4096;
    req.request_tag = fmt::format("transform:{}:{}", file_tag(prompt.task_kind), item.id);

    ChatResponse response = gateway.call(qgen, req);
    if (response.finish_state == FinishState::refused) {
        return {std::nullopt, SkipEntry{item.id, "refused"}};
    }
    if (response.finish_state == FinishState::truncated) {
        return {std::nullopt, SkipEntry{item.id, "truncated"}};
    }
    std::string payload(text::trim(response.text));
    if (payload.empty()) {
        throw Error(ErrorCode::empty_generation, fmt::format("question generator returned blank text for {}", item.id));
    }
    if (payload == item.question) {
        return {std::nullopt, SkipEntry{item.id, "unchanged"}};
    }
    return {DeepItem{
                .id = item.id + "-" + file_tag(prompt.task_kind),
                .source_id = item.id,
                .kind = prompt.task_kind,
                .payload = std::move(payload),
                .reference_answer = item.answer,
                .prompt_id = prompt.id,
                .language = prompt.output_language,
                .extra = ordered_json::object(),
            },
            std::nullopt};
}

TransformResult transform_dataset(Gateway& gateway, const ModelSpec& qgen, const AcceptedPrompt& prompt,
                                  std::span<const QAItem> items, const TransformOptions& options) {
    require_usable(prompt);
    auto outcomes = parallel_map(items.size(), options.parallelism, [&](std::size_t i) {
        try {
            return transform_item(gateway, qgen, prompt, items[i]);
        } catch (const Error& e) {
            if (!is_item_level_failure(e.code())) throw;
            return TransformOutcome{std::nullopt, SkipEntry{items[i].id, std::string(to_string(e.code()))}};
        }
    });

    TransformResult result;
    for (auto& o : outcomes) {
        if (o.item) {
            result.items.push_back(std::move(*o.item));
        } else {
            result.skipped.push_back(std::move(*o.skipped));
        }
    }
    if (!items.empty()) {
        double rate = static_cast<double>(result.skipped.size()) / static_cast<double>(items.size());
        if (rate > options.skip_ceiling) {
            std::string ids;
            for (const auto& s : result.skipped) ids += (ids.empty() ? "" : ", ") + s.item_id;
            throw Error(ErrorCode::skip_ceiling,
                        fmt::format("{} of {} items skipped ({:.2f}% > {:.2f}%): {}", result.skipped.size(),
                                    items.size(), rate * 100, options.skip_ceiling * 100, ids));
        }
    }
    return result;
}

bool digits_preserved(std::string_view source, std::string_view translation) {
    auto wanted = text::digit_sequences(source);
    auto present = text::digit_sequences(translation);
    std::unordered_set<std::string> have(present.begin(), present.end());
    return std::all_of(wanted.begin(), wanted.end(), [&](const std::string& d) { return have.count(d) > 0; });
}

std::vector<QAItem> translate_items(Gateway& gateway, const ModelSpec& translator, std::span<const QAItem> items,
                                    std::string_view target_language, const TranslateOptions& options) {
    for (const auto& item : items) check_target(item.language, target_language, item.id);
    return parallel_map(items.size(), options.parallelism, [&](std::size_t i) {
        const QAItem& src = items[i];
        QAItem out = src;
        out.id = src.id + "-" + std::string(target_language);
        out.language = std::string(target_language);
        out.question = translate_text(gateway, translator, src.question, src.language, target_language,
                                      "translate:question:" + src.id);
        if (src.answer_kind == AnswerKind::free_text) {
            out.answer = translate_text(gateway, translator, src.answer, src.language, target_language,
                                        "translate:answer:" + src.id);
        }
        return out;
    });
}

std::vector<DeepItem> translate_items(Gateway& gateway, const ModelSpec& translator,
                                      std::span<const DeepItem> items, std::string_view target_language,
                                      const TranslateOptions& options) {
    for (const auto& item : items) check_target(item.language, target_language, item.id);
    return parallel_map(items.size(), options.parallelism, [&](std::size_t i) {
        const DeepItem& src = items[i];
        DeepItem out = src;
        out.id = src.id + "-" + std::string(target_language);
        out.language = std::string(target_language);
        out.payload = translate_text(gateway, translator, src.payload, src.language, target_language,
                                     "translate:payload:" + src.id);
        return out;
    });
}

}  // namespace deepq
