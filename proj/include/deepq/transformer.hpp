#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "deepq/dataset_io.hpp"
#include "deepq/llm_gateway.hpp"
#include "deepq/prompt_forge.hpp"

namespace deepq {

struct SkipEntry {
    std::string item_id;
    std::string reason;

    bool operator==(const SkipEntry&) const = default;
};

struct TransformOutcome {
    std::optional<DeepItem> item;
    std::optional<SkipEntry> skipped;
};

// One source item through the approved prompt. A refusal or unchanged output
// yields a skip entry instead of an item; blank output throws empty_generation.
TransformOutcome transform_item(Gateway& gateway, const ModelSpec& qgen, const AcceptedPrompt& prompt,
                                const QAItem& item);

struct TransformOptions {
    double skip_ceiling = 0.20;
    std::size_t parallelism = 4;
};

struct TransformResult {
    std::vector<DeepItem> items;  // source order
    std::vector<SkipEntry> skipped;
};

// Throws skip_ceiling when more than `skip_ceiling` of the items were skipped.
TransformResult transform_dataset(Gateway& gateway, const ModelSpec& qgen, const AcceptedPrompt& prompt,
                                  std::span<const QAItem> items, const TransformOptions& options = {});

// Every digit run of `source` occurs as a digit run in `translation`, after
// Persian/Arabic digits are mapped to ASCII.
bool digits_preserved(std::string_view source, std::string_view translation);

struct TranslateOptions {
    std::size_t parallelism = 4;
};

// Question text (or payload) is translated, ids gain a "-<lang>" suffix.
// Answers stay verbatim except for free_text QA answers.
std::vector<QAItem> translate_items(Gateway& gateway, const ModelSpec& translator, std::span<const QAItem> items,
                                    std::string_view target_language, const TranslateOptions& options = {});
std::vector<DeepItem> translate_items(Gateway& gateway, const ModelSpec& translator,
                                      std::span<const DeepItem> items, std::string_view target_language,
                                      const TranslateOptions& options = {});

}  // namespace deepq
