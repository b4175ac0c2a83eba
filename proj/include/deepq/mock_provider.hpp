#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "deepq/llm_gateway.hpp"

namespace deepq {

// Chat-completions response body with one choice.
std::string chat_completion_body(std::string_view text, std::string_view finish_reason = "stop");

namespace mock {

HttpResult reply(std::string_view text);
HttpResult refusal(std::string_view text = "I can't help with that.");
HttpResult status(int code);

std::string model_of(const nlohmann::json& body);
std::string last_user_text(const nlohmann::json& body);
std::string system_text(const nlohmann::json& body);
// All message contents joined by newlines.
std::string all_text(const nlohmann::json& body);

}  // namespace mock

// In-process provider driven by a callback. Counts calls and the peak number
// of concurrent calls, and keeps every request body for inspection.
class ScriptedTransport : public Transport {
public:
    using Handler = std::function<HttpResult(const nlohmann::json& body)>;

    explicit ScriptedTransport(Handler handler);
    // Replies in order; the last one repeats.
    static std::shared_ptr<ScriptedTransport> sequence(std::vector<HttpResult> replies);

    HttpResult post(const HttpRequest& request) override;

    std::size_t calls() const { return calls_.load(); }
    std::size_t max_concurrent() const { return max_concurrent_.load(); }
    std::vector<nlohmann::json> requests() const;
    std::vector<HttpRequest> raw_requests() const;
    void reset();

private:
    Handler handler_;
    std::atomic<std::size_t> calls_{0};
    std::atomic<std::size_t> current_{0};
    std::atomic<std::size_t> max_concurrent_{0};
    mutable std::mutex guard_;
    std::vector<HttpRequest> requests_;
};

// Provider answering from a JSON rule list, used behind `mock://<file>` model
// URLs. The first rule whose "model" matches (or is "*") and whose optional
// "contains" substring occurs in the request messages answers with one of:
//   "reply": text          fixed text
//   "sequence": [...]      successive replies, the last repeating
//   "echo": true           the last user message
//   "status": code         an HTTP error
// plus an optional "finish_reason" (e.g. "content_filter", "length").
class RuleTransport : public Transport {
public:
    explicit RuleTransport(nlohmann::json rules);
    static std::shared_ptr<RuleTransport> from_file(const std::filesystem::path& path);

    HttpResult post(const HttpRequest& request) override;
    std::size_t calls() const { return calls_.load(); }

private:
    struct Rule {
        std::string model;
        std::string contains;
        nlohmann::json spec;
        std::size_t next = 0;
    };
    std::mutex guard_;
    std::vector<Rule> rules_;
    std::atomic<std::size_t> calls_{0};
};

}  // namespace deepq
