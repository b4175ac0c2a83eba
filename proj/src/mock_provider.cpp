#include "deepq/mock_provider.hpp"

#include <fstream>

#include <fmt/format.h>

#include "deepq/error.hpp"

using nlohmann::json;

namespace deepq {

std::string chat_completion_body(std::string_view text, std::string_view finish_reason) {
    json body;
    body["object"] = "chat.completion";
    body["choices"] = json::array();
    body["choices"].push_back({{"index", 0},
                               {"message", {{"role", "assistant"}, {"content", std::string(text)}}},
                               {"finish_reason", std::string(finish_reason)}});
    return body.dump();
}

namespace mock {

HttpResult reply(std::string_view text) { return HttpResult{200, chat_completion_body(text), {}}; }

HttpResult refusal(std::string_view text) {
    return HttpResult{200, chat_completion_body(text, "content_filter"), {}};
}

HttpResult status(int code) {
    return HttpResult{code, code == 0 ? std::string() : fmt::format("{{\"error\":\"status {}\"}}", code),
                      code == 0 ? "timeout" : ""};
}

std::string model_of(const json& body) { return body.value("model", ""); }

std::string last_user_text(const json& body) {
    const auto& messages = body.at("messages");
    for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
        if ((*it).value("role", "") == "user") return (*it).value("content", "");
    }
    return {};
}

std::string system_text(const json& body) {
    for (const auto& m : body.at("messages")) {
        if (m.value("role", "") == "system") return m.value("content", "");
    }
    return {};
}

std::string all_text(const json& body) {
    std::string out;
    for (const auto& m : body.at("messages")) {
        if (!out.empty()) out += '\n';
        out += m.value("content", "");
    }
    return out;
}

}  // namespace mock

ScriptedTransport::ScriptedTransport(Handler handler) : handler_(std::move(handler)) {}

std::shared_ptr<ScriptedTransport> ScriptedTransport::sequence(std::vector<HttpResult> replies) {
    auto index = std::make_shared<std::atomic<std::size_t>>(0);
    auto shared = std::make_shared<std::vector<HttpResult>>(std::move(replies));
    return std::make_shared<ScriptedTransport>([index, shared](const json&) {
        std::size_t i = (*index)++;
        return (*shared)[std::min(i, shared->size() - 1)];
    });
}

HttpResult ScriptedTransport::post(const HttpRequest& request) {
    ++calls_;
    std::size_t now = ++current_;
    std::size_t seen = max_concurrent_.load();
    while (now > seen && !max_concurrent_.compare_exchange_weak(seen, now)) {
    }
    {
        std::lock_guard lock(guard_);
        requests_.push_back(request);
    }
    HttpResult result;
    try {
        result = handler_(json::parse(request.body));
    } catch (...) {
        --current_;
        throw;
    }
    --current_;
    return result;
}

std::vector<json> ScriptedTransport::requests() const {
    std::lock_guard lock(guard_);
    std::vector<json> out;
    out.reserve(requests_.size());
    for (const auto& r : requests_) out.push_back(json::parse(r.body));
    return out;
}

std::vector<HttpRequest> ScriptedTransport::raw_requests() const {
    std::lock_guard lock(guard_);
    return requests_;
}

void ScriptedTransport::reset() {
    std::lock_guard lock(guard_);
    requests_.clear();
    calls_ = 0;
    max_concurrent_ = 0;
}

RuleTransport::RuleTransport(json rules) {
    const json& list = rules.is_object() ? rules.at("rules") : rules;
    if (!list.is_array()) {
        throw Error(ErrorCode::config_error, "mock rules must be an array");
    }
    for (const auto& r : list) {
        rules_.push_back(Rule{r.value("model", "*"), r.value("contains", ""), r, 0});
    }
}

std::shared_ptr<RuleTransport> RuleTransport::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::config_error, fmt::format("mock rules file {} not found", path.string()));
    }
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) {
        throw Error(ErrorCode::config_error, fmt::format("mock rules file {} is not JSON", path.string()));
    }
    return std::make_shared<RuleTransport>(std::move(j));
}

HttpResult RuleTransport::post(const HttpRequest& request) {
    ++calls_;
    json body = json::parse(request.body);
    const std::string model = mock::model_of(body);
    const std::string text = mock::all_text(body);

    std::lock_guard lock(guard_);
    for (auto& rule : rules_) {
        if (rule.model != "*" && rule.model != model) continue;
        if (!rule.contains.empty() && text.find(rule.contains) == std::string::npos) continue;

        json step = rule.spec;
        if (auto seq = rule.spec.find("sequence"); seq != rule.spec.end() && seq->is_array() && !seq->empty()) {
            const json& item = (*seq)[std::min(rule.next, seq->size() - 1)];
            ++rule.next;
            step = item.is_string() ? json{{"reply", item}} : item;
        }
        if (step.value("echo", false)) {
            return mock::reply(mock::last_user_text(body));
        }
        int code = step.value("status", 200);
        if (code != 200) return mock::status(code);
        return HttpResult{200,
                          chat_completion_body(step.value("reply", ""), step.value("finish_reason", "stop")),
                          {}};
    }
    return HttpResult{404, fmt::format("{{\"error\":\"no mock rule for model {}\"}}", model), {}};
}

}  // namespace deepq
