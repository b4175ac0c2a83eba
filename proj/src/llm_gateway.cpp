#include "deepq/llm_gateway.hpp"

#include <cstdlib>
#include <fstream>
#include <thread>

#include <fmt/format.h>

#include "deepq/error.hpp"
#include "deepq/hashing.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace deepq {

std::string_view to_string(Role role) {
    switch (role) {
        case Role::generator: return "generator";
        case Role::evaluator: return "evaluator";
        case Role::question_generator: return "question_generator";
        case Role::solver: return "solver";
        case Role::judge: return "judge";
        case Role::translator: return "translator";
        case Role::checker: return "checker";
    }
    return "solver";
}

std::optional<Role> parse_role(std::string_view s) {
    for (auto r : {Role::generator, Role::evaluator, Role::question_generator, Role::solver, Role::judge,
                   Role::translator, Role::checker}) {
        if (s == to_string(r)) return r;
    }
    return std::nullopt;
}

std::string_view to_string(FinishState state) {
    switch (state) {
        case FinishState::complete: return "complete";
        case FinishState::truncated: return "truncated";
        case FinishState::refused: return "refused";
    }
    return "complete";
}

namespace {

std::optional<FinishState> parse_finish_state(std::string_view s) {
    for (auto f : {FinishState::complete, FinishState::truncated, FinishState::refused}) {
        if (s == to_string(f)) return f;
    }
    return std::nullopt;
}

json messages_json(const ChatRequest& req) {
    json messages = json::array();
    if (req.system_text) {
        messages.push_back({{"role", "system"}, {"content", *req.system_text}});
    }
    for (const auto& turn : req.turns) {
        messages.push_back({{"role", turn.role}, {"content", turn.text}});
    }
    return messages;
}

std::string chat_url(const std::string& base_url) {
    std::string url = base_url;
    while (!url.empty() && url.back() == '/') url.pop_back();
    return url + "/chat/completions";
}

bool is_transient(int status) { return status == 0 || status == 408 || status == 429 || status >= 500; }

ChatResponse parse_chat_body(const std::string& body) {
    json j = json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw Error(ErrorCode::provider_error, "response body is not JSON");
    }
    const json* choice = nullptr;
    if (auto it = j.find("choices"); it != j.end() && it->is_array() && !it->empty()) {
        choice = &(*it)[0];
    }
    if (!choice || !choice->is_object()) {
        throw Error(ErrorCode::provider_error, "response has no choices");
    }
    ChatResponse out;
    std::string finish_reason = choice->value("finish_reason", std::string("stop"));
    const json message = choice->value("message", json::object());
    bool has_refusal = message.contains("refusal") && message["refusal"].is_string() &&
                       !message["refusal"].get<std::string>().empty();
    if (message.contains("content") && message["content"].is_string()) {
        out.text = message["content"].get<std::string>();
    }
    if (has_refusal || finish_reason == "content_filter") {
        out.finish_state = FinishState::refused;
        if (out.text.empty() && has_refusal) out.text = message["refusal"].get<std::string>();
    } else if (finish_reason == "length") {
        out.finish_state = FinishState::truncated;
    } else {
        if (!message.contains("content") || !message["content"].is_string()) {
            throw Error(ErrorCode::provider_error, "complete response without text");
        }
        out.finish_state = FinishState::complete;
    }
    return out;
}

void write_atomically(const fs::path& path, const std::string& content) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    fs::path tmp = path;
    tmp += fmt::format(".tmp{}", std::hash<std::thread::id>{}(std::this_thread::get_id()));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out || !(out << content)) {
            throw Error(ErrorCode::io_failure, fmt::format("cannot write cache entry {}", tmp.string()));
        }
    }
    fs::rename(tmp, path, ec);
    if (ec) {
        throw Error(ErrorCode::io_failure, fmt::format("cannot move cache entry into {}", path.string()));
    }
}

}  // namespace

double effective_temperature(const ModelSpec& spec, const ChatRequest& req) {
    return req.temperature.value_or(spec.temperature);
}

json chat_request_body(const ModelSpec& spec, const ChatRequest& req) {
    json body;
    body["model"] = spec.model_name;
    body["messages"] = messages_json(req);
    body["temperature"] = effective_temperature(spec, req);
    body["max_tokens"] = req.max_output_tokens;
    if (spec.accepts_seed && req.seed) body["seed"] = *req.seed;
    return body;
}

std::string cache_key(const ModelSpec& spec, const ChatRequest& req) {
    json key;
    key["base_url"] = spec.provider_base_url;
    key["model"] = spec.model_name;
    key["messages"] = messages_json(req);
    key["temperature"] = effective_temperature(spec, req);
    key["max_tokens"] = req.max_output_tokens;
    return sha256_hex(key.dump());
}

fs::path cache_entry_path(const fs::path& cache_dir, std::string_view key) {
    return cache_dir / std::string(key.substr(0, 2)) / (std::string(key) + ".json");
}

Gateway::Gateway(std::shared_ptr<Transport> transport, GatewayOptions options)
    : transport_(std::move(transport)),
      options_(std::move(options)),
      in_flight_(static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, options_.max_in_flight))) {
    if (!options_.sleep) {
        options_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
    }
}

void Gateway::log(std::string_view line) const {
    if (options_.log) options_.log(line);
}

ChatResponse Gateway::complete(const ModelSpec& spec, const ChatRequest& req) {
    if (spec.model_name.empty()) {
        throw Error(ErrorCode::invalid_argument, "model_name is empty");
    }
    if (req.turns.empty()) {
        throw Error(ErrorCode::invalid_argument, "chat request has no turns");
    }
    if (effective_temperature(spec, req) < 0) {
        throw Error(ErrorCode::invalid_argument, "temperature must be >= 0");
    }

    HttpRequest http;
    http.url = chat_url(spec.provider_base_url);
    http.body = chat_request_body(spec, req).dump();
    http.timeout = options_.timeout;
    http.headers.emplace_back("Content-Type", "application/json");
    if (!spec.api_key_ref.empty()) {
        const char* key = std::getenv(spec.api_key_ref.c_str());
        if (!key || !*key) {
            throw Error(ErrorCode::auth_failure,
                        fmt::format("environment variable {} is not set", spec.api_key_ref));
        }
        http.headers.emplace_back("Authorization", std::string("Bearer ") + key);
    }

    const auto started = std::chrono::steady_clock::now();
    std::chrono::milliseconds backoff = options_.initial_backoff;
    const int max_attempts = options_.max_retries + 1;
    for (int attempt = 1;; ++attempt) {
        HttpResult result;
        {
            in_flight_.acquire();
            ++network_calls_;
            try {
                result = transport_->post(http);
            } catch (...) {
                in_flight_.release();
                throw;
            }
            in_flight_.release();
        }

        if (result.status == 200) {
            ChatResponse response = parse_chat_body(result.body);
            if (attempt > 1) log(fmt::format("[{}] attempt {}/{} succeeded", req.request_tag, attempt, max_attempts));
            response.attempts = attempt;
            response.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                      std::chrono::steady_clock::now() - started)
                                      .count();
            return response;
        }
        if (result.status == 401 || result.status == 403) {
            throw Error(ErrorCode::auth_failure,
                        fmt::format("{} rejected credentials (HTTP {})", spec.provider_base_url, result.status));
        }
        std::string why = result.status == 0 ? result.error : fmt::format("HTTP {}", result.status);
        if (!is_transient(result.status)) {
            throw Error(ErrorCode::provider_error,
                        fmt::format("{} {}: {}", spec.model_name, why, result.body.substr(0, 200)));
        }
        log(fmt::format("[{}] attempt {}/{} failed: {}", req.request_tag, attempt, max_attempts, why));
        if (attempt >= max_attempts) {
            throw Error(ErrorCode::retries_exhausted,
                        fmt::format("{}: {} attempts failed, last: {}", spec.model_name, attempt, why));
        }
        ++retries_;
        options_.sleep(backoff);
        backoff = std::min(backoff * 2, options_.max_backoff);
    }
}

std::shared_ptr<std::mutex> Gateway::key_mutex(const std::string& key) {
    std::lock_guard lock(key_mutexes_guard_);
    auto& slot = key_mutexes_[key];
    if (!slot) slot = std::make_shared<std::mutex>();
    return slot;
}

ChatResponse Gateway::cached_complete(const ModelSpec& spec, const ChatRequest& req, const fs::path& cache_dir) {
    const std::string key = cache_key(spec, req);
    const fs::path entry = cache_entry_path(cache_dir, key);

    // Identical requests are serialized so only the first reaches the network.
    auto mutex = key_mutex(key);
    std::lock_guard lock(*mutex);

    if (fs::exists(entry)) {
        std::ifstream in(entry, std::ios::binary);
        json j = json::parse(in, nullptr, false);
        std::optional<FinishState> state;
        if (!j.is_discarded() && j.is_object() && j.value("key", "") == key && j.contains("text") &&
            j["text"].is_string() && j.contains("finish_state") && j["finish_state"].is_string()) {
            state = parse_finish_state(j["finish_state"].get<std::string>());
        }
        if (state) {
            ++cache_hits_;
            return ChatResponse{.text = j["text"].get<std::string>(),
                                .finish_state = *state,
                                .latency_ms = 0,
                                .from_cache = true,
                                .attempts = 0};
        }
        log(fmt::format("[{}] cache entry {} is corrupt; refreshing", req.request_tag, entry.string()));
    }

    ++cache_misses_;
    ChatResponse response = complete(spec, req);
    json stored;
    stored["key"] = key;
    stored["model"] = spec.model_name;
    stored["text"] = response.text;
    stored["finish_state"] = std::string(to_string(response.finish_state));
    write_atomically(entry, stored.dump(2) + "\n");
    return response;
}

ChatResponse Gateway::call(const ModelSpec& spec, const ChatRequest& req) {
    if (options_.cache_dir) return cached_complete(spec, req, *options_.cache_dir);
    return complete(spec, req);
}

GatewayStats Gateway::stats() const {
    return GatewayStats{network_calls_.load(), cache_hits_.load(), cache_misses_.load(), retries_.load()};
}

}  // namespace deepq
