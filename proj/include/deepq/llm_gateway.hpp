#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace deepq {

enum class Role { generator, evaluator, question_generator, solver, judge, translator, checker };

std::string_view to_string(Role role);
std::optional<Role> parse_role(std::string_view s);

struct ModelSpec {
    std::string provider_base_url;
    std::string model_name;
    // Name of the environment variable holding the API key; empty means no
    // Authorization header is sent.
    std::string api_key_ref;
    Role role_tag = Role::solver;
    // Forward ChatRequest::seed only to providers that accept it.
    bool accepts_seed = false;
    // Used when a request does not set its own temperature.
    double temperature = 0.0;
};

struct Turn {
    std::string role;  // "user" or "assistant"
    std::string text;
};

struct ChatRequest {
    std::optional<std::string> system_text;
    std::vector<Turn> turns;
    // Unset means the model's configured temperature (0 unless configured).
    std::optional<double> temperature;
    int max_output_tokens = 2048;
    std::optional<std::int64_t> seed;
    std::string request_tag;
};

enum class FinishState { complete, truncated, refused };
std::string_view to_string(FinishState state);

struct ChatResponse {
    std::string text;
    FinishState finish_state = FinishState::complete;
    std::int64_t latency_ms = 0;
    bool from_cache = false;
    int attempts = 0;
};

struct HttpRequest {
    std::string url;
    std::vector<std::pair<std::string, std::string>> headers;
    std::string body;
    std::chrono::milliseconds timeout{60'000};
};

// status 0 means the request never produced an HTTP response (timeout,
// connection refused); `error` then describes why.
struct HttpResult {
    int status = 0;
    std::string body;
    std::string error;
};

class Transport {
public:
    virtual ~Transport() = default;
    virtual HttpResult post(const HttpRequest& request) = 0;
};

struct GatewayOptions {
    std::size_t max_in_flight = 4;
    int max_retries = 3;
    std::chrono::milliseconds initial_backoff{500};
    std::chrono::milliseconds max_backoff{30'000};
    std::chrono::milliseconds timeout{60'000};
    // When set, call() goes through the response cache.
    std::optional<std::filesystem::path> cache_dir;
    std::function<void(std::string_view)> log;
    std::function<void(std::chrono::milliseconds)> sleep;
};

struct GatewayStats {
    std::uint64_t network_calls = 0;  // transport attempts
    std::uint64_t cache_hits = 0;
    std::uint64_t cache_misses = 0;
    std::uint64_t retries = 0;
};

double effective_temperature(const ModelSpec& spec, const ChatRequest& req);

// Request body in chat-completions shape: {model, messages, temperature, max_tokens[, seed]}.
nlohmann::json chat_request_body(const ModelSpec& spec, const ChatRequest& req);

// Content hash over base URL, model, full message list, temperature and
// max_output_tokens.
std::string cache_key(const ModelSpec& spec, const ChatRequest& req);
// `<cache_dir>/<first two hex>/<key>.json`
std::filesystem::path cache_entry_path(const std::filesystem::path& cache_dir, std::string_view key);

// Shared across workers. At most `max_in_flight` transport calls run at once.
class Gateway {
public:
    Gateway(std::shared_ptr<Transport> transport, GatewayOptions options = {});

    // Live call with retry on timeouts, 429 and 5xx.
    ChatResponse complete(const ModelSpec& spec, const ChatRequest& req);
    ChatResponse cached_complete(const ModelSpec& spec, const ChatRequest& req,
                                 const std::filesystem::path& cache_dir);
    // cached_complete when a cache directory is configured, complete otherwise.
    ChatResponse call(const ModelSpec& spec, const ChatRequest& req);

    GatewayStats stats() const;
    const GatewayOptions& options() const { return options_; }

private:
    void log(std::string_view line) const;
    std::shared_ptr<std::mutex> key_mutex(const std::string& key);

    std::shared_ptr<Transport> transport_;
    GatewayOptions options_;
    std::counting_semaphore<> in_flight_;

    std::mutex key_mutexes_guard_;
    std::map<std::string, std::shared_ptr<std::mutex>> key_mutexes_;

    std::atomic<std::uint64_t> network_calls_{0};
    std::atomic<std::uint64_t> cache_hits_{0};
    std::atomic<std::uint64_t> cache_misses_{0};
    std::atomic<std::uint64_t> retries_{0};
};

}  // namespace deepq
