#include "deepq/http_transport.hpp"

#include <regex>

#include <fmt/format.h>
#include <httplib.h>

#include "deepq/error.hpp"
#include "deepq/mock_provider.hpp"

namespace deepq {

ParsedUrl parse_url(const std::string& url) {
    static const std::regex kUrl(R"(^(https?)://([^/:]+)(?::(\d+))?(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(url, m, kUrl)) {
        throw Error(ErrorCode::invalid_argument, fmt::format("unsupported URL '{}'", url));
    }
    ParsedUrl out;
    out.scheme = m[1];
    out.host = m[2];
    out.port = m[3].matched ? std::stoi(m[3]) : (out.scheme == "https" ? 443 : 80);
    out.path = m[4].matched ? std::string(m[4]) : "/";
    return out;
}

HttpResult HttpTransport::post(const HttpRequest& request) {
    ParsedUrl url = parse_url(request.url);
    httplib::Client client(fmt::format("{}://{}:{}", url.scheme, url.host, url.port));
    auto seconds = std::chrono::duration_cast<std::chrono::seconds>(request.timeout);
    auto micros = std::chrono::duration_cast<std::chrono::microseconds>(request.timeout - seconds);
    client.set_connection_timeout(seconds.count(), micros.count());
    client.set_read_timeout(seconds.count(), micros.count());
    client.set_write_timeout(seconds.count(), micros.count());

    httplib::Headers headers;
    std::string content_type = "application/json";
    for (const auto& [name, value] : request.headers) {
        if (name == "Content-Type") {
            content_type = value;
        } else {
            headers.emplace(name, value);
        }
    }
    auto res = client.Post(url.path, headers, request.body, content_type);
    if (!res) {
        return HttpResult{.status = 0, .body = {}, .error = httplib::to_string(res.error())};
    }
    return HttpResult{.status = res->status, .body = res->body, .error = {}};
}

HttpResult RoutingTransport::post(const HttpRequest& request) {
    static constexpr std::string_view kMock = "mock://";
    static constexpr std::string_view kSuffix = "/chat/completions";
    std::string_view url = request.url;
    if (url.substr(0, kMock.size()) != kMock) return http_.post(request);

    url.remove_prefix(kMock.size());
    if (url.size() >= kSuffix.size() && url.substr(url.size() - kSuffix.size()) == kSuffix) {
        url.remove_suffix(kSuffix.size());
    }
    std::shared_ptr<Transport> mock;
    {
        std::lock_guard lock(mocks_guard_);
        auto& slot = mocks_[std::string(url)];
        if (!slot) slot = RuleTransport::from_file(std::string(url));
        mock = slot;
    }
    return mock->post(request);
}

}  // namespace deepq
