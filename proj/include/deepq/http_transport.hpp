#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "deepq/llm_gateway.hpp"

namespace deepq {

// Plain HTTP(S) POST via cpp-httplib.
class HttpTransport : public Transport {
public:
    HttpResult post(const HttpRequest& request) override;
};

// Sends `mock://<rules-file>` URLs to a RuleTransport loaded from that file
// and everything else over HTTP.
class RoutingTransport : public Transport {
public:
    HttpResult post(const HttpRequest& request) override;

private:
    HttpTransport http_;
    std::mutex mocks_guard_;
    std::map<std::string, std::shared_ptr<Transport>> mocks_;
};

struct ParsedUrl {
    std::string scheme;
    std::string host;
    int port = 0;
    std::string path;  // begins with '/'
};

ParsedUrl parse_url(const std::string& url);

}  // namespace deepq
