#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <string>

#include "deepq/dataset_io.hpp"
#include "deepq/llm_gateway.hpp"
#include "deepq/mock_provider.hpp"

namespace deepq::testing {

// Scratch directory removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("deepq-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline QAItem qa(std::string id, std::string question, std::string answer, AnswerKind kind = AnswerKind::numeric,
                 std::string language = "en", std::string domain = "gsm8k") {
    return QAItem{std::move(id), std::move(question), std::move(answer), kind, std::move(language), std::move(domain),
                  ordered_json::object()};
}

inline ModelSpec model(std::string name, Role role = Role::solver) {
    ModelSpec m;
    m.provider_base_url = "http://mock.invalid/v1";
    m.model_name = std::move(name);
    m.role_tag = role;
    return m;
}

inline GatewayOptions fast_options() {
    GatewayOptions o;
    o.sleep = [](std::chrono::milliseconds) {};
    return o;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << content;
}

}  // namespace deepq::testing
