#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace deepq {

enum class ErrorCode {
    file_missing,
    malformed_record,
    duplicate_id,
    size_out_of_range,
    io_failure,
    checksum_mismatch,
    invalid_argument,
    auth_failure,
    retries_exhausted,
    provider_error,
    empty_generation,
    unparseable_evaluation,
    non_convergence,
    precondition,
    skip_ceiling,
    translation_verification,
    duplicate_cell,
    config_error,
    stage_dependency,
    rejected,
};

std::string_view to_string(ErrorCode code);

// Every failure the library reports carries a machine-readable code; the CLI
// maps codes onto exit statuses.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message, std::optional<std::size_t> line = std::nullopt);

    ErrorCode code() const noexcept { return code_; }
    // 1-based line number for record-level failures.
    std::optional<std::size_t> line() const noexcept { return line_; }

private:
    ErrorCode code_;
    std::optional<std::size_t> line_;
};

}  // namespace deepq
