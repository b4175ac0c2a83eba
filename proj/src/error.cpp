#include "deepq/error.hpp"

namespace deepq {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::file_missing: return "file-missing";
        case ErrorCode::malformed_record: return "malformed-record";
        case ErrorCode::duplicate_id: return "duplicate-id";
        case ErrorCode::size_out_of_range: return "size-out-of-range";
        case ErrorCode::io_failure: return "io-failure";
        case ErrorCode::checksum_mismatch: return "checksum-mismatch";
        case ErrorCode::invalid_argument: return "invalid-argument";
        case ErrorCode::auth_failure: return "auth-failure";
        case ErrorCode::retries_exhausted: return "retries-exhausted";
        case ErrorCode::provider_error: return "provider-error";
        case ErrorCode::empty_generation: return "empty-generation";
        case ErrorCode::unparseable_evaluation: return "unparseable-evaluation";
        case ErrorCode::non_convergence: return "non-convergence";
        case ErrorCode::precondition: return "precondition";
        case ErrorCode::skip_ceiling: return "skip-ceiling";
        case ErrorCode::translation_verification: return "translation-verification";
        case ErrorCode::duplicate_cell: return "duplicate-cell";
        case ErrorCode::config_error: return "config-error";
        case ErrorCode::stage_dependency: return "stage-dependency";
        case ErrorCode::rejected: return "rejected";
    }
    return "unknown";
}

Error::Error(ErrorCode code, const std::string& message, std::optional<std::size_t> line)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), line_(line) {}

}  // namespace deepq
