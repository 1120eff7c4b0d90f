#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace edits {

enum class ErrorCode {
    invalid_argument,
    io,
    bad_magic,
    truncated_payload,
    dtype_mismatch,
    size_mismatch,
    duplicate_id,
    unknown_class,
    non_finite,
    zero_row,
    dimension_mismatch,
    shape_mismatch,
    empty_input,
    transport,
    service,
    empty_caption,
    config,
    stage_failure,
};

constexpr std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::invalid_argument: return "invalid argument";
        case ErrorCode::io: return "io error";
        case ErrorCode::bad_magic: return "bad magic";
        case ErrorCode::truncated_payload: return "truncated payload";
        case ErrorCode::dtype_mismatch: return "dtype mismatch";
        case ErrorCode::size_mismatch: return "size mismatch";
        case ErrorCode::duplicate_id: return "duplicate id";
        case ErrorCode::unknown_class: return "unknown class";
        case ErrorCode::non_finite: return "non-finite value";
        case ErrorCode::zero_row: return "zero row";
        case ErrorCode::dimension_mismatch: return "dimension mismatch";
        case ErrorCode::shape_mismatch: return "shape mismatch";
        case ErrorCode::empty_input: return "empty input";
        case ErrorCode::transport: return "transport failure";
        case ErrorCode::service: return "service error";
        case ErrorCode::empty_caption: return "empty caption";
        case ErrorCode::config: return "config error";
        case ErrorCode::stage_failure: return "stage failure";
    }
    return "unknown";
}

/// Library-wide exception. Every throw site picks a code so callers can
/// branch on the failure class without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace edits
