#pragma once

#include <stdexcept>
#include <string>

namespace flowtomo {

enum class ErrorCode {
    invalid_argument,
    shape_mismatch,
    size_mismatch,
    unknown_format,
    io_error,
    numerical_abort,
};

inline const char* to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::invalid_argument: return "invalid-argument";
    case ErrorCode::shape_mismatch: return "shape-mismatch";
    case ErrorCode::size_mismatch: return "size-mismatch";
    case ErrorCode::unknown_format: return "unknown-format";
    case ErrorCode::io_error: return "io-error";
    case ErrorCode::numerical_abort: return "numerical-abort";
    }
    return "unknown";
}

/// Library-wide exception. `code()` lets callers (the CLI in particular)
/// map failures onto distinct exit codes.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline void require(bool condition, ErrorCode code, const std::string& message) {
    if (!condition) throw Error(code, message);
}

inline void require_arg(bool condition, const std::string& message) {
    require(condition, ErrorCode::invalid_argument, message);
}

} // namespace flowtomo
