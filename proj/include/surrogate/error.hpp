#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace surrogate {

enum class ErrorCode {
    InvalidArgument,
    InvalidSpace,
    DimensionMismatch,
    DegenerateColumn,
    InsufficientData,
    DomainError,
    IllConditioned,
    NumericalFailure,
    Io,
    Format,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Exception carrying a machine-readable code. what() is "<code>: <message>".
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message);

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }
    [[nodiscard]] const std::string& message() const noexcept { return message_; }

private:
    ErrorCode code_;
    std::string message_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace surrogate
