#include "surrogate/error.hpp"

namespace surrogate {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::InvalidArgument: return "invalid-argument";
        case ErrorCode::InvalidSpace: return "invalid-space";
        case ErrorCode::DimensionMismatch: return "dimension-mismatch";
        case ErrorCode::DegenerateColumn: return "degenerate-column";
        case ErrorCode::InsufficientData: return "insufficient-data";
        case ErrorCode::DomainError: return "domain-error";
        case ErrorCode::IllConditioned: return "ill-conditioned-kernel";
        case ErrorCode::NumericalFailure: return "numerical-failure";
        case ErrorCode::Io: return "io-error";
        case ErrorCode::Format: return "format-error";
    }
    return "unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), message_(message) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace surrogate
