#pragma once

#include <stdexcept>
#include <string>

namespace waferssl {

enum class ErrorCode {
    Io,
    Format,
    UnlabeledInput,
    BadDimensions,
    TooFewSamples,
    BadK,
    TargetTooLarge,
    ShapeMismatch,
    NonFiniteGradient,
    NonFinite,
    BadLabel,
    ZeroNorm,
    BatchTooSmall,
    LengthMismatch,
    EmptyMatrix,
    EmptyLabeledSet,
    ConfigInvalid,
};

const char* error_code_name(ErrorCode code);

class WaferError : public std::runtime_error {
public:
    WaferError(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& message) {
    throw WaferError(code, message);
}

}  // namespace waferssl
