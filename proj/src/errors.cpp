#include "waferssl/errors.hpp"

namespace waferssl {

const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::Io: return "IoError";
        case ErrorCode::Format: return "FormatError";
        case ErrorCode::UnlabeledInput: return "UnlabeledInput";
        case ErrorCode::BadDimensions: return "BadDimensions";
        case ErrorCode::TooFewSamples: return "TooFewSamples";
        case ErrorCode::BadK: return "BadK";
        case ErrorCode::TargetTooLarge: return "TargetTooLarge";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
        case ErrorCode::NonFinite: return "NonFinite";
        case ErrorCode::BadLabel: return "BadLabel";
        case ErrorCode::ZeroNorm: return "ZeroNorm";
        case ErrorCode::BatchTooSmall: return "BatchTooSmall";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::EmptyMatrix: return "EmptyMatrix";
        case ErrorCode::EmptyLabeledSet: return "EmptyLabeledSet";
        case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    }
    return "UnknownError";
}

}  // namespace waferssl
