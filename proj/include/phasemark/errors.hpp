#pragma once

#include <stdexcept>
#include <string>

namespace phasemark {

/// Failure taxonomy for the whole pipeline. The CLI maps these onto
/// process exit codes, so keep the grouping stable.
enum class ErrorCode {
    // configuration / usage
    InvalidArgument,
    ConfigError,
    // detection stage
    NoLatticeFound,
    NonOrthogonalLattice,
    FitDegenerate,
    NoMarkerFound,
    // decoding stage
    FewerThanMinimumCells,
    DegenerateClustering,
    AmbiguousCodingPhase,
    DecodeFailed,
    AmbiguousDecode,
    GlyphAmbiguous,
    NonPrimitiveTaps,
    DuplicateWindow,
    // I/O
    IoError,
};

inline const char* error_code_name(ErrorCode c) {
    switch (c) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::ConfigError: return "ConfigError";
        case ErrorCode::NoLatticeFound: return "NoLatticeFound";
        case ErrorCode::NonOrthogonalLattice: return "NonOrthogonalLattice";
        case ErrorCode::FitDegenerate: return "FitDegenerate";
        case ErrorCode::NoMarkerFound: return "NoMarkerFound";
        case ErrorCode::FewerThanMinimumCells: return "FewerThanMinimumCells";
        case ErrorCode::DegenerateClustering: return "DegenerateClustering";
        case ErrorCode::AmbiguousCodingPhase: return "AmbiguousCodingPhase";
        case ErrorCode::DecodeFailed: return "DecodeFailed";
        case ErrorCode::AmbiguousDecode: return "AmbiguousDecode";
        case ErrorCode::GlyphAmbiguous: return "GlyphAmbiguous";
        case ErrorCode::NonPrimitiveTaps: return "NonPrimitiveTaps";
        case ErrorCode::DuplicateWindow: return "DuplicateWindow";
        case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code) {}

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& what) {
    throw Error(code, what);
}

} // namespace phasemark
