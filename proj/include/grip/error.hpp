#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace grip {

enum class ErrorCode {
    DimensionMismatch,
    LengthMismatch,
    NotPositiveDefinite,
    ConvergenceFailure,
    InsufficientSamples,
    InsufficientRows,
    RankDeficient,
    DegenerateFeature,
    NonFiniteLoss,
    DegenerateGradient,
    ZeroSignalVariance,
    EmptyTruth,
    TooFewTrials,
    EmptyDataset,
    NotBinary,
    NonPositiveForLog,
    InvalidArgument,
    Io,
};

std::string_view to_string(ErrorCode code) noexcept;

// Single exception type for the library; `code()` lets callers branch on
// the failure kind without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace grip
