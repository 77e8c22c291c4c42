#include "grip/error.hpp"
#include "grip/types.hpp"

namespace grip {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
        case ErrorCode::ConvergenceFailure: return "ConvergenceFailure";
        case ErrorCode::InsufficientSamples: return "InsufficientSamples";
        case ErrorCode::InsufficientRows: return "InsufficientRows";
        case ErrorCode::RankDeficient: return "RankDeficient";
        case ErrorCode::DegenerateFeature: return "DegenerateFeature";
        case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
        case ErrorCode::DegenerateGradient: return "DegenerateGradient";
        case ErrorCode::ZeroSignalVariance: return "ZeroSignalVariance";
        case ErrorCode::EmptyTruth: return "EmptyTruth";
        case ErrorCode::TooFewTrials: return "TooFewTrials";
        case ErrorCode::EmptyDataset: return "EmptyDataset";
        case ErrorCode::NotBinary: return "NotBinary";
        case ErrorCode::NonPositiveForLog: return "NonPositiveForLog";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

Matrix Rng::normal_matrix(Index rows, Index cols) {
    Matrix m(rows, cols);
    // Row-major fill order so that a prefix of rows is stable when n grows.
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) m(i, j) = normal();
    return m;
}

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t trial, std::string_view tag) noexcept {
    // FNV-1a over the tag, then mix with base and trial.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : tag) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return splitmix64(splitmix64(splitmix64(base) ^ trial) ^ h);
}

}  // namespace grip
