#pragma once

#include "grip/types.hpp"

namespace grip::linalg {

// Dense symmetric matrix. Construction checks squareness and symmetry
// (absolute tolerance 1e-10); use `symmetrize` for inputs carrying roundoff.
class SymMatrix {
public:
    static constexpr double kSymmetryTol = 1e-10;

    explicit SymMatrix(Matrix m);

    // (m + mᵀ)/2, no symmetry check.
    static SymMatrix symmetrize(const Matrix& m);
    static SymMatrix identity(Index dim);

    Index dim() const noexcept { return m_.rows(); }
    const Matrix& matrix() const noexcept { return m_; }
    double operator()(Index i, Index j) const { return m_(i, j); }

private:
    struct Unchecked {};
    SymMatrix(Matrix m, Unchecked) : m_(std::move(m)) {}
    Matrix m_;
};

struct CholFactor {
    Matrix lower;
    double jitter_used = 0.0;
};

inline constexpr double kDefaultJitter = 1e-10;
inline constexpr int kMaxJitterEscalations = 10;

/// Cholesky with a geometric diagonal-jitter schedule.
///
/// Tries jitter 0, then jitter0, 10·jitter0, ... up to kMaxJitterEscalations
/// escalations; the first success is returned with the jitter it needed.
CholFactor cholesky_with_jitter(const SymMatrix& m, double jitter0 = kDefaultJitter);

struct EigExtremes {
    double lambda_min;
    double lambda_max;
};

// Full symmetric eigendecomposition (Eigen's tridiagonal QR); exact to
// working precision, so `tol` is only validated against the solver status.
EigExtremes sym_eig_extremes(const SymMatrix& m, double tol = 1e-9);

// Solves (m + ridge·I)·X = rhs.
Matrix solve_spd(const SymMatrix& m, const Matrix& rhs, double ridge = 0.0);

struct ShrunkCovariance {
    SymMatrix sigma_hat;
    double alpha_prime;  // total shrinkage weight actually applied
    double alpha_lw;     // plug-in Ledoit–Wolf weight before extra shrinkage
};

/// Ledoit–Wolf shrinkage toward μ·I with an additive extra shrinkage.
///
/// `zc` must be column-centered. Returns (1−α′)·S + α′·μ·I with
/// S = ZcᵀZc/(n−1), μ = tr(S)/p and α′ = clip(α_LW + extra_shrink, 0, 1).
ShrunkCovariance ledoit_wolf(const Matrix& zc, double extra_shrink);

// Sample covariance with 1/(n−1) normalization.
Matrix sample_covariance(const Matrix& x);

// Cross-covariance Cov(a, b) with 1/(n−1) normalization.
Matrix cross_covariance(const Matrix& a, const Matrix& b);

double max_abs(const Matrix& m);

}  // namespace grip::linalg
