#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "grip/linalg.hpp"
#include "grip/types.hpp"

namespace grip::knockoffs {

/// Second-order Gaussian knockoff sampler.
///
/// With S = diag(s): A = Σ⁻¹S and c_factor·c_factorᵀ = 2S − SΣ⁻¹S, so that
/// X̃ = X(I − A) + U·Cᵀ has Cov(X̃) = Σ and Cov(X, X̃) = Σ − S.
struct KnockoffModel {
    linalg::SymMatrix sigma;
    Vector s;
    Matrix a_mat;
    linalg::CholFactor c_factor;
};

inline constexpr double kSigmaRidge = 1e-10;

// Equi-correlated s = min{2·λ_min(Σ), cap}; cap is 1 when Σ has unit
// diagonal (within 1e-8), else max_j Σ_jj.
KnockoffModel build_gaussian_model(const linalg::SymMatrix& sigma);

// Builds a model for an explicit diagonal; used for reloaded snapshots.
KnockoffModel build_gaussian_model(const linalg::SymMatrix& sigma, const Vector& s);

Matrix sample_gaussian_knockoffs(const Matrix& x, const KnockoffModel& model, Rng& rng);

// Snapshot of the parameters that fully determine a Gaussian model: Σ and s.
// Plain-text, versioned ("grip-knockoff-model v1").
void save_model(std::ostream& out, const KnockoffModel& model);
KnockoffModel load_model(std::istream& in);

struct CopulaTables {
    Matrix sorted;  // n×p, each column nondecreasing, original (unjittered) values
    Vector grid;    // u_k = (k + 1/2)/n, k = 0..n−1
    double eps = 1e-6;
};

struct Gaussianized {
    Matrix z;
    CopulaTables tables;
    std::vector<std::string> warnings;  // constant columns, etc.
};

inline constexpr double kCopulaEps = 1e-6;

double normal_cdf(double x);
double normal_quantile(double u);

// Rank-based probit transform with randomized tie-breaking.
Gaussianized copula_gaussianize(const Matrix& x, double eps, Rng& rng);

// Inverse map through linear interpolation on the empirical CDF grid,
// clamped to the observed range. Columns with tied values are treated as
// discrete and snap to the nearer bracketing observed value instead.
Matrix copula_invert(const Matrix& z_tilde, const CopulaTables& tables);

inline constexpr double kDefaultExtraShrink = 0.1;

struct CopulaKnockoffs {
    Matrix x_tilde;
    KnockoffModel model;  // z-space model, for the snapshot record
    std::vector<std::string> warnings;
};

CopulaKnockoffs copula_knockoffs(const Matrix& x, double extra_shrink, Rng& rng);

struct FixedXKnockoffs {
    Matrix x_tilde;         // rescaled to the original column norms
    Matrix x_normalized;    // unit-norm columns of X
    Matrix x_tilde_normalized;
    double s = 0.0;
    Vector column_norms;
};

// Fixed-X equi-correlated construction; requires n >= 2p and full column rank.
FixedXKnockoffs fixedx_knockoffs(const Matrix& x, Rng& rng);

struct AugmentedDesign {
    Matrix x;
    Matrix x_tilde;
    Vector y;
    std::vector<std::string> feature_names;

    Index n() const noexcept { return x.rows(); }
    Index p() const noexcept { return x.cols(); }
    // [X, X̃]: feature j pairs with column j + p.
    Matrix stacked() const;
};

AugmentedDesign augment(Matrix x, Matrix x_tilde, Vector y,
                        std::vector<std::string> feature_names = {});

}  // namespace grip::knockoffs
