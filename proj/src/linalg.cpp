#include "grip/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "grip/error.hpp"

namespace grip::linalg {

SymMatrix::SymMatrix(Matrix m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols() || m_.rows() < 1)
        throw Error(ErrorCode::DimensionMismatch,
                    "symmetric matrix must be square and non-empty, got " +
                        std::to_string(m_.rows()) + "x" + std::to_string(m_.cols()));
    for (Index j = 0; j < m_.cols(); ++j)
        for (Index i = j + 1; i < m_.rows(); ++i)
            if (std::abs(m_(i, j) - m_(j, i)) > kSymmetryTol)
                throw Error(ErrorCode::InvalidArgument,
                            "matrix not symmetric at (" + std::to_string(i) + "," +
                                std::to_string(j) + ")");
}

SymMatrix SymMatrix::symmetrize(const Matrix& m) {
    if (m.rows() != m.cols() || m.rows() < 1)
        throw Error(ErrorCode::DimensionMismatch, "symmetrize needs a square matrix");
    Matrix s = 0.5 * (m + m.transpose());
    return SymMatrix(std::move(s), Unchecked{});
}

SymMatrix SymMatrix::identity(Index dim) {
    return SymMatrix(Matrix::Identity(dim, dim), Unchecked{});
}

CholFactor cholesky_with_jitter(const SymMatrix& m, double jitter0) {
    if (jitter0 < 0.0) throw Error(ErrorCode::InvalidArgument, "jitter0 must be nonnegative");
    const Index p = m.dim();
    double jitter = 0.0;
    for (int attempt = 0; attempt <= kMaxJitterEscalations; ++attempt) {
        if (attempt > 0) {
            if (jitter0 == 0.0) break;
            jitter = jitter0 * std::pow(10.0, attempt - 1);
        }
        Matrix shifted = m.matrix();
        shifted.diagonal().array() += jitter;
        Eigen::LLT<Matrix> llt(shifted);
        if (llt.info() == Eigen::Success) {
            Matrix lower = llt.matrixL();
            if (lower.allFinite()) return {std::move(lower), jitter};
        }
    }
    throw Error(ErrorCode::NotPositiveDefinite,
                "Cholesky failed for " + std::to_string(p) + "x" + std::to_string(p) +
                    " matrix after " + std::to_string(kMaxJitterEscalations) +
                    " jitter escalations (last jitter " + std::to_string(jitter) + ")");
}

EigExtremes sym_eig_extremes(const SymMatrix& m, double tol) {
    if (!(tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "tol must be positive");
    Eigen::SelfAdjointEigenSolver<Matrix> solver(m.matrix(), Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success)
        throw Error(ErrorCode::ConvergenceFailure, "symmetric eigensolver did not converge");
    const Vector& ev = solver.eigenvalues();  // ascending
    return {ev(0), ev(ev.size() - 1)};
}

Matrix solve_spd(const SymMatrix& m, const Matrix& rhs, double ridge) {
    if (rhs.rows() != m.dim())
        throw Error(ErrorCode::DimensionMismatch,
                    "rhs has " + std::to_string(rhs.rows()) + " rows, matrix is " +
                        std::to_string(m.dim()) + "x" + std::to_string(m.dim()));
    if (ridge < 0.0) throw Error(ErrorCode::InvalidArgument, "ridge must be nonnegative");
    Matrix shifted = m.matrix();
    shifted.diagonal().array() += ridge;
    Eigen::LLT<Matrix> llt(shifted);
    if (llt.info() != Eigen::Success)
        throw Error(ErrorCode::NotPositiveDefinite, "solve_spd: matrix + ridge*I not positive definite");
    return llt.solve(rhs);
}

ShrunkCovariance ledoit_wolf(const Matrix& zc, double extra_shrink) {
    const Index n = zc.rows();
    const Index p = zc.cols();
    if (n < 2)
        throw Error(ErrorCode::InsufficientSamples,
                    "ledoit_wolf needs n >= 2, got n=" + std::to_string(n));
    if (p < 1) throw Error(ErrorCode::DimensionMismatch, "ledoit_wolf needs p >= 1");

    const double nd = static_cast<double>(n);
    const double pd = static_cast<double>(p);
    Matrix s = (zc.transpose() * zc) / (nd - 1.0);
    s = 0.5 * (s + s.transpose());
    const double mu = s.trace() / pd;

    Matrix target_diff = s;
    target_diff.diagonal().array() -= mu;
    const double delta = target_diff.squaredNorm() / pd;

    // Σ_t ‖x_t x_tᵀ − S‖_F² expanded so it costs O(np + p²):
    //   Σ‖x_t‖⁴ − 2 tr(S ZcᵀZc) + n‖S‖²  with  ZcᵀZc = (n−1)S.
    double fourth = 0.0;
    for (Index t = 0; t < n; ++t) {
        const double r2 = zc.row(t).squaredNorm();
        fourth += r2 * r2;
    }
    const double s_sq = s.squaredNorm();
    const double dispersion = std::max(0.0, fourth - 2.0 * (nd - 1.0) * s_sq + nd * s_sq);
    const double beta_bar = dispersion / (nd * nd * pd);

    double alpha_lw = 0.0;
    if (delta > 1e-300) alpha_lw = std::min(beta_bar, delta) / delta;
    const double alpha = std::clamp(alpha_lw + extra_shrink, 0.0, 1.0);

    Matrix shrunk = (1.0 - alpha) * s;
    shrunk.diagonal().array() += alpha * mu;
    return {SymMatrix::symmetrize(shrunk), alpha, alpha_lw};
}

Matrix sample_covariance(const Matrix& x) {
    return cross_covariance(x, x);
}

Matrix cross_covariance(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.rows() < 2)
        throw Error(ErrorCode::DimensionMismatch, "cross_covariance needs equal row counts >= 2");
    const Matrix ac = a.rowwise() - a.colwise().mean();
    const Matrix bc = b.rowwise() - b.colwise().mean();
    return (ac.transpose() * bc) / static_cast<double>(a.rows() - 1);
}

double max_abs(const Matrix& m) {
    return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

}  // namespace grip::linalg
