#include "grip/knockoffs.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include <boost/math/special_functions/erf.hpp>

#include "grip/error.hpp"

namespace grip::knockoffs {

namespace {

double equi_cap(const linalg::SymMatrix& sigma) {
    const Vector d = sigma.matrix().diagonal();
    const bool unit_diag = ((d.array() - 1.0).abs() <= 1e-8).all();
    return unit_diag ? 1.0 : d.maxCoeff();
}

std::string join_indices(const std::vector<Index>& idx) {
    std::ostringstream os;
    for (std::size_t i = 0; i < idx.size(); ++i) os << (i ? "," : "") << idx[i];
    return os.str();
}

}  // namespace

KnockoffModel build_gaussian_model(const linalg::SymMatrix& sigma) {
    const auto [lambda_min, lambda_max] = linalg::sym_eig_extremes(sigma);
    (void)lambda_max;
    const double s = std::max(0.0, std::min(2.0 * lambda_min, equi_cap(sigma)));
    return build_gaussian_model(sigma, Vector::Constant(sigma.dim(), s));
}

KnockoffModel build_gaussian_model(const linalg::SymMatrix& sigma, const Vector& s) {
    if (s.size() != sigma.dim())
        throw Error(ErrorCode::DimensionMismatch, "diagonal s length does not match Sigma");
    const Matrix s_diag = s.asDiagonal();
    Matrix a_mat = linalg::solve_spd(sigma, s_diag, kSigmaRidge);
    const Matrix m = 2.0 * s_diag - s_diag * a_mat;
    auto c_factor = linalg::cholesky_with_jitter(linalg::SymMatrix::symmetrize(m), linalg::kDefaultJitter);
    return {sigma, s, std::move(a_mat), std::move(c_factor)};
}

Matrix sample_gaussian_knockoffs(const Matrix& x, const KnockoffModel& model, Rng& rng) {
    const Index p = model.sigma.dim();
    if (x.cols() != p)
        throw Error(ErrorCode::DimensionMismatch,
                    "x has " + std::to_string(x.cols()) + " columns, model has p=" + std::to_string(p));
    const Matrix u = rng.normal_matrix(x.rows(), p);
    const Matrix i_minus_a = Matrix::Identity(p, p) - model.a_mat;
    return x * i_minus_a + u * model.c_factor.lower.transpose();
}

void save_model(std::ostream& out, const KnockoffModel& model) {
    const Index p = model.sigma.dim();
    out << "grip-knockoff-model v1\n" << p << "\n";
    out.precision(17);
    for (Index i = 0; i < p; ++i) {
        for (Index j = 0; j < p; ++j) out << (j ? " " : "") << model.sigma(i, j);
        out << "\n";
    }
    for (Index j = 0; j < p; ++j) out << (j ? " " : "") << model.s(j);
    out << "\n";
}

KnockoffModel load_model(std::istream& in) {
    std::string magic, version;
    in >> magic >> version;
    if (magic != "grip-knockoff-model" || version != "v1")
        throw Error(ErrorCode::Io, "unrecognized knockoff model snapshot header");
    Index p = 0;
    in >> p;
    if (!in || p < 1) throw Error(ErrorCode::Io, "bad dimension in knockoff model snapshot");
    Matrix sigma(p, p);
    for (Index i = 0; i < p; ++i)
        for (Index j = 0; j < p; ++j) in >> sigma(i, j);
    Vector s(p);
    for (Index j = 0; j < p; ++j) in >> s(j);
    if (!in) throw Error(ErrorCode::Io, "truncated knockoff model snapshot");
    return build_gaussian_model(linalg::SymMatrix(std::move(sigma)), s);
}

double normal_cdf(double x) {
    return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

double normal_quantile(double u) {
    return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * u);
}

Gaussianized copula_gaussianize(const Matrix& x, double eps, Rng& rng) {
    const Index n = x.rows();
    const Index p = x.cols();
    if (n < 2) throw Error(ErrorCode::InsufficientSamples, "copula transform needs n >= 2");
    if (!(eps > 0.0 && eps < 0.5)) throw Error(ErrorCode::InvalidArgument, "eps must lie in (0, 0.5)");

    Gaussianized out;
    out.z.resize(n, p);
    out.tables.sorted.resize(n, p);
    out.tables.eps = eps;
    out.tables.grid.resize(n);
    const double nd = static_cast<double>(n);
    for (Index k = 0; k < n; ++k) out.tables.grid(k) = (static_cast<double>(k) + 0.5) / nd;

    std::vector<double> jittered(static_cast<std::size_t>(n));
    std::vector<Index> order(static_cast<std::size_t>(n));
    for (Index j = 0; j < p; ++j) {
        const auto col = x.col(j);
        const double mean = col.mean();
        const double sd = std::sqrt((col.array() - mean).square().sum() / (nd - 1.0));
        double scale = 1e-10 * sd;
        if (!(sd > 0.0)) {
            out.warnings.push_back("DegenerateFeature: column " + std::to_string(j) +
                                   " is constant; ranks are random");
            scale = 1e-10;
        }
        for (Index i = 0; i < n; ++i)
            jittered[static_cast<std::size_t>(i)] = col(i) + scale * rng.normal();
        std::iota(order.begin(), order.end(), Index{0});
        std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
            return jittered[static_cast<std::size_t>(a)] < jittered[static_cast<std::size_t>(b)];
        });
        for (Index r = 0; r < n; ++r) {
            const Index i = order[static_cast<std::size_t>(r)];
            const double u = std::clamp((static_cast<double>(r) + 0.5) / nd, eps, 1.0 - eps);
            out.z(i, j) = normal_quantile(u);
        }
        Vector sorted = col;
        std::sort(sorted.data(), sorted.data() + n);
        out.tables.sorted.col(j) = sorted;
    }
    return out;
}

Matrix copula_invert(const Matrix& z_tilde, const CopulaTables& tables) {
    const Index n_grid = tables.grid.size();
    if (z_tilde.cols() != tables.sorted.cols())
        throw Error(ErrorCode::DimensionMismatch, "z_tilde column count does not match copula tables");
    if (n_grid < 1) throw Error(ErrorCode::DimensionMismatch, "empty copula tables");

    const double* g = tables.grid.data();
    Matrix out(z_tilde.rows(), z_tilde.cols());
    for (Index j = 0; j < z_tilde.cols(); ++j) {
        const auto sorted = tables.sorted.col(j);
        bool discrete = false;
        for (Index k = 1; k < n_grid && !discrete; ++k) discrete = sorted(k) == sorted(k - 1);
        for (Index i = 0; i < z_tilde.rows(); ++i) {
            const double u = normal_cdf(z_tilde(i, j));
            if (u <= g[0]) {
                out(i, j) = sorted(0);
                continue;
            }
            if (u >= g[n_grid - 1]) {
                out(i, j) = sorted(n_grid - 1);
                continue;
            }
            // Grid is uniform, so the bracketing cell is found directly.
            Index k = static_cast<Index>(std::floor(u * static_cast<double>(n_grid) - 0.5));
            k = std::clamp<Index>(k, 0, n_grid - 2);
            while (k > 0 && u < g[k]) --k;
            while (k < n_grid - 2 && u > g[k + 1]) ++k;
            const double t = (u - g[k]) / (g[k + 1] - g[k]);
            const double lo = sorted(k), hi = sorted(k + 1);
            if (discrete)
                out(i, j) = t < 0.5 ? lo : hi;
            else
                out(i, j) = t <= 0.0 ? lo : (t >= 1.0 ? hi : lo + t * (hi - lo));
        }
    }
    return out;
}

CopulaKnockoffs copula_knockoffs(const Matrix& x, double extra_shrink, Rng& rng) {
    auto g = copula_gaussianize(x, kCopulaEps, rng);
    if (x.rows() <= x.cols())
        g.warnings.push_back("n <= p: covariance estimate relies entirely on shrinkage");

    const Eigen::RowVectorXd mean = g.z.colwise().mean();
    const Matrix zc = g.z.rowwise() - mean;
    auto shrunk = linalg::ledoit_wolf(zc, extra_shrink);

    const auto ext = linalg::sym_eig_extremes(shrunk.sigma_hat);
    const double cap = shrunk.sigma_hat.matrix().diagonal().maxCoeff();
    const double s = std::max(0.0, std::min(2.0 * ext.lambda_min, cap));
    auto model = build_gaussian_model(shrunk.sigma_hat, Vector::Constant(x.cols(), s));

    Matrix z_tilde = sample_gaussian_knockoffs(zc, model, rng);
    z_tilde.rowwise() += mean;
    return {copula_invert(z_tilde, g.tables), std::move(model), std::move(g.warnings)};
}

FixedXKnockoffs fixedx_knockoffs(const Matrix& x, Rng& rng) {
    const Index n = x.rows();
    const Index p = x.cols();
    if (n < 2 * p)
        throw Error(ErrorCode::InsufficientRows,
                    "fixed-X knockoffs need n >= 2p, got n=" + std::to_string(n) +
                        ", p=" + std::to_string(p));

    FixedXKnockoffs out;
    out.column_norms = x.colwise().norm().transpose();
    std::vector<Index> zero_cols;
    for (Index j = 0; j < p; ++j)
        if (!(out.column_norms(j) > 0.0)) zero_cols.push_back(j);
    if (!zero_cols.empty())
        throw Error(ErrorCode::RankDeficient, "zero columns {" + join_indices(zero_cols) + "}");
    out.x_normalized = x * out.column_norms.cwiseInverse().asDiagonal();
    const Matrix& xn = out.x_normalized;

    Eigen::JacobiSVD<Matrix> svd(xn, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector d = svd.singularValues();  // descending
    const Matrix& u = svd.matrixU();
    const Matrix& v = svd.matrixV();
    if (d(p - 1) < 1e-10) {
        std::vector<Index> involved;
        for (Index j = 0; j < p; ++j)
            if (std::abs(v(j, p - 1)) > 1e-6) involved.push_back(j);
        throw Error(ErrorCode::RankDeficient,
                    "design is rank deficient (singular value " + std::to_string(d(p - 1)) +
                        "); near-dependent columns {" + join_indices(involved) + "}");
    }

    const double lambda_min = d(p - 1) * d(p - 1);
    const double s = std::min(1.0, 2.0 * lambda_min);
    out.s = s;

    // Randomized orthogonal completion: Gaussian residuals against U, twice
    // projected for stability, then thin QR.
    Matrix z = rng.normal_matrix(n, p);
    z -= u * (u.transpose() * z);
    z -= u * (u.transpose() * z);
    Eigen::HouseholderQR<Matrix> qr(z);
    Matrix u_perp = qr.householderQ() * Matrix::Identity(n, p);
    u_perp -= u * (u.transpose() * u_perp);
    u_perp = Eigen::HouseholderQR<Matrix>(u_perp).householderQ() * Matrix::Identity(n, p);

    Vector shrink(p), extra(p);
    for (Index k = 0; k < p; ++k) {
        shrink(k) = d(k) - s / d(k);
        extra(k) = std::sqrt(std::max(0.0, 2.0 * s - (s / d(k)) * (s / d(k))));
    }
    out.x_tilde_normalized = (u * shrink.asDiagonal() + u_perp * extra.asDiagonal()) * v.transpose();
    out.x_tilde = out.x_tilde_normalized * out.column_norms.asDiagonal();
    return out;
}

Matrix AugmentedDesign::stacked() const {
    Matrix out(x.rows(), 2 * x.cols());
    out << x, x_tilde;
    return out;
}

AugmentedDesign augment(Matrix x, Matrix x_tilde, Vector y, std::vector<std::string> feature_names) {
    if (x_tilde.size() == 0) throw Error(ErrorCode::DimensionMismatch, "empty knockoff matrix");
    if (x.rows() != x_tilde.rows() || x.cols() != x_tilde.cols())
        throw Error(ErrorCode::DimensionMismatch, "x and x_tilde shapes differ");
    if (y.size() != x.rows())
        throw Error(ErrorCode::DimensionMismatch,
                    "y has " + std::to_string(y.size()) + " entries, x has " +
                        std::to_string(x.rows()) + " rows");
    if (!feature_names.empty() && static_cast<Index>(feature_names.size()) != x.cols())
        throw Error(ErrorCode::DimensionMismatch, "feature_names length does not match p");
    if (!x.allFinite() || !x_tilde.allFinite() || !y.allFinite())
        throw Error(ErrorCode::InvalidArgument, "augmented design contains NaN or Inf");
    return {std::move(x), std::move(x_tilde), std::move(y), std::move(feature_names)};
}

}  // namespace grip::knockoffs
