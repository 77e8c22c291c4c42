#include "grip/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "grip/error.hpp"

namespace grip::datagen {

namespace {

constexpr double kMinSignalVariance = 1e-12;

void check_signal(double var) {
    if (!(var >= kMinSignalVariance))
        throw Error(ErrorCode::ZeroSignalVariance,
                    "signal variance " + std::to_string(var) + " below 1e-12; cannot calibrate noise");
}

}  // namespace

double empirical_variance(const Vector& v) {
    if (v.size() < 2) return 0.0;
    const double mean = v.mean();
    return (v.array() - mean).square().sum() / static_cast<double>(v.size() - 1);
}

linalg::SymMatrix ar1_covariance(Index p, double rho) {
    Matrix sigma(p, p);
    for (Index i = 0; i < p; ++i)
        for (Index j = 0; j < p; ++j) sigma(i, j) = std::pow(rho, static_cast<double>(std::abs(i - j)));
    return linalg::SymMatrix(std::move(sigma));
}

Ar1Design ar1_design(Index n, Index p, double rho, Rng& rng) {
    if (!(std::abs(rho) < 1.0)) throw Error(ErrorCode::InvalidArgument, "AR(1) needs |rho| < 1");
    if (n < 1 || p < 1) throw Error(ErrorCode::InvalidArgument, "n and p must be positive");
    const double innovation = std::sqrt(1.0 - rho * rho);
    Matrix x(n, p);
    for (Index i = 0; i < n; ++i) {
        x(i, 0) = rng.normal();
        for (Index k = 1; k < p; ++k) x(i, k) = rho * x(i, k - 1) + innovation * rng.normal();
    }
    return {std::move(x), ar1_covariance(p, rho)};
}

IndexSet support_grid(Index p, Index spacing) {
    if (spacing < 1) throw Error(ErrorCode::InvalidArgument, "support spacing must be >= 1");
    IndexSet s;
    for (Index j = 0; j < p; j += spacing) s.push_back(static_cast<std::size_t>(j));
    return s;
}

Vector draw_beta(Index p, const IndexSet& support, Rng& beta_rng) {
    if (support.empty()) throw Error(ErrorCode::InvalidArgument, "support must be nonempty");
    Vector beta = Vector::Zero(p);
    for (auto j : support) {
        if (static_cast<Index>(j) >= p) throw Error(ErrorCode::InvalidArgument, "support index out of range");
        beta(static_cast<Index>(j)) = beta_rng.normal();
    }
    return beta;
}

Response single_index_response(const Matrix& x, const Vector& beta, Index support_size, Rng& noise_rng,
                               double snr) {
    if (beta.size() != x.cols()) throw Error(ErrorCode::DimensionMismatch, "beta length does not match p");
    if (!(snr > 0.0)) throw Error(ErrorCode::InvalidArgument, "snr must be positive");
    const Vector g = ((x * beta) / std::sqrt(static_cast<double>(support_size))).array().sin().matrix();
    const double var = empirical_variance(g);
    check_signal(var);
    const double sigma2 = var / snr;
    const double sd = std::sqrt(sigma2);
    Vector y(g.size());
    for (Index i = 0; i < g.size(); ++i) y(i) = g(i) + sd * noise_rng.normal();
    return {std::move(y), beta, sigma2, var};
}

Response single_index_response(const Matrix& x, const IndexSet& support, Rng& beta_rng, Rng& noise_rng,
                               double snr) {
    const Vector beta = draw_beta(x.cols(), support, beta_rng);
    return single_index_response(x, beta, static_cast<Index>(support.size()), noise_rng, snr);
}

Injection mlp_inject(const Matrix& x, const IndexSet& support, const Matrix& w1, const Vector& w2, double snr,
                     Rng& noise_rng) {
    const Index s = static_cast<Index>(support.size());
    if (s == 0) throw Error(ErrorCode::InvalidArgument, "injection support must be nonempty");
    if (w1.rows() != s || w1.cols() != w2.size())
        throw Error(ErrorCode::DimensionMismatch, "injector weight shapes do not match support");
    if (!(snr > 0.0)) throw Error(ErrorCode::InvalidArgument, "snr must be positive");
    Matrix xs(x.rows(), s);
    for (Index k = 0; k < s; ++k) {
        const auto j = static_cast<Index>(support[static_cast<std::size_t>(k)]);
        if (j >= x.cols()) throw Error(ErrorCode::InvalidArgument, "support index out of range");
        xs.col(k) = x.col(j);
    }
    const Vector f = (xs * w1).cwiseMax(0.0) * w2;
    const double var = empirical_variance(f);
    check_signal(var);
    const double sigma2 = var / snr;
    const double sd = std::sqrt(sigma2);
    Vector y(f.size());
    for (Index i = 0; i < f.size(); ++i) y(i) = f(i) + sd * noise_rng.normal();
    return {std::move(y), support, sigma2};
}

Injection mlp_inject(const Matrix& x, IndexSet support, const InjectionSpec& spec, Rng& rng) {
    const Index p = x.cols();
    if (!(spec.support_frac > 0.0 && spec.support_frac <= 1.0))
        throw Error(ErrorCode::InvalidArgument, "support_frac must lie in (0, 1]");
    if (support.empty()) {
        const auto size = static_cast<std::size_t>(std::ceil(spec.support_frac * static_cast<double>(p)));
        std::vector<std::size_t> all(static_cast<std::size_t>(p));
        std::iota(all.begin(), all.end(), std::size_t{0});
        // Partial Fisher–Yates: first `size` entries are a uniform sample.
        for (std::size_t i = 0; i < size; ++i) std::swap(all[i], all[i + rng.below(all.size() - i)]);
        support.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(size));
    }
    std::sort(support.begin(), support.end());
    const Matrix w1 = rng.normal_matrix(static_cast<Index>(support.size()), spec.hidden_width);
    const Vector w2 = rng.normal_matrix(spec.hidden_width, 1);
    return mlp_inject(x, support, w1, w2, spec.snr, rng);
}

}  // namespace grip::datagen
