#pragma once

#include <cstdint>

#include "grip/linalg.hpp"
#include "grip/types.hpp"

namespace grip::datagen {

struct SyntheticSpec {
    Index n = 20000;
    Index p = 500;
    double rho = 0.8;
    Index support_spacing = 5;
    double snr = 0.2;
    std::uint64_t beta_seed = 1;
    std::uint64_t noise_seed = 2;
    std::uint64_t design_seed = 3;
};

struct InjectionSpec {
    double support_frac = 0.2;
    double snr = 0.2;
    Index hidden_width = 16;
    std::uint64_t seed = 1;
};

struct Ar1Design {
    Matrix x;
    linalg::SymMatrix sigma;
};

// Σ_ij = ρ^|i−j|; rows drawn by the stationary AR(1) recursion.
Ar1Design ar1_design(Index n, Index p, double rho, Rng& rng);

linalg::SymMatrix ar1_covariance(Index p, double rho);

// {0, spacing, 2·spacing, ...} ∩ [0, p)
IndexSet support_grid(Index p, Index spacing);

struct Response {
    Vector y;
    Vector beta;
    double sigma2;
    double signal_variance;
};

// Vector of i.i.d. N(0,1) coefficients on the support, zero elsewhere.
Vector draw_beta(Index p, const IndexSet& support, Rng& beta_rng);

/// y = sin(xᵀβ/√|S|) + ε with σ² = Var̂(signal)/snr.
Response single_index_response(const Matrix& x, const IndexSet& support, Rng& beta_rng, Rng& noise_rng,
                               double snr);

// Same model with a caller-supplied β.
Response single_index_response(const Matrix& x, const Vector& beta, Index support_size, Rng& noise_rng,
                               double snr);

struct Injection {
    Vector y;
    IndexSet truth;
    double sigma2;
};

/// y = relu(X_S W₁) W₂ + N(0, Var̂(f)/snr), W₁, W₂ standard normal.
/// An empty `support` draws ⌈support_frac·p⌉ indices without replacement.
Injection mlp_inject(const Matrix& x, IndexSet support, const InjectionSpec& spec, Rng& rng);

// Variant with explicit injector weights (W₁: |S|×h, W₂: h).
Injection mlp_inject(const Matrix& x, const IndexSet& support, const Matrix& w1, const Vector& w2, double snr,
                     Rng& noise_rng);

double empirical_variance(const Vector& v);

}  // namespace grip::datagen
