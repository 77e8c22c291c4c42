#pragma once

#include <string>
#include <vector>

#include "grip/bss.hpp"
#include "grip/knockoffs.hpp"
#include "grip/neuralnet.hpp"

namespace grip::baselines {

struct LassoPathConfig {
    // Empty: 100 log-spaced points from λ_max = max_j |X_jᵀy|/n down to 1e-4·λ_max.
    std::vector<double> lambda_grid;
    int max_iters = 5000;
    double tol = 1e-7;
    // Coordinate visit order; empty means 0..m−1.
    std::vector<Index> visit_order;
};

inline constexpr int kDefaultGridPoints = 100;
inline constexpr double kGridRatio = 1e-4;
inline constexpr double kActiveThreshold = 1e-12;

std::vector<double> default_lambda_grid(const Matrix& x, const Vector& y, int points = kDefaultGridPoints,
                                        double ratio = kGridRatio);

struct LassoFit {
    Vector beta;
    int iterations = 0;
    bool converged = false;
};

/// Cyclic coordinate descent for (1/2n)‖y − Xβ‖² + λ‖β‖₁ from `warm`.
/// Converged when the largest coefficient change in a sweep, scaled by
/// the column's ‖x_j‖²/n, is below tol.
LassoFit lasso_cd(const Matrix& x, const Vector& y, double lambda, const Vector& warm, int max_iters,
                  double tol, const std::vector<Index>& visit_order = {});

struct EntryScores {
    Vector scores;                      // largest grid λ where coefficient j is nonzero, else 0
    std::vector<std::string> warnings;  // grid points that hit max_iters
};

EntryScores lasso_entry_scores(const Matrix& x_aug, const Vector& y, const LassoPathConfig& cfg);
EntryScores lasso_entry_scores(const knockoffs::AugmentedDesign& data, const LassoPathConfig& cfg);

struct MaldConfig {
    double exponent = 1.0;  // r
    int eval_batches = 4;
};

// Input-gradient sensitivity mean |∂f/∂x_j|^r over `eval_batches` minibatches.
Vector mald_from_params(const Matrix& x_aug, const nn::NetParams& params, const nn::NetConfig& net,
                        const MaldConfig& cfg, Rng& rng);

// Trains with λ = 0 and γ = 0 for `train_steps`, then scores.
Vector mald_scores(const knockoffs::AugmentedDesign& data, const nn::NetConfig& net, long train_steps,
                   const MaldConfig& cfg, Rng& rng);

// Same, starting from explicit parameters.
Vector mald_scores_from(const Matrix& x_aug, const Vector& y, nn::NetParams params, const nn::NetConfig& net,
                        long train_steps, const MaldConfig& cfg, Rng& rng);

// Persistence with the fixed schedule (λ_fix, a = 1).
bss::PersistenceScores single_shot_group_lasso(const knockoffs::AugmentedDesign& data, bss::BssConfig cfg,
                                               Rng& rng);

}  // namespace grip::baselines
