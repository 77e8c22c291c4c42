#pragma once

#include <iosfwd>
#include <utility>
#include <vector>

#include "grip/knockoffs.hpp"
#include "grip/neuralnet.hpp"
#include "grip/types.hpp"

namespace grip::bss {

enum class Schedule { two_d_block, one_d_block_lambda, one_d_block_a, fixed };

/// Prior over the regularization surface [λ_min, λ_max] × [a_min, 1]:
/// log λ and a are uniform. One-dimensional schedules pin the other axis at
/// λ_fix = √(λ_min·λ_max) or a = 1.
struct RegularizationPrior {
    double lambda_min = 1e-4;
    double lambda_max = 1e-1;
    double a_min = 0.1;
    Schedule schedule = Schedule::two_d_block;

    double lambda_fix() const;
    void validate() const;
};

struct Regime {
    double lambda;
    double a;
};

struct BssConfig {
    long total_steps = 5000;  // T
    long block_size = 25;     // M
    long warmup_steps = 0;
    RegularizationPrior prior;
    nn::NetConfig net;
    int ensemble_k = 1;

    long blocks() const { return total_steps / block_size; }
    void validate() const;
};

struct PersistenceScores {
    Vector s_hat;                // length 2p
    long snapshots_used = 0;     // B
    std::vector<Regime> regimes;
};

Regime sample_regime(const RegularizationPrior& prior, Rng& rng);

// Minibatch index stream: reshuffled epochs over n rows, or the full data
// when batch_size >= n.
class BatchSampler {
public:
    BatchSampler(Index n, Index batch_size) : n_(n), batch_(std::min(batch_size, n)) {}
    // Rows of the next minibatch.
    const std::vector<Index>& next(Rng& rng);
    Index batch_size() const noexcept { return batch_; }

private:
    Index n_;
    Index batch_;
    std::vector<Index> perm_;
    std::vector<Index> current_;
    Index cursor_ = 0;
};

// Row gather helpers.
Matrix gather_rows(const Matrix& x, const std::vector<Index>& rows);
Vector gather_rows(const Vector& y, const std::vector<Index>& rows);

/// Single-run persistence estimator over the augmented design.
///
/// Initializes parameters from `rng`, runs optional unregularized warm-up,
/// then B = ⌊T/M⌋ blocks of M Adam steps, sampling (λ, a) at each block start
/// and recording ‖w_j‖₂ at block end. Ŝ is the mean of the block snapshots.
/// With ensemble_k > 1 the budget is split into K runs of T/K steps.
/// When `diagnostics` is non-null a CSV row per block is written to it.
PersistenceScores bss_train(const knockoffs::AugmentedDesign& data, const BssConfig& cfg, Rng& rng,
                            std::ostream* diagnostics = nullptr);

// Same, from explicit initial parameters (no parameter draw from `rng`).
PersistenceScores bss_train_from(const Matrix& x_aug, const Vector& y, const BssConfig& cfg,
                                 nn::NetParams params, Rng& rng, std::ostream* diagnostics = nullptr);

// Runs `steps` unregularized Adam steps in place.
void warmup(const Matrix& x_aug, const Vector& y, const nn::NetConfig& net, long steps,
            nn::NetParams& params, nn::AdamState& adam, BatchSampler& sampler, Rng& rng);

/// ρ₀ = ‖∇_W Σ_j ‖w_j‖‖_F / ‖∇_W L_pred‖_F at θ, using the full data.
/// Throws DegenerateGradient when the prediction-loss gradient is below 1e-12.
double base_gradient_ratio(const Matrix& x_aug, const Vector& y, const nn::NetParams& params,
                           const nn::NetConfig& net);

struct LambdaRange {
    double lambda_min;
    double lambda_max;
    double base_ratio;  // ρ₀
};

// Sets [λ_min, λ_max] = [r_min, r_max]/ρ₀ after `warmup_steps` unregularized steps.
LambdaRange calibrate_lambda_range(const knockoffs::AugmentedDesign& data, const nn::NetConfig& net,
                                   double r_min, double r_max, long warmup_steps, Rng& rng);

// Mean absolute change of group norms between two parameter states.
double group_norm_change(const Vector& before, const Vector& after);

struct BlockCalibration {
    long block_size;
    bool accepted;  // false when no candidate met the threshold
    std::vector<std::pair<long, double>> worst_tail_change;  // (M, max Δ over tail windows)
};

inline constexpr int kPilotBlocks = 4;

/// Picks the smallest candidate M for which the per-step group-norm change
/// stays below `delta` over the last ⌈M/5⌉ steps of each of 4 pilot blocks.
BlockCalibration calibrate_block_size(const knockoffs::AugmentedDesign& data, const BssConfig& cfg,
                                      double delta, const std::vector<long>& candidates, Rng& rng);

PersistenceScores ensemble_scores(const std::vector<PersistenceScores>& runs);

}  // namespace grip::bss
