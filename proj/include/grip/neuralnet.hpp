#pragma once

#include <optional>
#include <vector>

#include "grip/types.hpp"

namespace grip::nn {

enum class Activation { relu, identity };
enum class LossKind { squared_error, logistic };

struct NetConfig {
    Index input_dim = 2;  // 2p
    int depth = 1;        // hidden d×d layers after the gated first layer
    Index width = 8;      // d
    Activation activation = Activation::relu;
    LossKind loss_kind = LossKind::squared_error;
    double learning_rate = 1e-3;
    double deep_l2 = 0.0;          // γ
    double smoothing_eps = 1e-8;   // ε in (‖w‖² + ε²)^{a/2}
    std::optional<double> clip_max_norm;
    Index batch_size = 256;

    void validate() const;
};

struct DenseLayer {
    Matrix w;  // out × in
    Vector b;
};

/// Network parameters.
///
/// `w0` (d × 2p) is the gated first layer: column j carries feature j.
/// `deep` holds the `depth` hidden layers followed by the 1×d output head;
/// together they are θ_deep.
struct NetParams {
    Matrix w0;
    Vector b0;
    std::vector<DenseLayer> deep;

    Index input_dim() const noexcept { return w0.cols(); }

    // Same shapes, all zeros.
    NetParams zeros_like() const;
    double squared_norm() const;
    void scale(double factor);
    bool all_finite() const;
};

struct AdamState {
    NetParams m;
    NetParams v;
    long long t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState for_params(const NetParams& params);
};

// He-scaled normal weights (std √(2/fan_in)), zero biases.
NetParams init_params(const NetConfig& cfg, Rng& rng);

Vector forward(const NetParams& params, const Matrix& x_batch, Activation act = Activation::relu);

// λ·Σ_j (‖w_j‖² + ε²)^{a/2}
double penalty(const NetParams& params, double lambda, double a, double eps);

// ‖w_j‖₂ for every first-layer column.
Vector group_norms(const NetParams& params);

struct LossGrad {
    double loss = 0.0;       // full objective
    double pred_loss = 0.0;  // mean prediction loss only
    NetParams grads;
};

/// Objective and exact gradient:
///   mean ℓ(y, f(x)) + λ·Σ_j (‖w_j‖² + ε²)^{a/2} + (γ/2)·‖θ_deep weights‖².
/// Throws NonFiniteLoss when the objective is NaN/Inf.
LossGrad loss_and_grads(const NetParams& params, const Matrix& x, const Vector& y,
                        double lambda, double a, const NetConfig& cfg);

// Gradient of the prediction loss alone w.r.t. w0 (for gradient-ratio calibration).
Matrix pred_loss_grad_w0(const NetParams& params, const Matrix& x, const Vector& y,
                         const NetConfig& cfg);

// Gradient of Σ_j (‖w_j‖² + ε²)^{a/2} w.r.t. w0 (λ factored out).
Matrix penalty_grad_w0(const NetParams& params, double a, double eps);

double global_norm(const NetParams& grads);

// Rescales in place so the global ℓ2 norm is at most max_norm.
void clip_grads(NetParams& grads, double max_norm);

void adam_step(NetParams& params, AdamState& state, const NetParams& grads, double lr);

// ∂f(x_i)/∂x_ij, n × input_dim. ReLU subgradient at 0 is 0.
Matrix input_grads(const NetParams& params, const Matrix& x_batch, Activation act = Activation::relu);

// Swaps w0 columns i and j.
void swap_gate_columns(NetParams& params, Index i, Index j);

}  // namespace grip::nn
