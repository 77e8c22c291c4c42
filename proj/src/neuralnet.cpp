#include "grip/neuralnet.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "grip/error.hpp"

// Kernels touching w0 are written so that exchanging input columns j and
// j + p (together with w0 columns j and j + p) reproduces every other
// quantity bit for bit: per-column reductions run in a fixed scalar order,
// and sums across columns combine each (j, j + p) pair first. IEEE addition
// is commutative, so the pair sum is swap-invariant. This requires building
// without floating-point contraction (-ffp-contract=off).

namespace grip::nn {

namespace {

Index half_dim(Index input_dim) { return input_dim / 2; }

double column_sq_norm(const Matrix& w, Index j) {
    const double* c = w.data() + j * w.rows();
    double acc = 0.0;
    for (Index i = 0; i < w.rows(); ++i) acc += c[i] * c[i];
    return acc;
}

// Σ_j f(j) with (j, j + p) pairs combined before accumulation.
template <class F>
double pair_sum(Index input_dim, F&& f) {
    const Index p = half_dim(input_dim);
    double acc = 0.0;
    for (Index j = 0; j < p; ++j) acc += f(j) + f(j + p);
    for (Index j = 2 * p; j < input_dim; ++j) acc += f(j);
    return acc;
}

// z0 = w0·xᵀ + b0, shape d × batch.
Matrix first_layer(const NetParams& params, const Matrix& x) {
    const Index d = params.w0.rows();
    const Index m = params.w0.cols();
    const Index p = half_dim(m);
    const Index batch = x.rows();
    Matrix z(d, batch);
    const double* w = params.w0.data();
    for (Index k = 0; k < batch; ++k) {
        double* out = z.data() + k * d;
        for (Index i = 0; i < d; ++i) out[i] = 0.0;
        for (Index j = 0; j < p; ++j) {
            const double xa = x(k, j);
            const double xb = x(k, j + p);
            const double* wa = w + j * d;
            const double* wb = w + (j + p) * d;
            for (Index i = 0; i < d; ++i) out[i] += wa[i] * xa + wb[i] * xb;
        }
        for (Index j = 2 * p; j < m; ++j) {
            const double xa = x(k, j);
            const double* wa = w + j * d;
            for (Index i = 0; i < d; ++i) out[i] += wa[i] * xa;
        }
        for (Index i = 0; i < d; ++i) out[i] += params.b0(i);
    }
    return z;
}

// dz0 · x, shape d × input_dim; every column reduces over the batch in order.
Matrix first_layer_weight_grad(const Matrix& dz0, const Matrix& x) {
    const Index d = dz0.rows();
    const Index batch = dz0.cols();
    Matrix g = Matrix::Zero(d, x.cols());
    for (Index j = 0; j < x.cols(); ++j) {
        double* gc = g.data() + j * d;
        for (Index k = 0; k < batch; ++k) {
            const double xk = x(k, j);
            const double* dz = dz0.data() + k * d;
            for (Index i = 0; i < d; ++i) gc[i] += dz[i] * xk;
        }
    }
    return g;
}

Matrix activate(const Matrix& z, Activation act) {
    if (act == Activation::identity) return z;
    return z.cwiseMax(0.0);
}

// Multiplies dh by the activation derivative at z (ReLU: 0 at exactly 0).
void apply_activation_grad(Matrix& dh, const Matrix& z, Activation act) {
    if (act == Activation::identity) return;
    dh = (z.array() > 0.0).select(dh, 0.0);
}

struct Tape {
    std::vector<Matrix> z;  // pre-activations: z[0] first layer, z[l] hidden layer l
    std::vector<Matrix> h;  // activations
    Eigen::RowVectorXd out;
};

Tape run_forward(const NetParams& params, const Matrix& x, Activation act) {
    if (x.cols() != params.w0.cols())
        throw Error(ErrorCode::DimensionMismatch,
                    "batch has " + std::to_string(x.cols()) + " columns, network expects " +
                        std::to_string(params.w0.cols()));
    Tape tape;
    tape.z.push_back(first_layer(params, x));
    tape.h.push_back(activate(tape.z.back(), act));
    const std::size_t hidden = params.deep.size() - 1;
    for (std::size_t l = 0; l < hidden; ++l) {
        Matrix z = params.deep[l].w * tape.h.back();
        z.colwise() += params.deep[l].b;
        tape.h.push_back(activate(z, act));
        tape.z.push_back(std::move(z));
    }
    const DenseLayer& head = params.deep.back();
    tape.out = head.w * tape.h.back();
    tape.out.array() += head.b(0);
    return tape;
}

// Backpropagates d(out) (1 × batch) through the network. Fills `grads` when
// non-null and returns dz0 (d × batch).
Matrix run_backward(const NetParams& params, const Tape& tape, const Eigen::RowVectorXd& dout,
                    Activation act, NetParams* grads) {
    const std::size_t hidden = params.deep.size() - 1;
    const DenseLayer& head = params.deep.back();
    if (grads) {
        grads->deep.back().w = dout * tape.h.back().transpose();
        grads->deep.back().b(0) = dout.sum();
    }
    Matrix dh = head.w.transpose() * dout;
    for (std::size_t l = hidden; l-- > 0;) {
        apply_activation_grad(dh, tape.z[l + 1], act);
        if (grads) {
            grads->deep[l].w = dh * tape.h[l].transpose();
            grads->deep[l].b = dh.rowwise().sum();
        }
        dh = params.deep[l].w.transpose() * dh;
    }
    apply_activation_grad(dh, tape.z[0], act);
    return dh;
}

void check_finite_loss(double value, const char* what) {
    if (!std::isfinite(value))
        throw Error(ErrorCode::NonFiniteLoss, std::string(what) + " is not finite");
}

struct PredLoss {
    double value;
    Eigen::RowVectorXd dout;  // d(mean loss)/d(out)
};

PredLoss prediction_loss(const Eigen::RowVectorXd& out, const Vector& y, LossKind kind) {
    const Index batch = out.size();
    const double inv = 1.0 / static_cast<double>(batch);
    PredLoss r{0.0, Eigen::RowVectorXd(batch)};
    for (Index k = 0; k < batch; ++k) {
        const double f = out(k);
        if (kind == LossKind::squared_error) {
            const double e = f - y(k);
            r.value += e * e;
            r.dout(k) = 2.0 * e * inv;
        } else {
            // log(1 + e^f) − y·f, stable for large |f|
            const double softplus = f > 0 ? f + std::log1p(std::exp(-f)) : std::log1p(std::exp(f));
            r.value += softplus - y(k) * f;
            const double sig = f >= 0 ? 1.0 / (1.0 + std::exp(-f)) : std::exp(f) / (1.0 + std::exp(f));
            r.dout(k) = (sig - y(k)) * inv;
        }
    }
    r.value *= inv;
    return r;
}

void check_batch(const Matrix& x, const Vector& y) {
    if (x.rows() == 0) throw Error(ErrorCode::InvalidArgument, "empty batch");
    if (x.rows() != y.size())
        throw Error(ErrorCode::DimensionMismatch, "batch x and y lengths differ");
}

}  // namespace

void NetConfig::validate() const {
    if (input_dim < 1 || depth < 0 || width < 1 || !(learning_rate >= 0.0) || deep_l2 < 0.0 ||
        !(smoothing_eps >= 0.0) || batch_size < 1)
        throw Error(ErrorCode::InvalidArgument, "invalid network configuration");
    if (clip_max_norm && !(*clip_max_norm > 0.0))
        throw Error(ErrorCode::InvalidArgument, "clip_max_norm must be positive");
}

NetParams NetParams::zeros_like() const {
    NetParams z;
    z.w0 = Matrix::Zero(w0.rows(), w0.cols());
    z.b0 = Vector::Zero(b0.size());
    for (const auto& layer : deep)
        z.deep.push_back({Matrix::Zero(layer.w.rows(), layer.w.cols()), Vector::Zero(layer.b.size())});
    return z;
}

double NetParams::squared_norm() const {
    double acc = pair_sum(w0.cols(), [&](Index j) { return column_sq_norm(w0, j); });
    acc += b0.squaredNorm();
    for (const auto& layer : deep) acc += layer.w.squaredNorm() + layer.b.squaredNorm();
    return acc;
}

void NetParams::scale(double factor) {
    w0 *= factor;
    b0 *= factor;
    for (auto& layer : deep) {
        layer.w *= factor;
        layer.b *= factor;
    }
}

bool NetParams::all_finite() const {
    if (!w0.allFinite() || !b0.allFinite()) return false;
    for (const auto& layer : deep)
        if (!layer.w.allFinite() || !layer.b.allFinite()) return false;
    return true;
}

AdamState AdamState::for_params(const NetParams& params) {
    AdamState s;
    s.m = params.zeros_like();
    s.v = params.zeros_like();
    return s;
}

NetParams init_params(const NetConfig& cfg, Rng& rng) {
    cfg.validate();
    const auto he = [&](Index rows, Index cols) {
        const double scale = std::sqrt(2.0 / static_cast<double>(cols));
        return Matrix(rng.normal_matrix(rows, cols) * scale);
    };
    NetParams p;
    p.w0 = he(cfg.width, cfg.input_dim);
    p.b0 = Vector::Zero(cfg.width);
    for (int l = 0; l < cfg.depth; ++l) p.deep.push_back({he(cfg.width, cfg.width), Vector::Zero(cfg.width)});
    p.deep.push_back({he(1, cfg.width), Vector::Zero(1)});
    return p;
}

Vector forward(const NetParams& params, const Matrix& x_batch, Activation act) {
    return run_forward(params, x_batch, act).out.transpose();
}

double penalty(const NetParams& params, double lambda, double a, double eps) {
    if (!(a > 0.0 && a <= 1.0)) throw Error(ErrorCode::InvalidArgument, "penalty exponent a must lie in (0, 1]");
    const double eps2 = eps * eps;
    const double sum = pair_sum(params.w0.cols(), [&](Index j) {
        return std::pow(column_sq_norm(params.w0, j) + eps2, 0.5 * a);
    });
    return lambda * sum;
}

Vector group_norms(const NetParams& params) {
    Vector out(params.w0.cols());
    for (Index j = 0; j < params.w0.cols(); ++j) out(j) = std::sqrt(column_sq_norm(params.w0, j));
    return out;
}

Matrix penalty_grad_w0(const NetParams& params, double a, double eps) {
    const double eps2 = eps * eps;
    Matrix g(params.w0.rows(), params.w0.cols());
    for (Index j = 0; j < params.w0.cols(); ++j) {
        const double sq = column_sq_norm(params.w0, j) + eps2;
        // d/dw (‖w‖² + ε²)^{a/2} = a·(‖w‖² + ε²)^{a/2 − 1}·w; zero column gives zero.
        const double coef = sq > 0.0 ? a * std::pow(sq, 0.5 * a - 1.0) : 0.0;
        g.col(j) = coef * params.w0.col(j);
    }
    return g;
}

LossGrad loss_and_grads(const NetParams& params, const Matrix& x, const Vector& y,
                        double lambda, double a, const NetConfig& cfg) {
    check_batch(x, y);
    const Tape tape = run_forward(params, x, cfg.activation);
    const PredLoss pl = prediction_loss(tape.out, y, cfg.loss_kind);

    LossGrad r;
    r.grads = params.zeros_like();
    const Matrix dz0 = run_backward(params, tape, pl.dout, cfg.activation, &r.grads);
    r.grads.w0 = first_layer_weight_grad(dz0, x);
    r.grads.b0 = dz0.rowwise().sum();

    double reg = 0.0;
    if (lambda != 0.0) {
        reg += penalty(params, lambda, a, cfg.smoothing_eps);
        r.grads.w0 += lambda * penalty_grad_w0(params, a, cfg.smoothing_eps);
    }
    if (cfg.deep_l2 != 0.0) {
        double sq = 0.0;
        for (std::size_t l = 0; l < params.deep.size(); ++l) {
            sq += params.deep[l].w.squaredNorm();
            r.grads.deep[l].w += cfg.deep_l2 * params.deep[l].w;
        }
        reg += 0.5 * cfg.deep_l2 * sq;
    }
    r.pred_loss = pl.value;
    r.loss = pl.value + reg;
    check_finite_loss(r.loss, "training objective");
    return r;
}

Matrix pred_loss_grad_w0(const NetParams& params, const Matrix& x, const Vector& y,
                         const NetConfig& cfg) {
    check_batch(x, y);
    const Tape tape = run_forward(params, x, cfg.activation);
    const PredLoss pl = prediction_loss(tape.out, y, cfg.loss_kind);
    check_finite_loss(pl.value, "prediction loss");
    const Matrix dz0 = run_backward(params, tape, pl.dout, cfg.activation, nullptr);
    return first_layer_weight_grad(dz0, x);
}

double global_norm(const NetParams& grads) {
    return std::sqrt(grads.squared_norm());
}

void clip_grads(NetParams& grads, double max_norm) {
    const double g = global_norm(grads);
    if (g > max_norm) grads.scale(max_norm / g);
}

void adam_step(NetParams& params, AdamState& state, const NetParams& grads, double lr) {
    state.t += 1;
    const double b1 = state.beta1, b2 = state.beta2, eps = state.eps;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));

    auto update = [&](auto& theta, auto& m, auto& v, const auto& g) {
        m.array() = b1 * m.array() + (1.0 - b1) * g.array();
        v.array() = b2 * v.array() + (1.0 - b2) * g.array().square();
        theta.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    };
    update(params.w0, state.m.w0, state.v.w0, grads.w0);
    update(params.b0, state.m.b0, state.v.b0, grads.b0);
    for (std::size_t l = 0; l < params.deep.size(); ++l) {
        update(params.deep[l].w, state.m.deep[l].w, state.v.deep[l].w, grads.deep[l].w);
        update(params.deep[l].b, state.m.deep[l].b, state.v.deep[l].b, grads.deep[l].b);
    }
}

Matrix input_grads(const NetParams& params, const Matrix& x_batch, Activation act) {
    const Tape tape = run_forward(params, x_batch, act);
    const Eigen::RowVectorXd ones = Eigen::RowVectorXd::Ones(x_batch.rows());
    const Matrix dz0 = run_backward(params, tape, ones, act, nullptr);
    return (params.w0.transpose() * dz0).transpose();
}

void swap_gate_columns(NetParams& params, Index i, Index j) {
    params.w0.col(i).swap(params.w0.col(j));
}

}  // namespace grip::nn
