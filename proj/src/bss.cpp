#include "grip/bss.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

#include "grip/error.hpp"

namespace grip::bss {

double RegularizationPrior::lambda_fix() const {
    return std::sqrt(lambda_min * lambda_max);
}

void RegularizationPrior::validate() const {
    if (!(lambda_min > 0.0) || !(lambda_max >= lambda_min))
        throw Error(ErrorCode::InvalidArgument, "need 0 < lambda_min <= lambda_max");
    if (!(a_min > 0.0 && a_min <= 1.0))
        throw Error(ErrorCode::InvalidArgument, "a_min must lie in (0, 1]");
}

void BssConfig::validate() const {
    if (block_size < 1 || total_steps < block_size)
        throw Error(ErrorCode::InvalidArgument, "need T >= M >= 1");
    if (warmup_steps < 0) throw Error(ErrorCode::InvalidArgument, "warmup_steps must be >= 0");
    if (ensemble_k < 1) throw Error(ErrorCode::InvalidArgument, "ensemble_k must be >= 1");
    prior.validate();
    net.validate();
}

Regime sample_regime(const RegularizationPrior& prior, Rng& rng) {
    const auto log_uniform_lambda = [&] {
        const double lo = std::log(prior.lambda_min);
        const double hi = std::log(prior.lambda_max);
        return std::exp(rng.uniform(lo, hi));
    };
    switch (prior.schedule) {
        case Schedule::two_d_block: {
            const double lambda = log_uniform_lambda();
            return {lambda, rng.uniform(prior.a_min, 1.0)};
        }
        case Schedule::one_d_block_lambda:
            return {log_uniform_lambda(), 1.0};
        case Schedule::one_d_block_a:
            return {prior.lambda_fix(), rng.uniform(prior.a_min, 1.0)};
        case Schedule::fixed:
            return {prior.lambda_fix(), 1.0};
    }
    return {prior.lambda_fix(), 1.0};
}

const std::vector<Index>& BatchSampler::next(Rng& rng) {
    if (perm_.empty()) {
        perm_.resize(static_cast<std::size_t>(n_));
        std::iota(perm_.begin(), perm_.end(), Index{0});
        cursor_ = n_;
    }
    if (batch_ >= n_) {
        current_ = perm_;
        return current_;
    }
    if (cursor_ + batch_ > n_) {
        std::shuffle(perm_.begin(), perm_.end(), rng.engine());
        cursor_ = 0;
    }
    current_.assign(perm_.begin() + cursor_, perm_.begin() + cursor_ + batch_);
    cursor_ += batch_;
    return current_;
}

Matrix gather_rows(const Matrix& x, const std::vector<Index>& rows) {
    Matrix out(static_cast<Index>(rows.size()), x.cols());
    for (Index j = 0; j < x.cols(); ++j)
        for (std::size_t r = 0; r < rows.size(); ++r) out(static_cast<Index>(r), j) = x(rows[r], j);
    return out;
}

Vector gather_rows(const Vector& y, const std::vector<Index>& rows) {
    Vector out(static_cast<Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) out(static_cast<Index>(r)) = y(rows[r]);
    return out;
}

namespace {

// Adam on minibatches drawn from the sampler; `step` returns the objective.
class Trainer {
public:
    Trainer(const Matrix& x, const Vector& y, const nn::NetConfig& net, nn::NetParams& params)
        : x_(x), y_(y), net_(net), params_(params), adam_(nn::AdamState::for_params(params)),
          sampler_(x.rows(), net.batch_size) {}

    double step(double lambda, double a, Rng& rng) {
        const bool full = sampler_.batch_size() >= x_.rows();
        nn::LossGrad lg;
        if (full) {
            lg = nn::loss_and_grads(params_, x_, y_, lambda, a, net_);
        } else {
            const auto& rows = sampler_.next(rng);
            last_x_ = gather_rows(x_, rows);
            last_y_ = gather_rows(y_, rows);
            lg = nn::loss_and_grads(params_, last_x_, last_y_, lambda, a, net_);
        }
        if (net_.clip_max_norm) nn::clip_grads(lg.grads, *net_.clip_max_norm);
        nn::adam_step(params_, adam_, lg.grads, net_.learning_rate);
        return lg.loss;
    }

    const Matrix& last_x() const { return sampler_.batch_size() >= x_.rows() ? x_ : last_x_; }
    const Vector& last_y() const { return sampler_.batch_size() >= x_.rows() ? y_ : last_y_; }
    nn::AdamState& adam() { return adam_; }
    BatchSampler& sampler() { return sampler_; }

private:
    const Matrix& x_;
    const Vector& y_;
    const nn::NetConfig& net_;
    nn::NetParams& params_;
    nn::AdamState adam_;
    BatchSampler sampler_;
    Matrix last_x_;
    Vector last_y_;
};

std::string step_context(long block, const Regime& r, long step) {
    std::ostringstream os;
    os << "block " << block << " (lambda=" << r.lambda << ", a=" << r.a << "), step " << step;
    return os.str();
}

}  // namespace

void warmup(const Matrix& x_aug, const Vector& y, const nn::NetConfig& net, long steps,
            nn::NetParams& params, nn::AdamState& adam, BatchSampler& sampler, Rng& rng) {
    const bool full = sampler.batch_size() >= x_aug.rows();
    for (long t = 0; t < steps; ++t) {
        nn::LossGrad lg;
        if (full) {
            lg = nn::loss_and_grads(params, x_aug, y, 0.0, 1.0, net);
        } else {
            const auto& rows = sampler.next(rng);
            lg = nn::loss_and_grads(params, gather_rows(x_aug, rows), gather_rows(y, rows), 0.0, 1.0, net);
        }
        if (net.clip_max_norm) nn::clip_grads(lg.grads, *net.clip_max_norm);
        nn::adam_step(params, adam, lg.grads, net.learning_rate);
    }
}

PersistenceScores bss_train_from(const Matrix& x_aug, const Vector& y, const BssConfig& cfg,
                                 nn::NetParams params, Rng& rng, std::ostream* diagnostics) {
    cfg.validate();
    if (x_aug.cols() != cfg.net.input_dim || params.input_dim() != cfg.net.input_dim)
        throw Error(ErrorCode::DimensionMismatch, "augmented design width does not match net input_dim");
    if (x_aug.rows() != y.size()) throw Error(ErrorCode::DimensionMismatch, "x and y lengths differ");

    Trainer trainer(x_aug, y, cfg.net, params);
    warmup(x_aug, y, cfg.net, cfg.warmup_steps, params, trainer.adam(), trainer.sampler(), rng);

    const long blocks = cfg.blocks();
    PersistenceScores out;
    out.s_hat = Vector::Zero(x_aug.cols());
    out.regimes.reserve(static_cast<std::size_t>(blocks));
    if (diagnostics) *diagnostics << "block,lambda,a,loss,grad_ratio\n";

    for (long b = 0; b < blocks; ++b) {
        const Regime regime = sample_regime(cfg.prior, rng);
        double loss = 0.0;
        for (long t = 0; t < cfg.block_size; ++t) {
            try {
                loss = trainer.step(regime.lambda, regime.a, rng);
            } catch (const Error& e) {
                if (e.code() != ErrorCode::NonFiniteLoss) throw;
                throw Error(ErrorCode::NonFiniteLoss, std::string(e.what()) + " at " + step_context(b, regime, t));
            }
        }
        out.s_hat += nn::group_norms(params);
        out.regimes.push_back(regime);
        if (diagnostics) {
            const Matrix gp = nn::penalty_grad_w0(params, regime.a, cfg.net.smoothing_eps);
            const Matrix gl = nn::pred_loss_grad_w0(params, trainer.last_x(), trainer.last_y(), cfg.net);
            const double ratio = regime.lambda * gp.norm() / (gl.norm() + 1e-12);
            *diagnostics << b << ',' << regime.lambda << ',' << regime.a << ',' << loss << ',' << ratio << '\n';
        }
    }
    out.snapshots_used = blocks;
    out.s_hat /= static_cast<double>(blocks);
    if (!out.s_hat.allFinite()) throw Error(ErrorCode::NonFiniteLoss, "persistence scores are not finite");
    return out;
}

PersistenceScores bss_train(const knockoffs::AugmentedDesign& data, const BssConfig& cfg, Rng& rng,
                            std::ostream* diagnostics) {
    cfg.validate();
    const Matrix x_aug = data.stacked();
    if (cfg.ensemble_k == 1) {
        auto params = nn::init_params(cfg.net, rng);
        return bss_train_from(x_aug, data.y, cfg, std::move(params), rng, diagnostics);
    }
    BssConfig member = cfg;
    member.ensemble_k = 1;
    member.total_steps = cfg.total_steps / cfg.ensemble_k;
    if (member.total_steps < member.block_size)
        throw Error(ErrorCode::InvalidArgument, "ensemble split leaves fewer than M steps per member");
    std::vector<PersistenceScores> runs;
    for (int k = 0; k < cfg.ensemble_k; ++k) {
        auto params = nn::init_params(member.net, rng);
        runs.push_back(bss_train_from(x_aug, data.y, member, std::move(params), rng, diagnostics));
    }
    return ensemble_scores(runs);
}

double base_gradient_ratio(const Matrix& x_aug, const Vector& y, const nn::NetParams& params,
                           const nn::NetConfig& net) {
    const double pred_norm = nn::pred_loss_grad_w0(params, x_aug, y, net).norm();
    if (pred_norm < 1e-12)
        throw Error(ErrorCode::DegenerateGradient,
                    "prediction-loss gradient norm " + std::to_string(pred_norm) + " < 1e-12");
    const double pen_norm = nn::penalty_grad_w0(params, 1.0, net.smoothing_eps).norm();
    return pen_norm / pred_norm;
}

LambdaRange calibrate_lambda_range(const knockoffs::AugmentedDesign& data, const nn::NetConfig& net,
                                   double r_min, double r_max, long warmup_steps, Rng& rng) {
    if (!(r_min > 0.0 && r_max > r_min))
        throw Error(ErrorCode::InvalidArgument, "need 0 < r_min < r_max");
    const Matrix x_aug = data.stacked();
    auto params = nn::init_params(net, rng);
    auto adam = nn::AdamState::for_params(params);
    BatchSampler sampler(x_aug.rows(), net.batch_size);
    warmup(x_aug, data.y, net, warmup_steps, params, adam, sampler, rng);
    const double rho0 = base_gradient_ratio(x_aug, data.y, params, net);
    return {r_min / rho0, r_max / rho0, rho0};
}

double group_norm_change(const Vector& before, const Vector& after) {
    if (before.size() != after.size() || before.size() == 0)
        throw Error(ErrorCode::LengthMismatch, "group norm vectors differ in length");
    return (after - before).cwiseAbs().sum() / static_cast<double>(before.size());
}

BlockCalibration calibrate_block_size(const knockoffs::AugmentedDesign& data, const BssConfig& cfg,
                                      double delta, const std::vector<long>& candidates, Rng& rng) {
    if (candidates.empty()) throw Error(ErrorCode::InvalidArgument, "no block-size candidates");
    if (!(delta > 0.0)) throw Error(ErrorCode::InvalidArgument, "delta must be positive");
    cfg.prior.validate();
    cfg.net.validate();
    const Matrix x_aug = data.stacked();
    const Rng pilot_base(rng.engine()());

    BlockCalibration out{candidates.back(), false, {}};
    for (const long m : candidates) {
        if (m < 1) throw Error(ErrorCode::InvalidArgument, "block-size candidates must be positive");
        Rng pilot = pilot_base;
        auto params = nn::init_params(cfg.net, pilot);
        Trainer trainer(x_aug, data.y, cfg.net, params);
        warmup(x_aug, data.y, cfg.net, cfg.warmup_steps, params, trainer.adam(), trainer.sampler(), pilot);

        const long tail = (m + 4) / 5;
        double worst = 0.0;
        for (int b = 0; b < kPilotBlocks; ++b) {
            const Regime regime = sample_regime(cfg.prior, pilot);
            Vector prev = nn::group_norms(params);
            for (long t = 0; t < m; ++t) {
                trainer.step(regime.lambda, regime.a, pilot);
                Vector cur = nn::group_norms(params);
                if (t >= m - tail) worst = std::max(worst, group_norm_change(prev, cur));
                prev = std::move(cur);
            }
        }
        out.worst_tail_change.emplace_back(m, worst);
        if (worst < delta && !out.accepted) {
            out.block_size = m;
            out.accepted = true;
            break;
        }
    }
    return out;
}

PersistenceScores ensemble_scores(const std::vector<PersistenceScores>& runs) {
    if (runs.empty()) throw Error(ErrorCode::LengthMismatch, "no runs to ensemble");
    PersistenceScores out;
    out.s_hat = Vector::Zero(runs.front().s_hat.size());
    for (const auto& r : runs) {
        if (r.s_hat.size() != out.s_hat.size())
            throw Error(ErrorCode::LengthMismatch, "ensemble members have different lengths");
        out.s_hat += r.s_hat;
        out.snapshots_used += r.snapshots_used;
        out.regimes.insert(out.regimes.end(), r.regimes.begin(), r.regimes.end());
    }
    out.s_hat /= static_cast<double>(runs.size());
    return out;
}

}  // namespace grip::bss
