#include "grip/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "grip/error.hpp"

namespace grip::baselines {

namespace {

double soft_threshold(double z, double t) {
    if (z > t) return z - t;
    if (z < -t) return z + t;
    return 0.0;
}

std::vector<Index> natural_order(Index m) {
    std::vector<Index> order(static_cast<std::size_t>(m));
    std::iota(order.begin(), order.end(), Index{0});
    return order;
}

}  // namespace

std::vector<double> default_lambda_grid(const Matrix& x, const Vector& y, int points, double ratio) {
    if (points < 2) throw Error(ErrorCode::InvalidArgument, "lambda grid needs at least two points");
    const double n = static_cast<double>(x.rows());
    const double lambda_max = (x.transpose() * y).cwiseAbs().maxCoeff() / n;
    if (!(lambda_max > 0.0)) return std::vector<double>(static_cast<std::size_t>(points), 0.0);
    std::vector<double> grid(static_cast<std::size_t>(points));
    const double log_hi = std::log(lambda_max);
    const double log_lo = std::log(lambda_max * ratio);
    for (int k = 0; k < points; ++k)
        grid[static_cast<std::size_t>(k)] =
            std::exp(log_hi + (log_lo - log_hi) * static_cast<double>(k) / static_cast<double>(points - 1));
    grid.front() = lambda_max;
    return grid;
}

LassoFit lasso_cd(const Matrix& x, const Vector& y, double lambda, const Vector& warm, int max_iters, double tol,
                  const std::vector<Index>& visit_order) {
    const Index n = x.rows();
    const Index m = x.cols();
    if (y.size() != n || warm.size() != m) throw Error(ErrorCode::DimensionMismatch, "lasso_cd shape mismatch");
    const std::vector<Index> order = visit_order.empty() ? natural_order(m) : visit_order;
    if (static_cast<Index>(order.size()) != m)
        throw Error(ErrorCode::DimensionMismatch, "visit order must cover every column");
    const double nd = static_cast<double>(n);

    Vector col_sq(m);
    for (Index j = 0; j < m; ++j) col_sq(j) = x.col(j).squaredNorm() / nd;

    LassoFit fit{warm, 0, false};
    Vector resid = y - x * fit.beta;
    for (int it = 0; it < max_iters; ++it) {
        fit.iterations = it + 1;
        double max_change = 0.0;
        for (const Index j : order) {
            if (col_sq(j) <= 0.0) continue;
            const double old = fit.beta(j);
            const double rho = x.col(j).dot(resid) / nd + col_sq(j) * old;
            const double updated = soft_threshold(rho, lambda) / col_sq(j);
            const double diff = updated - old;
            if (diff != 0.0) {
                resid -= diff * x.col(j);
                fit.beta(j) = updated;
                max_change = std::max(max_change, std::abs(diff) * col_sq(j));
            }
        }
        if (max_change < tol) {
            fit.converged = true;
            break;
        }
    }
    return fit;
}

EntryScores lasso_entry_scores(const Matrix& x_aug, const Vector& y, const LassoPathConfig& cfg) {
    if (x_aug.rows() != y.size()) throw Error(ErrorCode::DimensionMismatch, "x and y lengths differ");
    if (!(cfg.tol > 0.0) || cfg.max_iters < 1) throw Error(ErrorCode::InvalidArgument, "invalid lasso settings");
    const std::vector<double> grid = cfg.lambda_grid.empty() ? default_lambda_grid(x_aug, y) : cfg.lambda_grid;
    for (std::size_t k = 1; k < grid.size(); ++k)
        if (!(grid[k] < grid[k - 1]))
            throw Error(ErrorCode::InvalidArgument, "lambda grid must be strictly descending");

    EntryScores out;
    out.scores = Vector::Zero(x_aug.cols());
    Vector beta = Vector::Zero(x_aug.cols());
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const double lambda = grid[k];
        auto fit = lasso_cd(x_aug, y, lambda, beta, cfg.max_iters, cfg.tol, cfg.visit_order);
        if (!fit.converged) {
            std::ostringstream os;
            os << "NotConverged: lambda=" << lambda << " after " << cfg.max_iters << " sweeps";
            out.warnings.push_back(os.str());
        }
        beta = std::move(fit.beta);
        for (Index j = 0; j < beta.size(); ++j)
            if (out.scores(j) == 0.0 && std::abs(beta(j)) > kActiveThreshold) out.scores(j) = lambda;
    }
    return out;
}

EntryScores lasso_entry_scores(const knockoffs::AugmentedDesign& data, const LassoPathConfig& cfg) {
    return lasso_entry_scores(data.stacked(), data.y, cfg);
}

Vector mald_from_params(const Matrix& x_aug, const nn::NetParams& params, const nn::NetConfig& net,
                        const MaldConfig& cfg, Rng& rng) {
    if (!(cfg.exponent > 0.0) || cfg.eval_batches < 1)
        throw Error(ErrorCode::InvalidArgument, "MALD needs r > 0 and eval_batches >= 1");
    bss::BatchSampler sampler(x_aug.rows(), net.batch_size);
    const bool full = sampler.batch_size() >= x_aug.rows();
    const int batches = full ? 1 : cfg.eval_batches;
    Vector acc = Vector::Zero(x_aug.cols());
    double count = 0.0;
    for (int b = 0; b < batches; ++b) {
        const Matrix g = full ? nn::input_grads(params, x_aug, net.activation)
                              : nn::input_grads(params, bss::gather_rows(x_aug, sampler.next(rng)), net.activation);
        acc += g.array().abs().pow(cfg.exponent).colwise().sum().transpose().matrix();
        count += static_cast<double>(g.rows());
    }
    return acc / count;
}

Vector mald_scores_from(const Matrix& x_aug, const Vector& y, nn::NetParams params, const nn::NetConfig& net,
                        long train_steps, const MaldConfig& cfg, Rng& rng) {
    nn::NetConfig unregularized = net;
    unregularized.deep_l2 = 0.0;
    auto adam = nn::AdamState::for_params(params);
    bss::BatchSampler sampler(x_aug.rows(), unregularized.batch_size);
    bss::warmup(x_aug, y, unregularized, train_steps, params, adam, sampler, rng);
    return mald_from_params(x_aug, params, unregularized, cfg, rng);
}

Vector mald_scores(const knockoffs::AugmentedDesign& data, const nn::NetConfig& net, long train_steps,
                   const MaldConfig& cfg, Rng& rng) {
    auto params = nn::init_params(net, rng);
    return mald_scores_from(data.stacked(), data.y, std::move(params), net, train_steps, cfg, rng);
}

bss::PersistenceScores single_shot_group_lasso(const knockoffs::AugmentedDesign& data, bss::BssConfig cfg,
                                               Rng& rng) {
    cfg.prior.schedule = bss::Schedule::fixed;
    return bss::bss_train(data, cfg, rng);
}

}  // namespace grip::baselines
