#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"

#include "grip/baselines.hpp"
#include "grip/error.hpp"

using namespace grip;
using namespace grip::baselines;

namespace {

// n × m design with XᵀX = n·I.
Matrix orthonormal_design(Index n, Index m, Rng& rng) {
    Eigen::HouseholderQR<Matrix> qr(rng.normal_matrix(n, m));
    return Matrix(qr.householderQ()).leftCols(m) * std::sqrt(double(n));
}

nn::NetConfig linear_net(Index inputs) {
    nn::NetConfig c;
    c.input_dim = inputs;
    c.depth = 0;
    c.width = 1;
    c.activation = nn::Activation::identity;
    c.learning_rate = 0.0;
    c.batch_size = 16;
    return c;
}

}  // namespace

TEST_CASE("default grid spans lambda_max down to the ratio") {
    Rng rng(1);
    const Matrix x = rng.normal_matrix(50, 6);
    const Vector y = rng.normal_matrix(50, 1);
    const auto grid = default_lambda_grid(x, y);
    const double lmax = (x.transpose() * y).cwiseAbs().maxCoeff() / 50.0;
    REQUIRE(grid.size() == 100);
    CHECK(grid.front() == lmax);
    CHECK(grid.back() == doctest::Approx(1e-4 * lmax));
    for (std::size_t k = 1; k < grid.size(); ++k) CHECK(grid[k] < grid[k - 1]);
}

TEST_CASE("lasso on an orthonormal design is soft thresholding") {
    Rng rng(2);
    const Index n = 200, m = 6;
    const Matrix x = orthonormal_design(n, m, rng);
    Vector beta(m);
    beta << 3.0, -0.5, 1.5, 0.0, -2.2, 0.9;
    const Vector y = x * beta;
    const double lambda = 0.7;
    const auto fit = lasso_cd(x, y, lambda, Vector::Zero(m), 5000, 1e-10);
    CHECK(fit.converged);
    for (Index j = 0; j < m; ++j) {
        const double z = beta(j);
        const double expect = std::copysign(std::max(std::abs(z) - lambda, 0.0), z);
        CHECK(fit.beta(j) == doctest::Approx(expect).epsilon(1e-8));
    }
}

TEST_CASE("entry order follows coefficient magnitude on orthonormal designs") {
    Rng rng(3);
    const Index n = 400, m = 8;
    const Matrix x = orthonormal_design(n, m, rng);
    Vector beta(m);
    beta << 0.2, 2.0, -1.1, 0.6, -3.0, 0.05, 1.6, -0.35;
    const Vector y = x * beta;
    LassoPathConfig cfg;
    const auto grid = default_lambda_grid(x, y);
    const auto r = lasso_entry_scores(x, y, cfg);
    CHECK(r.warnings.empty());

    std::vector<Index> by_beta(m), by_score(m);
    std::iota(by_beta.begin(), by_beta.end(), 0);
    std::iota(by_score.begin(), by_score.end(), 0);
    std::sort(by_beta.begin(), by_beta.end(), [&](Index a, Index b) { return std::abs(beta(a)) > std::abs(beta(b)); });
    std::stable_sort(by_score.begin(), by_score.end(), [&](Index a, Index b) { return r.scores(a) > r.scores(b); });
    CHECK(by_beta == by_score);

    // Entry at the first grid value below |xⱼᵀy|/n.
    const double step = grid[0] / grid[1];
    for (Index j = 0; j < m; ++j) {
        const double z = std::abs(x.col(j).dot(y)) / n;
        CHECK(r.scores(j) <= z * (1.0 + 1e-12));
        CHECK(r.scores(j) >= z / step * (1.0 - 1e-9));
    }
}

TEST_CASE("pure noise keeps scores under lambda_max") {
    Rng rng(4);
    const Matrix x = rng.normal_matrix(2000, 10);
    const Vector y = rng.normal_matrix(2000, 1);
    const auto grid = default_lambda_grid(x, y);
    const auto r = lasso_entry_scores(x, y, {});
    CHECK((r.scores.array() >= 0.0).all());
    CHECK(r.scores.maxCoeff() <= grid.front());
    CHECK(r.scores.maxCoeff() <= 0.1);
}

TEST_CASE("coordinate descent satisfies KKT") {
    Rng rng(5);
    const Index n = 150, m = 12;
    const Matrix x = rng.normal_matrix(n, m);
    Vector beta = Vector::Zero(m);
    beta(0) = 1.0;
    beta(3) = -0.8;
    beta(7) = 0.4;
    const Vector y = x * beta + 0.3 * Vector(rng.normal_matrix(n, 1));
    for (double lambda : {0.3, 0.1, 0.02}) {
        const auto fit = lasso_cd(x, y, lambda, Vector::Zero(m), 20000, 1e-12);
        REQUIRE(fit.converged);
        const Vector corr = x.transpose() * (y - x * fit.beta) / double(n);
        for (Index j = 0; j < m; ++j) {
            if (fit.beta(j) == 0.0)
                CHECK(std::abs(corr(j)) <= lambda + 1e-8);
            else
                CHECK(corr(j) == doctest::Approx(lambda * (fit.beta(j) > 0 ? 1.0 : -1.0)).epsilon(1e-6));
        }
    }
}

TEST_CASE("column swap with a swapped visit order swaps entry scores") {
    Rng rng(6);
    const Index n = 120, p = 5;
    knockoffs::AugmentedDesign data =
        knockoffs::augment(rng.normal_matrix(n, p), rng.normal_matrix(n, p), Vector(rng.normal_matrix(n, 1)));
    data.y += 1.5 * data.x.col(1) - data.x.col(3);
    const Matrix xa = data.stacked();
    LassoPathConfig cfg;
    cfg.lambda_grid = default_lambda_grid(xa, data.y, 40);
    const Vector base = lasso_entry_scores(xa, data.y, cfg).scores;

    for (Index j = 0; j < p; ++j) {
        Matrix xs = xa;
        xs.col(j).swap(xs.col(j + p));
        LassoPathConfig swapped = cfg;
        swapped.visit_order.resize(2 * p);
        std::iota(swapped.visit_order.begin(), swapped.visit_order.end(), 0);
        std::swap(swapped.visit_order[j], swapped.visit_order[j + p]);
        const Vector s = lasso_entry_scores(xs, data.y, swapped).scores;
        CHECK(s(j) == base(j + p));
        CHECK(s(j + p) == base(j));
        for (Index k = 0; k < 2 * p; ++k)
            if (k != j && k != j + p) CHECK(s(k) == base(k));
    }
}

TEST_CASE("entry score validation and convergence warnings") {
    Rng rng(7);
    const Matrix x = rng.normal_matrix(40, 4);
    const Vector y = x.col(0) + 0.1 * Vector(rng.normal_matrix(40, 1));
    LassoPathConfig bad;
    bad.lambda_grid = {0.1, 0.2};
    CHECK_THROWS_AS(lasso_entry_scores(x, y, bad), Error);

    LassoPathConfig capped;
    capped.max_iters = 1;
    capped.tol = 1e-14;
    const auto r = lasso_entry_scores(x, y, capped);
    CHECK_FALSE(r.warnings.empty());
    CHECK(r.warnings.front().rfind("NotConverged", 0) == 0);
}

TEST_CASE("mald of a linear network is its coefficients") {
    const auto c = linear_net(2);
    Rng rng(8);
    auto params = nn::init_params(c, rng);
    params.w0 << 3, -2;
    params.deep[0].w << 1.0;
    const Matrix x = rng.normal_matrix(64, 2);
    MaldConfig m;
    const Vector s = mald_from_params(x, params, c, m, rng);
    CHECK(s(0) == doctest::Approx(3.0));
    CHECK(s(1) == doctest::Approx(2.0));
    m.exponent = 2.0;
    const Vector s2 = mald_from_params(x, params, c, m, rng);
    CHECK(s2(0) == doctest::Approx(9.0));
    CHECK(s2(1) == doctest::Approx(4.0));

    // Training at lr 0 leaves the network as is.
    const Vector y = x.col(0);
    Rng train(1);
    const Vector t = mald_scores_from(x, y, params, c, 20, MaldConfig{}, train);
    CHECK(t(0) == doctest::Approx(3.0));
    CHECK(t(1) == doctest::Approx(2.0));
}

TEST_CASE("mald r=2 averages squared per-sample terms") {
    nn::NetConfig c;
    c.input_dim = 3;
    c.depth = 1;
    c.width = 6;
    c.batch_size = 1000;
    Rng rng(9);
    const auto params = nn::init_params(c, rng);
    const Matrix x = rng.normal_matrix(40, 3);
    MaldConfig m;
    m.exponent = 2.0;
    const Vector s = mald_from_params(x, params, c, m, rng);
    const Matrix g = nn::input_grads(params, x, c.activation);
    for (Index j = 0; j < 3; ++j) CHECK(s(j) == doctest::Approx(g.col(j).squaredNorm() / 40.0));
}

TEST_CASE("mald permutes with its inputs and ignores dead columns") {
    nn::NetConfig c;
    c.input_dim = 4;
    c.depth = 1;
    c.width = 8;
    c.batch_size = 16;
    Rng rng(10);
    auto params = nn::init_params(c, rng);
    params.w0.col(2).setZero();
    const Matrix x = rng.normal_matrix(50, 4);
    Rng r1(3);
    const Vector s = mald_from_params(x, params, c, {}, r1);
    CHECK((s.array() >= 0.0).all());
    CHECK(s(2) == 0.0);

    const std::vector<Index> perm = {3, 0, 2, 1};
    Matrix xp(50, 4);
    auto pp = params;
    for (Index k = 0; k < 4; ++k) {
        xp.col(k) = x.col(perm[k]);
        pp.w0.col(k) = params.w0.col(perm[k]);
    }
    Rng r2(3);
    const Vector sp = mald_from_params(xp, pp, c, {}, r2);
    for (Index k = 0; k < 4; ++k) CHECK(sp(k) == doctest::Approx(s(perm[k])).epsilon(1e-12));
}

TEST_CASE("single-shot group lasso runs the fixed schedule") {
    Rng rng(11);
    const Index n = 64, p = 3;
    const auto data =
        knockoffs::augment(rng.normal_matrix(n, p), rng.normal_matrix(n, p), Vector(rng.normal_matrix(n, 1)));
    bss::BssConfig cfg;
    cfg.total_steps = 110;
    cfg.block_size = 25;
    cfg.net.input_dim = 2 * p;
    cfg.net.width = 4;
    cfg.net.batch_size = 16;
    cfg.prior.lambda_min = 1e-3;
    cfg.prior.lambda_max = 4e-2;
    cfg.prior.schedule = bss::Schedule::two_d_block;
    const auto s = single_shot_group_lasso(data, cfg, rng);
    CHECK(s.snapshots_used == 4);
    REQUIRE(s.regimes.size() == 4);
    for (const auto& r : s.regimes) {
        CHECK(r.lambda == doctest::Approx(std::sqrt(1e-3 * 4e-2)));
        CHECK(r.a == 1.0);
    }
}
