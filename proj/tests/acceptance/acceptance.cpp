// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "grip/baselines.hpp"
#include "grip/bss.hpp"
#include "grip/datagen.hpp"
#include "grip/filter.hpp"
#include "grip/knockoffs.hpp"
#include "grip/linalg.hpp"
#include "grip/neuralnet.hpp"
#include "grip/pipeline.hpp"

using namespace grip;
using linalg::max_abs;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

std::string fmt(const char* f, double a, double b) {
    char buf[160];
    std::snprintf(buf, sizeof buf, f, a, b);
    return buf;
}

std::string fmt(const char* f, double a, double b, double c) {
    char buf[200];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

std::vector<double*> scalars(nn::NetParams& p) {
    std::vector<double*> out;
    auto add = [&](auto& m) {
        for (Index k = 0; k < m.size(); ++k) out.push_back(m.data() + k);
    };
    add(p.w0);
    add(p.b0);
    for (auto& l : p.deep) {
        add(l.w);
        add(l.b);
    }
    return out;
}

double ks_distance(Vector a, Vector b) {
    std::sort(a.data(), a.data() + a.size());
    std::sort(b.data(), b.data() + b.size());
    Index i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double v = std::min(a(i), b(j));
        while (i < a.size() && a(i) <= v) ++i;
        while (j < b.size() && b(j) <= v) ++j;
        d = std::max(d, std::abs(double(i) / a.size() - double(j) / b.size()));
    }
    return d;
}

// 1. Analytic gradients of the full smoothed objective vs central differences.
Outcome gradient_check() {
    Rng rng(101);
    const double h = 1e-5;
    double worst = 0.0;
    for (int net = 0; net < 5; ++net) {
        nn::NetConfig c;
        c.input_dim = 10;
        c.depth = 1 + net % 3;
        c.width = 8 + 6 * net;  // ≤ 32
        c.deep_l2 = 0.01;
        c.smoothing_eps = 1e-3;
        auto p = nn::init_params(c, rng);
        for (Index k = 0; k < p.b0.size(); ++k) p.b0(k) = 0.1 * rng.normal();
        for (auto& l : p.deep)
            for (Index k = 0; k < l.b.size(); ++k) l.b(k) = 0.1 * rng.normal();
        const Matrix x = rng.normal_matrix(24, 10);
        const Vector y = rng.normal_matrix(24, 1);
        const double lambda = 0.05 + 0.1 * net, a = 0.4 + 0.15 * net;
        auto grads = nn::loss_and_grads(p, x, y, lambda, a, c).grads;
        auto ps = scalars(p);
        auto gs = scalars(grads);
        for (int k = 0; k < 20; ++k) {
            const std::size_t i = rng.below(ps.size());
            const double orig = *ps[i];
            *ps[i] = orig + h;
            const double up = nn::loss_and_grads(p, x, y, lambda, a, c).loss;
            *ps[i] = orig - h;
            const double down = nn::loss_and_grads(p, x, y, lambda, a, c).loss;
            *ps[i] = orig;
            const double fd = (up - down) / (2.0 * h);
            const double err = std::abs(*gs[i] - fd) / std::max({std::abs(*gs[i]), std::abs(fd), 1e-6});
            worst = std::max(worst, err);
        }
    }
    return {worst <= 1e-4, fmt("max rel err %.3g over 100 coordinates (tol 1e-4)", worst)};
}

// 2. Column-and-init swap flips W_j exactly and leaves the others unchanged.
Outcome antisymmetry() {
    const Index n = 500, p = 20;
    Rng design(11), beta(12), noise(13), ko(14);
    const auto d = datagen::ar1_design(n, p, 0.5, design);
    const auto resp = datagen::single_index_response(d.x, datagen::support_grid(p, 5), beta, noise, 1.0);
    const Matrix xt = knockoffs::sample_gaussian_knockoffs(d.x, knockoffs::build_gaussian_model(d.sigma), ko);
    const auto data = knockoffs::augment(d.x, xt, resp.y);
    const Matrix xa = data.stacked();

    bss::BssConfig cfg;
    cfg.total_steps = 400;
    cfg.block_size = 25;
    cfg.net.input_dim = 2 * p;
    cfg.net.depth = 2;
    cfg.net.width = 16;
    cfg.net.batch_size = 64;
    cfg.net.learning_rate = 5e-3;
    cfg.net.clip_max_norm = 1.0;
    cfg.prior.lambda_min = 1e-3;
    cfg.prior.lambda_max = 1e-1;
    Rng init(15);
    const auto params = nn::init_params(cfg.net, init);
    Rng r0(16);
    const Vector w = filter::knockoff_stats(bss::bss_train_from(xa, data.y, cfg, params, r0).s_hat, p);

    Rng pick(17);
    std::vector<Index> js(p);
    std::iota(js.begin(), js.end(), 0);
    for (Index k = 0; k < 5; ++k) std::swap(js[k], js[k + static_cast<Index>(pick.below(p - k))]);
    js.resize(5);

    bool ok = true;
    double worst = 0.0;
    for (Index j : js) {
        Matrix xs = xa;
        xs.col(j).swap(xs.col(j + p));
        auto ps = params;
        nn::swap_gate_columns(ps, j, j + p);
        Rng r1(16);
        const Vector ws = filter::knockoff_stats(bss::bss_train_from(xs, data.y, cfg, ps, r1).s_hat, p);
        const double rel = std::abs(ws(j) + w(j)) / std::max(std::abs(w(j)), 1e-300);
        worst = std::max(worst, rel);
        ok = ok && rel <= 1e-12 && (w(j) == 0.0 || std::signbit(ws(j)) != std::signbit(w(j)));
        for (Index k = 0; k < p; ++k)
            if (k != j && ws(k) != w(k)) ok = false;
    }
    return {ok, fmt("5 swaps, max rel |W_j + W'_j|/|W_j| = %.3g, others bit-identical", worst)};
}

// 3. Gaussian knockoff second moments.
Outcome moment_matching() {
    const Index n = 50000, p = 10;
    Rng design(21), rng(22);
    const auto d = datagen::ar1_design(n, p, 0.5, design);
    const auto model = knockoffs::build_gaussian_model(d.sigma);
    const Matrix xt = knockoffs::sample_gaussian_knockoffs(d.x, model, rng);
    const Matrix& sigma = d.sigma.matrix();
    const double e1 = max_abs(linalg::sample_covariance(xt) - sigma);
    const double e2 = max_abs(linalg::cross_covariance(d.x, xt) - (sigma - Matrix(model.s.asDiagonal())));
    return {e1 <= 0.03 && e2 <= 0.03, fmt("|Cov(Xt) - Sigma|max = %.4f, |Cov(X,Xt) - (Sigma - S)|max = %.4f (tol 0.03)", e1, e2)};
}

// 4. Fixed-X Gram identities.
Outcome fixedx_gram() {
    Rng d(31), rng(32);
    const Matrix x = d.normal_matrix(200, 40);
    const auto fx = knockoffs::fixedx_knockoffs(x, rng);
    const Matrix g = fx.x_normalized.transpose() * fx.x_normalized;
    const double e1 = max_abs(fx.x_tilde_normalized.transpose() * fx.x_tilde_normalized - g);
    const double e2 = max_abs(fx.x_normalized.transpose() * fx.x_tilde_normalized - (g - fx.s * Matrix::Identity(40, 40)));
    return {e1 <= 1e-6 && e2 <= 1e-6, fmt("|XtT Xt - G|max = %.3g, |XT Xt - (G - diag s)|max = %.3g (tol 1e-6)", e1, e2)};
}

// 5. Copula knockoffs keep binary support and continuous marginals.
Outcome copula_marginals() {
    const Index n = 2000, p = 10;
    Rng d(41);
    Matrix x(n, p);
    const Vector common = d.normal_matrix(n, 1);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < 6; ++j) {
            const double z = 0.6 * common(i) + 0.8 * d.normal();
            x(i, j) = j % 2 == 0 ? std::exp(z) : z * z * z + z;  // skewed and heavy-tailed
        }
        for (Index j = 6; j < p; ++j) x(i, j) = (0.5 * common(i) + d.normal()) > 0.6 + 0.2 * (j - 6) ? 1.0 : 0.0;
    }
    Rng rng(42);
    const auto ck = knockoffs::copula_knockoffs(x, knockoffs::kDefaultExtraShrink, rng);
    bool binary_ok = true;
    for (Index j = 6; j < p; ++j)
        binary_ok = binary_ok && (ck.x_tilde.col(j).array() == 0.0 || ck.x_tilde.col(j).array() == 1.0).all();
    double ks = 0.0;
    for (Index j = 0; j < 6; ++j) ks += ks_distance(x.col(j), ck.x_tilde.col(j));
    ks /= 6.0;
    return {binary_ok && ks <= 0.06,
            std::string(binary_ok ? "binary columns in {0,1}" : "binary column left {0,1}") +
                fmt(", mean KS over continuous columns = %.4f (tol 0.06)", ks)};
}

// 6. Threshold equals exhaustive enumeration.
Outcome threshold_oracle() {
    Rng rng(51);
    int mismatches = 0;
    for (int t = 0; t < 1000; ++t) {
        const Index p = 1 + static_cast<Index>(rng.below(50));
        Vector w(p);
        for (Index j = 0; j < p; ++j) {
            const double u = rng.uniform();
            w(j) = u < 0.1 ? 0.0 : u < 0.3 ? std::round(3.0 * rng.normal()) : rng.normal() + 0.7;
        }
        filter::KnockoffStats s{w, 0.05 + 0.4 * rng.uniform(), int(t % 2)};
        std::vector<double> cand;
        for (Index j = 0; j < p; ++j)
            if (w(j) != 0.0) cand.push_back(std::abs(w(j)));
        std::sort(cand.begin(), cand.end());
        double ref = std::numeric_limits<double>::infinity();
        for (double c : cand) {
            const double neg = double((w.array() <= -c).count()), pos = double((w.array() >= c).count());
            if ((s.offset + neg) / std::max(1.0, pos) <= s.q) {
                ref = c;
                break;
            }
        }
        if (filter::knockoff_threshold(s) != ref) ++mismatches;
    }
    return {mismatches == 0, fmt("%.0f mismatches over 1000 random statistic vectors", double(mismatches))};
}

pipeline::ExperimentConfig desk_config() {
    auto c = pipeline::default_profile(pipeline::Profile::synthetic);
    c.methods = {pipeline::Method::grip2, pipeline::Method::gr};
    c.q_grid = {0.2};
    c.offset = 1;
    c.trials = 30;
    c.seed = 7;
    c.synthetic.n = 2000;
    c.synthetic.p = 100;
    c.synthetic.support_spacing = 5;  // |S| = 20
    c.synthetic.rho = 0.4;
    c.synthetic.snr = 1.0;
    c.bss.total_steps = 1500;
    c.bss.block_size = 25;
    c.bss.net.depth = 2;
    c.bss.net.width = 64;
    c.bss.net.batch_size = 256;
    c.bss.net.learning_rate = 5e-3;
    c.bss.prior.lambda_min = 1e-3;
    c.bss.prior.lambda_max = 1e-1;
    return c;
}

int workers() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

const metrics::Summary* find(const pipeline::ResultRecord& r, const std::string& method) {
    for (const auto& s : r.summaries)
        if (s.method == method) return &s;
    return nullptr;
}

// 7. Realized FDR of GRIP2 at q = 0.2.
Outcome fdr_control(const pipeline::ResultRecord& r) {
    const auto* g = find(r, "grip2");
    const auto* gr = find(r, "gr");
    if (!g || !gr) return {false, "missing summaries"};
    const double bound = 0.2 + 2.0 * g->fdr_se;
    return {g->fdr <= bound && r.failed_trials == 0,
            fmt("GRIP2 FDR = %.4f (SE %.4f), bound %.4f", g->fdr, g->fdr_se, bound) +
                fmt("; GR FDR = %.4f (SE %.4f)", gr->fdr, gr->fdr_se) +
                fmt("; %.0f trials, %.0f failed", double(g->n_trials), double(r.failed_trials))};
}

// 8. Power sanity for GRIP2 against the single-shot ablation.
Outcome power_sanity(const pipeline::ResultRecord& r) {
    const auto* g = find(r, "grip2");
    const auto* gr = find(r, "gr");
    if (!g || !gr) return {false, "missing summaries"};
    return {g->power >= 0.5 && g->power >= gr->power - 0.05,
            fmt("GRIP2 power = %.4f (SE %.4f), GR power = %.4f", g->power, g->power_se, gr->power)};
}

// 9. Lasso entry order on orthonormal designs. Adjacent |beta| differ by at
// least 6.7%, so a 1000-point grid (0.93% per step) resolves every entry;
// the default 100-point grid must at least never invert the order.
Outcome lasso_oracle() {
    Rng rng(61);
    const Index n = 256, p = 16;
    int order_fail = 0, step_fail = 0, inversions = 0;
    for (int rep = 0; rep < 5; ++rep) {
        Eigen::HouseholderQR<Matrix> qr(rng.normal_matrix(n, p));
        const Matrix x = Matrix(qr.householderQ()).leftCols(p) * std::sqrt(double(n));
        Vector beta(p);
        for (Index j = 0; j < p; ++j) beta(j) = (0.2 + 0.25 * j) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
        std::vector<Index> perm(p);
        std::iota(perm.begin(), perm.end(), 0);
        for (Index j = p - 1; j > 0; --j) std::swap(perm[j], perm[rng.below(j + 1)]);
        Vector shuffled(p);
        for (Index j = 0; j < p; ++j) shuffled(j) = beta(perm[j]);
        const Vector y = x * shuffled;
        const Vector z = (x.transpose() * y).cwiseAbs() / double(n);

        baselines::LassoPathConfig fine;
        fine.lambda_grid = baselines::default_lambda_grid(x, y, 1000);
        const auto r = baselines::lasso_entry_scores(x, y, fine);
        std::vector<Index> by_z(p), by_s(p);
        std::iota(by_z.begin(), by_z.end(), 0);
        std::iota(by_s.begin(), by_s.end(), 0);
        std::sort(by_z.begin(), by_z.end(), [&](Index a, Index b) { return z(a) > z(b); });
        std::stable_sort(by_s.begin(), by_s.end(), [&](Index a, Index b) { return r.scores(a) > r.scores(b); });
        if (by_z != by_s) ++order_fail;

        const auto grid = baselines::default_lambda_grid(x, y);
        const auto coarse = baselines::lasso_entry_scores(x, y, {});
        const double step = grid[0] / grid[1];
        for (Index j = 0; j < p; ++j) {
            if (coarse.scores(j) > z(j) * (1 + 1e-12) || coarse.scores(j) < z(j) / step * (1 - 1e-9)) ++step_fail;
            for (Index k = 0; k < p; ++k)
                if (z(j) > z(k) && coarse.scores(j) < coarse.scores(k)) ++inversions;
        }
    }
    return {order_fail == 0 && step_fail == 0 && inversions == 0,
            fmt("5 designs: %.0f order mismatches (1000-point grid), %.0f entries outside one grid step", double(order_fail),
                double(step_fail)) +
                fmt(", %.0f inversions (default grid)", double(inversions))};
}

// 10. Real-data pipeline on a binary stand-in.
Outcome real_pipeline() {
    const auto dir = std::filesystem::temp_directory_path() / "grip_acceptance_real";
    std::filesystem::create_directories(dir);
    const Index n = 800, p_kept = 150;
    Rng rng(71);
    Matrix x(n, p_kept);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < p_kept; ++j) x(i, j) = rng.uniform() < 0.05 + 0.002 * j ? 1.0 : 0.0;
    // Ten rare columns and ten duplicates that the filter must drop.
    Matrix rare = Matrix::Zero(n, 10);
    for (Index j = 0; j < 10; ++j) rare(j, j) = 1.0;
    std::vector<std::string> truth;
    {
        std::ofstream xf(dir / "x.csv"), yf(dir / "y.csv");
        std::vector<std::string> header;
        for (Index j = 0; j < p_kept; ++j) header.push_back("M" + std::to_string(j + 1));
        for (Index j = 0; j < 10; ++j) header.push_back("R" + std::to_string(j + 1));
        for (Index j = 0; j < 10; ++j) header.push_back("D" + std::to_string(j + 1));
        for (std::size_t k = 0; k < header.size(); ++k) xf << (k ? "," : "") << header[k];
        xf << '\n';
        yf << "fold\n";
        for (Index i = 0; i < n; ++i) {
            double eta = 0.0;
            for (Index j = 0; j < p_kept; ++j) {
                xf << (j ? "," : "") << x(i, j);
                if (j % 15 == 0) eta += 0.8 * x(i, j);
            }
            for (Index j = 0; j < 10; ++j) xf << ',' << rare(i, j);
            for (Index j = 0; j < 10; ++j) xf << ',' << x(i, 3 * j + 1);
            xf << '\n';
            yf << std::exp(eta + 0.3 * rng.normal()) << '\n';
        }
        for (Index j = 0; j < p_kept; j += 15) truth.push_back("M" + std::to_string(j + 1));
    }
    auto c = pipeline::default_profile(pipeline::Profile::real);
    c.methods = {pipeline::Method::grip2};
    c.q_grid = {0.05};
    c.seed = 3;
    c.data.x_path = (dir / "x.csv").string();
    c.data.y_path = (dir / "y.csv").string();
    c.data.truth = truth;
    try {
        const auto one = pipeline::select_once(c);
        std::filesystem::remove_all(dir);
        const auto& s = one.selection;
        const Vector& w = s.stats.w;
        bool valid = static_cast<Index>(one.names.size()) == p_kept && w.size() == p_kept;
        valid = valid && std::is_sorted(s.selected.begin(), s.selected.end());
        IndexSet expect;
        bool tau_ok = std::isinf(s.threshold);
        for (Index j = 0; j < w.size(); ++j) {
            if (w(j) >= s.threshold) expect.push_back(static_cast<std::size_t>(j));
            if (w(j) != 0.0 && std::abs(w(j)) == s.threshold) tau_ok = true;
        }
        valid = valid && expect == s.selected && tau_ok;
        const double pw = one.truth.empty() ? 0.0 : metrics::power(s.selected, one.truth);
        const double fd = metrics::fdp(s.selected, one.truth);
        return {valid, fmt("p after filtering = %.0f, %.0f selected", double(one.names.size()), double(s.selected.size())) +
                           fmt(", stand-in power %.3f, FDP %.3f", pw, fd) +
                           "; reference HIV figures: GRIP2 power 0.222 (0.028), realized FDR 0.043 (not asserted)"};
    } catch (const std::exception& e) {
        std::filesystem::remove_all(dir);
        return {false, std::string("pipeline error: ") + e.what()};
    }
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

// Optional arguments restrict the run to the listed criterion ids.
int main(int argc, char** argv) {
    std::vector<int> only;
    for (int k = 1; k < argc; ++k) only.push_back(std::atoi(argv[k]));
    auto wanted = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };
    int failed = 0, ran = 0;
    auto report = [&](int id, const char* name, const std::function<Outcome()>& run) {
        if (!wanted(id)) return;
        ++ran;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (!o.pass) ++failed;
        std::printf("%s %2d %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs);
        std::fflush(stdout);
    };

    report(1, "gradient correctness", gradient_check);
    report(2, "exact antisymmetry", antisymmetry);
    report(3, "knockoff moment matching", moment_matching);
    report(4, "fixed-X Gram identities", fixedx_gram);
    report(5, "copula marginal preservation", copula_marginals);
    report(6, "threshold oracle", threshold_oracle);

    const auto cfg = desk_config();
    pipeline::ResultRecord first;
    double first_secs = 0.0;
    if (wanted(7) || wanted(8) || wanted(11)) {
        const auto t0 = std::chrono::steady_clock::now();
        try {
            first = pipeline::run_experiment(cfg, workers());
        } catch (const std::exception& e) {
            std::printf("desk-scale experiment failed: %s\n", e.what());
        }
        first_secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("(desk-scale experiment: %.1fs)\n", first_secs);
    }
    report(7, "empirical FDR control", [&] { return fdr_control(first); });
    report(8, "power sanity", [&] { return power_sanity(first); });
    report(9, "lasso entry oracle", lasso_oracle);
    report(10, "real-data pipeline", real_pipeline);
    report(11, "end-to-end determinism", [&]() -> Outcome {
        const auto base = std::filesystem::temp_directory_path() / "grip_acceptance_det";
        pipeline::write_outputs(first, base / "a");
        const auto second = pipeline::run_experiment(cfg, workers());
        pipeline::write_outputs(second, base / "b");
        const std::string a = slurp(base / "a" / "results.csv"), b = slurp(base / "b" / "results.csv");
        std::filesystem::remove_all(base);
        return {!a.empty() && a == b, std::string("results.csv ") + (a == b ? "byte-identical" : "differs") +
                                          fmt(" across two runs (%.0f bytes)", double(a.size()))};
    });

    std::printf("%d of %d criteria failed\n", failed, ran);
    return failed == 0 ? 0 : 1;
}
