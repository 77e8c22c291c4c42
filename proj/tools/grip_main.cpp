// grip: knockoff feature selection experiments from the command line.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "grip/bss.hpp"
#include "grip/error.hpp"
#include "grip/filter.hpp"
#include "grip/knockoffs.hpp"
#include "grip/pipeline.hpp"

namespace {

using namespace grip;
using pipeline::ExperimentConfig;

struct CommonFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<long> trials;
    std::vector<double> q;
    int workers = 1;
    std::string out = "grip_out";
    std::vector<std::string> methods;
    std::string knockoffs;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_trials = true) {
    cmd->add_option("--config", f.config, "JSON config; its \"profile\" key picks the preset it overrides")
        ->check(CLI::ExistingFile);
    cmd->add_option("--seed", f.seed, "base seed");
    if (with_trials) {
        cmd->add_option("--trials", f.trials, "number of trials");
        cmd->add_option("--workers", f.workers, "worker threads")->check(CLI::PositiveNumber);
    }
    cmd->add_option("--q", f.q, "target FDR level(s), comma separated")->delimiter(',');
    cmd->add_option("--out", f.out, "output directory");
    cmd->add_option("--methods", f.methods, "grip2, grip1, grip1a, gr, lapa, mald")->delimiter(',');
    cmd->add_option("--knockoffs", f.knockoffs, "gaussian, copula or fixedx");
}

ExperimentConfig resolve(pipeline::Profile profile, const CommonFlags& f) {
    ExperimentConfig cfg = f.config.empty() ? pipeline::default_profile(profile) : pipeline::load_config(f.config);
    if (f.config.empty()) cfg.profile = profile;
    if (f.seed) cfg.seed = *f.seed;
    if (f.trials) cfg.trials = *f.trials;
    if (!f.q.empty()) cfg.q_grid = f.q;
    if (!f.methods.empty()) {
        cfg.methods.clear();
        for (const auto& m : f.methods) cfg.methods.push_back(pipeline::parse_method(m));
    }
    if (!f.knockoffs.empty()) cfg.knockoff_kind = pipeline::parse_knockoff_kind(f.knockoffs);
    return cfg;
}

void report(const pipeline::ResultRecord& rec, const std::string& out) {
    pipeline::write_outputs(rec, out);
    std::cout << pipeline::results_csv(rec);
    if (rec.failed_trials > 0)
        std::cerr << rec.failed_trials << " trial(s) failed; see " << out << "/trials.csv\n";
    for (const auto& w : rec.warnings) std::cerr << "warning: " << w << '\n';
}

void write_matrix_csv(std::ostream& os, const Matrix& m, const std::vector<std::string>& names) {
    for (std::size_t j = 0; j < names.size(); ++j) os << (j ? "," : "") << names[j];
    os << '\n';
    char buf[32];
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", m(i, j));
            os << (j ? "," : "") << buf;
        }
        os << '\n';
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Knockoff-filtered feature selection with GRIP persistence scores"};
    app.require_subcommand(1);
    app.set_version_flag("--version", GRIP_VERSION);

    CommonFlags f;
    std::vector<double> rhos;
    std::string x_path, y_path, y_column, profile_name = "synthetic";
    std::vector<std::string> truth;
    std::string diagnostics;
    double r_min = 0.01, r_max = 0.20, delta = 1e-3;
    std::vector<long> candidates{10, 25, 50, 100};

    auto* simulate = app.add_subcommand("simulate", "synthetic sweep over rho and q");
    add_common(simulate, f);
    simulate->add_option("--rho", rhos, "AR(1) correlation values to sweep")->delimiter(',');

    auto* inject = app.add_subcommand("inject", "semi-real signal injection on a covariate CSV");
    add_common(inject, f);
    inject->add_option("--x", x_path, "covariate CSV with header");

    auto* select = app.add_subcommand("select", "one-shot selection on X.csv / y.csv");
    add_common(select, f, false);
    select->add_option("--x", x_path, "design CSV with header");
    select->add_option("--y", y_path, "response CSV");
    select->add_option("--y-column", y_column, "response column name (default: first)");
    select->add_option("--truth", truth, "known signal feature names for reporting")->delimiter(',');

    auto* ko = app.add_subcommand("knockoffs", "write a knockoff copy of X as CSV");
    add_common(ko, f, false);
    ko->add_option("--x", x_path, "design CSV (omit for a synthetic draw)");
    ko->add_option("--profile", profile_name, "synthetic, semireal or real");

    auto* cal = app.add_subcommand("calibrate", "print calibrated lambda range and block size");
    add_common(cal, f, false);
    cal->add_option("--x", x_path, "design CSV (omit for a synthetic draw)");
    cal->add_option("--y", y_path, "response CSV (real profile)");
    cal->add_option("--profile", profile_name, "synthetic, semireal or real");
    cal->add_option("--r-min", r_min, "lower gradient ratio");
    cal->add_option("--r-max", r_max, "upper gradient ratio");
    cal->add_option("--delta", delta, "group-norm change threshold");
    cal->add_option("--candidates", candidates, "block sizes to try")->delimiter(',');
    cal->add_option("--diagnostics", diagnostics, "write per-block CSV of a pilot run here");

    auto* bench = app.add_subcommand("benchmark", "multi-method comparison written as metrics CSV");
    add_common(bench, f);
    bench->add_option("--profile", profile_name, "synthetic, semireal or real");
    bench->add_option("--x", x_path, "design CSV for loaded profiles");
    bench->add_option("--y", y_path, "response CSV (real profile)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*simulate) {
            auto cfg = resolve(pipeline::Profile::synthetic, f);
            if (rhos.empty()) rhos = {cfg.synthetic.rho};
            std::ostringstream sweep;
            sweep << "rho," << metrics::kSummaryCsvHeader << '\n';
            for (double rho : rhos) {
                cfg.synthetic.rho = rho;
                const auto rec = pipeline::run_experiment(cfg, f.workers);
                char dir[64];
                std::snprintf(dir, sizeof dir, "rho_%g", rho);
                report(rec, f.out + "/" + dir);
                for (const auto& s : rec.summaries) sweep << rho << ',' << metrics::to_csv_row(s) << '\n';
            }
            std::ofstream(f.out + "/sweep.csv") << sweep.str();
        } else if (*inject) {
            auto cfg = resolve(pipeline::Profile::semireal, f);
            if (!x_path.empty()) cfg.data.x_path = x_path;
            report(pipeline::run_experiment(cfg, f.workers), f.out);
        } else if (*bench) {
            auto cfg = resolve(pipeline::parse_profile(profile_name), f);
            if (!x_path.empty()) cfg.data.x_path = x_path;
            if (!y_path.empty()) cfg.data.y_path = y_path;
            if (f.methods.empty() && f.config.empty())
                cfg.methods = {pipeline::Method::grip2, pipeline::Method::grip1, pipeline::Method::grip1a,
                               pipeline::Method::gr,    pipeline::Method::lapa,  pipeline::Method::mald};
            report(pipeline::run_experiment(cfg, f.workers), f.out);
        } else if (*select) {
            auto cfg = resolve(pipeline::Profile::real, f);
            if (!x_path.empty()) cfg.data.x_path = x_path;
            if (!y_path.empty()) cfg.data.y_path = y_path;
            if (!y_column.empty()) cfg.data.y_column = y_column;
            if (!truth.empty()) cfg.data.truth = truth;
            if (f.methods.empty() && f.config.empty()) cfg.methods = {pipeline::Method::grip2};
            const auto shot = pipeline::select_once(cfg);
            nlohmann::json j = filter::to_json(shot.selection);
            std::vector<std::string> selected_names;
            for (auto k : shot.selection.selected) selected_names.push_back(shot.names[k]);
            j["selected_names"] = selected_names;
            j["method"] = pipeline::to_string(cfg.methods.front());
            if (!shot.truth.empty()) {
                j["power"] = metrics::power(shot.selection.selected, shot.truth);
                j["fdp"] = metrics::fdp(shot.selection.selected, shot.truth);
            }
            std::filesystem::create_directories(f.out);
            std::ofstream(f.out + "/selection.json") << j.dump(2) << '\n';
            std::cout << j.dump(2) << '\n';
            for (const auto& w : shot.warnings) std::cerr << "warning: " << w << '\n';
        } else if (*ko) {
            auto cfg = resolve(pipeline::parse_profile(profile_name), f);
            if (!x_path.empty()) cfg.data.x_path = x_path;
            if (cfg.profile == pipeline::Profile::real && cfg.data.y_path.empty()) cfg.profile = pipeline::Profile::semireal;
            const auto prep = pipeline::prepare(cfg);
            const Matrix xt = pipeline::knockoffs_once(cfg, prep);
            std::vector<std::string> names = prep.names;
            if (names.empty())
                for (Index j = 0; j < xt.cols(); ++j) names.push_back("X" + std::to_string(j + 1));
            for (auto& n : names) n += "_knockoff";
            std::filesystem::create_directories(f.out);
            std::ofstream out(f.out + "/knockoffs.csv");
            write_matrix_csv(out, xt, names);
            std::cout << "wrote " << f.out << "/knockoffs.csv (" << xt.rows() << "x" << xt.cols() << ")\n";
        } else if (*cal) {
            auto cfg = resolve(pipeline::parse_profile(profile_name), f);
            if (!x_path.empty()) cfg.data.x_path = x_path;
            if (!y_path.empty()) cfg.data.y_path = y_path;
            // Calibrate on trial 0 of the configured data.
            cfg.trials = 1;
            cfg.methods = {pipeline::Method::grip2};
            const auto prep = pipeline::prepare(cfg);
            const Matrix xt = pipeline::knockoffs_once(cfg, prep);
            Matrix x = prep.x;
            Vector y = prep.y;
            if (cfg.profile == pipeline::Profile::synthetic) {
                Rng design(derive_seed(cfg.seed, 0, "design"));
                Rng noise(derive_seed(cfg.seed, 0, "noise"));
                x = datagen::ar1_design(cfg.synthetic.n, cfg.synthetic.p, cfg.synthetic.rho, design).x;
                y = datagen::single_index_response(x, prep.beta, static_cast<Index>(prep.truth.size()), noise,
                                                   cfg.synthetic.snr).y;
            } else if (cfg.profile == pipeline::Profile::semireal) {
                Rng noise(derive_seed(cfg.seed, 0, "noise"));
                y = datagen::mlp_inject(x, prep.injection_support, prep.injection_w1, prep.injection_w2,
                                        cfg.injection.snr, noise)
                        .y;
            }
            auto data = knockoffs::augment(x, xt, y, prep.names);
            bss::BssConfig b = cfg.bss;
            b.net.input_dim = 2 * data.p();
            Rng rng(derive_seed(cfg.seed, 0, "calibration"));
            const auto range =
                bss::calibrate_lambda_range(data, b.net, r_min, r_max, cfg.lambda_calibration.warmup_steps, rng);
            std::printf("base_ratio=%.6g lambda_min=%.6g lambda_max=%.6g\n", range.base_ratio, range.lambda_min,
                        range.lambda_max);
            b.prior.lambda_min = range.lambda_min;
            b.prior.lambda_max = range.lambda_max;
            const auto blocks = bss::calibrate_block_size(data, b, delta, candidates, rng);
            for (const auto& [m, worst] : blocks.worst_tail_change)
                std::printf("M=%ld worst_tail_change=%.6g\n", m, worst);
            std::printf("block_size=%ld%s\n", blocks.block_size, blocks.accepted ? "" : " (no candidate met delta)");
            if (!diagnostics.empty()) {
                std::ofstream diag(diagnostics);
                b.block_size = blocks.block_size;
                Rng pilot(derive_seed(cfg.seed, 0, "schedule"));
                bss::bss_train(data, b, pilot, &diag);
                std::cout << "wrote " << diagnostics << '\n';
            }
        }
    } catch (const Error& e) {
        std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
