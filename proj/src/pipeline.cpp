#include "grip/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include "grip/error.hpp"
#include "grip/filter.hpp"
#include "grip/ingest.hpp"
#include "grip/knockoffs.hpp"
#include "grip/linalg.hpp"

#ifndef GRIP_VERSION
#define GRIP_VERSION "0.0.0"
#endif

namespace grip::pipeline {

using nlohmann::json;

namespace {

template <typename E, std::size_t N>
E parse_enum(const std::string& s, const std::pair<E, const char*> (&table)[N], const char* what) {
    for (const auto& [e, name] : table)
        if (s == name) return e;
    throw Error(ErrorCode::InvalidArgument, std::string("unknown ") + what + " '" + s + "'");
}

template <typename E, std::size_t N>
std::string enum_name(E e, const std::pair<E, const char*> (&table)[N]) {
    for (const auto& [v, name] : table)
        if (v == e) return name;
    return "?";
}

constexpr std::pair<Profile, const char*> kProfiles[] = {
    {Profile::synthetic, "synthetic"}, {Profile::semireal, "semireal"}, {Profile::real, "real"}};
constexpr std::pair<Method, const char*> kMethods[] = {{Method::grip2, "grip2"}, {Method::grip1, "grip1"},
                                                       {Method::grip1a, "grip1a"}, {Method::gr, "gr"},
                                                       {Method::lapa, "lapa"}, {Method::mald, "mald"}};
constexpr std::pair<KnockoffKind, const char*> kKinds[] = {
    {KnockoffKind::gaussian, "gaussian"}, {KnockoffKind::copula, "copula"}, {KnockoffKind::fixedx, "fixedx"}};
constexpr std::pair<nn::Activation, const char*> kActivations[] = {{nn::Activation::relu, "relu"},
                                                                   {nn::Activation::identity, "identity"}};
constexpr std::pair<nn::LossKind, const char*> kLosses[] = {{nn::LossKind::squared_error, "squared_error"},
                                                            {nn::LossKind::logistic, "logistic"}};

template <typename T>
void read_field(const json& j, const char* key, T& out) {
    if (auto it = j.find(key); it != j.end() && !it->is_null()) out = it->get<T>();
}

const json& section(const json& j, const char* key) {
    static const json empty = json::object();
    auto it = j.find(key);
    return it == j.end() ? empty : *it;
}

std::string fnv1a_hex(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

json net_to_json(const nn::NetConfig& n) {
    return {{"depth", n.depth},
            {"width", n.width},
            {"activation", enum_name(n.activation, kActivations)},
            {"loss_kind", enum_name(n.loss_kind, kLosses)},
            {"learning_rate", n.learning_rate},
            {"deep_l2", n.deep_l2},
            {"smoothing_eps", n.smoothing_eps},
            {"clip_max_norm", n.clip_max_norm ? json(*n.clip_max_norm) : json(nullptr)},
            {"batch_size", n.batch_size}};
}

void net_from_json(const json& j, nn::NetConfig& n) {
    read_field(j, "depth", n.depth);
    read_field(j, "width", n.width);
    if (j.contains("activation")) n.activation = parse_enum(j["activation"].get<std::string>(), kActivations, "activation");
    if (j.contains("loss_kind")) n.loss_kind = parse_enum(j["loss_kind"].get<std::string>(), kLosses, "loss kind");
    read_field(j, "learning_rate", n.learning_rate);
    read_field(j, "deep_l2", n.deep_l2);
    read_field(j, "smoothing_eps", n.smoothing_eps);
    if (auto it = j.find("clip_max_norm"); it != j.end())
        n.clip_max_norm = it->is_null() ? std::nullopt : std::optional<double>(it->get<double>());
    read_field(j, "batch_size", n.batch_size);
}

std::string join_one_based(const IndexSet& s, char sep) {
    std::string out;
    for (std::size_t k = 0; k < s.size(); ++k) {
        if (k) out += sep;
        out += std::to_string(s[k] + 1);
    }
    return out;
}

std::string csv_escape(std::string s) {
    std::replace(s.begin(), s.end(), '\n', ' ');
    if (s.find_first_of(",\"") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

struct TrialData {
    Matrix x;
    Vector y;
    IndexSet truth;
};

TrialData trial_data(const ExperimentConfig& cfg, const Prepared& prep, long trial_id) {
    const auto id = static_cast<std::uint64_t>(trial_id);
    TrialData d;
    switch (cfg.profile) {
        case Profile::synthetic: {
            const auto& s = cfg.synthetic;
            Rng design(derive_seed(cfg.seed, id, "design"));
            Rng noise(derive_seed(cfg.seed, id, "noise"));
            d.x = datagen::ar1_design(s.n, s.p, s.rho, design).x;
            d.truth = datagen::support_grid(s.p, s.support_spacing);
            d.y = datagen::single_index_response(d.x, prep.beta, static_cast<Index>(d.truth.size()), noise, s.snr).y;
            break;
        }
        case Profile::semireal: {
            Rng noise(derive_seed(cfg.seed, id, "noise"));
            d.x = prep.x;
            auto inj = datagen::mlp_inject(d.x, prep.injection_support, prep.injection_w1, prep.injection_w2,
                                           cfg.injection.snr, noise);
            d.y = std::move(inj.y);
            d.truth = std::move(inj.truth);
            break;
        }
        case Profile::real:
            d.x = prep.x;
            d.y = prep.y;
            d.truth = prep.truth;
            break;
    }
    return d;
}

Matrix make_knockoffs(const ExperimentConfig& cfg, const Prepared& prep, const Matrix& x, Rng& rng,
                      std::vector<std::string>& warnings) {
    switch (cfg.knockoff_kind) {
        case KnockoffKind::gaussian: {
            if (prep.column_means.size() == 0) return knockoffs::sample_gaussian_knockoffs(x, *prep.gaussian_model, rng);
            const Matrix centered = x.rowwise() - prep.column_means.transpose();
            Matrix xt = knockoffs::sample_gaussian_knockoffs(centered, *prep.gaussian_model, rng);
            return xt.rowwise() + prep.column_means.transpose();
        }
        case KnockoffKind::copula: {
            auto ck = knockoffs::copula_knockoffs(x, cfg.extra_shrink, rng);
            warnings.insert(warnings.end(), ck.warnings.begin(), ck.warnings.end());
            return std::move(ck.x_tilde);
        }
        case KnockoffKind::fixedx:
            return knockoffs::fixedx_knockoffs(x, rng).x_tilde;
    }
    throw Error(ErrorCode::InvalidArgument, "unknown knockoff kind");
}

}  // namespace

std::string to_string(Profile p) { return enum_name(p, kProfiles); }
std::string to_string(Method m) { return enum_name(m, kMethods); }
std::string to_string(KnockoffKind k) { return enum_name(k, kKinds); }
Profile parse_profile(const std::string& s) { return parse_enum(s, kProfiles, "profile"); }
Method parse_method(const std::string& s) { return parse_enum(s, kMethods, "method"); }
KnockoffKind parse_knockoff_kind(const std::string& s) { return parse_enum(s, kKinds, "knockoff kind"); }

std::optional<bss::Schedule> schedule_for(Method m) {
    switch (m) {
        case Method::grip2: return bss::Schedule::two_d_block;
        case Method::grip1: return bss::Schedule::one_d_block_lambda;
        case Method::grip1a: return bss::Schedule::one_d_block_a;
        case Method::gr: return bss::Schedule::fixed;
        case Method::lapa:
        case Method::mald: return std::nullopt;
    }
    return std::nullopt;
}

void ExperimentConfig::validate() const {
    if (methods.empty()) throw Error(ErrorCode::InvalidArgument, "at least one method is required");
    if (q_grid.empty()) throw Error(ErrorCode::InvalidArgument, "q_grid must be nonempty");
    for (std::size_t k = 0; k < q_grid.size(); ++k) {
        if (!(q_grid[k] > 0.0 && q_grid[k] < 1.0))
            throw Error(ErrorCode::InvalidArgument, "q values must lie in (0, 1)");
        if (k > 0 && !(q_grid[k] > q_grid[k - 1]))
            throw Error(ErrorCode::InvalidArgument, "q_grid must be strictly ascending");
    }
    if (trials < 1) throw Error(ErrorCode::InvalidArgument, "trials must be >= 1");
    if (offset != 0 && offset != 1) throw Error(ErrorCode::InvalidArgument, "offset must be 0 or 1");
    if (profile != Profile::synthetic && data.x_path.empty())
        throw Error(ErrorCode::InvalidArgument, "profile " + to_string(profile) + " needs data.x_path");
    if (profile == Profile::real && data.y_path.empty())
        throw Error(ErrorCode::InvalidArgument, "real profile needs data.y_path");
    bss::BssConfig b = bss;
    b.net.input_dim = std::max<Index>(b.net.input_dim, 2);
    b.validate();
    if (lambda_calibration.enabled &&
        !(lambda_calibration.r_min > 0.0 && lambda_calibration.r_max > lambda_calibration.r_min))
        throw Error(ErrorCode::InvalidArgument, "lambda calibration needs 0 < r_min < r_max");
}

json to_json(const ExperimentConfig& c) {
    json methods = json::array();
    for (auto m : c.methods) methods.push_back(to_string(m));
    json lasso_grid = json::array();
    for (double v : c.lasso.lambda_grid) lasso_grid.push_back(v);
    return {
        {"profile", to_string(c.profile)},
        {"methods", methods},
        {"knockoff_kind", to_string(c.knockoff_kind)},
        {"q_grid", c.q_grid},
        {"trials", c.trials},
        {"seed", c.seed},
        {"offset", c.offset},
        {"extra_shrink", c.extra_shrink},
        {"synthetic",
         {{"n", c.synthetic.n},
          {"p", c.synthetic.p},
          {"rho", c.synthetic.rho},
          {"support_spacing", c.synthetic.support_spacing},
          {"snr", c.synthetic.snr},
          {"beta_seed", c.synthetic.beta_seed}}},
        {"injection",
         {{"support_frac", c.injection.support_frac},
          {"snr", c.injection.snr},
          {"hidden_width", c.injection.hidden_width},
          {"seed", c.injection.seed}}},
        {"data",
         {{"x_path", c.data.x_path},
          {"y_path", c.data.y_path},
          {"y_column", c.data.y_column},
          {"missing", c.data.missing},
          {"log_response", c.data.log_response},
          {"binary_design", c.data.binary_design},
          {"min_count", c.data.min_count},
          {"dedup_threshold", c.data.dedup_threshold},
          {"cluster_threshold", c.data.cluster_threshold},
          {"truth", c.data.truth}}},
        {"bss",
         {{"total_steps", c.bss.total_steps},
          {"block_size", c.bss.block_size},
          {"warmup_steps", c.bss.warmup_steps},
          {"ensemble_k", c.bss.ensemble_k},
          {"prior",
           {{"lambda_min", c.bss.prior.lambda_min},
            {"lambda_max", c.bss.prior.lambda_max},
            {"a_min", c.bss.prior.a_min}}},
          {"net", net_to_json(c.bss.net)}}},
        {"lambda_calibration",
         {{"enabled", c.lambda_calibration.enabled},
          {"r_min", c.lambda_calibration.r_min},
          {"r_max", c.lambda_calibration.r_max},
          {"warmup_steps", c.lambda_calibration.warmup_steps}}},
        {"lasso", {{"lambda_grid", lasso_grid}, {"max_iters", c.lasso.max_iters}, {"tol", c.lasso.tol}}},
        {"mald", {{"exponent", c.mald.exponent}, {"eval_batches", c.mald.eval_batches}}},
    };
}

ExperimentConfig from_json(const json& j, ExperimentConfig c) {
    if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "config must be a JSON object");
    if (j.contains("profile")) c.profile = parse_profile(j["profile"].get<std::string>());
    if (j.contains("methods")) {
        c.methods.clear();
        for (const auto& m : j["methods"]) c.methods.push_back(parse_method(m.get<std::string>()));
    }
    if (j.contains("method")) c.methods = {parse_method(j["method"].get<std::string>())};
    if (j.contains("knockoff_kind")) c.knockoff_kind = parse_knockoff_kind(j["knockoff_kind"].get<std::string>());
    read_field(j, "q_grid", c.q_grid);
    read_field(j, "trials", c.trials);
    read_field(j, "seed", c.seed);
    read_field(j, "offset", c.offset);
    read_field(j, "extra_shrink", c.extra_shrink);

    const json& s = section(j, "synthetic");
    read_field(s, "n", c.synthetic.n);
    read_field(s, "p", c.synthetic.p);
    read_field(s, "rho", c.synthetic.rho);
    read_field(s, "support_spacing", c.synthetic.support_spacing);
    read_field(s, "snr", c.synthetic.snr);
    read_field(s, "beta_seed", c.synthetic.beta_seed);

    const json& inj = section(j, "injection");
    read_field(inj, "support_frac", c.injection.support_frac);
    read_field(inj, "snr", c.injection.snr);
    read_field(inj, "hidden_width", c.injection.hidden_width);
    read_field(inj, "seed", c.injection.seed);

    const json& d = section(j, "data");
    read_field(d, "x_path", c.data.x_path);
    read_field(d, "y_path", c.data.y_path);
    read_field(d, "y_column", c.data.y_column);
    read_field(d, "missing", c.data.missing);
    read_field(d, "log_response", c.data.log_response);
    read_field(d, "binary_design", c.data.binary_design);
    read_field(d, "min_count", c.data.min_count);
    read_field(d, "dedup_threshold", c.data.dedup_threshold);
    read_field(d, "cluster_threshold", c.data.cluster_threshold);
    read_field(d, "truth", c.data.truth);

    const json& b = section(j, "bss");
    read_field(b, "total_steps", c.bss.total_steps);
    read_field(b, "block_size", c.bss.block_size);
    read_field(b, "warmup_steps", c.bss.warmup_steps);
    read_field(b, "ensemble_k", c.bss.ensemble_k);
    const json& prior = section(b, "prior");
    read_field(prior, "lambda_min", c.bss.prior.lambda_min);
    read_field(prior, "lambda_max", c.bss.prior.lambda_max);
    read_field(prior, "a_min", c.bss.prior.a_min);
    net_from_json(section(b, "net"), c.bss.net);

    const json& lc = section(j, "lambda_calibration");
    read_field(lc, "enabled", c.lambda_calibration.enabled);
    read_field(lc, "r_min", c.lambda_calibration.r_min);
    read_field(lc, "r_max", c.lambda_calibration.r_max);
    read_field(lc, "warmup_steps", c.lambda_calibration.warmup_steps);

    const json& l = section(j, "lasso");
    read_field(l, "lambda_grid", c.lasso.lambda_grid);
    read_field(l, "max_iters", c.lasso.max_iters);
    read_field(l, "tol", c.lasso.tol);

    const json& m = section(j, "mald");
    read_field(m, "exponent", c.mald.exponent);
    read_field(m, "eval_batches", c.mald.eval_batches);
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open config " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, "config " + path.string() + ": " + e.what());
    }
    // A "profile" key selects the preset that the remaining keys override.
    ExperimentConfig base = default_profile(
        j.contains("profile") ? parse_profile(j["profile"].get<std::string>()) : Profile::synthetic);
    return from_json(j, base);
}

std::string config_digest(const ExperimentConfig& cfg) { return fnv1a_hex(to_json(cfg).dump()); }

ExperimentConfig default_profile(Profile p) {
    ExperimentConfig c;
    c.profile = p;
    c.methods = {Method::grip2, Method::grip1, Method::grip1a, Method::gr, Method::lapa, Method::mald};
    c.trials = 50;
    c.bss.net.learning_rate = 1e-3;
    c.bss.net.batch_size = 256;
    switch (p) {
        case Profile::synthetic:
            c.knockoff_kind = KnockoffKind::gaussian;
            c.q_grid = {0.05, 0.1, 0.15, 0.2};
            c.bss.total_steps = 5000;
            c.bss.block_size = 25;
            c.bss.prior.lambda_min = 1e-4;
            c.bss.prior.lambda_max = 1e-1;
            c.bss.net.depth = 3;
            c.bss.net.width = 512;
            break;
        case Profile::semireal:
            c.knockoff_kind = KnockoffKind::copula;
            c.q_grid = {0.05, 0.1, 0.15, 0.2};
            c.bss.total_steps = 10000;
            c.bss.block_size = 25;
            c.bss.prior.lambda_min = 1.0;
            c.bss.prior.lambda_max = 100.0;
            c.bss.net.depth = 3;
            c.bss.net.width = 512;
            c.bss.net.deep_l2 = 1e-7;
            break;
        case Profile::real:
            c.knockoff_kind = KnockoffKind::fixedx;
            c.q_grid = {0.05};
            c.bss.total_steps = 5000;
            c.bss.block_size = 50;
            c.bss.prior.lambda_min = 1e-3;
            c.bss.prior.lambda_max = 4e-2;
            c.bss.net.depth = 1;
            c.bss.net.width = 1;
            c.bss.net.deep_l2 = 1e-2;
            c.bss.net.clip_max_norm = 1.0;
            // Any batch at least as large as n trains on the full data.
            c.bss.net.batch_size = std::numeric_limits<std::int32_t>::max();
            c.data.binary_design = true;
            c.data.log_response = true;
            c.data.dedup_threshold = 0.0;
            c.data.cluster_threshold = 0.0;
            break;
    }
    return c;
}

std::vector<std::pair<std::string, ExperimentConfig>> default_profiles() {
    std::vector<std::pair<std::string, ExperimentConfig>> out;
    for (const auto& [p, name] : kProfiles) out.emplace_back(name, default_profile(p));
    return out;
}

Prepared prepare(const ExperimentConfig& cfg) {
    cfg.validate();
    Prepared prep;
    if (cfg.profile == Profile::synthetic) {
        const auto& s = cfg.synthetic;
        const IndexSet support = datagen::support_grid(s.p, s.support_spacing);
        Rng beta_rng(derive_seed(cfg.seed, s.beta_seed, "beta"));
        prep.beta = datagen::draw_beta(s.p, support, beta_rng);
        prep.truth = support;
        if (cfg.knockoff_kind == KnockoffKind::gaussian)
            prep.gaussian_model = knockoffs::build_gaussian_model(datagen::ar1_covariance(s.p, s.rho));
        return prep;
    }

    ingest::CsvOptions opts;
    opts.missing = cfg.data.missing;
    ingest::TabularDataset table = ingest::read_csv_file(cfg.data.x_path, opts);
    if (cfg.profile == Profile::real) {
        const auto ytable = ingest::read_csv_file(cfg.data.y_path, opts);
        if (ytable.rows() != table.rows())
            throw Error(ErrorCode::LengthMismatch, "response has " + std::to_string(ytable.rows()) +
                                                       " rows, design has " + std::to_string(table.rows()));
        const auto ycol = ingest::response_column(ytable, cfg.data.y_column);
        if (ycol.kept_rows.size() < table.rows())
            prep.warnings.push_back("dropped " + std::to_string(table.rows() - ycol.kept_rows.size()) +
                                    " rows with a missing response");
        table = ingest::select_rows(table, ycol.kept_rows);
        prep.y = ingest::transform_response(ycol.y, cfg.data.log_response);
    }

    ingest::Design design;
    if (cfg.data.binary_design) {
        const auto raw = ingest::numeric_design(table);
        design = ingest::filter_binary_design(raw.x, raw.names, cfg.data.min_count);
    } else {
        design = ingest::preprocess_mixed(table);
    }
    if (cfg.data.dedup_threshold > 0.0) {
        auto dd = ingest::dedup_features(design.x, design.names, cfg.data.dedup_threshold);
        if (!dd.dropped.empty())
            prep.warnings.push_back("dedup dropped " + std::to_string(dd.dropped.size()) + " features");
        design = std::move(dd.design);
    }
    if (cfg.data.cluster_threshold > 0.0)
        design = ingest::cluster_representatives(design.x, design.names, cfg.data.cluster_threshold).design;
    if (design.x.cols() == 0) throw Error(ErrorCode::EmptyDataset, "no features left after preprocessing");
    prep.x = std::move(design.x);
    prep.names = std::move(design.names);

    for (const auto& t : cfg.data.truth) {
        auto it = std::find(prep.names.begin(), prep.names.end(), t);
        if (it != prep.names.end())
            prep.truth.push_back(static_cast<std::size_t>(it - prep.names.begin()));
        else
            prep.warnings.push_back("truth feature " + t + " not in the processed design");
    }
    prep.truth = metrics::make_index_set(prep.truth);

    if (cfg.profile == Profile::semireal) {
        // Support and injector weights are fixed across trials; only the noise varies.
        Rng inj(derive_seed(cfg.seed, cfg.injection.seed, "injection"));
        const Index p = prep.x.cols();
        const auto size = static_cast<std::size_t>(std::ceil(cfg.injection.support_frac * static_cast<double>(p)));
        std::vector<std::size_t> all(static_cast<std::size_t>(p));
        std::iota(all.begin(), all.end(), std::size_t{0});
        for (std::size_t i = 0; i < size; ++i) std::swap(all[i], all[i + inj.below(all.size() - i)]);
        prep.injection_support.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(size));
        std::sort(prep.injection_support.begin(), prep.injection_support.end());
        prep.injection_w1 = inj.normal_matrix(static_cast<Index>(size), cfg.injection.hidden_width);
        prep.injection_w2 = inj.normal_matrix(cfg.injection.hidden_width, 1);
        prep.truth = prep.injection_support;
    }

    if (cfg.knockoff_kind == KnockoffKind::gaussian) {
        prep.column_means = prep.x.colwise().mean().transpose();
        const Matrix centered = prep.x.rowwise() - prep.column_means.transpose();
        const auto shrunk = linalg::ledoit_wolf(centered, 0.0);
        prep.gaussian_model = knockoffs::build_gaussian_model(shrunk.sigma_hat);
    }
    return prep;
}

Vector method_scores(Method m, const knockoffs::AugmentedDesign& data, const ExperimentConfig& cfg,
                     std::uint64_t model_seed, std::uint64_t schedule_seed) {
    nn::NetConfig net = cfg.bss.net;
    net.input_dim = 2 * data.p();
    Rng model_rng(model_seed);
    Rng schedule_rng(schedule_seed);
    switch (m) {
        case Method::lapa: {
            auto entry = baselines::lasso_entry_scores(data, cfg.lasso);
            return entry.scores;
        }
        case Method::mald: {
            auto params = nn::init_params(net, model_rng);
            return baselines::mald_scores_from(data.stacked(), data.y, std::move(params), net, cfg.bss.total_steps,
                                               cfg.mald, schedule_rng);
        }
        default:
            break;
    }
    bss::BssConfig b = cfg.bss;
    b.net = net;
    b.prior.schedule = *schedule_for(m);
    const Matrix x_aug = data.stacked();
    if (b.ensemble_k == 1) {
        auto params = nn::init_params(b.net, model_rng);
        return bss::bss_train_from(x_aug, data.y, b, std::move(params), schedule_rng).s_hat;
    }
    bss::BssConfig member = b;
    member.ensemble_k = 1;
    member.total_steps = b.total_steps / b.ensemble_k;
    if (member.total_steps < member.block_size)
        throw Error(ErrorCode::InvalidArgument, "ensemble split leaves fewer than M steps per member");
    std::vector<bss::PersistenceScores> runs;
    for (int k = 0; k < b.ensemble_k; ++k) {
        auto params = nn::init_params(member.net, model_rng);
        runs.push_back(bss::bss_train_from(x_aug, data.y, member, std::move(params), schedule_rng));
    }
    return bss::ensemble_scores(runs).s_hat;
}

TrialReport run_trial(const ExperimentConfig& cfg, const Prepared& prep, long trial_id) {
    const auto start = std::chrono::steady_clock::now();
    const auto id = static_cast<std::uint64_t>(trial_id);
    TrialReport report;
    report.trial_id = trial_id;
    std::string stage = "data";
    try {
        TrialData d = trial_data(cfg, prep, trial_id);
        stage = "knockoffs";
        Rng ko_rng(derive_seed(cfg.seed, id, "knockoff"));
        Matrix xt = make_knockoffs(cfg, prep, d.x, ko_rng, report.warnings);
        const Index p = d.x.cols();
        auto data = knockoffs::augment(std::move(d.x), std::move(xt), std::move(d.y), prep.names);

        ExperimentConfig run_cfg = cfg;
        if (cfg.lambda_calibration.enabled) {
            stage = "lambda calibration";
            nn::NetConfig net = cfg.bss.net;
            net.input_dim = 2 * p;
            Rng cal_rng(derive_seed(cfg.seed, id, "calibration"));
            const auto& lc = cfg.lambda_calibration;
            const auto range = bss::calibrate_lambda_range(data, net, lc.r_min, lc.r_max, lc.warmup_steps, cal_rng);
            run_cfg.bss.prior.lambda_min = range.lambda_min;
            run_cfg.bss.prior.lambda_max = range.lambda_max;
        }

        for (const Method m : cfg.methods) {
            stage = to_string(m);
            const Vector scores = method_scores(m, data, run_cfg, derive_seed(cfg.seed, id, "model"),
                                                derive_seed(cfg.seed, id, "schedule"));
            const Vector w = filter::knockoff_stats(scores, p);
            for (const double q : cfg.q_grid) {
                filter::KnockoffStats stats{w, q, cfg.offset};
                metrics::TrialOutcome o;
                o.selected = filter::select(stats).selected;
                o.truth = d.truth;
                o.trial_id = trial_id;
                o.method_name = to_string(m);
                o.q = q;
                report.outcomes.push_back(std::move(o));
            }
        }
        report.ok = true;
    } catch (const std::exception& e) {
        report.ok = false;
        report.outcomes.clear();
        report.error = "trial " + std::to_string(trial_id) + " (" + stage + "): " + e.what();
    }
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

OneShot select_once(const ExperimentConfig& cfg) {
    const Prepared prep = prepare(cfg);
    TrialData d = trial_data(cfg, prep, 0);
    OneShot out;
    out.warnings = prep.warnings;
    Rng ko_rng(derive_seed(cfg.seed, 0, "knockoff"));
    Matrix xt = make_knockoffs(cfg, prep, d.x, ko_rng, out.warnings);
    const Index p = d.x.cols();
    auto data = knockoffs::augment(std::move(d.x), std::move(xt), std::move(d.y), prep.names);
    const Vector scores =
        method_scores(cfg.methods.front(), data, cfg, derive_seed(cfg.seed, 0, "model"), derive_seed(cfg.seed, 0, "schedule"));
    out.selection = filter::select({filter::knockoff_stats(scores, p), cfg.q_grid.front(), cfg.offset});
    out.names = prep.names;
    if (out.names.empty())
        for (Index j = 0; j < p; ++j) out.names.push_back("X" + std::to_string(j + 1));
    out.truth = d.truth;
    return out;
}

Matrix knockoffs_once(const ExperimentConfig& cfg, const Prepared& prep) {
    Rng ko_rng(derive_seed(cfg.seed, 0, "knockoff"));
    std::vector<std::string> warnings;
    const Matrix x = prep.x.size() ? prep.x : trial_data(cfg, prep, 0).x;
    return make_knockoffs(cfg, prep, x, ko_rng, warnings);
}

ResultRecord run_experiment(const ExperimentConfig& cfg, int workers) {
    const Prepared prep = prepare(cfg);
    ResultRecord rec;
    rec.config = to_json(cfg);
    rec.config_digest = config_digest(cfg);
    rec.version = GRIP_VERSION;
    rec.trials.resize(static_cast<std::size_t>(cfg.trials));

    std::atomic<long> next{0};
    auto work = [&] {
        for (long t; (t = next.fetch_add(1)) < cfg.trials;)
            rec.trials[static_cast<std::size_t>(t)] = run_trial(cfg, prep, t);
    };
    const int n_workers = static_cast<int>(std::clamp<long>(workers, 1, cfg.trials));
    if (n_workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < n_workers; ++w) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }

    std::vector<metrics::TrialOutcome> all;
    for (const auto& t : rec.trials) {
        if (!t.ok) ++rec.failed_trials;
        all.insert(all.end(), t.outcomes.begin(), t.outcomes.end());
    }
    // Group order follows the configuration, not completion order.
    for (const Method m : cfg.methods)
        for (const double q : cfg.q_grid) {
            std::vector<metrics::TrialOutcome> group;
            for (const auto& o : all)
                if (o.method_name == to_string(m) && o.q == q) group.push_back(o);
            if (!group.empty()) rec.summaries.push_back(metrics::aggregate(group));
        }
    rec.warnings = prep.warnings;
    return rec;
}

std::string results_csv(const ResultRecord& r) {
    std::string out = std::string(metrics::kSummaryCsvHeader) + "\n";
    for (const auto& s : r.summaries) out += metrics::to_csv_row(s) + "\n";
    return out;
}

std::string trials_csv(const ResultRecord& r) {
    std::string out = "trial_id,method,q,n_selected,power,fdp,selected,status\n";
    char buf[128];
    for (const auto& t : r.trials) {
        if (!t.ok) {
            out += std::to_string(t.trial_id) + ",,,,,,," + csv_escape("failed: " + t.error) + "\n";
            continue;
        }
        for (const auto& o : t.outcomes) {
            const std::string pw =
                o.truth.empty() ? std::string() : (std::snprintf(buf, sizeof buf, "%.6f", metrics::power(o.selected, o.truth)), std::string(buf));
            std::snprintf(buf, sizeof buf, "%.6f", metrics::fdp(o.selected, o.truth));
            const std::string fd = buf;
            std::snprintf(buf, sizeof buf, "%.6g", o.q);
            out += std::to_string(t.trial_id) + "," + o.method_name + "," + buf + "," +
                   std::to_string(o.selected.size()) + "," + pw + "," + fd + "," +
                   join_one_based(o.selected, ';') + ",ok\n";
        }
    }
    return out;
}

json to_json(const ResultRecord& r) {
    json trials = json::array();
    for (const auto& t : r.trials) {
        json outcomes = json::array();
        for (const auto& o : t.outcomes) {
            std::vector<std::size_t> sel;
            for (auto j : o.selected) sel.push_back(j + 1);
            outcomes.push_back({{"method", o.method_name}, {"q", o.q}, {"selected", sel}});
        }
        trials.push_back({{"trial_id", t.trial_id},
                          {"ok", t.ok},
                          {"error", t.error},
                          {"seconds", t.seconds},
                          {"warnings", t.warnings},
                          {"outcomes", outcomes}});
    }
    json summaries = json::array();
    for (const auto& s : r.summaries)
        summaries.push_back({{"method", s.method},
                             {"q", s.q},
                             {"power", s.power},
                             {"power_se", s.power_se},
                             {"fdr", s.fdr},
                             {"fdr_se", s.fdr_se},
                             {"stability", s.stability},
                             {"n_trials", s.n_trials},
                             {"se_defined", s.se_defined}});
    return {{"config_digest", r.config_digest},
            {"version", r.version},
            {"config", r.config},
            {"failed_trials", r.failed_trials},
            {"warnings", r.warnings},
            {"summaries", summaries},
            {"trials", trials}};
}

void write_outputs(const ResultRecord& r, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
    auto write = [&](const char* name, const std::string& text) {
        std::ofstream out(dir / name, std::ios::binary);
        if (!out) throw Error(ErrorCode::Io, "cannot write " + (dir / name).string());
        out << text;
    };
    write("results.csv", results_csv(r));
    write("trials.csv", trials_csv(r));
    write("record.json", to_json(r).dump(2) + "\n");
}

}  // namespace grip::pipeline
