#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "grip/baselines.hpp"
#include "grip/bss.hpp"
#include "grip/datagen.hpp"
#include "grip/filter.hpp"
#include "grip/metrics.hpp"

namespace grip::pipeline {

enum class Profile { synthetic, semireal, real };
enum class Method { grip2, grip1, grip1a, gr, lapa, mald };
enum class KnockoffKind { gaussian, copula, fixedx };

std::string to_string(Profile p);
std::string to_string(Method m);
std::string to_string(KnockoffKind k);
Profile parse_profile(const std::string& s);
Method parse_method(const std::string& s);
KnockoffKind parse_knockoff_kind(const std::string& s);

// Schedule used by each network method; lapa and mald have none.
std::optional<bss::Schedule> schedule_for(Method m);

// Covariates (and for the real profile, the response) read from CSV.
struct DataSource {
    std::string x_path;
    std::string y_path;         // real profile only
    std::string y_column;       // empty: first column of y_path
    std::string missing = "NA";
    bool log_response = false;
    bool binary_design = false;  // filter_binary_design instead of mixed preprocessing
    int min_count = 3;
    double dedup_threshold = 0.98;    // <= 0 disables
    double cluster_threshold = 0.90;  // <= 0 disables
    std::vector<std::string> truth;   // real profile: names of known signal features
};

// Optional data-driven λ range, replacing prior.lambda_min/max per trial.
struct LambdaCalibration {
    bool enabled = false;
    double r_min = 0.01;
    double r_max = 0.20;
    long warmup_steps = 200;
};

struct ExperimentConfig {
    Profile profile = Profile::synthetic;
    std::vector<Method> methods{Method::grip2};
    KnockoffKind knockoff_kind = KnockoffKind::gaussian;
    std::vector<double> q_grid{0.1};
    long trials = 1;
    std::uint64_t seed = 1;
    int offset = 1;
    double extra_shrink = knockoffs::kDefaultExtraShrink;  // copula knockoffs

    datagen::SyntheticSpec synthetic;
    datagen::InjectionSpec injection;
    DataSource data;
    bss::BssConfig bss;
    LambdaCalibration lambda_calibration;
    baselines::LassoPathConfig lasso;
    baselines::MaldConfig mald;

    void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
// Missing keys keep the values already in `base`.
ExperimentConfig from_json(const nlohmann::json& j, ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path);

// Hex FNV-1a 64 of the canonical (key-sorted, compact) JSON rendering.
std::string config_digest(const ExperimentConfig& cfg);

// Preset for a profile; every field may be overridden afterwards.
ExperimentConfig default_profile(Profile p);
std::vector<std::pair<std::string, ExperimentConfig>> default_profiles();

// Covariates and fixed quantities shared by all trials of an experiment.
struct Prepared {
    Matrix x;                         // loaded profiles
    std::vector<std::string> names;
    Vector y;                         // real profile
    IndexSet truth;
    Vector beta;                      // synthetic profile, fixed across trials
    IndexSet injection_support;       // semireal profile, fixed across trials
    Matrix injection_w1;
    Vector injection_w2;
    std::optional<knockoffs::KnockoffModel> gaussian_model;
    Vector column_means;              // for Gaussian knockoffs of loaded data
    std::vector<std::string> warnings;
};

Prepared prepare(const ExperimentConfig& cfg);

struct TrialReport {
    long trial_id = 0;
    bool ok = false;
    std::string error;
    double seconds = 0.0;
    std::vector<metrics::TrialOutcome> outcomes;  // method × q
    std::vector<std::string> warnings;
};

// One trial: data streams derived from (seed, trial_id, purpose); failures
// are reported in the result rather than thrown.
TrialReport run_trial(const ExperimentConfig& cfg, const Prepared& prep, long trial_id);

struct ResultRecord {
    std::string config_digest;
    std::string version;
    nlohmann::json config;
    std::vector<TrialReport> trials;
    std::vector<metrics::Summary> summaries;
    long failed_trials = 0;
    std::vector<std::string> warnings;  // data preparation
};

// Runs all trials over `workers` threads and aggregates successes.
ResultRecord run_experiment(const ExperimentConfig& cfg, int workers = 1);

std::string results_csv(const ResultRecord& r);
std::string trials_csv(const ResultRecord& r);
nlohmann::json to_json(const ResultRecord& r);

// Writes results.csv, trials.csv and record.json into `dir`.
void write_outputs(const ResultRecord& r, const std::filesystem::path& dir);

struct OneShot {
    filter::SelectionResult selection;
    std::vector<std::string> names;
    IndexSet truth;
    std::vector<std::string> warnings;
};

// Single selection with the first configured method at q_grid.front(),
// using the trial-0 streams.
OneShot select_once(const ExperimentConfig& cfg);

// Knockoff copy of the prepared design using the trial-0 knockoff stream.
Matrix knockoffs_once(const ExperimentConfig& cfg, const Prepared& prep);

// Scores for one method on an augmented design (length 2p).
Vector method_scores(Method m, const knockoffs::AugmentedDesign& data, const ExperimentConfig& cfg,
                     std::uint64_t model_seed, std::uint64_t schedule_seed);

}  // namespace grip::pipeline
