#pragma once

#include <string>
#include <vector>

#include "grip/types.hpp"

namespace grip::metrics {

struct TrialOutcome {
    IndexSet selected;
    IndexSet truth;
    long trial_id = 0;
    std::string method_name;
    double q = 0.1;
};

// |selected \ truth| / max(1, |selected|)
double fdp(const IndexSet& selected, const IndexSet& truth);

// |selected ∩ truth| / |truth|; throws EmptyTruth.
double power(const IndexSet& selected, const IndexSet& truth);

// Mean pairwise Jaccard; a pair of empty sets counts as 1. Throws TooFewTrials below 2.
double jaccard_stability(const std::vector<IndexSet>& selections);

struct Summary {
    std::string method;
    double q = 0.0;
    double power = 0.0;
    double power_se = 0.0;
    double fdr = 0.0;  // mean FDP
    double fdr_se = 0.0;
    double stability = 1.0;
    long n_trials = 0;
    bool se_defined = true;  // false for a single trial (SEs reported as 0)
};

// Summary over a homogeneous group (same method and q). SE = sample sd / √trials.
Summary aggregate(const std::vector<TrialOutcome>& outcomes);

// Groups by (method, q) in first-seen order and aggregates each group.
std::vector<Summary> aggregate_by_group(const std::vector<TrialOutcome>& outcomes);

inline constexpr const char* kSummaryCsvHeader =
    "method,q,power,power_se,fdr,fdr_se,stability,n_trials";
std::string to_csv_row(const Summary& s);

// Canonicalizes an index list: sorted, duplicates removed.
IndexSet make_index_set(std::vector<std::size_t> idx);

}  // namespace grip::metrics
