#include "grip/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iterator>

#include "grip/error.hpp"

namespace grip::metrics {

namespace {

std::size_t intersection_size(const IndexSet& a, const IndexSet& b) {
    std::size_t count = 0;
    auto i = a.begin();
    auto j = b.begin();
    while (i != a.end() && j != b.end()) {
        if (*i < *j) {
            ++i;
        } else if (*j < *i) {
            ++j;
        } else {
            ++count;
            ++i;
            ++j;
        }
    }
    return count;
}

double mean_of(const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc / static_cast<double>(v.size());
}

double standard_error(const std::vector<double>& v, double mean) {
    if (v.size() < 2) return 0.0;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
    return sd / std::sqrt(static_cast<double>(v.size()));
}

}  // namespace

IndexSet make_index_set(std::vector<std::size_t> idx) {
    std::sort(idx.begin(), idx.end());
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
    return idx;
}

double fdp(const IndexSet& selected, const IndexSet& truth) {
    const auto s = make_index_set(selected);
    const auto t = make_index_set(truth);
    const double false_hits = static_cast<double>(s.size() - intersection_size(s, t));
    return false_hits / std::max<double>(1.0, static_cast<double>(s.size()));
}

double power(const IndexSet& selected, const IndexSet& truth) {
    const auto t = make_index_set(truth);
    if (t.empty()) throw Error(ErrorCode::EmptyTruth, "power needs a nonempty truth set");
    return static_cast<double>(intersection_size(make_index_set(selected), t)) / static_cast<double>(t.size());
}

double jaccard_stability(const std::vector<IndexSet>& selections) {
    if (selections.size() < 2)
        throw Error(ErrorCode::TooFewTrials, "stability needs at least two selections");
    std::vector<IndexSet> sets;
    sets.reserve(selections.size());
    for (const auto& s : selections) sets.push_back(make_index_set(s));
    double acc = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < sets.size(); ++i) {
        for (std::size_t j = i + 1; j < sets.size(); ++j, ++pairs) {
            const std::size_t inter = intersection_size(sets[i], sets[j]);
            const std::size_t uni = sets[i].size() + sets[j].size() - inter;
            acc += uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
        }
    }
    return acc / static_cast<double>(pairs);
}

Summary aggregate(const std::vector<TrialOutcome>& outcomes) {
    Summary s;
    if (outcomes.empty()) return s;
    s.method = outcomes.front().method_name;
    s.q = outcomes.front().q;
    s.n_trials = static_cast<long>(outcomes.size());
    for (const auto& o : outcomes)
        if (o.method_name != s.method || o.q != s.q)
            throw Error(ErrorCode::InvalidArgument, "aggregate group mixes methods or q levels");

    // Sorted by trial id so the result does not depend on completion order.
    std::vector<const TrialOutcome*> ordered;
    for (const auto& o : outcomes) ordered.push_back(&o);
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const TrialOutcome* a, const TrialOutcome* b) { return a->trial_id < b->trial_id; });

    std::vector<double> powers, fdps;
    std::vector<IndexSet> selections;
    for (const auto* o : ordered) {
        powers.push_back(o->truth.empty() ? 0.0 : power(o->selected, o->truth));
        fdps.push_back(fdp(o->selected, o->truth));
        selections.push_back(o->selected);
    }
    s.power = mean_of(powers);
    s.fdr = mean_of(fdps);
    s.power_se = standard_error(powers, s.power);
    s.fdr_se = standard_error(fdps, s.fdr);
    s.se_defined = outcomes.size() >= 2;
    s.stability = selections.size() >= 2 ? jaccard_stability(selections) : 1.0;
    return s;
}

std::vector<Summary> aggregate_by_group(const std::vector<TrialOutcome>& outcomes) {
    std::vector<std::pair<std::string, double>> keys;
    for (const auto& o : outcomes) {
        const std::pair<std::string, double> key{o.method_name, o.q};
        if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
    }
    std::vector<Summary> out;
    for (const auto& key : keys) {
        std::vector<TrialOutcome> group;
        std::copy_if(outcomes.begin(), outcomes.end(), std::back_inserter(group), [&](const TrialOutcome& o) {
            return o.method_name == key.first && o.q == key.second;
        });
        out.push_back(aggregate(group));
    }
    return out;
}

std::string to_csv_row(const Summary& s) {
    char buf[512];
    std::snprintf(buf, sizeof buf, "%s,%.6g,%.6f,%.6f,%.6f,%.6f,%.6f,%ld", s.method.c_str(), s.q, s.power,
                  s.power_se, s.fdr, s.fdr_se, s.stability, s.n_trials);
    return buf;
}

}  // namespace grip::metrics
