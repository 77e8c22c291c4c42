#include "grip/filter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "grip/error.hpp"

namespace grip::filter {

void KnockoffStats::validate() const {
    if (!(q > 0.0 && q <= 1.0))
        throw Error(ErrorCode::InvalidArgument, "target FDR q must lie in (0, 1]");
    if (offset != 0 && offset != 1) throw Error(ErrorCode::InvalidArgument, "offset must be 0 or 1");
    if (!w.allFinite()) throw Error(ErrorCode::InvalidArgument, "knockoff statistics must be finite");
}

Vector knockoff_stats(const Vector& s, Index p) {
    if (p < 1 || s.size() != 2 * p)
        throw Error(ErrorCode::LengthMismatch,
                    "score vector has length " + std::to_string(s.size()) + ", expected 2p=" +
                        std::to_string(2 * p));
    return s.head(p) - s.tail(p);
}

double knockoff_threshold(const KnockoffStats& stats) {
    stats.validate();
    const Index p = stats.w.size();
    std::vector<double> mags;
    for (Index j = 0; j < p; ++j)
        if (stats.w(j) != 0.0) mags.push_back(std::abs(stats.w(j)));
    std::sort(mags.begin(), mags.end());

    // Sorted copies give #{w ≥ t} and #{w ≤ −t} by binary search.
    std::vector<double> pos, neg;
    for (Index j = 0; j < p; ++j) {
        if (stats.w(j) > 0.0) pos.push_back(stats.w(j));
        if (stats.w(j) < 0.0) neg.push_back(-stats.w(j));
    }
    std::sort(pos.begin(), pos.end());
    std::sort(neg.begin(), neg.end());
    const auto count_at_least = [](const std::vector<double>& v, double t) {
        return static_cast<double>(v.end() - std::lower_bound(v.begin(), v.end(), t));
    };

    for (const double t : mags) {
        const double false_est = stats.offset + count_at_least(neg, t);
        const double selected = std::max(1.0, count_at_least(pos, t));
        if (false_est / selected <= stats.q) return t;
    }
    return std::numeric_limits<double>::infinity();
}

SelectionResult select(const KnockoffStats& stats) {
    const double tau = knockoff_threshold(stats);
    SelectionResult r{tau, {}, stats};
    if (std::isfinite(tau))
        for (Index j = 0; j < stats.w.size(); ++j)
            if (stats.w(j) >= tau) r.selected.push_back(static_cast<std::size_t>(j));
    return r;
}

nlohmann::json to_json(const SelectionResult& r) {
    nlohmann::json j;
    j["w"] = std::vector<double>(r.stats.w.data(), r.stats.w.data() + r.stats.w.size());
    j["tau"] = std::isfinite(r.threshold) ? nlohmann::json(r.threshold) : nlohmann::json(nullptr);
    std::vector<std::size_t> one_based;
    for (auto idx : r.selected) one_based.push_back(idx + 1);
    j["selected"] = one_based;
    j["q"] = r.stats.q;
    j["offset"] = r.stats.offset;
    return j;
}

}  // namespace grip::filter
