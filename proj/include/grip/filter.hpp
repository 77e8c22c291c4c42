#pragma once

#include "json.hpp"

#include "grip/types.hpp"

namespace grip::filter {

struct KnockoffStats {
    Vector w;
    double q = 0.1;
    int offset = 1;  // 1 = knockoff+

    void validate() const;
};

struct SelectionResult {
    double threshold;  // +∞ for the empty selection
    IndexSet selected; // 0-based, ascending
    KnockoffStats stats;
};

// w_j = s_j − s_{j+p}
Vector knockoff_stats(const Vector& s, Index p);

// τ = min{t ∈ {|w_j| : w_j ≠ 0} : (offset + #{w_j ≤ −t}) / max(1, #{w_j ≥ t}) ≤ q}, +∞ if none.
double knockoff_threshold(const KnockoffStats& stats);

SelectionResult select(const KnockoffStats& stats);

// {"w": [...], "tau": τ or null, "selected": [1-based...], "q": q, "offset": o}
nlohmann::json to_json(const SelectionResult& r);

}  // namespace grip::filter
