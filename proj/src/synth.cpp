#include "apub/synth.hpp"

#include <algorithm>
#include <cmath>

#include "apub/graph.hpp"
#include "apub/store.hpp"

namespace apub {

namespace {

constexpr double kZ95 = 1.96;

}  // namespace

PooledEffect pool_effects(const std::vector<ClaimTriple>& claims) {
    if (claims.empty()) {
        throw invalid_argument("pool_effects needs at least one claim");
    }
    const std::optional<std::string>& unit = claims.front().effect ? claims.front().effect->unit : std::nullopt;
    // Sum in a canonical order so the result does not depend on input order.
    std::vector<std::pair<double, double>> terms;
    for (const auto& c : claims) {
        if (!c.effect) {
            throw invalid_argument("claim " + c.claim_id + " has no effect to pool");
        }
        const auto& e = *c.effect;
        if (!std::isfinite(e.estimate) || !std::isfinite(e.se) || e.se <= 0) {
            throw invalid_argument("claim " + c.claim_id + " needs a finite estimate and se > 0");
        }
        if (e.unit != unit) {
            throw invalid_argument("mixed units in group: '" + unit.value_or("") + "' vs '" + e.unit.value_or("") + "'");
        }
        terms.emplace_back(e.estimate, e.se);
    }
    std::sort(terms.begin(), terms.end());
    double sum_w = 0;
    double sum_wx = 0;
    for (const auto& [x, se] : terms) {
        const double w = 1.0 / (se * se);
        sum_w += w;
        sum_wx += w * x;
    }
    return {sum_wx / sum_w, std::sqrt(1.0 / sum_w)};
}

int claim_sign(const ClaimTriple& claim) {
    if (claim.effect && claim.effect->estimate != 0) {
        return claim.effect->estimate > 0 ? 1 : -1;
    }
    return claim.polarity == Polarity::supports ? 1 : -1;
}

double agreement_ratio(const std::vector<ClaimTriple>& claims) {
    if (claims.empty()) {
        return 0;
    }
    std::size_t positive = 0;
    for (const auto& c : claims) {
        if (claim_sign(c) > 0) {
            ++positive;
        }
    }
    const std::size_t negative = claims.size() - positive;
    if (positive == negative) {
        return 0.5;
    }
    return static_cast<double>(std::max(positive, negative)) / static_cast<double>(claims.size());
}

Confidence confidence_label(int n_studies, double agreement, const std::array<double, 2>& ci95, bool contradiction,
                            const ConfidenceRules& rules) {
    if (contradiction || n_studies < 2) {
        return Confidence::low;
    }
    const bool excludes_zero = ci95[0] > 0 || ci95[1] < 0;
    if (n_studies >= rules.high_min_studies && agreement >= rules.high_min_agreement && excludes_zero) {
        return Confidence::high;
    }
    if (n_studies >= rules.medium_min_studies && agreement >= rules.medium_min_agreement && excludes_zero) {
        return Confidence::medium;
    }
    return Confidence::low;
}

std::optional<SynthesisRecord> compute_synthesis(const GroupKey& group, const std::vector<ClaimTriple>& claims,
                                                 Timestamp now, const ConfidenceRules& rules) {
    std::vector<ClaimTriple> with_effect;
    for (const auto& c : claims) {
        if (c.effect) {
            with_effect.push_back(c);
        }
    }
    if (with_effect.empty()) {
        return std::nullopt;
    }
    const auto pooled = pool_effects(with_effect);
    SynthesisRecord r;
    r.group = group;
    r.n_studies = static_cast<int>(claims.size());
    r.pooled_estimate = pooled.estimate;
    r.pooled_se = pooled.se;
    r.ci95 = {pooled.estimate - kZ95 * pooled.se, pooled.estimate + kZ95 * pooled.se};
    r.agreement_ratio = agreement_ratio(claims);
    for (std::size_t i = 0; i < claims.size() && !r.contradiction_flag; ++i) {
        for (std::size_t j = i + 1; j < claims.size(); ++j) {
            if (conflict_reason(claims[i], claims[j])) {
                r.contradiction_flag = true;
                break;
            }
        }
    }
    r.confidence = confidence_label(r.n_studies, r.agreement_ratio, r.ci95, r.contradiction_flag, rules);
    r.computed_at = now;
    for (const auto& c : claims) {
        r.inputs.push_back(c.claim_id);
    }
    std::sort(r.inputs.begin(), r.inputs.end());
    return r;
}

std::optional<SynthesisRecord> refresh_synthesis(const GroupKey& group, const Graph& graph, Store& store,
                                                 const ConfidenceRules& rules, std::string* problem) {
    const auto claims = graph.group_claims(group);
    std::optional<SynthesisRecord> record;
    try {
        record = compute_synthesis(group, claims, store.now(), rules);
    } catch (const Error& e) {
        if (problem != nullptr) {
            *problem = e.what();
        }
    }
    if (record) {
        store.put_synthesis(*record);
    } else if (store.synthesis().count(group) > 0) {
        store.erase_synthesis(group);
    }
    return record;
}

}  // namespace apub
