#pragma once

#include <array>
#include <optional>
#include <vector>

#include "apub/types.hpp"

namespace apub {

class Graph;
class Store;

struct PooledEffect {
    double estimate = 0;
    double se = 0;
};

/// Fixed-effect inverse-variance pooling. Every claim needs an effect with
/// finite estimate and se > 0; claims with differing units are refused.
PooledEffect pool_effects(const std::vector<ClaimTriple>& claims);

/// Sign of a claim: the effect estimate's sign when it has one (and it is
/// nonzero), otherwise +1 for supports and -1 for refutes.
int claim_sign(const ClaimTriple& claim);

/// Fraction of claims agreeing with the majority sign; an exact tie gives 0.5.
double agreement_ratio(const std::vector<ClaimTriple>& claims);

/// Thresholds of the confidence rule table.
struct ConfidenceRules {
    int medium_min_studies = 2;
    double medium_min_agreement = 0.75;
    int high_min_studies = 4;
    double high_min_agreement = 0.8;
};

/// Contradiction and fewer than two studies give low. The high row is tried
/// before the medium row; anything else is low.
Confidence confidence_label(int n_studies, double agreement, const std::array<double, 2>& ci95, bool contradiction,
                            const ConfidenceRules& rules = {});

/// Record for one group's active claims, or nullopt when none of them carries
/// an effect. Throws when effect units differ.
std::optional<SynthesisRecord> compute_synthesis(const GroupKey& group, const std::vector<ClaimTriple>& claims,
                                                 Timestamp now, const ConfidenceRules& rules = {});

/// Recomputes and persists the group's record from the graph's non-superseded
/// claims, erasing the record when nothing poolable is left. Mixed units also
/// erase the record; the message is returned through `problem`.
std::optional<SynthesisRecord> refresh_synthesis(const GroupKey& group, const Graph& graph, Store& store,
                                                 const ConfidenceRules& rules = {},
                                                 std::string* problem = nullptr);

}  // namespace apub
