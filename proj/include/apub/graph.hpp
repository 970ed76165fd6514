#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "apub/types.hpp"

namespace apub {

class Store;

/// Pattern over entity names/aliases (not ids). Objects that parse as a
/// number with optional unit match literal objects.
struct FactPattern {
    std::optional<std::string> subject;
    std::optional<std::string> relation;
    std::optional<std::string> object;

    bool empty() const { return !subject && !relation && !object; }
};

struct Fact {
    ClaimTriple claim;
    std::optional<SynthesisRecord> synthesis;
    bool superseded = false;
};

struct FactQueryResult {
    std::vector<Fact> facts;
    std::vector<std::string> warnings;
};

struct Contradiction {
    std::string first;
    std::string second;
    std::string reason;
    bool operator==(const Contradiction&) const = default;
};

using SynthesisLookup = std::function<std::optional<SynthesisRecord>(const GroupKey&)>;

/// Why two claims on the same (subject, relation, object) conflict, if they do:
/// opposite-sign estimates with disjoint 95% intervals, or supports vs refutes.
std::optional<std::string> conflict_reason(const ClaimTriple& a, const ClaimTriple& b);

std::string compute_claim_id(const ClaimTriple& claim);

/// Parses `<number> [unit]` as a literal object.
std::optional<Literal> parse_literal(std::string_view text);

/// Entity registry with alias resolution plus the claim-triple set.
///
/// When constructed with a store, entity creations and alias additions are
/// persisted through it. Claims are persisted by the store's publication
/// bundles, so the graph keeps them in memory only.
class Graph {
public:
    explicit Graph(Store* store = nullptr) : store_(store) {}

    /// Rebuilds state from persisted entities, claims and superseded set.
    void load(const std::map<std::string, Entity>& entities, const std::vector<ClaimTriple>& claims,
              const std::set<PubRef>& superseded);

    std::string resolve_entity(std::string_view name, bool create_if_missing);
    std::optional<std::string> lookup(std::string_view name) const;
    void add_alias(const std::string& entity_id, std::string_view alias);
    const Entity* find_entity(const std::string& entity_id) const;
    const std::map<std::string, Entity>& entities() const { return entities_; }
    std::string display_name(const std::string& entity_id) const;
    std::string display_object(const ClaimObject& object) const;

    /// Resolves an object name: literal when it parses as one, else an entity.
    std::optional<ClaimObject> lookup_object(std::string_view text) const;
    ClaimObject resolve_object(std::string_view text);

    /// Fills in claim_id, validates and stores. Identical claims deduplicate.
    std::string assert_claim(ClaimTriple claim);
    void retract_claim(const std::string& claim_id);
    const ClaimTriple* find_claim(const std::string& claim_id) const;
    std::size_t claim_count() const { return claims_.size(); }

    FactQueryResult query_facts(const FactPattern& pattern, bool include_superseded = false,
                                const SynthesisLookup& synthesis = {}) const;

    /// Pairs (first < second by claim_id) of non-superseded conflicting claims
    /// among those with this subject and relation; pairs only form within one object.
    std::vector<Contradiction> detect_contradictions(const std::string& subject, const std::string& relation) const;

    std::vector<ClaimTriple> group_claims(const GroupKey& group, bool include_superseded = false) const;
    std::vector<GroupKey> groups_of(const PubRef& ref) const;
    std::vector<GroupKey> all_groups() const;

    void set_superseded(const PubRef& ref, bool superseded);
    bool is_superseded(const ClaimTriple& claim) const { return superseded_.count(claim.source.ref()) > 0; }

private:
    std::string new_entity_id(const std::string& normalized) const;
    void persist(const Entity& e);

    Store* store_;
    std::map<std::string, Entity> entities_;
    std::map<std::string, std::string> alias_to_entity_;
    std::map<std::string, ClaimTriple> claims_;
    std::map<GroupKey, std::set<std::string>> by_group_;
    std::set<PubRef> superseded_;
};

}  // namespace apub
