#include "apub/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <regex>

#include "apub/store.hpp"

namespace apub {

namespace {

constexpr double kZ95 = 1.96;
constexpr double kCiTolerance = 0.005;

std::array<double, 2> interval(const Effect& e) { return {e.estimate - kZ95 * e.se, e.estimate + kZ95 * e.se}; }

std::string fmt_interval(const std::array<double, 2>& ci) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "[%.4g, %.4g]", ci[0], ci[1]);
    return buf;
}

bool claim_order(const ClaimTriple& a, const ClaimTriple& b) {
    const auto ka = group_of(a);
    const auto kb = group_of(b);
    if (ka != kb) {
        return ka < kb;
    }
    if (a.asserted_at != b.asserted_at) {
        return a.asserted_at < b.asserted_at;
    }
    return a.claim_id < b.claim_id;
}

}  // namespace

std::optional<std::string> conflict_reason(const ClaimTriple& a, const ClaimTriple& b) {
    if (group_of(a) != group_of(b)) {
        return std::nullopt;
    }
    if (a.effect && b.effect && a.effect->estimate * b.effect->estimate < 0) {
        const auto ia = interval(*a.effect);
        const auto ib = interval(*b.effect);
        if (ia[1] < ib[0] || ib[1] < ia[0]) {
            return "opposite effects with disjoint 95% CIs " + fmt_interval(ia) + " vs " + fmt_interval(ib);
        }
    }
    if (a.polarity != b.polarity) {
        return "polarity " + std::string(to_string(a.polarity)) + " vs " + std::string(to_string(b.polarity));
    }
    return std::nullopt;
}

std::string compute_claim_id(const ClaimTriple& claim) {
    std::string key = claim.subject + "\x1f" + claim.relation + "\x1f" + object_key(claim.object) + "\x1f" +
                      claim.source.pub_id + "\x1f" + std::to_string(claim.source.version);
    for (const auto& id : claim.source.chunk_ids) {
        key += "\x1f" + id;
    }
    return "cl:" + hex64(fnv1a64(key));
}

std::optional<Literal> parse_literal(std::string_view text) {
    static const std::regex re(R"(^\s*([-+]?(?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+)(?:[eE][-+]?[0-9]+)?)\s*([^\s0-9.+\-][^\s]*)?\s*$)");
    std::cmatch m;
    if (!std::regex_match(text.data(), text.data() + text.size(), m, re)) {
        return std::nullopt;
    }
    const auto value = parse_number(m[1].str());
    if (!value) {
        return std::nullopt;
    }
    return Literal{*value, m[2].str()};
}

void Graph::load(const std::map<std::string, Entity>& entities, const std::vector<ClaimTriple>& claims,
                 const std::set<PubRef>& superseded) {
    entities_ = entities;
    alias_to_entity_.clear();
    for (const auto& [id, e] : entities_) {
        for (const auto& alias : e.aliases) {
            alias_to_entity_[alias] = id;
        }
    }
    claims_.clear();
    by_group_.clear();
    for (const auto& c : claims) {
        by_group_[group_of(c)].insert(c.claim_id);
        claims_[c.claim_id] = c;
    }
    superseded_ = superseded;
}

std::optional<std::string> Graph::lookup(std::string_view name) const {
    const auto it = alias_to_entity_.find(normalize_name(name));
    if (it == alias_to_entity_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::string Graph::new_entity_id(const std::string& normalized) const {
    const std::string base = "ent:" + hex64(fnv1a64(normalized)).substr(0, 12);
    std::string id = base;
    for (int n = 2; entities_.count(id) > 0; ++n) {
        id = base + "-" + std::to_string(n);
    }
    return id;
}

void Graph::persist(const Entity& e) {
    if (store_ != nullptr) {
        store_->put_entity(e);
    }
}

std::string Graph::resolve_entity(std::string_view name, bool create_if_missing) {
    const std::string normalized = normalize_name(name);
    if (normalized.empty()) {
        throw invalid_argument("entity name is empty");
    }
    if (auto id = lookup(normalized)) {
        return *id;
    }
    if (!create_if_missing) {
        throw not_found("unknown entity '" + std::string(name) + "'");
    }
    Entity e;
    e.entity_id = new_entity_id(normalized);
    e.canonical_name = collapse_whitespace(name);
    e.aliases.insert(normalized);
    persist(e);
    alias_to_entity_[normalized] = e.entity_id;
    const auto id = e.entity_id;
    entities_[id] = std::move(e);
    return id;
}

void Graph::add_alias(const std::string& entity_id, std::string_view alias) {
    const auto it = entities_.find(entity_id);
    if (it == entities_.end()) {
        throw not_found("unknown entity " + entity_id);
    }
    const std::string normalized = normalize_name(alias);
    if (normalized.empty()) {
        throw invalid_argument("alias is empty");
    }
    const auto owner = alias_to_entity_.find(normalized);
    if (owner != alias_to_entity_.end()) {
        if (owner->second == entity_id) {
            return;
        }
        throw conflict("alias '" + normalized + "' already belongs to " + owner->second + " (" +
                       entities_.at(owner->second).canonical_name + "), cannot add to " + entity_id + " (" +
                       it->second.canonical_name + ")");
    }
    Entity updated = it->second;
    updated.aliases.insert(normalized);
    persist(updated);
    it->second = std::move(updated);
    alias_to_entity_[normalized] = entity_id;
}

const Entity* Graph::find_entity(const std::string& entity_id) const {
    const auto it = entities_.find(entity_id);
    return it == entities_.end() ? nullptr : &it->second;
}

std::string Graph::display_name(const std::string& entity_id) const {
    const auto* e = find_entity(entity_id);
    return e != nullptr ? e->canonical_name : entity_id;
}

std::string Graph::display_object(const ClaimObject& object) const {
    if (const auto* e = std::get_if<EntityRef>(&object)) {
        return display_name(e->entity_id);
    }
    const auto& lit = std::get<Literal>(object);
    return lit.unit.empty() ? format_number(lit.value) : format_number(lit.value) + " " + lit.unit;
}

std::optional<ClaimObject> Graph::lookup_object(std::string_view text) const {
    if (auto lit = parse_literal(text)) {
        return ClaimObject{*lit};
    }
    if (auto id = lookup(text)) {
        return ClaimObject{EntityRef{*id}};
    }
    return std::nullopt;
}

ClaimObject Graph::resolve_object(std::string_view text) {
    if (auto lit = parse_literal(text)) {
        return *lit;
    }
    return EntityRef{resolve_entity(text, true)};
}

std::string Graph::assert_claim(ClaimTriple claim) {
    if (entities_.count(claim.subject) == 0) {
        throw not_found("unknown subject entity " + claim.subject);
    }
    if (const auto* obj = std::get_if<EntityRef>(&claim.object); obj != nullptr && entities_.count(obj->entity_id) == 0) {
        throw not_found("unknown object entity " + obj->entity_id);
    }
    claim.relation = normalize_relation(claim.relation);
    if (claim.relation.empty()) {
        throw invalid_argument("empty relation");
    }
    if (claim.effect) {
        const auto& e = *claim.effect;
        if (!std::isfinite(e.estimate) || !std::isfinite(e.se) || e.se <= 0) {
            throw invalid_argument("effect needs a finite estimate and se > 0");
        }
        if (e.ci95) {
            const auto expected = interval(e);
            if (std::abs((*e.ci95)[0] - expected[0]) > kCiTolerance ||
                std::abs((*e.ci95)[1] - expected[1]) > kCiTolerance) {
                throw invalid_argument("ci95 " + fmt_interval(*e.ci95) + " inconsistent with estimate " +
                                       format_number(e.estimate) + " and se " + format_number(e.se) + " (expected " +
                                       fmt_interval(expected) + ")");
            }
        }
    }
    claim.claim_id = compute_claim_id(claim);
    const auto id = claim.claim_id;
    if (claims_.count(id) == 0) {
        by_group_[group_of(claim)].insert(id);
        claims_.emplace(id, std::move(claim));
    }
    return id;
}

void Graph::retract_claim(const std::string& claim_id) {
    const auto it = claims_.find(claim_id);
    if (it == claims_.end()) {
        return;
    }
    const auto g = group_of(it->second);
    auto& ids = by_group_[g];
    ids.erase(claim_id);
    if (ids.empty()) {
        by_group_.erase(g);
    }
    claims_.erase(it);
}

const ClaimTriple* Graph::find_claim(const std::string& claim_id) const {
    const auto it = claims_.find(claim_id);
    return it == claims_.end() ? nullptr : &it->second;
}

FactQueryResult Graph::query_facts(const FactPattern& pattern, bool include_superseded,
                                   const SynthesisLookup& synthesis) const {
    if (pattern.empty()) {
        throw invalid_argument("fact pattern needs at least one of subject, relation, object");
    }
    FactQueryResult result;
    std::optional<std::string> subject;
    std::optional<std::string> object;
    if (pattern.subject) {
        subject = lookup(*pattern.subject);
        if (!subject) {
            result.warnings.push_back("unknown entity: " + *pattern.subject);
        }
    }
    if (pattern.object) {
        if (auto obj = lookup_object(*pattern.object)) {
            object = object_key(*obj);
        } else {
            result.warnings.push_back("unknown entity: " + *pattern.object);
        }
    }
    if (!result.warnings.empty()) {
        return result;
    }
    const auto relation = pattern.relation ? std::optional(normalize_relation(*pattern.relation)) : std::nullopt;

    std::vector<const ClaimTriple*> matched;
    for (const auto& [group, ids] : by_group_) {
        if ((subject && group.subject != *subject) || (relation && group.relation != *relation) ||
            (object && group.object != *object)) {
            continue;
        }
        for (const auto& id : ids) {
            const auto& c = claims_.at(id);
            if (!include_superseded && is_superseded(c)) {
                continue;
            }
            matched.push_back(&c);
        }
    }
    std::sort(matched.begin(), matched.end(),
              [](const ClaimTriple* a, const ClaimTriple* b) { return claim_order(*a, *b); });
    for (const auto* c : matched) {
        Fact f{*c, std::nullopt, is_superseded(*c)};
        if (synthesis) {
            f.synthesis = synthesis(group_of(*c));
        }
        result.facts.push_back(std::move(f));
    }
    return result;
}

std::vector<Contradiction> Graph::detect_contradictions(const std::string& subject, const std::string& relation) const {
    std::vector<const ClaimTriple*> claims;
    const auto rel = normalize_relation(relation);
    for (const auto& [group, ids] : by_group_) {
        if (group.subject != subject || group.relation != rel) {
            continue;
        }
        for (const auto& id : ids) {
            const auto& c = claims_.at(id);
            if (!is_superseded(c)) {
                claims.push_back(&c);
            }
        }
    }
    std::sort(claims.begin(), claims.end(),
              [](const ClaimTriple* a, const ClaimTriple* b) { return a->claim_id < b->claim_id; });
    std::vector<Contradiction> out;
    for (std::size_t i = 0; i < claims.size(); ++i) {
        for (std::size_t j = i + 1; j < claims.size(); ++j) {
            if (auto reason = conflict_reason(*claims[i], *claims[j])) {
                out.push_back(Contradiction{claims[i]->claim_id, claims[j]->claim_id, *reason});
            }
        }
    }
    return out;
}

std::vector<ClaimTriple> Graph::group_claims(const GroupKey& group, bool include_superseded) const {
    std::vector<ClaimTriple> out;
    const auto it = by_group_.find(group);
    if (it == by_group_.end()) {
        return out;
    }
    for (const auto& id : it->second) {
        const auto& c = claims_.at(id);
        if (include_superseded || !is_superseded(c)) {
            out.push_back(c);
        }
    }
    return out;
}

std::vector<GroupKey> Graph::groups_of(const PubRef& ref) const {
    std::set<GroupKey> groups;
    for (const auto& [_, c] : claims_) {
        if (c.source.ref() == ref) {
            groups.insert(group_of(c));
        }
    }
    return {groups.begin(), groups.end()};
}

std::vector<GroupKey> Graph::all_groups() const {
    std::vector<GroupKey> out;
    for (const auto& [g, _] : by_group_) {
        out.push_back(g);
    }
    return out;
}

void Graph::set_superseded(const PubRef& ref, bool superseded) {
    if (superseded) {
        superseded_.insert(ref);
    } else {
        superseded_.erase(ref);
    }
}

}  // namespace apub
