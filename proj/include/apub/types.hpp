#pragma once

#include <array>
#include <compare>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "apub/common.hpp"
#include "json.hpp"

namespace apub {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Enums with stable wire names
// ---------------------------------------------------------------------------

enum class PubStatus { validated, flagged, superseded };
enum class Section { abstract, methods, results, discussion, other };
enum class Polarity { supports, refutes };
enum class Confidence { low, medium, high };
enum class EventAction { commit, supersede, flag, feedback, query };
enum class Rating { up, down };
enum class ColumnKind { numeric, text };
enum class Gate { duplicate, reference, statistics, contradiction, schema };
enum class Severity { info, warn, reject };
enum class Verdict { accepted, accepted_flagged, rejected };
enum class Zoom { headline, abstract, detailed, data };

template <class E>
struct EnumNames;

#define APUB_ENUM_NAMES(E, ...)                                                  \
    template <>                                                                  \
    struct EnumNames<E> {                                                        \
        static constexpr std::pair<E, std::string_view> values[] = {__VA_ARGS__}; \
    };

APUB_ENUM_NAMES(PubStatus, {PubStatus::validated, "validated"}, {PubStatus::flagged, "flagged"},
                {PubStatus::superseded, "superseded"})
APUB_ENUM_NAMES(Section, {Section::abstract, "abstract"}, {Section::methods, "methods"},
                {Section::results, "results"}, {Section::discussion, "discussion"}, {Section::other, "other"})
APUB_ENUM_NAMES(Polarity, {Polarity::supports, "supports"}, {Polarity::refutes, "refutes"})
APUB_ENUM_NAMES(Confidence, {Confidence::low, "low"}, {Confidence::medium, "medium"}, {Confidence::high, "high"})
APUB_ENUM_NAMES(EventAction, {EventAction::commit, "commit"}, {EventAction::supersede, "supersede"},
                {EventAction::flag, "flag"}, {EventAction::feedback, "feedback"}, {EventAction::query, "query"})
APUB_ENUM_NAMES(Rating, {Rating::up, "up"}, {Rating::down, "down"})
APUB_ENUM_NAMES(ColumnKind, {ColumnKind::numeric, "numeric"}, {ColumnKind::text, "text"})
APUB_ENUM_NAMES(Gate, {Gate::duplicate, "duplicate"}, {Gate::reference, "reference"},
                {Gate::statistics, "statistics"}, {Gate::contradiction, "contradiction"}, {Gate::schema, "schema"})
APUB_ENUM_NAMES(Severity, {Severity::info, "info"}, {Severity::warn, "warn"}, {Severity::reject, "reject"})
APUB_ENUM_NAMES(Verdict, {Verdict::accepted, "accepted"}, {Verdict::accepted_flagged, "accepted_flagged"},
                {Verdict::rejected, "rejected"})
APUB_ENUM_NAMES(Zoom, {Zoom::headline, "headline"}, {Zoom::abstract, "abstract"}, {Zoom::detailed, "detailed"},
                {Zoom::data, "data"})

#undef APUB_ENUM_NAMES

template <class E>
std::string_view to_string(E value) {
    for (const auto& [v, name] : EnumNames<E>::values) {
        if (v == value) {
            return name;
        }
    }
    return "?";
}

template <class E>
std::optional<E> enum_from_string(std::string_view name) {
    for (const auto& [v, n] : EnumNames<E>::values) {
        if (n == name) {
            return v;
        }
    }
    return std::nullopt;
}

template <class E, class = decltype(EnumNames<E>::values)>
void to_json(json& j, const E& e) {
    j = std::string(to_string(e));
}

template <class E, class = decltype(EnumNames<E>::values)>
void from_json(const json& j, E& e) {
    const auto parsed = enum_from_string<E>(j.get<std::string>());
    if (!parsed) {
        throw Error(ErrorCode::parse, "unknown enum value '" + j.get<std::string>() + "'");
    }
    e = *parsed;
}

double confidence_score(Confidence c);

// ---------------------------------------------------------------------------
// Publications
// ---------------------------------------------------------------------------

/// (pub_id, version) pair; renders as `pub_id@vN`.
struct PubRef {
    std::string pub_id;
    int version = 1;

    auto operator<=>(const PubRef&) const = default;
    std::string str() const { return pub_id + "@v" + std::to_string(version); }
    static PubRef parse(std::string_view text);
};

struct Author {
    std::string name;
    std::optional<std::string> orcid;
    bool operator==(const Author&) const = default;
};

struct RevisionNote {
    Timestamp timestamp;
    std::string actor;
    std::string note;
    bool operator==(const RevisionNote&) const = default;
};

struct ProvenanceRecord {
    std::string generator_model;
    Timestamp created_at;
    std::vector<RevisionNote> revision_notes;
    std::optional<int> review_score;
    bool operator==(const ProvenanceRecord&) const = default;
};

struct Publication {
    std::string pub_id;
    int version = 1;
    std::string title;
    std::vector<Author> authors;
    std::string date;
    std::vector<std::string> keywords;
    std::optional<std::string> venue;
    std::optional<std::string> doi;
    std::vector<std::string> references;
    PubStatus status = PubStatus::validated;
    std::string language = "en";
    ProvenanceRecord provenance;

    PubRef ref() const { return {pub_id, version}; }
    bool operator==(const Publication&) const = default;
};

struct Chunk {
    std::string chunk_id;
    std::string pub_id;
    int version = 1;
    Section section = Section::other;
    int ordinal = 0;
    std::string text;
    int word_count = 0;
    /// Original section heading and its position in the source document.
    std::string heading;
    int section_index = 0;

    bool operator==(const Chunk&) const = default;
};

std::string make_chunk_id(const PubRef& ref, int ordinal);

struct Column {
    std::string name;
    ColumnKind kind = ColumnKind::text;
    bool operator==(const Column&) const = default;
};

struct DatasetRecord {
    std::string dataset_id;
    std::string pub_id;
    int version = 1;
    std::string name;
    std::vector<Column> columns;
    std::vector<std::vector<std::string>> rows;
    bool operator==(const DatasetRecord&) const = default;
};

struct VersionEvent {
    Timestamp timestamp;
    std::string actor;
    EventAction action = EventAction::commit;
    std::string subject_id;
    std::string details;
    bool operator==(const VersionEvent&) const = default;
};

struct FeedbackEvent {
    std::string query_id;
    Rating rating = Rating::up;
    std::optional<std::string> flag_reason;
    Timestamp timestamp;
    bool operator==(const FeedbackEvent&) const = default;
};

// ---------------------------------------------------------------------------
// Knowledge graph
// ---------------------------------------------------------------------------

struct Entity {
    std::string entity_id;
    std::string canonical_name;
    std::set<std::string> aliases;
    std::set<std::string> external_ids;
    bool operator==(const Entity&) const = default;
};

struct EntityRef {
    std::string entity_id;
    bool operator==(const EntityRef&) const = default;
};

struct Literal {
    double value = 0;
    std::string unit;
    bool operator==(const Literal&) const = default;
};

using ClaimObject = std::variant<EntityRef, Literal>;

/// Stable string key for an object: the entity id or `lit:<value>:<unit>`.
std::string object_key(const ClaimObject& obj);

struct Effect {
    double estimate = 0;
    double se = 0;
    std::optional<std::array<double, 2>> ci95;
    std::optional<std::string> unit;
    bool operator==(const Effect&) const = default;
};

struct ClaimSource {
    std::string pub_id;
    int version = 1;
    std::vector<std::string> chunk_ids;
    PubRef ref() const { return {pub_id, version}; }
    bool operator==(const ClaimSource&) const = default;
};

struct ClaimTriple {
    std::string claim_id;
    std::string subject;
    std::string relation;
    ClaimObject object;
    std::optional<Effect> effect;
    Polarity polarity = Polarity::supports;
    ClaimSource source;
    Timestamp asserted_at;
    bool operator==(const ClaimTriple&) const = default;
};

struct GroupKey {
    std::string subject;
    std::string relation;
    std::string object;
    auto operator<=>(const GroupKey&) const = default;
    std::string str() const { return subject + "|" + relation + "|" + object; }
};

GroupKey group_of(const ClaimTriple& c);

/// Relation tokens: lowercase, whitespace and hyphens folded to underscores.
std::string normalize_relation(std::string_view relation);

struct SynthesisRecord {
    GroupKey group;
    int n_studies = 0;
    double pooled_estimate = 0;
    double pooled_se = 0;
    std::array<double, 2> ci95{};
    double agreement_ratio = 0;
    Confidence confidence = Confidence::low;
    bool contradiction_flag = false;
    Timestamp computed_at;
    std::vector<std::string> inputs;
    bool operator==(const SynthesisRecord&) const = default;
};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

struct Finding {
    Gate gate = Gate::schema;
    Severity severity = Severity::info;
    std::string message;
    std::vector<std::string> subject_ids;
    bool operator==(const Finding&) const = default;
};

struct ValidationReport {
    std::vector<Finding> findings;
    Verdict verdict = Verdict::accepted;
};

Verdict verdict_for(const std::vector<Finding>& findings);

struct PublicationBundle {
    Publication publication;
    std::vector<Chunk> chunks;
    std::vector<ClaimTriple> claims;
    std::vector<DatasetRecord> datasets;
    bool operator==(const PublicationBundle&) const = default;
};

// ---------------------------------------------------------------------------
// JSON mapping (field names match the record schema)
// ---------------------------------------------------------------------------

void to_json(json& j, const Timestamp& t);
void from_json(const json& j, Timestamp& t);
void to_json(json& j, const Author& a);
void from_json(const json& j, Author& a);
void to_json(json& j, const RevisionNote& n);
void from_json(const json& j, RevisionNote& n);
void to_json(json& j, const ProvenanceRecord& p);
void from_json(const json& j, ProvenanceRecord& p);
void to_json(json& j, const Publication& p);
void from_json(const json& j, Publication& p);
void to_json(json& j, const Chunk& c);
void from_json(const json& j, Chunk& c);
void to_json(json& j, const Column& c);
void from_json(const json& j, Column& c);
void to_json(json& j, const DatasetRecord& d);
void from_json(const json& j, DatasetRecord& d);
void to_json(json& j, const VersionEvent& e);
void from_json(const json& j, VersionEvent& e);
void to_json(json& j, const FeedbackEvent& e);
void from_json(const json& j, FeedbackEvent& e);
void to_json(json& j, const Entity& e);
void from_json(const json& j, Entity& e);
void to_json(json& j, const ClaimObject& o);
void from_json(const json& j, ClaimObject& o);
void to_json(json& j, const Effect& e);
void from_json(const json& j, Effect& e);
void to_json(json& j, const ClaimSource& s);
void from_json(const json& j, ClaimSource& s);
void to_json(json& j, const ClaimTriple& c);
void from_json(const json& j, ClaimTriple& c);
void to_json(json& j, const GroupKey& g);
void from_json(const json& j, GroupKey& g);
void to_json(json& j, const SynthesisRecord& r);
void from_json(const json& j, SynthesisRecord& r);
void to_json(json& j, const Finding& f);
void from_json(const json& j, Finding& f);
void to_json(json& j, const ValidationReport& r);

}  // namespace apub
