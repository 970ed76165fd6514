#include "apub/types.hpp"

#include <cmath>

namespace apub {

namespace {

template <class T>
std::optional<T> opt_field(const json& j, const char* key) {
    const auto it = j.find(key);
    if (it == j.end() || it->is_null()) {
        return std::nullopt;
    }
    return it->get<T>();
}

template <class T>
T field_or(const json& j, const char* key, T fallback) {
    const auto it = j.find(key);
    if (it == j.end() || it->is_null()) {
        return fallback;
    }
    return it->get<T>();
}

}  // namespace

double confidence_score(Confidence c) {
    switch (c) {
        case Confidence::low:
            return 0.25;
        case Confidence::medium:
            return 0.60;
        case Confidence::high:
            return 0.90;
    }
    return 0.25;
}

PubRef PubRef::parse(std::string_view text) {
    const auto at = text.rfind("@v");
    if (at == std::string_view::npos || at == 0) {
        throw invalid_argument("expected <pub_id>@v<N>, got '" + std::string(text) + "'");
    }
    const auto version_text = text.substr(at + 2);
    int version = 0;
    for (const char c : version_text) {
        if (c < '0' || c > '9' || version > 100000000) {
            throw invalid_argument("bad version in '" + std::string(text) + "'");
        }
        version = version * 10 + (c - '0');
    }
    if (version_text.empty() || version < 1) {
        throw invalid_argument("bad version in '" + std::string(text) + "'");
    }
    return PubRef{std::string(text.substr(0, at)), version};
}

std::string make_chunk_id(const PubRef& ref, int ordinal) {
    return ref.pub_id + "#v" + std::to_string(ref.version) + "#c" + std::to_string(ordinal);
}

std::string object_key(const ClaimObject& obj) {
    if (const auto* e = std::get_if<EntityRef>(&obj)) {
        return e->entity_id;
    }
    const auto& lit = std::get<Literal>(obj);
    return "lit:" + format_number(lit.value) + ":" + lit.unit;
}

GroupKey group_of(const ClaimTriple& c) { return GroupKey{c.subject, c.relation, object_key(c.object)}; }

std::string normalize_relation(std::string_view relation) {
    std::string out;
    for (const auto& word : split_whitespace(to_lower(relation))) {
        if (!out.empty()) {
            out.push_back('_');
        }
        out += word;
    }
    for (char& c : out) {
        if (c == '-') {
            c = '_';
        }
    }
    return out;
}

Verdict verdict_for(const std::vector<Finding>& findings) {
    bool warn = false;
    for (const auto& f : findings) {
        if (f.severity == Severity::reject) {
            return Verdict::rejected;
        }
        warn = warn || f.severity == Severity::warn;
    }
    return warn ? Verdict::accepted_flagged : Verdict::accepted;
}

void to_json(json& j, const Timestamp& t) { j = format_timestamp(t); }
void from_json(const json& j, Timestamp& t) { t = parse_timestamp(j.get<std::string>()); }

void to_json(json& j, const Author& a) {
    j = json{{"name", a.name}};
    if (a.orcid) {
        j["orcid"] = *a.orcid;
    }
}
void from_json(const json& j, Author& a) {
    a.name = j.at("name").get<std::string>();
    a.orcid = opt_field<std::string>(j, "orcid");
}

void to_json(json& j, const RevisionNote& n) {
    j = json{{"timestamp", n.timestamp}, {"actor", n.actor}, {"note", n.note}};
}
void from_json(const json& j, RevisionNote& n) {
    n.timestamp = j.at("timestamp").get<Timestamp>();
    n.actor = j.at("actor").get<std::string>();
    n.note = j.at("note").get<std::string>();
}

void to_json(json& j, const ProvenanceRecord& p) {
    j = json{{"generator_model", p.generator_model},
             {"created_at", p.created_at},
             {"revision_notes", p.revision_notes}};
    if (p.review_score) {
        j["review_score"] = *p.review_score;
    }
}
void from_json(const json& j, ProvenanceRecord& p) {
    p.generator_model = field_or<std::string>(j, "generator_model", "");
    p.created_at = j.at("created_at").get<Timestamp>();
    p.revision_notes = field_or<std::vector<RevisionNote>>(j, "revision_notes", {});
    p.review_score = opt_field<int>(j, "review_score");
}

void to_json(json& j, const Publication& p) {
    j = json{{"pub_id", p.pub_id},     {"version", p.version},   {"title", p.title},
             {"authors", p.authors},   {"date", p.date},         {"keywords", p.keywords},
             {"references", p.references}, {"status", p.status}, {"language", p.language},
             {"provenance", p.provenance}};
    if (p.venue) {
        j["venue"] = *p.venue;
    }
    if (p.doi) {
        j["doi"] = *p.doi;
    }
}
void from_json(const json& j, Publication& p) {
    p.pub_id = j.at("pub_id").get<std::string>();
    p.version = j.at("version").get<int>();
    p.title = j.at("title").get<std::string>();
    p.authors = j.at("authors").get<std::vector<Author>>();
    p.date = j.at("date").get<std::string>();
    p.keywords = field_or<std::vector<std::string>>(j, "keywords", {});
    p.venue = opt_field<std::string>(j, "venue");
    p.doi = opt_field<std::string>(j, "doi");
    p.references = field_or<std::vector<std::string>>(j, "references", {});
    p.status = j.at("status").get<PubStatus>();
    p.language = field_or<std::string>(j, "language", "en");
    p.provenance = j.at("provenance").get<ProvenanceRecord>();
}

void to_json(json& j, const Chunk& c) {
    j = json{{"chunk_id", c.chunk_id}, {"pub_id", c.pub_id},         {"version", c.version},
             {"section", c.section},   {"ordinal", c.ordinal},       {"text", c.text},
             {"word_count", c.word_count}, {"heading", c.heading}, {"section_index", c.section_index}};
}
void from_json(const json& j, Chunk& c) {
    c.chunk_id = j.at("chunk_id").get<std::string>();
    c.pub_id = j.at("pub_id").get<std::string>();
    c.version = j.at("version").get<int>();
    c.section = j.at("section").get<Section>();
    c.ordinal = j.at("ordinal").get<int>();
    c.text = j.at("text").get<std::string>();
    c.word_count = j.at("word_count").get<int>();
    c.heading = field_or<std::string>(j, "heading", std::string(to_string(c.section)));
    c.section_index = field_or<int>(j, "section_index", 0);
}

void to_json(json& j, const Column& c) { j = json{{"name", c.name}, {"kind", c.kind}}; }
void from_json(const json& j, Column& c) {
    c.name = j.at("name").get<std::string>();
    c.kind = j.at("kind").get<ColumnKind>();
}

void to_json(json& j, const DatasetRecord& d) {
    j = json{{"dataset_id", d.dataset_id}, {"pub_id", d.pub_id}, {"version", d.version},
             {"name", d.name},             {"columns", d.columns}, {"rows", d.rows}};
}
void from_json(const json& j, DatasetRecord& d) {
    d.dataset_id = j.at("dataset_id").get<std::string>();
    d.pub_id = j.at("pub_id").get<std::string>();
    d.version = j.at("version").get<int>();
    d.name = j.at("name").get<std::string>();
    d.columns = j.at("columns").get<std::vector<Column>>();
    d.rows = j.at("rows").get<std::vector<std::vector<std::string>>>();
}

void to_json(json& j, const VersionEvent& e) {
    j = json{{"timestamp", e.timestamp},
             {"actor", e.actor},
             {"action", e.action},
             {"subject_id", e.subject_id},
             {"details", e.details}};
}
void from_json(const json& j, VersionEvent& e) {
    e.timestamp = j.at("timestamp").get<Timestamp>();
    e.actor = j.at("actor").get<std::string>();
    e.action = j.at("action").get<EventAction>();
    e.subject_id = j.at("subject_id").get<std::string>();
    e.details = field_or<std::string>(j, "details", "");
}

void to_json(json& j, const FeedbackEvent& e) {
    j = json{{"query_id", e.query_id}, {"rating", e.rating}, {"timestamp", e.timestamp}};
    if (e.flag_reason) {
        j["flag_reason"] = *e.flag_reason;
    }
}
void from_json(const json& j, FeedbackEvent& e) {
    e.query_id = j.at("query_id").get<std::string>();
    e.rating = j.at("rating").get<Rating>();
    e.flag_reason = opt_field<std::string>(j, "flag_reason");
    e.timestamp = j.at("timestamp").get<Timestamp>();
}

void to_json(json& j, const Entity& e) {
    j = json{{"entity_id", e.entity_id},
             {"canonical_name", e.canonical_name},
             {"aliases", e.aliases},
             {"external_ids", e.external_ids}};
}
void from_json(const json& j, Entity& e) {
    e.entity_id = j.at("entity_id").get<std::string>();
    e.canonical_name = j.at("canonical_name").get<std::string>();
    e.aliases = j.at("aliases").get<std::set<std::string>>();
    e.external_ids = field_or<std::set<std::string>>(j, "external_ids", {});
}

void to_json(json& j, const ClaimObject& o) {
    if (const auto* e = std::get_if<EntityRef>(&o)) {
        j = json{{"entity_id", e->entity_id}};
    } else {
        const auto& lit = std::get<Literal>(o);
        j = json{{"value", lit.value}, {"unit", lit.unit}};
    }
}
void from_json(const json& j, ClaimObject& o) {
    if (j.contains("entity_id")) {
        o = EntityRef{j.at("entity_id").get<std::string>()};
    } else {
        o = Literal{j.at("value").get<double>(), j.at("unit").get<std::string>()};
    }
}

void to_json(json& j, const Effect& e) {
    j = json{{"estimate", e.estimate}, {"se", e.se}};
    if (e.ci95) {
        j["ci95"] = *e.ci95;
    }
    if (e.unit) {
        j["unit"] = *e.unit;
    }
}
void from_json(const json& j, Effect& e) {
    e.estimate = j.at("estimate").get<double>();
    e.se = j.at("se").get<double>();
    e.ci95 = opt_field<std::array<double, 2>>(j, "ci95");
    e.unit = opt_field<std::string>(j, "unit");
}

void to_json(json& j, const ClaimSource& s) {
    j = json{{"pub_id", s.pub_id}, {"version", s.version}, {"chunk_ids", s.chunk_ids}};
}
void from_json(const json& j, ClaimSource& s) {
    s.pub_id = j.at("pub_id").get<std::string>();
    s.version = j.at("version").get<int>();
    s.chunk_ids = j.at("chunk_ids").get<std::vector<std::string>>();
}

void to_json(json& j, const ClaimTriple& c) {
    j = json{{"claim_id", c.claim_id}, {"subject", c.subject},   {"relation", c.relation},
             {"object", c.object},     {"polarity", c.polarity}, {"source", c.source},
             {"asserted_at", c.asserted_at}};
    if (c.effect) {
        j["effect"] = *c.effect;
    }
}
void from_json(const json& j, ClaimTriple& c) {
    c.claim_id = j.at("claim_id").get<std::string>();
    c.subject = j.at("subject").get<std::string>();
    c.relation = j.at("relation").get<std::string>();
    c.object = j.at("object").get<ClaimObject>();
    c.effect = opt_field<Effect>(j, "effect");
    c.polarity = j.at("polarity").get<Polarity>();
    c.source = j.at("source").get<ClaimSource>();
    c.asserted_at = j.at("asserted_at").get<Timestamp>();
}

void to_json(json& j, const GroupKey& g) {
    j = json{{"subject", g.subject}, {"relation", g.relation}, {"object", g.object}};
}
void from_json(const json& j, GroupKey& g) {
    g.subject = j.at("subject").get<std::string>();
    g.relation = j.at("relation").get<std::string>();
    g.object = j.at("object").get<std::string>();
}

void to_json(json& j, const SynthesisRecord& r) {
    j = json{{"group", r.group},
             {"n_studies", r.n_studies},
             {"pooled_estimate", r.pooled_estimate},
             {"pooled_se", r.pooled_se},
             {"ci95", r.ci95},
             {"agreement_ratio", r.agreement_ratio},
             {"confidence", r.confidence},
             {"contradiction_flag", r.contradiction_flag},
             {"computed_at", r.computed_at},
             {"inputs", r.inputs}};
}
void from_json(const json& j, SynthesisRecord& r) {
    r.group = j.at("group").get<GroupKey>();
    r.n_studies = j.at("n_studies").get<int>();
    r.pooled_estimate = j.at("pooled_estimate").get<double>();
    r.pooled_se = j.at("pooled_se").get<double>();
    r.ci95 = j.at("ci95").get<std::array<double, 2>>();
    r.agreement_ratio = j.at("agreement_ratio").get<double>();
    r.confidence = j.at("confidence").get<Confidence>();
    r.contradiction_flag = j.at("contradiction_flag").get<bool>();
    r.computed_at = j.at("computed_at").get<Timestamp>();
    r.inputs = j.at("inputs").get<std::vector<std::string>>();
}

void to_json(json& j, const Finding& f) {
    j = json{{"gate", f.gate}, {"severity", f.severity}, {"message", f.message}, {"subject_ids", f.subject_ids}};
}
void from_json(const json& j, Finding& f) {
    f.gate = j.at("gate").get<Gate>();
    f.severity = j.at("severity").get<Severity>();
    f.message = j.at("message").get<std::string>();
    f.subject_ids = field_or<std::vector<std::string>>(j, "subject_ids", {});
}

void to_json(json& j, const ValidationReport& r) { j = json{{"findings", r.findings}, {"verdict", r.verdict}}; }

}  // namespace apub
