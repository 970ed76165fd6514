#include "apub/query.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <regex>
#include <set>
#include <sstream>

#include "apub/ingest.hpp"

namespace apub {

namespace {

std::string fmt4(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

std::string padded_tokens(std::string_view text) {
    std::string out = " ";
    for (const auto& t : tokenize(text)) {
        out += t + " ";
    }
    return out;
}

/// Keeps leading sentences while they fit the zoom budget; the first one is
/// always kept so an over-long single sentence is still verified.
std::string fit_budget(const std::string& text, Zoom zoom) {
    const auto budget = budget_for(zoom);
    std::string out;
    int words = 0;
    int count = 0;
    for (const auto& s : split_answer_sentences(text)) {
        const int n = static_cast<int>(word_count(s));
        if (count > 0 && (count >= budget.max_sentences || words + n > budget.max_words)) {
            break;
        }
        out += out.empty() ? s : " " + s;
        words += n;
        ++count;
    }
    return out;
}

bool citable(const Store& store, const std::string& chunk_id) {
    const auto* chunk = store.find_chunk(chunk_id);
    return chunk != nullptr && !store.is_superseded(PubRef{chunk->pub_id, chunk->version});
}

/// Active claims whose source chunks intersect `chunk_ids`.
std::vector<ClaimTriple> claims_citing(const Graph& graph, const std::set<std::string>& chunk_ids) {
    std::vector<ClaimTriple> out;
    for (const auto& g : graph.all_groups()) {
        for (const auto& c : graph.group_claims(g)) {
            for (const auto& id : c.source.chunk_ids) {
                if (chunk_ids.count(id) > 0) {
                    out.push_back(c);
                    break;
                }
            }
        }
    }
    return out;
}

std::vector<GroupNote> notes_for(const std::set<GroupKey>& groups, const Store& store, const Graph& graph) {
    std::vector<GroupNote> out;
    for (const auto& g : groups) {
        const auto it = store.synthesis().find(g);
        if (it != store.synthesis().end()) {
            out.push_back(GroupNote{group_label(g, graph), it->second});
        }
    }
    return out;
}

Confidence heuristic_confidence(const std::vector<Citation>& citations) {
    std::set<std::string> pubs;
    for (const auto& c : citations) {
        pubs.insert(c.pub_id);
    }
    if (pubs.size() >= 3) {
        return Confidence::high;
    }
    return pubs.size() == 2 ? Confidence::medium : Confidence::low;
}

std::optional<SynthesisRecord> best_record(const std::vector<GroupKey>& groups, const Store& store) {
    std::optional<SynthesisRecord> best;
    for (const auto& g : groups) {
        const auto it = store.synthesis().find(g);
        if (it != store.synthesis().end() && (!best || it->second.n_studies > best->n_studies)) {
            best = it->second;
        }
    }
    return best;
}

json effects_table(const std::vector<ClaimTriple>& claims, const Graph& graph) {
    json rows = json::array();
    for (const auto& c : claims) {
        if (!c.effect) {
            continue;
        }
        json row{{"claim_id", c.claim_id},
                 {"subject", graph.display_name(c.subject)},
                 {"relation", c.relation},
                 {"object", graph.display_object(c.object)},
                 {"estimate", c.effect->estimate},
                 {"se", c.effect->se},
                 {"ci95", c.effect->ci95 ? json(*c.effect->ci95) : json(nullptr)},
                 {"unit", c.effect->unit ? json(*c.effect->unit) : json(nullptr)},
                 {"pub_id", c.source.pub_id},
                 {"version", c.source.version},
                 {"chunk_ids", c.source.chunk_ids}};
        rows.push_back(std::move(row));
    }
    return rows;
}

json data_points_for(const Answer& a, const Store& store, const Graph& graph) {
    std::set<std::string> ids;
    std::set<PubRef> pubs;
    for (const auto& c : a.citations) {
        ids.insert(c.chunk_id);
        pubs.insert(PubRef{c.pub_id, c.version});
    }
    json datasets = json::array();
    for (const auto& ref : pubs) {
        for (const auto* d : store.datasets_of(ref)) {
            datasets.push_back(json{{"dataset_id", d->dataset_id}, {"name", d->name}, {"columns", d->columns}, {"rows", d->rows}});
        }
    }
    return json{{"effects", effects_table(claims_citing(graph, ids), graph)}, {"datasets", datasets}};
}

std::string refusal_derivation(double top, double tau) {
    if (top <= 0) {
        return "No passage in this publication matched the question.";
    }
    return "No passage reached the relevance threshold (best score " + fmt4(top) + ", threshold " + fmt4(tau) + ").";
}

/// Tool answer for "pooled effect of X on Y", or nullopt to fall back to retrieval.
std::optional<Answer> calculator_answer(const QueryContext& ctx, const std::string& question, Zoom zoom,
                                        const std::string& query_id) {
    const auto calc = match_calculator(question);
    if (!calc) {
        return std::nullopt;
    }
    const auto subject = ctx.graph.lookup(calc->subject);
    const auto object = ctx.graph.lookup_object(calc->object);
    if (!subject || !object) {
        return std::nullopt;
    }
    const std::string okey = object_key(*object);
    std::vector<GroupKey> groups;
    for (const auto& g : ctx.graph.all_groups()) {
        if (g.subject == *subject && g.object == okey) {
            groups.push_back(g);
        }
    }
    const auto record = best_record(groups, ctx.store);
    if (!record) {
        return std::nullopt;
    }
    Answer a;
    a.query_id = query_id;
    a.question = question;
    a.zoom = zoom;
    std::string sentence = "The pooled effect of " + ctx.graph.display_name(*subject) + " on " +
                           ctx.graph.display_object(*object) + " is " + fmt4(record->pooled_estimate) + " (95% CI " +
                           fmt4(record->ci95[0]) + " to " + fmt4(record->ci95[1]) + ") across " +
                           std::to_string(record->n_studies) + (record->n_studies == 1 ? " study." : " studies.");
    const int budget = budget_for(zoom).max_words;
    int words = static_cast<int>(word_count(sentence));
    std::vector<std::string> cited;
    for (const auto& id : record->inputs) {
        const auto* claim = ctx.graph.find_claim(id);
        if (claim == nullptr) {
            continue;
        }
        for (const auto& chunk_id : claim->source.chunk_ids) {
            if (std::find(cited.begin(), cited.end(), chunk_id) != cited.end() || !citable(ctx.store, chunk_id)) {
                continue;
            }
            if (!cited.empty() && words + 1 > budget) {
                break;
            }
            cited.push_back(chunk_id);
            ++words;
        }
    }
    if (cited.empty()) {
        return std::nullopt;
    }
    const auto qv = ctx.embedder.embed(question);
    for (const auto& id : cited) {
        sentence += " " + citation_marker(id);
        const auto ref = chunk_pub_ref(id);
        const auto entry = ctx.index.get(id);
        a.citations.push_back(Citation{ref->pub_id, ref->version, id, entry ? cosine(qv, entry->vector) : 0.0});
    }
    a.text = sentence;
    a.confidence = record->confidence;
    a.confidence_score = confidence_score(a.confidence);
    a.warnings = synthesis_warnings({GroupNote{group_label(record->group, ctx.graph), *record}});
    a.derivation = build_derivation(a.citations, ctx.store) + " The pooled figure is a fixed-effect inverse-variance estimate.";
    if (zoom == Zoom::data) {
        a.data_points = data_points_for(a, ctx.store, ctx.graph);
    }
    return a;
}

}  // namespace

std::string group_label(const GroupKey& group, const Graph& graph) {
    std::string object = group.object;
    if (group.object.rfind("lit:", 0) == 0) {
        object = group.object.substr(4);
        const auto colon = object.find(':');
        if (colon != std::string::npos) {
            const std::string unit = object.substr(colon + 1);
            object = object.substr(0, colon) + (unit.empty() ? "" : " " + unit);
        }
    } else {
        object = graph.display_name(group.object);
    }
    return graph.display_name(group.subject) + " " + group.relation + " " + object;
}

std::string claim_line(const ClaimTriple& claim, const Graph& graph) {
    DraftClaim d;
    d.subject = graph.display_name(claim.subject);
    d.relation = claim.relation;
    d.object = graph.display_object(claim.object);
    d.effect = claim.effect;
    d.polarity = claim.polarity;
    return format_claim_line(d);
}

std::vector<RetrievedChunk> retrieve(const QueryContext& ctx, const std::string& question, std::optional<std::size_t> k) {
    if (trim(question).empty()) {
        throw invalid_argument("question is empty");
    }
    std::vector<RetrievedChunk> out;
    if (ctx.index.size() == 0) {
        return out;
    }
    const auto qv = ctx.embedder.embed(question);
    for (const auto& hit : ctx.index.search(qv, k.value_or(ctx.options.k))) {
        const auto* chunk = ctx.store.find_chunk(hit.chunk_id);
        if (chunk == nullptr || ctx.store.is_superseded(PubRef{chunk->pub_id, chunk->version})) {
            continue;
        }
        out.push_back(RetrievedChunk{*chunk, hit.score});
    }
    return out;
}

std::vector<GroupKey> match_fact_groups(const std::string& question, const Graph& graph) {
    const std::string q = padded_tokens(question);
    std::set<std::string> mentioned;
    for (const auto& [id, e] : graph.entities()) {
        for (const auto& alias : e.aliases) {
            const auto a = padded_tokens(alias);
            if (a.size() > 1 && q.find(a) != std::string::npos) {
                mentioned.insert(id);
                break;
            }
        }
    }
    std::vector<GroupKey> out;
    if (mentioned.empty()) {
        return out;
    }
    for (const auto& g : graph.all_groups()) {
        if (mentioned.count(g.subject) > 0 && mentioned.count(g.object) > 0) {
            out.push_back(g);
        }
    }
    return out;
}

std::optional<CalculatorQuery> match_calculator(const std::string& question) {
    static const std::regex re(R"(\b(?:average|pooled|mean)\s+effect\s+of\s+(.+?)\s+on\s+(.+?)\s*[?.!]*\s*$)",
                               std::regex::icase);
    std::smatch m;
    if (!std::regex_search(question, m, re)) {
        return std::nullopt;
    }
    return CalculatorQuery{trim(m[1].str()), trim(m[2].str())};
}

std::string build_derivation(const std::vector<Citation>& citations, const Store& store) {
    if (citations.empty()) {
        return "";
    }
    std::set<PubRef> pubs;
    for (const auto& c : citations) {
        pubs.insert(PubRef{c.pub_id, c.version});
    }
    std::string min_date;
    std::string max_date;
    int flagged = 0;
    for (const auto& ref : pubs) {
        const auto* p = store.find_publication(ref);
        if (p == nullptr) {
            continue;
        }
        if (min_date.empty() || p->date < min_date) {
            min_date = p->date;
        }
        if (max_date.empty() || p->date > max_date) {
            max_date = p->date;
        }
        if (p->status == PubStatus::flagged) {
            ++flagged;
        }
    }
    const std::string range = min_date == max_date ? min_date : min_date + "–" + max_date;
    std::string out = "This answer is based on " + std::to_string(citations.size()) + " passages from " +
                      std::to_string(pubs.size()) + " publications dated " + range + ".";
    if (flagged > 0) {
        out += " " + std::to_string(flagged) + " cited publication(s) carry validation warnings.";
    }
    return out;
}

Answer answer(const QueryContext& ctx, const std::string& question, Zoom zoom, const std::string& query_id) {
    if (trim(question).empty()) {
        throw invalid_argument("question is empty");
    }
    if (auto tool = calculator_answer(ctx, question, zoom, query_id)) {
        return *tool;
    }
    Answer a;
    a.query_id = query_id;
    a.question = question;
    a.zoom = zoom;

    const auto hits = retrieve(ctx, question);
    const double top = hits.empty() ? 0.0 : hits.front().score;
    if (hits.empty() || top < ctx.options.tau_refuse) {
        make_refusal(a);
        a.derivation = refusal_derivation(top, ctx.options.tau_refuse);
        return a;
    }

    CompositionRequest req;
    req.question = question;
    req.zoom = zoom;
    for (const auto& h : hits) {
        req.context.push_back(ContextItem{h.chunk.chunk_id, h.chunk.text, h.score});
    }
    std::string draft;
    try {
        draft = ctx.composer.compose_answer(req);
    } catch (const std::exception&) {
        make_refusal(a);
        a.warnings.emplace_back(kBackendWarning);
        a.derivation = "The composition backend failed; no answer text was generated.";
        return a;
    }
    a.text = fit_budget(draft, zoom);

    auto findings = verify_citations(a.text, [&](const std::string& id) { return citable(ctx.store, id); });
    auto grounding = verify_grounding(a.text, req.context, ctx.embedder, ctx.options.gamma);
    findings.insert(findings.end(), grounding.begin(), grounding.end());
    a = finalize(std::move(a), findings, req.context);
    if (a.refused) {
        a.derivation = "Every generated sentence failed citation or grounding checks.";
        return a;
    }

    std::set<std::string> cited_ids;
    std::set<PubRef> cited_pubs;
    for (const auto& c : a.citations) {
        cited_ids.insert(c.chunk_id);
        cited_pubs.insert(PubRef{c.pub_id, c.version});
    }
    const auto matched = match_fact_groups(question, ctx.graph);
    std::set<GroupKey> groups(matched.begin(), matched.end());
    for (const auto& c : claims_citing(ctx.graph, cited_ids)) {
        groups.insert(group_of(c));
    }
    for (const auto& w : synthesis_warnings(notes_for(groups, ctx.store, ctx.graph))) {
        if (std::find(a.warnings.begin(), a.warnings.end(), w) == a.warnings.end()) {
            a.warnings.push_back(w);
        }
    }
    for (const auto& ref : cited_pubs) {
        const auto* p = ctx.store.find_publication(ref);
        if (p != nullptr && p->status == PubStatus::flagged) {
            a.warnings.push_back("Cited publication " + ref.str() + " carries validation warnings.");
        }
    }
    const auto record = best_record(matched, ctx.store);
    a.confidence = record ? record->confidence : heuristic_confidence(a.citations);
    a.confidence_score = confidence_score(a.confidence);
    a.derivation = build_derivation(a.citations, ctx.store);
    if (zoom == Zoom::data) {
        a.data_points = data_points_for(a, ctx.store, ctx.graph);
    }
    return a;
}

std::vector<ColumnStats> dataset_stats(const DatasetRecord& dataset) {
    std::vector<ColumnStats> out;
    for (std::size_t c = 0; c < dataset.columns.size(); ++c) {
        ColumnStats s;
        s.name = dataset.columns[c].name;
        s.kind = dataset.columns[c].kind;
        double sum = 0;
        for (const auto& row : dataset.rows) {
            if (c >= row.size() || row[c].empty()) {
                continue;
            }
            if (s.kind == ColumnKind::text) {
                ++s.count;
                continue;
            }
            const auto v = parse_number(row[c]);
            if (!v) {
                continue;
            }
            ++s.count;
            sum += *v;
            s.min = s.min ? std::min(*s.min, *v) : *v;
            s.max = s.max ? std::max(*s.max, *v) : *v;
        }
        if (s.kind == ColumnKind::numeric && s.count > 0) {
            s.mean = sum / static_cast<double>(s.count);
        }
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<ColumnStats> dataset_stats(const Store& store, const std::string& dataset_id) {
    const auto* d = store.find_dataset(dataset_id);
    if (d == nullptr) {
        throw not_found("unknown dataset " + dataset_id);
    }
    return dataset_stats(*d);
}

std::string export_manuscript(const Store& store, const Graph& graph, const std::string& pub_id,
                              std::optional<int> version) {
    const auto bundle = store.get_publication(pub_id, version);
    const auto& p = bundle.publication;
    std::ostringstream out;
    out << "# " << p.title << "\n\n";
    if (!p.authors.empty()) {
        out << "Authors: ";
        for (std::size_t i = 0; i < p.authors.size(); ++i) {
            out << (i > 0 ? "; " : "") << p.authors[i].name;
        }
        out << "\n";
    }
    out << "Date: " << p.date << "\n";
    if (p.venue) {
        out << "Venue: " << *p.venue << "\n";
    }
    if (p.doi) {
        out << "DOI: " << *p.doi << "\n";
    }
    if (!p.keywords.empty()) {
        out << "Keywords: ";
        for (std::size_t i = 0; i < p.keywords.size(); ++i) {
            out << (i > 0 ? "; " : "") << p.keywords[i];
        }
        out << "\n";
    }
    if (const auto by = store.superseded_by(p.ref())) {
        out << "Status: SUPERSEDED by " << by->str() << "\n";
    }

    std::vector<std::string> claim_lines;
    for (const auto& c : bundle.claims) {
        claim_lines.push_back(claim_line(c, graph));
    }
    bool claims_written = false;
    auto write_claims = [&]() {
        if (claims_written || claim_lines.empty()) {
            claims_written = true;
            return;
        }
        out << "\n## Claims\n\n";
        for (const auto& l : claim_lines) {
            out << l << "\n";
        }
        claims_written = true;
    };

    // Chunks of one source section are contiguous; re-join them per section.
    std::size_t i = 0;
    while (i < bundle.chunks.size()) {
        const auto& first = bundle.chunks[i];
        std::size_t j = i;
        std::string text;
        while (j < bundle.chunks.size() && bundle.chunks[j].section_index == first.section_index) {
            text += (j > i ? "\n\n" : "") + bundle.chunks[j].text;
            ++j;
        }
        if (iequals(first.heading, "claims")) {
            write_claims();
        } else {
            if (!first.heading.empty()) {
                out << "\n## " << first.heading << "\n";
            }
            out << "\n" << text << "\n";
        }
        i = j;
    }
    write_claims();
    if (!p.references.empty()) {
        out << "\n## References\n\n";
        for (const auto& r : p.references) {
            out << "- " << (is_doi(r) ? "doi:" + r : r) << "\n";
        }
    }

    std::vector<std::string> synthesis_lines;
    std::set<GroupKey> groups;
    for (const auto& c : bundle.claims) {
        groups.insert(group_of(c));
    }
    for (const auto& g : groups) {
        const auto it = store.synthesis().find(g);
        if (it == store.synthesis().end()) {
            continue;
        }
        const auto& r = it->second;
        synthesis_lines.push_back("- " + group_label(g, graph) + ": pooled estimate " + fmt4(r.pooled_estimate) +
                                  " (95% CI " + fmt4(r.ci95[0]) + " to " + fmt4(r.ci95[1]) + "), " +
                                  std::to_string(r.n_studies) + " studies, agreement " + fmt4(r.agreement_ratio) +
                                  ", confidence " + std::string(to_string(r.confidence)) +
                                  (r.contradiction_flag ? ", conflicting evidence" : ""));
    }
    if (!synthesis_lines.empty()) {
        out << "\n## Synthesis\n\n";
        for (const auto& l : synthesis_lines) {
            out << l << "\n";
        }
    }

    out << "\n## Provenance\n\n";
    out << "- Version: " << p.version << "\n";
    out << "- Status: " << to_string(p.status) << "\n";
    if (!p.provenance.generator_model.empty()) {
        out << "- Generator model: " << p.provenance.generator_model << "\n";
    }
    out << "- Created: " << format_timestamp(p.provenance.created_at) << "\n";
    if (p.provenance.review_score) {
        out << "- Review score: " << *p.provenance.review_score << "\n";
    }
    for (const auto& n : p.provenance.revision_notes) {
        out << "- Revision " << format_timestamp(n.timestamp) << " by " << n.actor << ": " << n.note << "\n";
    }
    return out.str();
}

}  // namespace apub
