#include "apub/engine.hpp"

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <sstream>

namespace apub {

namespace {

constexpr std::size_t kEmbedBatch = 64;

std::function<std::string()> random_ids() {
    auto rng = std::make_shared<std::mt19937_64>(std::random_device{}());
    auto mu = std::make_shared<std::mutex>();
    return [rng, mu]() {
        std::lock_guard lock(*mu);
        return "q-" + hex64((*rng)());
    };
}

std::vector<EmbeddingVector> embed_all(const Embedder& embedder, const std::vector<std::string>& texts) {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (std::size_t i = 0; i < texts.size(); i += kEmbedBatch) {
        const auto end = std::min(texts.size(), i + kEmbedBatch);
        auto batch = embedder.embed_texts(std::vector<std::string>(texts.begin() + static_cast<std::ptrdiff_t>(i),
                                                                   texts.begin() + static_cast<std::ptrdiff_t>(end)));
        for (auto& v : batch) {
            out.push_back(std::move(v));
        }
    }
    return out;
}

/// True when the statistics gate reported this claim's interval.
bool ci_flagged(const DraftClaim& d, const std::vector<Finding>& findings) {
    if (!d.effect || !d.effect->ci95) {
        return false;
    }
    const std::string needle = "claim '" + d.subject + " | " + d.relation + " | " + d.object + "': reported ci95";
    return std::any_of(findings.begin(), findings.end(), [&](const Finding& f) {
        return f.gate == Gate::statistics && f.message.rfind(needle, 0) == 0;
    });
}

}  // namespace

Engine::Engine(EngineOptions options, EngineDeps deps)
    : options_(std::move(options)),
      deps_(std::move(deps)),
      store_(Store::open(options_.store_path, StoreOptions{options_.recover, deps_.clock})),
      graph_(store_.get()),
      index_(deps_.embedder->dimension()) {}

Engine::~Engine() {
    try {
        save_index_snapshot();
    } catch (...) {
        // A missing snapshot only costs a re-embed on the next open.
    }
}

std::unique_ptr<Engine> Engine::open(EngineOptions options, EngineDeps deps) {
    if (!deps.embedder || !deps.composer) {
        throw invalid_argument("engine needs an embedder and a composer");
    }
    if (!deps.clock) {
        deps.clock = system_clock();
    }
    if (!deps.next_id) {
        deps.next_id = random_ids();
    }
    std::unique_ptr<Engine> engine(new Engine(std::move(options), std::move(deps)));
    engine->rebuild();
    return engine;
}

void Engine::rebuild() {
    graph_.load(store_->entities(), store_->all_claims(), store_->superseded());
    const auto chunks = store_->all_chunks();
    const auto snapshot = options_.store_path / "index.bin";
    if (options_.use_index_snapshot && std::filesystem::exists(snapshot)) {
        try {
            auto loaded = VectorIndex::load_snapshot(snapshot);
            bool matches = loaded.dimension() == index_.dimension() && loaded.size() == chunks.size();
            for (std::size_t i = 0; matches && i < chunks.size(); ++i) {
                matches = loaded.get(chunks[i]->chunk_id).has_value();
            }
            if (matches) {
                index_ = std::move(loaded);
                for (const auto* c : chunks) {
                    index_.set_superseded(c->pub_id, c->version, store_->is_superseded(PubRef{c->pub_id, c->version}));
                }
                return;
            }
        } catch (const Error&) {
            // Fall through to a full re-embed.
        }
    }
    std::vector<std::string> texts;
    for (const auto* c : chunks) {
        texts.push_back(c->text);
    }
    const auto vectors = embed_all(*deps_.embedder, texts);
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        const auto* c = chunks[i];
        index_.upsert(IndexEntry{c->chunk_id, vectors[i], c->pub_id, c->version,
                                 store_->is_superseded(PubRef{c->pub_id, c->version})});
    }
}

void Engine::save_index_snapshot() const {
    std::shared_lock lock(state_mutex_);
    index_.save_snapshot(options_.store_path / "index.bin");
}

QueryContext Engine::context() const {
    return QueryContext{*store_, index_, graph_, *deps_.embedder, *deps_.composer, options_.query};
}

std::string Engine::graph_label(const GroupKey& group) const { return group_label(group, graph_); }

// ---------------------------------------------------------------------------
// Writes
// ---------------------------------------------------------------------------

SubmitResult Engine::submit(std::string_view payload, SubmissionFormat format, const std::string& actor) {
    std::lock_guard writer(writer_mutex_);
    SubmitResult result;
    auto doc = parse_submission(payload, format, false, deps_.clock);

    result.report.findings = check_schema(doc);
    result.report.verdict = verdict_for(result.report.findings);
    if (result.report.verdict == Verdict::rejected) {
        return result;
    }

    Publication& meta = doc.metadata;
    if (meta.pub_id.empty()) {
        meta.pub_id = generate_pub_id(meta);
    }
    // Only this thread writes, so reading store state without the state lock is safe.
    const int version = store_->latest_version(meta.pub_id).value_or(0) + 1;
    const PubRef ref{meta.pub_id, version};

    std::vector<Finding> extra = doc.findings;
    const auto chunks = chunk_document(doc, ref, options_.chunk_policy, &extra);
    auto drafts = extract_claims(doc, chunks, deps_.composer.get(), extra);
    if (!options_.relation_vocabulary.empty()) {
        const auto& vocab = options_.relation_vocabulary;
        std::set<std::string> reported;
        for (const auto& d : drafts) {
            const auto rel = normalize_relation(d.relation);
            if (std::find(vocab.begin(), vocab.end(), rel) == vocab.end() && reported.insert(rel).second) {
                extra.push_back(Finding{Gate::schema, Severity::warn, "relation '" + rel + "' is not in the controlled vocabulary", {}});
            }
        }
    }
    std::vector<std::string> texts;
    for (const auto& c : chunks) {
        texts.push_back(c.text);
    }
    const auto vectors = embed_all(*deps_.embedder, texts);

    GateInputs gates;
    gates.doc = &doc;
    gates.chunks = &chunks;
    gates.vectors = &vectors;
    gates.claims = &drafts;
    gates.store = store_.get();
    gates.index = &index_;
    gates.graph = &graph_;
    gates.duplicate_threshold = options_.duplicate_threshold;
    result.report = validate(gates, extra);
    if (result.report.verdict == Verdict::rejected) {
        return result;
    }

    PublicationBundle bundle;
    bundle.publication = meta;
    bundle.publication.version = version;
    bundle.publication.status =
        result.report.verdict == Verdict::accepted_flagged ? PubStatus::flagged : PubStatus::validated;
    auto& prov = bundle.publication.provenance;
    prov.created_at = deps_.clock();
    const bool generated = std::any_of(drafts.begin(), drafts.end(), [](const DraftClaim& d) { return d.generated; });
    prov.generator_model = generated ? deps_.composer->model_name() : "";
    if (version > 1) {
        prov.revision_notes.push_back(
            RevisionNote{prov.created_at, actor, "version " + std::to_string(version) + " submitted"});
    }
    bundle.chunks = chunks;
    for (std::size_t i = 0; i < doc.datasets.size(); ++i) {
        DatasetRecord d = doc.datasets[i];
        const std::string local = !d.dataset_id.empty() ? d.dataset_id : !d.name.empty() ? d.name : "d" + std::to_string(i);
        d.dataset_id = ref.pub_id + "#v" + std::to_string(ref.version) + "#" + local;
        d.pub_id = ref.pub_id;
        d.version = ref.version;
        bundle.datasets.push_back(std::move(d));
    }

    std::unique_lock state(state_mutex_);
    // Entity creation mutates the graph, so it waits for the exclusive lock.
    std::set<std::string> claim_ids;
    for (const auto& d : drafts) {
        ClaimTriple t;
        t.subject = graph_.resolve_entity(d.subject, true);
        t.relation = normalize_relation(d.relation);
        t.object = graph_.resolve_object(d.object);
        t.effect = d.effect;
        if (t.effect && ci_flagged(d, result.report.findings)) {
            t.effect->ci95.reset();
        }
        t.polarity = d.polarity;
        t.source = ClaimSource{ref.pub_id, ref.version, {make_chunk_id(ref, d.chunk_ordinal)}};
        t.asserted_at = prov.created_at;
        t.claim_id = compute_claim_id(t);
        if (claim_ids.insert(t.claim_id).second) {
            bundle.claims.push_back(std::move(t));
        }
    }

    auto pending = store_->stage(bundle);
    std::vector<std::string> asserted;
    try {
        if (fault_) {
            fault_(CommitStage::staged);
        }
        for (std::size_t i = 0; i < chunks.size(); ++i) {
            index_.upsert(IndexEntry{chunks[i].chunk_id, vectors[i], ref.pub_id, ref.version, false});
        }
        if (fault_) {
            fault_(CommitStage::indexed);
        }
        for (const auto& c : bundle.claims) {
            asserted.push_back(graph_.assert_claim(c));
        }
        if (fault_) {
            fault_(CommitStage::graphed);
        }
        std::lock_guard log(log_mutex_);
        store_->publish(std::move(pending), actor);
    } catch (...) {
        index_.remove_publication(ref.pub_id, ref.version);
        for (const auto& id : asserted) {
            graph_.retract_claim(id);
        }
        throw;
    }
    std::set<GroupKey> groups;
    for (const auto& c : bundle.claims) {
        groups.insert(group_of(c));
    }
    for (const auto& g : groups) {
        refresh_synthesis(g, graph_, *store_, options_.rules);
    }
    ++generation_;
    result.ref = ref;
    return result;
}

bool Engine::supersede(const PubRef& old_ref, const PubRef& new_ref, const std::string& actor) {
    std::lock_guard writer(writer_mutex_);
    if (store_->find_publication(old_ref) == nullptr) {
        throw not_found("unknown publication " + old_ref.str());
    }
    if (store_->find_publication(new_ref) == nullptr) {
        throw not_found("unknown publication " + new_ref.str());
    }
    if (old_ref == new_ref) {
        throw invalid_argument("a publication cannot supersede itself");
    }
    std::unique_lock state(state_mutex_);
    bool changed = false;
    {
        std::lock_guard log(log_mutex_);
        changed = store_->mark_superseded(old_ref, new_ref, actor);
    }
    if (!changed) {
        return false;
    }
    index_.set_superseded(old_ref.pub_id, old_ref.version, true);
    graph_.set_superseded(old_ref, true);
    for (const auto& g : graph_.groups_of(old_ref)) {
        refresh_synthesis(g, graph_, *store_, options_.rules);
    }
    ++generation_;
    return true;
}

void Engine::add_alias(const std::string& canonical, const std::string& alias) {
    std::lock_guard writer(writer_mutex_);
    std::unique_lock state(state_mutex_);
    const auto id = graph_.resolve_entity(canonical, true);
    graph_.add_alias(id, alias);
    ++generation_;
}

void Engine::record_feedback(const std::string& query_id, Rating rating, std::optional<std::string> reason) {
    std::lock_guard log(log_mutex_);
    if (!store_->has_query(query_id)) {
        throw not_found("unknown query_id " + query_id);
    }
    store_->append_feedback(FeedbackEvent{query_id, rating, std::move(reason), deps_.clock()});
}

// ---------------------------------------------------------------------------
// Reads
// ---------------------------------------------------------------------------

std::string Engine::new_query_id() { return deps_.next_id(); }

Answer Engine::answer_locked(const std::string& question, Zoom zoom, const std::string& query_id) const {
    return apub::answer(context(), question, zoom, query_id);
}

void Engine::log_query(const Answer& a, const std::string& actor, bool cached) {
    json cited = json::array();
    for (const auto& c : a.citations) {
        cited.push_back(c.chunk_id);
    }
    json details{{"question", a.question},
                 {"zoom", a.zoom},
                 {"cited", cited},
                 {"refused", a.refused},
                 {"cache", cached ? "hit" : "miss"}};
    std::lock_guard log(log_mutex_);
    store_->append_event(VersionEvent{deps_.clock(), actor, EventAction::query, a.query_id, details.dump()});
}

Answer Engine::answer(const std::string& question, Zoom zoom, const std::string& actor) {
    const auto id = new_query_id();
    Answer a;
    {
        std::shared_lock state(state_mutex_);
        a = answer_locked(question, zoom, id);
    }
    log_query(a, actor, false);
    return a;
}

AskResult Engine::ask(const std::string& question, Zoom zoom, const std::string& actor) {
    const auto id = new_query_id();
    AskResult r;
    {
        std::shared_lock state(state_mutex_);
        r.detail = answer_locked(question, zoom, id);
        r.headline = zoom == Zoom::headline ? r.detail : answer_locked(question, Zoom::headline, id);
    }
    log_query(r.detail, actor, false);
    return r;
}

FactQueryResult Engine::facts(const FactPattern& pattern, bool include_superseded) const {
    std::shared_lock state(state_mutex_);
    return graph_.query_facts(pattern, include_superseded, [this](const GroupKey& g) -> std::optional<SynthesisRecord> {
        const auto it = store_->synthesis().find(g);
        if (it == store_->synthesis().end()) {
            return std::nullopt;
        }
        return it->second;
    });
}

std::vector<Contradiction> Engine::contradictions(const std::string& subject, const std::string& relation) const {
    std::shared_lock state(state_mutex_);
    const auto id = graph_.lookup(subject);
    if (!id) {
        return {};
    }
    return graph_.detect_contradictions(*id, relation);
}

std::vector<RetrievedChunk> Engine::retrieve(const std::string& question, std::optional<std::size_t> k) const {
    std::shared_lock state(state_mutex_);
    return apub::retrieve(context(), question, k);
}

PublicationBundle Engine::publication(const std::string& pub_id, std::optional<int> version) const {
    std::shared_lock state(state_mutex_);
    return store_->get_publication(pub_id, version);
}

PubStatus Engine::effective_status(const PubRef& ref) const {
    std::shared_lock state(state_mutex_);
    if (store_->is_superseded(ref)) {
        return PubStatus::superseded;
    }
    const auto* p = store_->find_publication(ref);
    if (p == nullptr) {
        throw not_found("unknown publication " + ref.str());
    }
    return p->status;
}

std::optional<PubRef> Engine::superseded_by(const PubRef& ref) const {
    std::shared_lock state(state_mutex_);
    return store_->superseded_by(ref);
}

bool Engine::is_superseded(const PubRef& ref) const {
    std::shared_lock state(state_mutex_);
    return store_->is_superseded(ref);
}

std::vector<VersionEvent> Engine::events_for(const std::string& pub_id) const {
    std::lock_guard log(log_mutex_);
    return store_->events_for(pub_id);
}

std::vector<VersionEvent> Engine::events() const {
    std::lock_guard log(log_mutex_);
    return store_->events();
}

std::vector<FeedbackEvent> Engine::feedback() const {
    std::lock_guard log(log_mutex_);
    return store_->feedback();
}

std::optional<DatasetRecord> Engine::dataset(const std::string& dataset_id) const {
    std::shared_lock state(state_mutex_);
    const auto* d = store_->find_dataset(dataset_id);
    if (d == nullptr) {
        return std::nullopt;
    }
    return *d;
}

std::vector<ColumnStats> Engine::dataset_stats(const std::string& dataset_id) const {
    std::shared_lock state(state_mutex_);
    return apub::dataset_stats(*store_, dataset_id);
}

std::string Engine::export_manuscript(const std::string& pub_id, std::optional<int> version) const {
    std::shared_lock state(state_mutex_);
    return apub::export_manuscript(*store_, graph_, pub_id, version);
}

std::vector<ClaimTriple> Engine::claims() const {
    std::shared_lock state(state_mutex_);
    return store_->all_claims();
}

std::string Engine::claim_line(const ClaimTriple& claim) const {
    std::shared_lock state(state_mutex_);
    return apub::claim_line(claim, graph_);
}

std::optional<SynthesisRecord> Engine::synthesis(const GroupKey& group) const {
    std::shared_lock state(state_mutex_);
    const auto it = store_->synthesis().find(group);
    if (it == store_->synthesis().end()) {
        return std::nullopt;
    }
    return it->second;
}

FeedbackDigest Engine::digest(Timestamp since) const {
    FeedbackDigest d;
    d.since = since;
    std::vector<VersionEvent> events;
    std::vector<FeedbackEvent> feedback;
    {
        std::lock_guard log(log_mutex_);
        events = store_->events();
        feedback = store_->feedback();
    }
    std::map<std::string, std::string> questions;
    std::map<std::string, DigestEntry> themes;
    for (const auto& e : events) {
        if (e.action != EventAction::query) {
            continue;
        }
        const auto details = json::parse(e.details, nullptr, false);
        const std::string question = details.is_object() ? details.value("question", "") : "";
        questions[e.subject_id] = question;
        if (e.timestamp < since) {
            continue;
        }
        ++d.query_count;
        if (details.is_object() && details.value("refused", false)) {
            ++d.refused_count;
        }
        // Theme = the publication cited most often by this answer; ties go to the first cited.
        std::map<std::string, int> counts;
        std::vector<std::string> order;
        if (details.is_object() && details.contains("cited") && details["cited"].is_array()) {
            for (const auto& c : details["cited"]) {
                const auto ref = chunk_pub_ref(c.get<std::string>());
                if (ref && counts[ref->pub_id]++ == 0) {
                    order.push_back(ref->pub_id);
                }
            }
        }
        std::string top;
        for (const auto& p : order) {
            if (top.empty() || counts[p] > counts[top]) {
                top = p;
            }
        }
        if (top.empty()) {
            continue;
        }
        auto& entry = themes[top];
        entry.pub_id = top;
        ++entry.queries;
        if (entry.sample_questions.size() < 3 &&
            std::find(entry.sample_questions.begin(), entry.sample_questions.end(), question) ==
                entry.sample_questions.end()) {
            entry.sample_questions.push_back(question);
        }
    }
    for (const auto& f : feedback) {
        if (f.timestamp < since) {
            continue;
        }
        if (f.rating == Rating::up) {
            ++d.up_votes;
        } else {
            ++d.down_votes;
        }
        if (f.flag_reason) {
            d.flagged.push_back(FlaggedQuery{f.query_id, questions.count(f.query_id) ? questions[f.query_id] : "",
                                             *f.flag_reason});
        }
    }
    for (auto& [pub, entry] : themes) {
        std::shared_lock state(state_mutex_);
        if (const auto v = store_->latest_version(pub)) {
            entry.title = store_->find_publication(PubRef{pub, *v})->title;
        }
        d.themes.push_back(entry);
    }
    std::sort(d.themes.begin(), d.themes.end(), [](const DigestEntry& a, const DigestEntry& b) {
        return a.queries != b.queries ? a.queries > b.queries : a.pub_id < b.pub_id;
    });
    if (d.themes.size() > 10) {
        d.themes.resize(10);
    }
    return d;
}

std::string render_digest(const FeedbackDigest& d) {
    std::ostringstream out;
    char rate[32];
    std::snprintf(rate, sizeof(rate), "%.1f%%", 100.0 * d.refusal_rate());
    out << "# Reader digest since " << format_timestamp(d.since) << "\n\n";
    out << "- Queries: " << d.query_count << "\n";
    out << "- Refused: " << d.refused_count << " (refusal rate " << rate << ")\n";
    out << "- Up-votes: " << d.up_votes << "\n";
    out << "- Down-votes: " << d.down_votes << "\n";
    out << "- Flagged queries: " << d.flagged.size() << "\n";
    out << "\n## Top themes\n\n";
    if (d.themes.empty()) {
        out << "No answered queries.\n";
    }
    for (const auto& t : d.themes) {
        out << "- " << (t.title.empty() ? t.pub_id : t.title) << " (" << t.pub_id << "): " << t.queries
            << (t.queries == 1 ? " query" : " queries") << "\n";
        for (const auto& q : t.sample_questions) {
            out << "  - " << q << "\n";
        }
    }
    out << "\n## Flagged queries\n\n";
    if (d.flagged.empty()) {
        out << "None.\n";
    }
    for (const auto& f : d.flagged) {
        out << "- " << f.query_id << ": \"" << f.question << "\": " << f.reason << "\n";
    }
    return out.str();
}

}  // namespace apub
