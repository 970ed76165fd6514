#include "apub/store.hpp"

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace apub {

namespace fs = std::filesystem;

namespace {

constexpr const char* kPublications = "publications.jsonl";
constexpr const char* kChunks = "chunks.jsonl";
constexpr const char* kClaims = "claims.jsonl";
constexpr const char* kEntities = "entities.jsonl";
constexpr const char* kDatasets = "datasets.jsonl";
constexpr const char* kEvents = "events.jsonl";
constexpr const char* kFeedback = "feedback.jsonl";
constexpr const char* kSynthesis = "synthesis.jsonl";

constexpr double kCiTolerance = 0.005;

struct Line {
    std::size_t line_no;
    json value;
};

Error corrupt_line(const fs::path& file, std::size_t line_no, const std::string& what) {
    return Error(ErrorCode::corrupt, file.filename().string() + ":" + std::to_string(line_no) + ": " + what);
}

/// Reads a record file. Each line must be a JSON object whose `kind` is one of
/// `kinds`. In recovery mode bad lines are dropped and the file is rewritten.
std::vector<Line> read_records(const fs::path& path, std::initializer_list<std::string_view> kinds, bool recover) {
    std::vector<Line> out;
    if (!fs::exists(path)) {
        return out;
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::io, "cannot read " + path.string());
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    const std::string content = buffer.str();

    std::vector<std::string> good_lines;
    bool dropped = false;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < content.size()) {
        ++line_no;
        const auto nl = content.find('\n', pos);
        const bool terminated = nl != std::string::npos;
        const std::string raw = content.substr(pos, terminated ? nl - pos : std::string::npos);
        pos = terminated ? nl + 1 : content.size();
        if (raw.empty() && terminated) {
            continue;
        }
        try {
            if (!terminated) {
                throw std::runtime_error("truncated record (missing line terminator)");
            }
            json value = json::parse(raw);
            if (!value.is_object()) {
                throw std::runtime_error("record is not an object");
            }
            const auto kind = value.value("kind", std::string{});
            if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end()) {
                throw std::runtime_error("unexpected kind '" + kind + "'");
            }
            if (value.value("schema_version", 0) != Store::kSchemaVersion) {
                throw std::runtime_error("unsupported schema_version");
            }
            out.push_back(Line{line_no, std::move(value)});
            good_lines.push_back(raw);
        } catch (const std::exception& e) {
            if (!recover) {
                throw corrupt_line(path, line_no, e.what());
            }
            dropped = true;
        }
    }
    if (dropped) {
        const fs::path tmp = path.string() + ".tmp";
        {
            std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
            for (const auto& l : good_lines) {
                os << l << '\n';
            }
        }
        fs::rename(tmp, path);
    }
    return out;
}

template <class T>
T decode(const fs::path& file, const Line& line, bool recover, bool& ok) {
    try {
        ok = true;
        return line.value.get<T>();
    } catch (const std::exception& e) {
        if (!recover) {
            throw corrupt_line(file, line.line_no, e.what());
        }
        ok = false;
        return T{};
    }
}

json with_header(json body, std::string_view kind, std::int64_t txn) {
    body["kind"] = kind;
    body["schema_version"] = Store::kSchemaVersion;
    if (txn >= 0) {
        body["txn"] = txn;
    }
    return body;
}

std::optional<std::int64_t> commit_txn(const VersionEvent& e) {
    if (e.action != EventAction::commit || e.details.rfind("txn=", 0) != 0) {
        return std::nullopt;
    }
    try {
        return std::stoll(e.details.substr(4));
    } catch (...) {
        return std::nullopt;
    }
}

std::optional<PubRef> superseding_ref(const VersionEvent& e) {
    static constexpr std::string_view prefix = "superseded_by=";
    if (e.action != EventAction::supersede || e.details.rfind(prefix, 0) != 0) {
        return std::nullopt;
    }
    return PubRef::parse(std::string_view(e.details).substr(prefix.size()));
}

}  // namespace

struct Store::Files {
    std::FILE* publications = nullptr;
    std::FILE* chunks = nullptr;
    std::FILE* claims = nullptr;
    std::FILE* entities = nullptr;
    std::FILE* datasets = nullptr;
    std::FILE* events = nullptr;
    std::FILE* feedback = nullptr;
    std::FILE* synthesis = nullptr;

    ~Files() {
        for (auto* f : {publications, chunks, claims, entities, datasets, events, feedback, synthesis}) {
            if (f != nullptr) {
                std::fclose(f);
            }
        }
    }
};

void check_bundle(const PublicationBundle& bundle) {
    const auto& pub = bundle.publication;
    const std::string where = "publication " + pub.pub_id + "@v" + std::to_string(pub.version);
    if (pub.pub_id.empty()) {
        throw invalid_argument("publication: empty pub_id");
    }
    if (pub.version < 1) {
        throw invalid_argument(where + ": version must be >= 1");
    }
    if (trim(pub.title).empty()) {
        throw invalid_argument(where + ": title is empty");
    }
    if (!is_valid_date(pub.date)) {
        throw invalid_argument(where + ": date '" + pub.date + "' is not a valid calendar date");
    }
    const auto& notes = pub.provenance.revision_notes;
    for (std::size_t i = 1; i < notes.size(); ++i) {
        if (notes[i].timestamp < notes[i - 1].timestamp) {
            throw invalid_argument(where + ": revision_notes out of timestamp order");
        }
    }
    if (pub.provenance.review_score && (*pub.provenance.review_score < 1 || *pub.provenance.review_score > 5)) {
        throw invalid_argument(where + ": review_score must be in 1..5");
    }

    std::vector<int> ordinals;
    std::set<std::string> chunk_ids;
    for (const auto& c : bundle.chunks) {
        const std::string cw = "chunk " + c.chunk_id;
        if (c.pub_id != pub.pub_id || c.version != pub.version) {
            throw invalid_argument(cw + ": belongs to a different publication");
        }
        if (trim(c.text).empty()) {
            throw invalid_argument(cw + ": empty text");
        }
        if (c.word_count != static_cast<int>(word_count(c.text))) {
            throw invalid_argument(cw + ": word_count does not match text");
        }
        if (c.chunk_id != make_chunk_id(pub.ref(), c.ordinal)) {
            throw invalid_argument(cw + ": chunk_id does not match <pub_id>#v<version>#c<ordinal>");
        }
        if (!chunk_ids.insert(c.chunk_id).second) {
            throw invalid_argument(cw + ": duplicate chunk");
        }
        ordinals.push_back(c.ordinal);
    }
    std::sort(ordinals.begin(), ordinals.end());
    for (std::size_t i = 0; i < ordinals.size(); ++i) {
        if (ordinals[i] != static_cast<int>(i)) {
            throw invalid_argument(where + ": non-contiguous ordinals");
        }
    }

    for (const auto& claim : bundle.claims) {
        const std::string cw = "claim " + claim.claim_id;
        if (claim.source.pub_id != pub.pub_id || claim.source.version != pub.version) {
            throw invalid_argument(cw + ": source is a different publication");
        }
        if (claim.source.chunk_ids.empty()) {
            throw invalid_argument(cw + ": no source chunks");
        }
        for (const auto& id : claim.source.chunk_ids) {
            if (chunk_ids.count(id) == 0) {
                throw invalid_argument(cw + ": source chunk " + id + " not in publication");
            }
        }
        if (claim.effect) {
            const auto& e = *claim.effect;
            if (!std::isfinite(e.estimate) || !std::isfinite(e.se) || e.se <= 0) {
                throw invalid_argument(cw + ": effect needs finite estimate and se > 0");
            }
            if (e.ci95) {
                const double lo = e.estimate - 1.96 * e.se;
                const double hi = e.estimate + 1.96 * e.se;
                if (std::abs((*e.ci95)[0] - lo) > kCiTolerance || std::abs((*e.ci95)[1] - hi) > kCiTolerance) {
                    throw invalid_argument(cw + ": ci95 inconsistent with estimate +/- 1.96*se");
                }
            }
        }
    }

    for (const auto& d : bundle.datasets) {
        const std::string dw = "dataset " + d.dataset_id;
        if (d.pub_id != pub.pub_id || d.version != pub.version) {
            throw invalid_argument(dw + ": belongs to a different publication");
        }
        for (std::size_t r = 0; r < d.rows.size(); ++r) {
            if (d.rows[r].size() != d.columns.size()) {
                throw invalid_argument(dw + ": row " + std::to_string(r) + " has " +
                                       std::to_string(d.rows[r].size()) + " cells, expected " +
                                       std::to_string(d.columns.size()));
            }
            for (std::size_t c = 0; c < d.columns.size(); ++c) {
                if (d.columns[c].kind == ColumnKind::numeric && !parse_number(d.rows[r][c])) {
                    throw invalid_argument(dw + ": row " + std::to_string(r) + " column '" + d.columns[c].name +
                                           "' is not a finite number");
                }
            }
        }
    }
}

Store::Store(fs::path root, Clock clock) : root_(std::move(root)), clock_(std::move(clock)) {}

Store::~Store() = default;

std::unique_ptr<Store> Store::open(const fs::path& root, StoreOptions options) {
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec || !fs::is_directory(root)) {
        throw Error(ErrorCode::io, "cannot create store directory " + root.string());
    }
    std::unique_ptr<Store> store(new Store(root, std::move(options.clock)));
    store->load(options.recover);

    store->files_ = std::make_unique<Files>();
    auto open_append = [&](const char* name) {
        std::FILE* f = std::fopen((root / name).string().c_str(), "ab");
        if (f == nullptr) {
            throw Error(ErrorCode::io, "cannot open " + (root / name).string() + " for append");
        }
        return f;
    };
    auto& files = *store->files_;
    files.publications = open_append(kPublications);
    files.chunks = open_append(kChunks);
    files.claims = open_append(kClaims);
    files.entities = open_append(kEntities);
    files.datasets = open_append(kDatasets);
    files.events = open_append(kEvents);
    files.feedback = open_append(kFeedback);
    files.synthesis = open_append(kSynthesis);
    return store;
}

void Store::load(bool recover) {
    bool ok = true;
    std::int64_t max_txn = 0;
    auto txn_of = [&](const Line& l) {
        const std::int64_t t = l.value.value("txn", std::int64_t{0});
        max_txn = std::max(max_txn, t);
        return t;
    };

    std::set<std::int64_t> committed;
    const auto event_path = root_ / kEvents;
    std::vector<VersionEvent> supersedes;
    for (const auto& line : read_records(event_path, {"event"}, recover)) {
        auto e = decode<VersionEvent>(event_path, line, recover, ok);
        if (!ok) {
            continue;
        }
        if (last_event_ts_ && e.timestamp < *last_event_ts_) {
            if (!recover) {
                throw corrupt_line(event_path, line.line_no, "event timestamps out of order");
            }
            continue;
        }
        last_event_ts_ = e.timestamp;
        if (auto t = commit_txn(e)) {
            committed.insert(*t);
        }
        if (e.action == EventAction::supersede) {
            supersedes.push_back(e);
        }
        if (e.action == EventAction::query) {
            query_ids_.insert(e.subject_id);
        }
        events_.push_back(std::move(e));
    }

    std::map<PubRef, PublicationBundle> bundles;
    const auto pub_path = root_ / kPublications;
    for (const auto& line : read_records(pub_path, {"publication"}, recover)) {
        const auto txn = txn_of(line);
        auto p = decode<Publication>(pub_path, line, recover, ok);
        if (ok && committed.count(txn) > 0) {
            bundles[p.ref()].publication = std::move(p);
        }
    }
    const auto chunk_path = root_ / kChunks;
    for (const auto& line : read_records(chunk_path, {"chunk"}, recover)) {
        const auto txn = txn_of(line);
        auto c = decode<Chunk>(chunk_path, line, recover, ok);
        if (ok && committed.count(txn) > 0) {
            bundles[PubRef{c.pub_id, c.version}].chunks.push_back(std::move(c));
        }
    }
    const auto claim_path = root_ / kClaims;
    for (const auto& line : read_records(claim_path, {"claim"}, recover)) {
        const auto txn = txn_of(line);
        auto c = decode<ClaimTriple>(claim_path, line, recover, ok);
        if (ok && committed.count(txn) > 0) {
            bundles[c.source.ref()].claims.push_back(std::move(c));
        }
    }
    const auto dataset_path = root_ / kDatasets;
    for (const auto& line : read_records(dataset_path, {"dataset"}, recover)) {
        const auto txn = txn_of(line);
        auto d = decode<DatasetRecord>(dataset_path, line, recover, ok);
        if (ok && committed.count(txn) > 0) {
            bundles[PubRef{d.pub_id, d.version}].datasets.push_back(std::move(d));
        }
    }
    for (auto& [ref, bundle] : bundles) {
        if (bundle.publication.pub_id.empty()) {
            continue;
        }
        apply_committed(bundle);
    }

    const auto entity_path = root_ / kEntities;
    for (const auto& line : read_records(entity_path, {"entity"}, recover)) {
        const auto txn = txn_of(line);
        auto e = decode<Entity>(entity_path, line, recover, ok);
        if (ok && (txn == 0 || committed.count(txn) > 0)) {
            entities_[e.entity_id] = std::move(e);
        }
    }

    const auto synth_path = root_ / kSynthesis;
    for (const auto& line : read_records(synth_path, {"synthesis", "synthesis_deleted"}, recover)) {
        if (line.value.at("kind") == "synthesis_deleted") {
            auto g = decode<GroupKey>(synth_path, Line{line.line_no, line.value.at("group")}, recover, ok);
            if (ok) {
                synthesis_.erase(g);
            }
            continue;
        }
        auto r = decode<SynthesisRecord>(synth_path, line, recover, ok);
        if (ok) {
            synthesis_[r.group] = std::move(r);
        }
    }

    for (const auto& e : supersedes) {
        const auto old_ref = PubRef::parse(e.subject_id);
        const auto new_ref = superseding_ref(e);
        auto it = publications_.find(old_ref);
        if (it == publications_.end() || !new_ref) {
            continue;
        }
        it->second.status = PubStatus::superseded;
        superseded_.insert(old_ref);
        superseded_by_[old_ref] = *new_ref;
    }

    const auto feedback_path = root_ / kFeedback;
    for (const auto& line : read_records(feedback_path, {"feedback"}, recover)) {
        auto f = decode<FeedbackEvent>(feedback_path, line, recover, ok);
        if (ok) {
            last_feedback_ts_ = f.timestamp;
            feedback_.push_back(std::move(f));
        }
    }
    next_txn_ = max_txn + 1;
}

void Store::append_line(std::FILE* file, const json& record) {
    const std::string line = record.dump() + "\n";
    if (std::fwrite(line.data(), 1, line.size(), file) != line.size()) {
        throw Error(ErrorCode::io, "short write to store under " + root_.string());
    }
}

void Store::sync(std::FILE* file) {
    if (std::fflush(file) != 0) {
        throw Error(ErrorCode::io, "flush failed under " + root_.string());
    }
    ::fdatasync(::fileno(file));
}

void Store::apply_committed(const PublicationBundle& bundle) {
    const auto ref = bundle.publication.ref();
    publications_[ref] = bundle.publication;
    auto& members = members_[ref];
    auto chunks = bundle.chunks;
    std::sort(chunks.begin(), chunks.end(), [](const Chunk& a, const Chunk& b) { return a.ordinal < b.ordinal; });
    for (auto& c : chunks) {
        members.chunk_ids.push_back(c.chunk_id);
        chunks_[c.chunk_id] = std::move(c);
    }
    for (const auto& c : bundle.claims) {
        if (claims_.emplace(c.claim_id, c).second) {
            members.claim_ids.push_back(c.claim_id);
        }
    }
    for (const auto& d : bundle.datasets) {
        members.dataset_ids.push_back(d.dataset_id);
        datasets_[d.dataset_id] = d;
    }
}

PendingCommit Store::stage(const PublicationBundle& bundle) {
    check_bundle(bundle);
    const auto ref = bundle.publication.ref();
    if (publications_.count(ref) > 0) {
        throw conflict("duplicate publication " + ref.str());
    }
    const int expected = latest_version(ref.pub_id).value_or(0) + 1;
    if (ref.version != expected) {
        throw invalid_argument("publication " + ref.str() + ": next version must be " + std::to_string(expected));
    }
    for (const auto& d : bundle.datasets) {
        if (datasets_.count(d.dataset_id) > 0) {
            throw conflict("duplicate dataset_id " + d.dataset_id);
        }
    }

    PendingCommit pending{bundle, next_txn_++};
    auto& files = *files_;
    append_line(files.publications, with_header(bundle.publication, "publication", pending.txn));
    for (const auto& c : bundle.chunks) {
        append_line(files.chunks, with_header(c, "chunk", pending.txn));
    }
    std::set<std::string> seen_claims;
    for (const auto& c : bundle.claims) {
        if (seen_claims.insert(c.claim_id).second) {
            append_line(files.claims, with_header(c, "claim", pending.txn));
        }
    }
    for (const auto& d : bundle.datasets) {
        append_line(files.datasets, with_header(d, "dataset", pending.txn));
    }
    for (auto* f : {files.publications, files.chunks, files.claims, files.datasets}) {
        sync(f);
    }
    return pending;
}

PubRef Store::publish(PendingCommit pending, const std::string& actor) {
    const auto ref = pending.bundle.publication.ref();
    append_event(VersionEvent{clock_(), actor, EventAction::commit, ref.str(), "txn=" + std::to_string(pending.txn)});
    apply_committed(pending.bundle);
    return ref;
}

PubRef Store::put_publication(const PublicationBundle& bundle, const std::string& actor) {
    return publish(stage(bundle), actor);
}

PublicationBundle Store::get_publication(const std::string& pub_id, std::optional<int> version) const {
    const auto latest = latest_version(pub_id);
    if (!latest) {
        throw not_found("unknown publication " + pub_id);
    }
    const PubRef ref{pub_id, version.value_or(*latest)};
    const auto it = publications_.find(ref);
    if (it == publications_.end()) {
        throw not_found("unknown version " + ref.str());
    }
    PublicationBundle out;
    out.publication = it->second;
    const auto& members = members_.at(ref);
    for (const auto& id : members.chunk_ids) {
        out.chunks.push_back(chunks_.at(id));
    }
    for (const auto& id : members.claim_ids) {
        out.claims.push_back(claims_.at(id));
    }
    for (const auto& id : members.dataset_ids) {
        out.datasets.push_back(datasets_.at(id));
    }
    return out;
}

const Publication* Store::find_publication(const PubRef& ref) const {
    const auto it = publications_.find(ref);
    return it == publications_.end() ? nullptr : &it->second;
}

std::optional<int> Store::latest_version(const std::string& pub_id) const {
    auto it = publications_.lower_bound(PubRef{pub_id, std::numeric_limits<int>::max()});
    if (it == publications_.begin()) {
        return std::nullopt;
    }
    --it;
    if (it->first.pub_id != pub_id) {
        return std::nullopt;
    }
    return it->first.version;
}

std::vector<PubRef> Store::publication_refs() const {
    std::vector<PubRef> out;
    out.reserve(publications_.size());
    for (const auto& [ref, _] : publications_) {
        out.push_back(ref);
    }
    return out;
}

bool Store::mark_superseded(const PubRef& old_ref, const PubRef& new_ref, const std::string& actor) {
    if (old_ref == new_ref) {
        throw invalid_argument("cannot supersede " + old_ref.str() + " by itself");
    }
    auto it = publications_.find(old_ref);
    if (it == publications_.end()) {
        throw not_found("unknown publication " + old_ref.str());
    }
    if (publications_.count(new_ref) == 0) {
        throw not_found("unknown publication " + new_ref.str());
    }
    if (superseded_.count(old_ref) > 0) {
        return false;
    }
    append_event(VersionEvent{clock_(), actor, EventAction::supersede, old_ref.str(), "superseded_by=" + new_ref.str()});
    it->second.status = PubStatus::superseded;
    superseded_.insert(old_ref);
    superseded_by_[old_ref] = new_ref;
    return true;
}

bool Store::is_superseded(const PubRef& ref) const { return superseded_.count(ref) > 0; }

std::optional<PubRef> Store::superseded_by(const PubRef& ref) const {
    const auto it = superseded_by_.find(ref);
    if (it == superseded_by_.end()) {
        return std::nullopt;
    }
    return it->second;
}

const Chunk* Store::find_chunk(const std::string& chunk_id) const {
    const auto it = chunks_.find(chunk_id);
    return it == chunks_.end() ? nullptr : &it->second;
}

std::vector<const Chunk*> Store::all_chunks() const {
    std::vector<const Chunk*> out;
    out.reserve(chunks_.size());
    for (const auto& [_, c] : chunks_) {
        out.push_back(&c);
    }
    return out;
}

std::vector<ClaimTriple> Store::all_claims() const {
    std::vector<ClaimTriple> out;
    out.reserve(claims_.size());
    for (const auto& [_, c] : claims_) {
        out.push_back(c);
    }
    return out;
}

const DatasetRecord* Store::find_dataset(const std::string& dataset_id) const {
    const auto it = datasets_.find(dataset_id);
    return it == datasets_.end() ? nullptr : &it->second;
}

std::vector<const DatasetRecord*> Store::datasets_of(const PubRef& ref) const {
    std::vector<const DatasetRecord*> out;
    const auto it = members_.find(ref);
    if (it != members_.end()) {
        for (const auto& id : it->second.dataset_ids) {
            out.push_back(&datasets_.at(id));
        }
    }
    return out;
}

void Store::put_entity(const Entity& entity) {
    append_line(files_->entities, with_header(entity, "entity", 0));
    sync(files_->entities);
    entities_[entity.entity_id] = entity;
}

void Store::put_synthesis(const SynthesisRecord& record) {
    append_line(files_->synthesis, with_header(record, "synthesis", -1));
    sync(files_->synthesis);
    synthesis_[record.group] = record;
}

void Store::erase_synthesis(const GroupKey& group) {
    if (synthesis_.erase(group) == 0) {
        return;
    }
    append_line(files_->synthesis, with_header(json{{"group", group}}, "synthesis_deleted", -1));
    sync(files_->synthesis);
}

VersionEvent Store::append_event(VersionEvent event) {
    if (last_event_ts_ && event.timestamp < *last_event_ts_) {
        const auto original = format_timestamp(event.timestamp);
        event.timestamp = *last_event_ts_;
        auto parsed = json::parse(event.details, nullptr, false);
        if (!parsed.is_discarded() && parsed.is_object()) {
            parsed["original_timestamp"] = original;
            event.details = parsed.dump();
        } else {
            event.details += (event.details.empty() ? "" : " ") + std::string("original_timestamp=") + original;
        }
    }
    append_line(files_->events, with_header(event, "event", -1));
    sync(files_->events);
    last_event_ts_ = event.timestamp;
    if (event.action == EventAction::query) {
        query_ids_.insert(event.subject_id);
    }
    events_.push_back(event);
    return event;
}

FeedbackEvent Store::append_feedback(FeedbackEvent event) {
    if (last_feedback_ts_ && event.timestamp < *last_feedback_ts_) {
        event.timestamp = *last_feedback_ts_;
    }
    append_line(files_->feedback, with_header(event, "feedback", -1));
    sync(files_->feedback);
    last_feedback_ts_ = event.timestamp;
    feedback_.push_back(event);
    return event;
}

std::vector<VersionEvent> Store::events_for(const std::string& pub_id) const {
    std::vector<VersionEvent> out;
    const std::string prefix = pub_id + "@v";
    for (const auto& e : events_) {
        if (e.action != EventAction::query && e.action != EventAction::feedback &&
            e.subject_id.rfind(prefix, 0) == 0) {
            out.push_back(e);
        }
    }
    return out;
}

}  // namespace apub
