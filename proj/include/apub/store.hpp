#pragma once

#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "apub/types.hpp"

namespace apub {

struct StoreOptions {
    /// Skip malformed lines (rewriting the affected files) instead of failing.
    bool recover = false;
    Clock clock = system_clock();
};

/// Records written for a version but not yet made visible. Publishing appends
/// the commit event that marks the transaction complete.
struct PendingCommit {
    PublicationBundle bundle;
    std::int64_t txn = 0;
};

/// Append-only, line-delimited record store.
///
/// Every record line carries `kind`, `schema_version` and (for versioned data)
/// `txn`. A publication's records only become visible once the matching commit
/// event (`details = "txn=<N>"`) is in the event log, so a crash between
/// record writes leaves orphans that are ignored on reopen.
///
/// Not internally synchronized: const members may run concurrently with each
/// other, mutations need external exclusion (the Engine's writer lock).
class Store {
public:
    static constexpr int kSchemaVersion = 1;

    static std::unique_ptr<Store> open(const std::filesystem::path& root, StoreOptions options = {});

    Store(const Store&) = delete;
    Store& operator=(const Store&) = delete;
    ~Store();

    const std::filesystem::path& root() const { return root_; }

    // -- publications -------------------------------------------------------

    PubRef put_publication(const PublicationBundle& bundle, const std::string& actor = "system");

    /// Validates the bundle and durably writes its records without publishing.
    PendingCommit stage(const PublicationBundle& bundle);
    /// Appends the commit event and makes the staged version readable.
    PubRef publish(PendingCommit pending, const std::string& actor);

    /// Latest version when `version` is omitted.
    PublicationBundle get_publication(const std::string& pub_id, std::optional<int> version = std::nullopt) const;
    const Publication* find_publication(const PubRef& ref) const;
    std::optional<int> latest_version(const std::string& pub_id) const;
    std::vector<PubRef> publication_refs() const;

    /// Returns false (and logs nothing) when `old_ref` is already superseded.
    bool mark_superseded(const PubRef& old_ref, const PubRef& new_ref, const std::string& actor);
    bool is_superseded(const PubRef& ref) const;
    std::optional<PubRef> superseded_by(const PubRef& ref) const;
    const std::set<PubRef>& superseded() const { return superseded_; }

    // -- chunks, claims, datasets -------------------------------------------

    const Chunk* find_chunk(const std::string& chunk_id) const;
    std::vector<const Chunk*> all_chunks() const;
    std::vector<ClaimTriple> all_claims() const;
    const DatasetRecord* find_dataset(const std::string& dataset_id) const;
    std::vector<const DatasetRecord*> datasets_of(const PubRef& ref) const;

    // -- entities ------------------------------------------------------------

    void put_entity(const Entity& entity);
    const std::map<std::string, Entity>& entities() const { return entities_; }

    // -- synthesis -----------------------------------------------------------

    void put_synthesis(const SynthesisRecord& record);
    void erase_synthesis(const GroupKey& group);
    const std::map<GroupKey, SynthesisRecord>& synthesis() const { return synthesis_; }

    // -- events --------------------------------------------------------------

    /// Timestamps earlier than the last logged one are clamped; the original is
    /// kept in `details`. Returns the event as stored.
    VersionEvent append_event(VersionEvent event);
    FeedbackEvent append_feedback(FeedbackEvent event);
    const std::vector<VersionEvent>& events() const { return events_; }
    const std::vector<FeedbackEvent>& feedback() const { return feedback_; }
    std::vector<VersionEvent> events_for(const std::string& pub_id) const;
    bool has_query(const std::string& query_id) const { return query_ids_.count(query_id) > 0; }

    Timestamp now() const { return clock_(); }

private:
    struct Files;

    Store(std::filesystem::path root, Clock clock);
    void load(bool recover);
    void append_line(std::FILE* file, const json& record);
    void sync(std::FILE* file);
    void apply_committed(const PublicationBundle& bundle);
    VersionEvent append_event_locked(VersionEvent event);

    std::filesystem::path root_;
    Clock clock_;
    std::unique_ptr<Files> files_;
    std::int64_t next_txn_ = 1;

    std::map<PubRef, Publication> publications_;
    struct Members {
        std::vector<std::string> chunk_ids;
        std::vector<std::string> claim_ids;
        std::vector<std::string> dataset_ids;
    };
    std::map<PubRef, Members> members_;
    std::map<std::string, Chunk> chunks_;
    std::map<std::string, ClaimTriple> claims_;
    std::map<std::string, DatasetRecord> datasets_;
    std::map<std::string, Entity> entities_;
    std::map<GroupKey, SynthesisRecord> synthesis_;
    std::vector<VersionEvent> events_;
    std::vector<FeedbackEvent> feedback_;
    std::set<PubRef> superseded_;
    std::map<PubRef, PubRef> superseded_by_;
    std::set<std::string> query_ids_;
    std::optional<Timestamp> last_event_ts_;
    std::optional<Timestamp> last_feedback_ts_;
};

/// Checks every record-level invariant of a bundle; throws `invalid_argument`
/// naming the offending record.
void check_bundle(const PublicationBundle& bundle);

}  // namespace apub
