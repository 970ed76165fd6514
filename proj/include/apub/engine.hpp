#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "apub/graph.hpp"
#include "apub/index.hpp"
#include "apub/ingest.hpp"
#include "apub/providers.hpp"
#include "apub/query.hpp"
#include "apub/store.hpp"
#include "apub/synth.hpp"
#include "apub/verify.hpp"

namespace apub {

struct EngineOptions {
    std::filesystem::path store_path;
    bool recover = false;
    QueryOptions query;
    ChunkPolicy chunk_policy;
    double duplicate_threshold = 0.95;
    ConfidenceRules rules;
    /// Controlled relation tokens; claims outside it get a warn finding. Empty = open.
    std::vector<std::string> relation_vocabulary;
    /// Reuse `<store>/index.bin` when it matches the store; otherwise re-embed.
    bool use_index_snapshot = true;
};

struct EngineDeps {
    Clock clock = system_clock();
    /// Produces query ids. Defaults to random 16-hex-digit ids.
    std::function<std::string()> next_id;
    std::shared_ptr<const Embedder> embedder;
    std::shared_ptr<const Composer> composer;
};

/// Hooks for fault-injection tests; each fires between two commit stages.
enum class CommitStage { staged, indexed, graphed };

struct SubmitResult {
    ValidationReport report;
    std::optional<PubRef> ref;
};

struct AskResult {
    Answer detail;
    Answer headline;
};

struct DigestEntry {
    std::string pub_id;
    std::string title;
    int queries = 0;
    std::vector<std::string> sample_questions;
};

struct FlaggedQuery {
    std::string query_id;
    std::string question;
    std::string reason;
};

struct FeedbackDigest {
    Timestamp since;
    int query_count = 0;
    int refused_count = 0;
    int up_votes = 0;
    int down_votes = 0;
    std::vector<DigestEntry> themes;
    std::vector<FlaggedQuery> flagged;

    double refusal_rate() const { return query_count == 0 ? 0.0 : static_cast<double>(refused_count) / query_count; }
};

std::string render_digest(const FeedbackDigest& digest);

/// The publication engine: one writer at a time, any number of readers.
///
/// Commit and supersede hold the state lock exclusively for the short apply
/// phase; answers hold it shared for their whole run, so a reader sees either
/// all of a commit or none of it. The event log has its own mutex so query
/// logging does not block on writers.
class Engine {
public:
    static std::unique_ptr<Engine> open(EngineOptions options, EngineDeps deps);
    ~Engine();

    Engine(const Engine&) = delete;
    Engine& operator=(const Engine&) = delete;

    // -- writes ---------------------------------------------------------------

    SubmitResult submit(std::string_view payload, SubmissionFormat format, const std::string& actor);
    /// Returns false when `old_ref` was already superseded.
    bool supersede(const PubRef& old_ref, const PubRef& new_ref, const std::string& actor);
    void add_alias(const std::string& canonical, const std::string& alias);
    void record_feedback(const std::string& query_id, Rating rating, std::optional<std::string> reason);

    // -- reads ----------------------------------------------------------------

    /// Answers at `zoom` and logs one query event.
    Answer answer(const std::string& question, Zoom zoom, const std::string& actor = "user");
    /// Answers at `zoom` and at headline under one query id; logs one event.
    AskResult ask(const std::string& question, Zoom zoom, const std::string& actor = "user");
    /// Logs a query event for an answer served from a cache.
    void log_query(const Answer& a, const std::string& actor, bool cached);
    std::string new_query_id();

    FactQueryResult facts(const FactPattern& pattern, bool include_superseded = false) const;
    std::vector<Contradiction> contradictions(const std::string& subject, const std::string& relation) const;
    std::vector<RetrievedChunk> retrieve(const std::string& question, std::optional<std::size_t> k = {}) const;

    PublicationBundle publication(const std::string& pub_id, std::optional<int> version = std::nullopt) const;
    PubStatus effective_status(const PubRef& ref) const;
    std::optional<PubRef> superseded_by(const PubRef& ref) const;
    std::vector<VersionEvent> events_for(const std::string& pub_id) const;
    std::optional<DatasetRecord> dataset(const std::string& dataset_id) const;
    bool is_superseded(const PubRef& ref) const;
    std::vector<ColumnStats> dataset_stats(const std::string& dataset_id) const;
    std::string export_manuscript(const std::string& pub_id, std::optional<int> version = std::nullopt) const;
    std::vector<ClaimTriple> claims() const;
    std::string claim_line(const ClaimTriple& claim) const;
    FeedbackDigest digest(Timestamp since) const;
    std::vector<VersionEvent> events() const;
    std::vector<FeedbackEvent> feedback() const;
    std::optional<SynthesisRecord> synthesis(const GroupKey& group) const;

    /// Bumped by every successful commit and supersede.
    std::uint64_t generation() const { return generation_.load(); }

    void save_index_snapshot() const;

    const EngineOptions& options() const { return options_; }
    Timestamp now() const { return deps_.clock(); }

    /// Test access to the underlying components; callers must not race writers.
    const Store& store() const { return *store_; }
    const Graph& graph() const { return graph_; }
    const VectorIndex& index() const { return index_; }
    const Embedder& embedder() const { return *deps_.embedder; }

    void set_fault(std::function<void(CommitStage)> hook) { fault_ = std::move(hook); }

private:
    Engine(EngineOptions options, EngineDeps deps);
    void rebuild();
    QueryContext context() const;
    Answer answer_locked(const std::string& question, Zoom zoom, const std::string& query_id) const;
    std::string graph_label(const GroupKey& group) const;

    EngineOptions options_;
    EngineDeps deps_;
    std::unique_ptr<Store> store_;
    Graph graph_;
    VectorIndex index_;

    std::mutex writer_mutex_;
    mutable std::shared_mutex state_mutex_;
    mutable std::mutex log_mutex_;
    std::atomic<std::uint64_t> generation_{0};
    std::function<void(CommitStage)> fault_;
};

}  // namespace apub
