#pragma once

#include <optional>
#include <string>
#include <vector>

#include "apub/graph.hpp"
#include "apub/index.hpp"
#include "apub/providers.hpp"
#include "apub/store.hpp"
#include "apub/synth.hpp"
#include "apub/verify.hpp"

namespace apub {

struct QueryOptions {
    std::size_t k = 8;
    double tau_refuse = 0.25;
    double gamma = 0.55;
};

/// Read-only view of the engine's state for one query.
struct QueryContext {
    const Store& store;
    const VectorIndex& index;
    const Graph& graph;
    const Embedder& embedder;
    const Composer& composer;
    QueryOptions options;
};

struct RetrievedChunk {
    Chunk chunk;
    double score = 0;
};

/// Top-k non-superseded chunks for the question.
std::vector<RetrievedChunk> retrieve(const QueryContext& ctx, const std::string& question, std::optional<std::size_t> k = {});

/// Composes, verifies and annotates an answer. Does not log anything.
Answer answer(const QueryContext& ctx, const std::string& question, Zoom zoom, const std::string& query_id = "");

/// "This answer is based on N passages from M publications dated A–B." plus
/// an optional sentence counting flagged cited publications.
std::string build_derivation(const std::vector<Citation>& citations, const Store& store);

/// Fact groups whose subject and object entities are both named in the question.
std::vector<GroupKey> match_fact_groups(const std::string& question, const Graph& graph);

struct CalculatorQuery {
    std::string subject;
    std::string object;
};

/// Matches "average effect of X on Y" / "pooled effect of X on Y".
std::optional<CalculatorQuery> match_calculator(const std::string& question);

struct ColumnStats {
    std::string name;
    ColumnKind kind = ColumnKind::text;
    std::size_t count = 0;
    std::optional<double> mean;
    std::optional<double> min;
    std::optional<double> max;
};

std::vector<ColumnStats> dataset_stats(const Store& store, const std::string& dataset_id);
std::vector<ColumnStats> dataset_stats(const DatasetRecord& dataset);

/// Markdown rendering of a stored publication that parses back as markdown.
std::string export_manuscript(const Store& store, const Graph& graph, const std::string& pub_id,
                              std::optional<int> version = std::nullopt);

/// "subject relation object" with display names.
std::string group_label(const GroupKey& group, const Graph& graph);

/// Grammar line for a stored claim, using display names.
std::string claim_line(const ClaimTriple& claim, const Graph& graph);

}  // namespace apub
