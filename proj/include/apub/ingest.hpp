#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "apub/providers.hpp"
#include "apub/types.hpp"

namespace apub {

class Graph;
class Store;
class VectorIndex;

enum class SubmissionFormat { ap_json, markdown };

SubmissionFormat parse_format(std::string_view tag);
std::string_view format_tag(SubmissionFormat format);

struct ParsedSection {
    Section label = Section::other;
    std::string heading;
    std::string text;
    bool operator==(const ParsedSection&) const = default;
};

/// One claim line before entity resolution.
struct DraftClaim {
    std::string subject;
    std::string relation;
    std::string object;
    std::optional<Effect> effect;
    Polarity polarity = Polarity::supports;
    /// Exact source line, used to locate the chunk that contains it.
    std::string line;
    bool generated = false;
    /// Ordinal of the source chunk, filled by attribute_claims.
    int chunk_ordinal = 0;
    bool operator==(const DraftClaim&) const = default;
};

struct ParsedDocument {
    /// pub_id is empty unless the payload names one; version is unset.
    Publication metadata;
    std::vector<ParsedSection> sections;
    std::vector<std::string> claims_declared;
    std::vector<DatasetRecord> datasets;
    /// Warn findings from lenient parsing (skipped claim lines and the like).
    std::vector<Finding> findings;
    bool operator==(const ParsedDocument&) const = default;
};

/// Strict mode throws `Error(parse)` on a missing title, an empty body or a
/// malformed claim line. Lenient mode records those as findings and leaves the
/// schema gate to reject what cannot be committed.
ParsedDocument parse_submission(std::string_view payload, SubmissionFormat format, bool strict = true,
                                const Clock& clock = system_clock());

/// `CLAIM: s | r | o [| effect=x] [| se=x] [| ci95=lo,hi] [| polarity=supports|refutes] [| unit=u]`.
/// The `CLAIM:` prefix is optional when `require_prefix` is false.
DraftClaim parse_claim_line(std::string_view line, bool require_prefix = true);
std::string format_claim_line(const DraftClaim& claim);

struct ChunkPolicy {
    enum class SplitLevel { paragraph, sentence };
    int max_words = 200;
    SplitLevel split_level = SplitLevel::paragraph;
};

/// Splits sections into chunks for `ref`. Over-long single sentences are kept
/// whole and reported through `findings`.
std::vector<Chunk> chunk_document(const ParsedDocument& doc, const PubRef& ref, const ChunkPolicy& policy = {},
                                  std::vector<Finding>* findings = nullptr);

/// Declared claims plus, when the composer extracts claims, generated ones.
/// Grammar violations become warn findings and the line is skipped.
std::vector<DraftClaim> extract_claims(const ParsedDocument& doc, const std::vector<Chunk>& chunks,
                                       const Composer* composer, std::vector<Finding>& findings);

/// Picks each claim's source chunk: the chunk containing its line, else one
/// mentioning subject and object, else one mentioning the subject, else the first.
void attribute_claims(std::vector<DraftClaim>& claims, const std::vector<Chunk>& chunks);

// -- validation gates --------------------------------------------------------

std::vector<Finding> check_schema(const ParsedDocument& doc);
std::vector<Finding> check_duplicates(const std::vector<Chunk>& chunks, const std::vector<EmbeddingVector>& vectors,
                                      const VectorIndex& index, double threshold = 0.95);
std::vector<Finding> check_references(const ParsedDocument& doc, const Store& store);
std::vector<Finding> check_statistics(const std::vector<DraftClaim>& claims);
std::vector<Finding> check_contradictions(const std::vector<DraftClaim>& claims, const Graph& graph);

struct GateInputs {
    const ParsedDocument* doc = nullptr;
    const std::vector<Chunk>* chunks = nullptr;
    const std::vector<EmbeddingVector>* vectors = nullptr;
    const std::vector<DraftClaim>* claims = nullptr;
    const Store* store = nullptr;
    const VectorIndex* index = nullptr;
    const Graph* graph = nullptr;
    double duplicate_threshold = 0.95;
};

/// Runs schema, duplicate, reference, statistics and contradiction gates in
/// that order. Later gates are skipped once the schema gate rejects.
ValidationReport validate(const GateInputs& in, std::vector<Finding> extra = {});

/// `ap:` + 12 hex digits of FNV-1a over title and date.
std::string generate_pub_id(const Publication& meta);

}  // namespace apub
