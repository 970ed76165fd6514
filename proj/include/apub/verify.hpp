#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "apub/providers.hpp"
#include "apub/types.hpp"

namespace apub {

inline constexpr std::string_view kRefusalText = "The evidence available to this publication is inconclusive for this question.";
inline constexpr std::string_view kConflictWarning = "Conflicting evidence present";
inline constexpr std::string_view kAllFailedWarning = "all generated content failed verification";
inline constexpr std::string_view kBackendWarning = "composition backend unavailable";

struct Citation {
    std::string pub_id;
    int version = 1;
    std::string chunk_id;
    double score = 0;
    bool operator==(const Citation&) const = default;
};

struct Answer {
    std::string query_id;
    std::string question;
    Zoom zoom = Zoom::abstract;
    std::string text;
    std::vector<Citation> citations;
    Confidence confidence = Confidence::low;
    double confidence_score = 0.25;
    std::vector<std::string> warnings;
    std::string derivation;
    std::optional<json> data_points;
    bool refused = false;
    bool operator==(const Answer&) const = default;
};

void to_json(json& j, const Citation& c);
void to_json(json& j, const Answer& a);

/// Turns `a` into the refusal shape: template text, no citations, low confidence.
void make_refusal(Answer& a);

enum class VerifyIssue { unknown_citation, missing_citation, ungrounded, out_of_context };

struct VerifyFinding {
    std::size_t sentence = 0;
    VerifyIssue issue = VerifyIssue::ungrounded;
    std::string message;
    bool operator==(const VerifyFinding&) const = default;
};

/// One finding per marker whose chunk `is_citable` rejects.
std::vector<VerifyFinding> verify_citations(const std::string& draft,
                                            const std::function<bool(const std::string&)>& is_citable);

/// A sentence is grounded when each of its markers names a context chunk
/// that it resembles: the larger of its cosine with the whole chunk and with
/// the chunk's closest sentence must reach `gamma`. Sentences without
/// markers are always findings.
std::vector<VerifyFinding> verify_grounding(const std::string& draft, const std::vector<ContextItem>& context,
                                            const Embedder& embedder, double gamma = 0.55);

/// Synthesis state of a group touched by the answer, with a readable label.
struct GroupNote {
    std::string label;
    SynthesisRecord record;
};

/// Drops flagged sentences, rebuilds citations from the surviving markers
/// (scores from `context`) and adds conflict/dissent warnings.
Answer finalize(Answer draft, const std::vector<VerifyFinding>& findings, const std::vector<ContextItem>& context,
                const std::vector<GroupNote>& groups = {});

/// Warnings implied by synthesis records: conflict when flagged, otherwise a
/// dissent note when agreement is below 1.
std::vector<std::string> synthesis_warnings(const std::vector<GroupNote>& groups);

/// `<pub_id>#v<N>#c<M>` split into its publication reference.
std::optional<PubRef> chunk_pub_ref(std::string_view chunk_id);

}  // namespace apub
