#include "apub/verify.hpp"

#include <algorithm>
#include <cmath>
#include <regex>
#include <set>

namespace apub {

void to_json(json& j, const Citation& c) {
    j = json{{"pub_id", c.pub_id}, {"version", c.version}, {"chunk_id", c.chunk_id}, {"score", c.score}};
}

void to_json(json& j, const Answer& a) {
    j = json{{"query_id", a.query_id},
             {"question", a.question},
             {"zoom", a.zoom},
             {"text", a.text},
             {"citations", a.citations},
             {"confidence", a.confidence},
             {"confidence_score", a.confidence_score},
             {"warnings", a.warnings},
             {"derivation", a.derivation},
             {"data_points", a.data_points ? *a.data_points : json(nullptr)},
             {"refused", a.refused}};
}

void make_refusal(Answer& a) {
    a.text = std::string(kRefusalText);
    a.citations.clear();
    a.confidence = Confidence::low;
    a.confidence_score = confidence_score(Confidence::low);
    a.data_points.reset();
    a.refused = true;
}

std::optional<PubRef> chunk_pub_ref(std::string_view chunk_id) {
    static const std::regex re(R"(^(.+)#v([0-9]+)#c[0-9]+$)");
    std::cmatch m;
    if (!std::regex_match(chunk_id.data(), chunk_id.data() + chunk_id.size(), m, re)) {
        return std::nullopt;
    }
    return PubRef{m[1].str(), std::stoi(m[2].str())};
}

std::vector<VerifyFinding> verify_citations(const std::string& draft,
                                            const std::function<bool(const std::string&)>& is_citable) {
    std::vector<VerifyFinding> out;
    const auto sentences = split_answer_sentences(draft);
    for (std::size_t i = 0; i < sentences.size(); ++i) {
        for (const auto& id : extract_markers(sentences[i])) {
            if (!is_citable(id)) {
                out.push_back({i, VerifyIssue::unknown_citation, "citation [" + id + "] does not resolve to a citable passage"});
            }
        }
    }
    return out;
}

std::vector<VerifyFinding> verify_grounding(const std::string& draft, const std::vector<ContextItem>& context,
                                            const Embedder& embedder, double gamma) {
    std::vector<VerifyFinding> out;
    const auto sentences = split_answer_sentences(draft);
    for (std::size_t i = 0; i < sentences.size(); ++i) {
        const auto markers = extract_markers(sentences[i]);
        if (markers.empty()) {
            out.push_back({i, VerifyIssue::missing_citation, "sentence has no citation"});
            continue;
        }
        const std::string plain = strip_markers(sentences[i]);
        if (tokenize(plain).empty()) {
            out.push_back({i, VerifyIssue::ungrounded, "sentence has no content"});
            continue;
        }
        const auto sv = embedder.embed(plain);
        for (const auto& id : markers) {
            const auto it = std::find_if(context.begin(), context.end(), [&](const ContextItem& c) { return c.chunk_id == id; });
            if (it == context.end()) {
                out.push_back({i, VerifyIssue::out_of_context, "citation [" + id + "] was not among the retrieved passages"});
                break;
            }
            double best = cosine(sv, embedder.embed(it->text));
            for (const auto& s : split_sentences(it->text)) {
                if (best >= gamma) {
                    break;
                }
                if (!tokenize(s).empty()) {
                    best = std::max(best, cosine(sv, embedder.embed(s)));
                }
            }
            if (best < gamma) {
                char buf[64];
                std::snprintf(buf, sizeof(buf), "%.3f", best);
                out.push_back({i, VerifyIssue::ungrounded,
                               "ungrounded sentence: similarity " + std::string(buf) + " to [" + id + "] is below threshold"});
                break;
            }
        }
    }
    return out;
}

std::vector<std::string> synthesis_warnings(const std::vector<GroupNote>& groups) {
    std::vector<std::string> out;
    bool conflict = false;
    for (const auto& g : groups) {
        if (g.record.contradiction_flag) {
            conflict = true;
        }
    }
    if (conflict) {
        out.emplace_back(kConflictWarning);
    }
    for (const auto& g : groups) {
        if (g.record.contradiction_flag || g.record.agreement_ratio >= 1.0) {
            continue;
        }
        const int n = g.record.n_studies;
        const int agreeing = static_cast<int>(std::lround(g.record.agreement_ratio * n));
        const int dissent = n - agreeing;
        out.push_back("Evidence not unanimous for " + g.label + ": " + std::to_string(dissent) + " of " +
                      std::to_string(n) + (n == 1 ? " study" : " studies") + " dissenting.");
    }
    return out;
}

Answer finalize(Answer draft, const std::vector<VerifyFinding>& findings, const std::vector<ContextItem>& context,
                const std::vector<GroupNote>& groups) {
    auto add_warning = [&](const std::string& w) {
        if (std::find(draft.warnings.begin(), draft.warnings.end(), w) == draft.warnings.end()) {
            draft.warnings.push_back(w);
        }
    };
    if (draft.refused) {
        make_refusal(draft);
        return draft;
    }
    std::set<std::size_t> flagged;
    for (const auto& f : findings) {
        flagged.insert(f.sentence);
    }
    const auto sentences = split_answer_sentences(draft.text);
    std::string text;
    std::vector<std::string> used;
    for (std::size_t i = 0; i < sentences.size(); ++i) {
        if (flagged.count(i) > 0) {
            continue;
        }
        text += text.empty() ? sentences[i] : " " + sentences[i];
        for (const auto& id : extract_markers(sentences[i])) {
            if (std::find(used.begin(), used.end(), id) == used.end()) {
                used.push_back(id);
            }
        }
    }
    if (text.empty()) {
        make_refusal(draft);
        add_warning(std::string(kAllFailedWarning));
        return draft;
    }
    draft.text = text;
    std::vector<Citation> citations;
    for (const auto& id : used) {
        const auto ref = chunk_pub_ref(id);
        if (!ref) {
            continue;
        }
        double score = 0;
        for (const auto& c : context) {
            if (c.chunk_id == id) {
                score = c.score;
                break;
            }
        }
        // Keep scores already attached to citations (tool sentences).
        for (const auto& c : draft.citations) {
            if (c.chunk_id == id && score == 0) {
                score = c.score;
            }
        }
        citations.push_back(Citation{ref->pub_id, ref->version, id, score});
    }
    draft.citations = std::move(citations);
    for (const auto& w : synthesis_warnings(groups)) {
        add_warning(w);
    }
    return draft;
}

}  // namespace apub
