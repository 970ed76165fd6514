#include "apub/providers.hpp"

#include <algorithm>
#include <cmath>
#include <regex>
#include <set>

namespace apub {

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dimension() != b.dimension()) {
        throw invalid_argument("dimension mismatch: " + std::to_string(a.dimension()) + " vs " +
                               std::to_string(b.dimension()));
    }
    double dot = 0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        dot += static_cast<double>(a.values[i]) * static_cast<double>(b.values[i]);
    }
    return dot;
}

EmbeddingVector Embedder::embed(std::string_view text) const {
    return embed_texts({std::string(text)}).front();
}

HashEmbedder::HashEmbedder(std::size_t dimension) : dimension_(dimension) {
    if (dimension == 0) {
        throw invalid_argument("embedding dimension must be positive");
    }
}

std::vector<EmbeddingVector> HashEmbedder::embed_texts(const std::vector<std::string>& texts) const {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    std::vector<double> acc(dimension_);
    for (const auto& text : texts) {
        std::fill(acc.begin(), acc.end(), 0.0);
        const auto tokens = tokenize(text);
        for (const auto& tok : tokens) {
            const std::uint64_t h = fnv1a64(tok);
            const double sign = (h >> 63) == 0 ? 1.0 : -1.0;
            acc[h % dimension_] += sign;
        }
        double norm = 0;
        for (const double v : acc) {
            norm += v * v;
        }
        // All tokens can cancel out in the signed buckets; that text is as
        // unembeddable as an empty one.
        if (tokens.empty() || norm == 0) {
            throw invalid_argument("unembeddable text");
        }
        norm = std::sqrt(norm);
        EmbeddingVector vec;
        vec.values.resize(dimension_);
        for (std::size_t i = 0; i < dimension_; ++i) {
            vec.values[i] = static_cast<float>(acc[i] / norm);
        }
        out.push_back(std::move(vec));
    }
    return out;
}

ZoomBudget budget_for(Zoom zoom) {
    switch (zoom) {
        case Zoom::headline:
            return {25, 1};
        case Zoom::abstract:
            return {150, 1 << 20};
        case Zoom::detailed:
        case Zoom::data:
            return {400, 1 << 20};
    }
    return {150, 1 << 20};
}

namespace {

const std::regex& marker_regex() {
    static const std::regex re(R"(\[([^\[\]\s]+#v[0-9]+#c[0-9]+)\])");
    return re;
}

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
    if (a.empty() && b.empty()) {
        return 0;
    }
    std::size_t inter = 0;
    for (const auto& t : a) {
        inter += b.count(t);
    }
    return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

std::set<std::string> token_set(std::string_view text) {
    const auto tokens = tokenize(text);
    return {tokens.begin(), tokens.end()};
}

/// Keeps the first `max_words - 1` words so the sentence plus its marker fits.
std::string truncate_to_budget(const std::string& sentence, int max_words) {
    const auto words = split_whitespace(sentence);
    const auto keep = static_cast<std::size_t>(std::max(1, max_words - 1));
    if (words.size() <= keep) {
        return sentence;
    }
    std::string out;
    for (std::size_t i = 0; i < keep; ++i) {
        if (i > 0) {
            out.push_back(' ');
        }
        out += words[i];
    }
    // A kept word may end in a delimiter; the ellipsis keeps it non-terminal.
    return out + "\xE2\x80\xA6";
}

struct Candidate {
    std::string text;
    std::string chunk_id;
    std::size_t ordinal;
    double score;
};

}  // namespace

std::string ExtractiveComposer::compose_answer(const CompositionRequest& req) const {
    if (req.context.empty()) {
        throw invalid_argument("composition needs a non-empty context");
    }
    const auto budget = budget_for(req.zoom);
    const auto question = token_set(req.question);

    std::vector<Candidate> candidates;
    for (const auto& item : req.context) {
        const auto sentences = split_sentences(item.text);
        for (std::size_t i = 0; i < sentences.size(); ++i) {
            const double score = item.score * jaccard(token_set(sentences[i]), question);
            if (score > 0) {
                candidates.push_back(Candidate{sentences[i], item.chunk_id, i, score});
            }
        }
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        if (a.score != b.score) {
            return a.score > b.score;
        }
        if (a.chunk_id != b.chunk_id) {
            return a.chunk_id < b.chunk_id;
        }
        return a.ordinal < b.ordinal;
    });

    std::vector<std::pair<std::string, std::string>> picked;
    std::set<std::string> seen;
    int used = 0;
    for (const auto& c : candidates) {
        if (static_cast<int>(picked.size()) >= budget.max_sentences) {
            break;
        }
        const int cost = static_cast<int>(word_count(c.text)) + 1;
        if (used + cost > budget.max_words || seen.count(c.text) > 0) {
            continue;
        }
        used += cost;
        seen.insert(c.text);
        picked.emplace_back(c.text, c.chunk_id);
    }

    if (picked.empty()) {
        if (!candidates.empty()) {
            const auto& best = candidates.front();
            picked.emplace_back(truncate_to_budget(best.text, budget.max_words), best.chunk_id);
        } else {
            // No lexical overlap at all: fall back to the opening sentence of
            // the best-scored chunk.
            const auto top = std::min_element(req.context.begin(), req.context.end(),
                                              [](const ContextItem& a, const ContextItem& b) {
                                                  if (a.score != b.score) {
                                                      return a.score > b.score;
                                                  }
                                                  return a.chunk_id < b.chunk_id;
                                              });
            const auto sentences = split_sentences(top->text);
            if (!sentences.empty()) {
                picked.emplace_back(truncate_to_budget(sentences.front(), budget.max_words), top->chunk_id);
            }
        }
    }

    std::string out;
    for (const auto& [text, chunk_id] : picked) {
        if (!out.empty()) {
            out.push_back(' ');
        }
        out += text + " " + citation_marker(chunk_id);
    }
    return out;
}

std::string citation_marker(std::string_view chunk_id) { return "[" + std::string(chunk_id) + "]"; }

std::vector<std::string> extract_markers(std::string_view text) {
    std::vector<std::string> ids;
    const std::string s(text);
    for (auto it = std::sregex_iterator(s.begin(), s.end(), marker_regex()); it != std::sregex_iterator(); ++it) {
        ids.push_back((*it)[1].str());
    }
    return ids;
}

std::string strip_markers(std::string_view text) {
    return collapse_whitespace(std::regex_replace(std::string(text), marker_regex(), " "));
}

std::vector<std::string> split_answer_sentences(std::string_view text) {
    std::vector<std::string> out;
    for (auto piece : split_sentences(text)) {
        std::smatch m;
        while (!out.empty() && std::regex_search(piece, m, marker_regex(), std::regex_constants::match_continuous)) {
            out.back() += " " + m[0].str();
            piece = trim(piece.substr(m[0].length()));
        }
        if (!piece.empty()) {
            out.push_back(std::move(piece));
        }
    }
    return out;
}

}  // namespace apub
