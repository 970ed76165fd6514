#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "apub/types.hpp"

namespace apub {

constexpr std::size_t kDefaultDimension = 256;

struct EmbeddingVector {
    std::vector<float> values;

    std::size_t dimension() const { return values.size(); }
    bool operator==(const EmbeddingVector&) const = default;
};

/// Dot product accumulated in double. Equals cosine for unit vectors.
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::size_t dimension() const = 0;
    /// Throws `invalid_argument("unembeddable text")` for text without tokens.
    virtual std::vector<EmbeddingVector> embed_texts(const std::vector<std::string>& texts) const = 0;

    EmbeddingVector embed(std::string_view text) const;
};

/// Signed feature hashing: every token's FNV-1a 64 hash picks bucket `h mod d`
/// and contributes +1 (bit 63 clear) or -1 (bit 63 set); the sum is
/// L2-normalized.
class HashEmbedder final : public Embedder {
public:
    explicit HashEmbedder(std::size_t dimension = kDefaultDimension);

    std::size_t dimension() const override { return dimension_; }
    std::vector<EmbeddingVector> embed_texts(const std::vector<std::string>& texts) const override;

private:
    std::size_t dimension_;
};

// ---------------------------------------------------------------------------
// Composition
// ---------------------------------------------------------------------------

struct ContextItem {
    std::string chunk_id;
    std::string text;
    double score = 0;
};

struct CompositionRequest {
    std::string question;
    std::vector<ContextItem> context;
    Zoom zoom = Zoom::abstract;
    std::optional<std::string> style_hints;
};

/// Word and sentence limits per zoom level. Citation markers count as words.
struct ZoomBudget {
    int max_words;
    int max_sentences;
};

ZoomBudget budget_for(Zoom zoom);

class Composer {
public:
    virtual ~Composer() = default;
    virtual std::string compose_answer(const CompositionRequest& req) const = 0;
    /// Claim lines (`subject | relation | object ...`) found in `text`, or
    /// nullopt when the backend does not extract claims.
    virtual std::optional<std::vector<std::string>> list_claims(std::string_view text) const {
        (void)text;
        return std::nullopt;
    }
    virtual std::string model_name() const { return {}; }
};

/// Extractive reference composer: ranks context sentences by
/// `chunk score * jaccard(sentence tokens, question tokens)` and emits the best
/// ones within the zoom budget, each followed by its `[chunk_id]` marker.
class ExtractiveComposer final : public Composer {
public:
    std::string compose_answer(const CompositionRequest& req) const override;
};

// ---------------------------------------------------------------------------
// Citation markers
// ---------------------------------------------------------------------------

std::string citation_marker(std::string_view chunk_id);

/// Chunk ids of every `[<pub>#v<N>#c<M>]` marker in `text`, in order.
std::vector<std::string> extract_markers(std::string_view text);

/// `text` with all markers removed and whitespace collapsed.
std::string strip_markers(std::string_view text);

/// Sentence split that keeps trailing markers with the sentence they follow.
std::vector<std::string> split_answer_sentences(std::string_view text);

// ---------------------------------------------------------------------------
// Remote backend
// ---------------------------------------------------------------------------

struct RemoteConfig {
    std::string base_url;
    std::string model_name;
    std::string api_key;
    double timeout_s = 30.0;
    int max_retries = 3;
    double backoff_initial_s = 1.0;
    std::size_t dimension = kDefaultDimension;
    std::size_t max_in_flight = 8;
    /// Placeholders: {question} {context} {zoom} {max_words}. Empty = built-in.
    std::string prompt_template;
    std::function<void(const std::string&)> log;
};

/// HTTP JSON provider. Embeddings: POST <base>/embed {model, input} ->
/// {vectors}. Composition: POST <base>/compose {model, prompt, max_tokens} ->
/// {text}. Failures throw `Error(ErrorCode::provider)`.
class RemoteProvider final : public Embedder, public Composer {
public:
    explicit RemoteProvider(RemoteConfig config);
    ~RemoteProvider() override;

    std::size_t dimension() const override { return config_.dimension; }
    std::vector<EmbeddingVector> embed_texts(const std::vector<std::string>& texts) const override;
    std::string compose_answer(const CompositionRequest& req) const override;
    std::optional<std::vector<std::string>> list_claims(std::string_view text) const override;
    std::string model_name() const override { return config_.model_name; }

    std::string render_prompt(const CompositionRequest& req) const;

private:
    struct Impl;
    json post(const std::string& path, const json& body) const;

    RemoteConfig config_;
    std::unique_ptr<Impl> impl_;
};

std::string default_prompt_template();

}  // namespace apub
