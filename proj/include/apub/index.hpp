#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "apub/providers.hpp"

namespace apub {

struct IndexEntry {
    std::string chunk_id;
    EmbeddingVector vector;
    std::string pub_id;
    int version = 1;
    bool superseded = false;
};

struct SearchFilter {
    bool include_superseded = false;
    std::optional<std::set<std::string>> pub_ids;
};

struct SearchHit {
    std::string chunk_id;
    double score = 0;
    bool operator==(const SearchHit&) const = default;
};

/// Exact cosine search by full scan. Results are ordered by score descending,
/// then chunk_id ascending.
class VectorIndex {
public:
    explicit VectorIndex(std::size_t dimension = kDefaultDimension);

    VectorIndex(const VectorIndex&) = delete;
    VectorIndex& operator=(const VectorIndex&) = delete;
    VectorIndex(VectorIndex&& other) noexcept;
    VectorIndex& operator=(VectorIndex&& other) noexcept;

    std::size_t dimension() const { return dimension_; }
    std::size_t size() const;

    void upsert(IndexEntry entry);
    std::vector<SearchHit> search(const EmbeddingVector& query, std::size_t k, const SearchFilter& filter = {}) const;
    std::size_t remove_publication(const std::string& pub_id, int version);
    /// Returns the number of entries whose flag changed.
    std::size_t set_superseded(const std::string& pub_id, int version, bool superseded);
    std::optional<IndexEntry> get(const std::string& chunk_id) const;

    /// Binary snapshot: "APIX" magic, u32 format version, u32 dimension,
    /// u64 count, the id table, then count*dimension little-endian float32.
    void save_snapshot(const std::filesystem::path& path) const;
    static VectorIndex load_snapshot(const std::filesystem::path& path);

private:
    mutable std::shared_mutex mutex_;
    std::size_t dimension_;
    std::vector<IndexEntry> entries_;
    std::unordered_map<std::string, std::size_t> position_;
};

}  // namespace apub
