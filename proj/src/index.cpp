#include "apub/index.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <mutex>

namespace apub {

namespace {

constexpr char kMagic[4] = {'A', 'P', 'I', 'X'};
constexpr std::uint32_t kFormatVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
}

void put_str(std::string& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out += s;
}

class Reader {
public:
    explicit Reader(std::string data) : data_(std::move(data)) {}

    std::uint64_t uint(int bytes) {
        need(static_cast<std::size_t>(bytes));
        std::uint64_t v = 0;
        for (int i = 0; i < bytes; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        }
        pos_ += static_cast<std::size_t>(bytes);
        return v;
    }

    std::string str() {
        const auto n = static_cast<std::size_t>(uint(4));
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    std::string raw(std::size_t n) {
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == data_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > data_.size()) {
            throw Error(ErrorCode::corrupt, "index snapshot truncated");
        }
    }

    std::string data_;
    std::size_t pos_ = 0;
};

bool hit_before(const SearchHit& a, const SearchHit& b) {
    if (a.score != b.score) {
        return a.score > b.score;
    }
    return a.chunk_id < b.chunk_id;
}

}  // namespace

VectorIndex::VectorIndex(std::size_t dimension) : dimension_(dimension) {
    if (dimension == 0) {
        throw invalid_argument("index dimension must be positive");
    }
}

VectorIndex::VectorIndex(VectorIndex&& other) noexcept
    : dimension_(other.dimension_), entries_(std::move(other.entries_)), position_(std::move(other.position_)) {}

VectorIndex& VectorIndex::operator=(VectorIndex&& other) noexcept {
    if (this != &other) {
        std::scoped_lock lock(mutex_, other.mutex_);
        dimension_ = other.dimension_;
        entries_ = std::move(other.entries_);
        position_ = std::move(other.position_);
    }
    return *this;
}

std::size_t VectorIndex::size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
}

void VectorIndex::upsert(IndexEntry entry) {
    if (entry.vector.dimension() != dimension_) {
        throw invalid_argument("dimension mismatch: index d=" + std::to_string(dimension_) + ", entry d=" +
                               std::to_string(entry.vector.dimension()));
    }
    std::unique_lock lock(mutex_);
    const auto it = position_.find(entry.chunk_id);
    if (it != position_.end()) {
        entries_[it->second] = std::move(entry);
        return;
    }
    position_.emplace(entry.chunk_id, entries_.size());
    entries_.push_back(std::move(entry));
}

std::vector<SearchHit> VectorIndex::search(const EmbeddingVector& query, std::size_t k,
                                           const SearchFilter& filter) const {
    if (k == 0) {
        throw invalid_argument("k must be >= 1");
    }
    if (query.dimension() != dimension_) {
        throw invalid_argument("dimension mismatch: index d=" + std::to_string(dimension_) + ", query d=" +
                               std::to_string(query.dimension()));
    }
    std::shared_lock lock(mutex_);
    std::vector<SearchHit> hits;
    hits.reserve(entries_.size());
    for (const auto& e : entries_) {
        if (e.superseded && !filter.include_superseded) {
            continue;
        }
        if (filter.pub_ids && filter.pub_ids->count(e.pub_id) == 0) {
            continue;
        }
        hits.push_back(SearchHit{e.chunk_id, cosine(query, e.vector)});
    }
    const std::size_t n = std::min(k, hits.size());
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(n), hits.end(), hit_before);
    hits.resize(n);
    return hits;
}

std::size_t VectorIndex::remove_publication(const std::string& pub_id, int version) {
    std::unique_lock lock(mutex_);
    const auto before = entries_.size();
    std::erase_if(entries_, [&](const IndexEntry& e) { return e.pub_id == pub_id && e.version == version; });
    const auto removed = before - entries_.size();
    if (removed > 0) {
        position_.clear();
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            position_.emplace(entries_[i].chunk_id, i);
        }
    }
    return removed;
}

std::size_t VectorIndex::set_superseded(const std::string& pub_id, int version, bool superseded) {
    std::unique_lock lock(mutex_);
    std::size_t changed = 0;
    for (auto& e : entries_) {
        if (e.pub_id == pub_id && e.version == version && e.superseded != superseded) {
            e.superseded = superseded;
            ++changed;
        }
    }
    return changed;
}

std::optional<IndexEntry> VectorIndex::get(const std::string& chunk_id) const {
    std::shared_lock lock(mutex_);
    const auto it = position_.find(chunk_id);
    if (it == position_.end()) {
        return std::nullopt;
    }
    return entries_[it->second];
}

void VectorIndex::save_snapshot(const std::filesystem::path& path) const {
    std::shared_lock lock(mutex_);
    std::string out(kMagic, sizeof(kMagic));
    put_u32(out, kFormatVersion);
    put_u32(out, static_cast<std::uint32_t>(dimension_));
    put_u64(out, entries_.size());
    for (const auto& e : entries_) {
        put_str(out, e.chunk_id);
        put_str(out, e.pub_id);
        put_u32(out, static_cast<std::uint32_t>(e.version));
        out.push_back(e.superseded ? 1 : 0);
    }
    for (const auto& e : entries_) {
        for (const float f : e.vector.values) {
            put_u32(out, std::bit_cast<std::uint32_t>(f));
        }
    }
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        os.write(out.data(), static_cast<std::streamsize>(out.size()));
        if (!os) {
            throw Error(ErrorCode::io, "cannot write index snapshot " + tmp);
        }
    }
    std::filesystem::rename(tmp, path);
}

VectorIndex VectorIndex::load_snapshot(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::io, "cannot read index snapshot " + path.string());
    }
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Reader r(std::move(data));
    if (r.raw(4) != std::string(kMagic, sizeof(kMagic))) {
        throw Error(ErrorCode::corrupt, "index snapshot: bad magic");
    }
    if (r.uint(4) != kFormatVersion) {
        throw Error(ErrorCode::corrupt, "index snapshot: unsupported format version");
    }
    const auto dimension = static_cast<std::size_t>(r.uint(4));
    const auto count = r.uint(8);
    if (dimension == 0) {
        throw Error(ErrorCode::corrupt, "index snapshot: zero dimension");
    }
    VectorIndex index(dimension);
    std::vector<IndexEntry> entries;
    for (std::uint64_t i = 0; i < count; ++i) {
        IndexEntry e;
        e.chunk_id = r.str();
        e.pub_id = r.str();
        e.version = static_cast<int>(r.uint(4));
        e.superseded = r.uint(1) != 0;
        entries.push_back(std::move(e));
    }
    for (auto& e : entries) {
        e.vector.values.resize(dimension);
        for (auto& f : e.vector.values) {
            f = std::bit_cast<float>(static_cast<std::uint32_t>(r.uint(4)));
        }
    }
    if (!r.done()) {
        throw Error(ErrorCode::corrupt, "index snapshot: trailing bytes after " + std::to_string(count) + " entries");
    }
    for (auto& e : entries) {
        index.upsert(std::move(e));
    }
    return index;
}

}  // namespace apub
