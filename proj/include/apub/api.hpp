#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>

#include "apub/engine.hpp"

namespace apub {

struct ApiRequest {
    std::string method;
    std::string path;
    std::map<std::string, std::string> query;
    /// Header names are matched case-insensitively.
    std::map<std::string, std::string> headers;
    std::string body;
    std::string client;

    std::optional<std::string> header(const std::string& name) const;
};

struct ApiResponse {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;
    std::map<std::string, std::string> headers;
};

enum class Role { reader, contributor, admin };

std::optional<Role> parse_role(std::string_view name);

/// API keys loaded from `<key> <role>` lines.
class KeyTable {
public:
    static KeyTable parse(const std::string& text);
    void add(const std::string& key, Role role) { keys_[key] = role; }
    std::optional<Role> role_of(const std::string& key) const;
    bool empty() const { return keys_.empty(); }

private:
    std::map<std::string, Role> keys_;
};

struct ApiOptions {
    bool auth_enabled = false;
    bool query_requires_key = false;
    int cache_ttl_s = 300;
    /// Token bucket per key (or per client when no key): capacity and refill per second.
    double rate_limit_per_s = 10.0;
    /// Monotonic time for the cache and rate limiter; defaults to the steady clock.
    Clock clock;
};

/// Maps an engine error to its HTTP status and error code string.
std::pair<int, std::string> http_error(ErrorCode code);

/// RFC 4180 rendering; cells with comma, quote, CR or LF are quoted.
std::string to_csv(const DatasetRecord& dataset, bool superseded);

/// The HTTP JSON service. `handle` is transport-free; `serve` binds it to a socket.
class ApiService {
public:
    ApiService(Engine& engine, ApiOptions options, KeyTable keys = {});
    ~ApiService();

    ApiResponse handle(const ApiRequest& request);

    /// Blocks until `stop` is called or binding fails (returns false).
    bool serve(const std::string& host, int port);
    /// Binds to an ephemeral port and returns it; `serve_bound` then blocks.
    int bind_ephemeral(const std::string& host);
    bool serve_bound();
    void stop();

    std::size_t cache_size() const;

private:
    struct CacheEntry {
        json body;
        Answer detail;
        std::int64_t inserted_ms = 0;
    };
    struct Bucket {
        double tokens = 0;
        std::int64_t last_ms = 0;
    };

    ApiResponse route(const ApiRequest& request);
    ApiResponse post_query(const ApiRequest& request);
    ApiResponse get_facts(const ApiRequest& request);
    ApiResponse get_data(const ApiRequest& request, const std::string& dataset_id);
    ApiResponse post_submit(const ApiRequest& request);
    ApiResponse post_feedback(const ApiRequest& request);
    ApiResponse get_publication(const ApiRequest& request, const std::string& pub_id);

    bool allow(const std::string& bucket_key);
    std::optional<Role> caller_role(const ApiRequest& request, const json* body) const;
    json fact_json(const Fact& fact) const;

    Engine& engine_;
    ApiOptions options_;
    KeyTable keys_;

    mutable std::mutex cache_mutex_;
    std::map<std::pair<std::string, Zoom>, CacheEntry> cache_;
    std::uint64_t cache_generation_ = 0;

    std::mutex bucket_mutex_;
    std::unordered_map<std::string, Bucket> buckets_;

    struct Server;
    std::unique_ptr<Server> server_;
};

/// JSON body of a query response (without the X-Cache header).
json query_response_json(const AskResult& result, const Engine& engine);

std::string feedback_digest(const Engine& engine, Timestamp since);

}  // namespace apub
