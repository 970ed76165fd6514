#include "apub/api.hpp"

#include <chrono>
#include <regex>
#include <sstream>

#include "httplib.h"

namespace apub {

namespace {

ApiResponse json_response(int status, const json& body) {
    ApiResponse r;
    r.status = status;
    r.body = body.dump();
    return r;
}

ApiResponse error_response(int status, const std::string& code, const std::string& message) {
    return json_response(status, json{{"error", json{{"code", code}, {"message", message}}}});
}

ApiResponse error_response(const Error& e) {
    const auto [status, code] = http_error(e.code());
    return error_response(status, code, e.what());
}

std::optional<json> parse_body(const ApiRequest& req) {
    auto j = json::parse(req.body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        return std::nullopt;
    }
    return j;
}

std::optional<bool> parse_flag(const std::string& v) {
    const auto l = to_lower(v);
    if (l == "true" || l == "1" || l == "yes") {
        return true;
    }
    if (l == "false" || l == "0" || l == "no" || l.empty()) {
        return false;
    }
    return std::nullopt;
}

Clock steady_clock_ms() {
    return [] {
        return Timestamp{std::chrono::duration_cast<std::chrono::milliseconds>(
                             std::chrono::steady_clock::now().time_since_epoch())
                             .count()};
    };
}

std::string csv_cell(const std::string& cell) {
    if (cell.find_first_of(",\"\r\n") == std::string::npos) {
        return cell;
    }
    std::string out = "\"";
    for (const char c : cell) {
        out += c;
        if (c == '"') {
            out += '"';
        }
    }
    return out + "\"";
}

}  // namespace

std::optional<std::string> ApiRequest::header(const std::string& name) const {
    for (const auto& [k, v] : headers) {
        if (iequals(k, name)) {
            return v;
        }
    }
    return std::nullopt;
}

std::optional<Role> parse_role(std::string_view name) {
    if (name == "reader") {
        return Role::reader;
    }
    if (name == "contributor") {
        return Role::contributor;
    }
    if (name == "admin") {
        return Role::admin;
    }
    return std::nullopt;
}

KeyTable KeyTable::parse(const std::string& text) {
    KeyTable table;
    std::istringstream in(text);
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        const auto t = trim(line);
        if (t.empty() || t[0] == '#') {
            continue;
        }
        const auto parts = split_whitespace(t);
        if (parts.size() != 2) {
            throw Error(ErrorCode::parse, "keys line " + std::to_string(n) + ": expected '<key> <role>'");
        }
        const auto role = parse_role(parts[1]);
        if (!role) {
            throw Error(ErrorCode::parse, "keys line " + std::to_string(n) + ": unknown role '" + parts[1] + "'");
        }
        table.add(parts[0], *role);
    }
    return table;
}

std::optional<Role> KeyTable::role_of(const std::string& key) const {
    const auto it = keys_.find(key);
    if (it == keys_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::pair<int, std::string> http_error(ErrorCode code) {
    switch (code) {
        case ErrorCode::invalid_argument:
            return {400, "invalid_argument"};
        case ErrorCode::parse:
            return {400, "parse_error"};
        case ErrorCode::not_found:
            return {404, "not_found"};
        case ErrorCode::conflict:
            return {409, "conflict"};
        case ErrorCode::provider:
            return {503, "provider_unavailable"};
        case ErrorCode::corrupt:
        case ErrorCode::io:
            break;
    }
    return {500, "internal"};
}

std::string to_csv(const DatasetRecord& dataset, bool superseded) {
    std::string out;
    if (superseded) {
        out += "# superseded\r\n";
    }
    for (std::size_t i = 0; i < dataset.columns.size(); ++i) {
        out += (i > 0 ? "," : "") + csv_cell(dataset.columns[i].name);
    }
    out += "\r\n";
    for (const auto& row : dataset.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            out += (i > 0 ? "," : "") + csv_cell(row[i]);
        }
        out += "\r\n";
    }
    return out;
}

json query_response_json(const AskResult& result, const Engine& engine) {
    const Answer& a = result.detail;
    json studies = json::array();
    std::vector<PubRef> order;
    std::map<PubRef, std::vector<std::string>> chunks;
    for (const auto& c : a.citations) {
        const PubRef ref{c.pub_id, c.version};
        if (chunks.count(ref) == 0) {
            order.push_back(ref);
        }
        chunks[ref].push_back(c.chunk_id);
    }
    for (const auto& ref : order) {
        json s{{"publication_id", ref.pub_id}, {"version", ref.version}};
        if (const auto* p = engine.store().find_publication(ref); p != nullptr && p->doi) {
            s["doi"] = *p->doi;
        }
        s["chunk_ids"] = chunks[ref];
        studies.push_back(std::move(s));
    }
    return json{{"query_id", a.query_id},
                {"answer_summary", result.headline.text},
                {"answer_detail", a.text},
                {"supporting_studies", studies},
                {"data_points", a.data_points ? *a.data_points : json(nullptr)},
                {"confidence_score", a.confidence_score},
                {"confidence_label", a.confidence},
                {"warnings", a.warnings},
                {"derivation", a.derivation},
                {"refused", a.refused}};
}

std::string feedback_digest(const Engine& engine, Timestamp since) { return render_digest(engine.digest(since)); }

// ---------------------------------------------------------------------------

struct ApiService::Server {
    httplib::Server http;
};

ApiService::ApiService(Engine& engine, ApiOptions options, KeyTable keys)
    : engine_(engine), options_(std::move(options)), keys_(std::move(keys)) {
    if (!options_.clock) {
        options_.clock = steady_clock_ms();
    }
    cache_generation_ = engine_.generation();
}

ApiService::~ApiService() = default;

std::size_t ApiService::cache_size() const {
    std::lock_guard lock(cache_mutex_);
    return cache_.size();
}

bool ApiService::allow(const std::string& bucket_key) {
    if (options_.rate_limit_per_s <= 0) {
        return true;
    }
    const auto now = options_.clock().ms;
    std::lock_guard lock(bucket_mutex_);
    auto [it, inserted] = buckets_.try_emplace(bucket_key, Bucket{options_.rate_limit_per_s, now});
    auto& b = it->second;
    if (!inserted) {
        const double refill = static_cast<double>(now - b.last_ms) / 1000.0 * options_.rate_limit_per_s;
        b.tokens = std::min(options_.rate_limit_per_s, b.tokens + refill);
        b.last_ms = now;
    }
    if (b.tokens < 1.0) {
        return false;
    }
    b.tokens -= 1.0;
    return true;
}

std::optional<Role> ApiService::caller_role(const ApiRequest& req, const json* body) const {
    auto key = req.header("X-API-Key");
    if (!key && body != nullptr && body->contains("api_key") && (*body)["api_key"].is_string()) {
        key = (*body)["api_key"].get<std::string>();
    }
    if (!key) {
        return std::nullopt;
    }
    return keys_.role_of(*key);
}

ApiResponse ApiService::handle(const ApiRequest& request) {
    try {
        const std::string bucket = request.header("X-API-Key").value_or("client:" + request.client);
        if (!allow(bucket)) {
            return error_response(429, "rate_limited", "rate limit exceeded");
        }
        return route(request);
    } catch (const Error& e) {
        return error_response(e);
    } catch (const std::exception& e) {
        return error_response(500, "internal", e.what());
    }
}

ApiResponse ApiService::route(const ApiRequest& req) {
    static const std::regex data_re(R"(^/v1/data/(.+)$)");
    static const std::regex pub_re(R"(^/v1/publications/(.+)$)");
    std::smatch m;
    auto method_guard = [&](const char* allowed) -> std::optional<ApiResponse> {
        if (req.method != allowed) {
            return error_response(405, "method_not_allowed", req.method + " not allowed on " + req.path);
        }
        return std::nullopt;
    };
    if (req.path == "/v1/query") {
        if (auto r = method_guard("POST")) {
            return *r;
        }
        return post_query(req);
    }
    if (req.path == "/v1/facts") {
        if (auto r = method_guard("GET")) {
            return *r;
        }
        return get_facts(req);
    }
    if (req.path == "/v1/submit") {
        if (auto r = method_guard("POST")) {
            return *r;
        }
        return post_submit(req);
    }
    if (req.path == "/v1/feedback") {
        if (auto r = method_guard("POST")) {
            return *r;
        }
        return post_feedback(req);
    }
    if (std::regex_match(req.path, m, data_re)) {
        if (auto r = method_guard("GET")) {
            return *r;
        }
        return get_data(req, m[1].str());
    }
    if (std::regex_match(req.path, m, pub_re)) {
        if (auto r = method_guard("GET")) {
            return *r;
        }
        return get_publication(req, m[1].str());
    }
    return error_response(404, "not_found", "no route for " + req.path);
}

ApiResponse ApiService::post_query(const ApiRequest& req) {
    const auto body = parse_body(req);
    if (!body) {
        return error_response(400, "invalid_argument", "body must be a JSON object");
    }
    if (!body->contains("question") || !(*body)["question"].is_string() ||
        trim((*body)["question"].get<std::string>()).empty()) {
        return error_response(400, "invalid_argument", "question must be a non-empty string");
    }
    const std::string question = (*body)["question"].get<std::string>();
    Zoom zoom = Zoom::abstract;
    if (body->contains("zoom") && !(*body)["zoom"].is_null()) {
        const auto z = (*body)["zoom"].is_string() ? enum_from_string<Zoom>((*body)["zoom"].get<std::string>()) : std::nullopt;
        if (!z) {
            return error_response(400, "invalid_argument", "zoom must be one of headline, abstract, detailed, data");
        }
        zoom = *z;
    }
    if (options_.auth_enabled && options_.query_requires_key && !caller_role(req, &*body)) {
        return error_response(401, "unauthorized", "a valid API key is required");
    }

    const auto key = std::make_pair(normalize_name(question), zoom);
    const auto generation = engine_.generation();
    const auto now = options_.clock().ms;
    {
        std::lock_guard lock(cache_mutex_);
        if (cache_generation_ != generation) {
            cache_.clear();
            cache_generation_ = generation;
        }
        const auto it = cache_.find(key);
        if (it != cache_.end() && now - it->second.inserted_ms < static_cast<std::int64_t>(options_.cache_ttl_s) * 1000) {
            json out = it->second.body;
            Answer logged = it->second.detail;
            logged.query_id = engine_.new_query_id();
            logged.question = question;
            out["query_id"] = logged.query_id;
            engine_.log_query(logged, "api", true);
            auto r = json_response(200, out);
            r.headers["X-Cache"] = "hit";
            return r;
        }
        if (it != cache_.end()) {
            cache_.erase(it);
        }
    }

    const auto result = engine_.ask(question, zoom, "api");
    json out = query_response_json(result, engine_);
    {
        std::lock_guard lock(cache_mutex_);
        if (cache_generation_ == generation && options_.cache_ttl_s > 0) {
            cache_[key] = CacheEntry{out, result.detail, now};
        }
    }
    auto r = json_response(200, out);
    r.headers["X-Cache"] = "miss";
    return r;
}

json ApiService::fact_json(const Fact& f) const {
    const auto& c = f.claim;
    const Graph& graph = engine_.graph();
    json effect = nullptr;
    if (c.effect) {
        effect = json{{"estimate", c.effect->estimate},
                      {"se", c.effect->se},
                      {"ci95", c.effect->ci95 ? json(*c.effect->ci95) : json(nullptr)},
                      {"unit", c.effect->unit ? json(*c.effect->unit) : json(nullptr)}};
    }
    json source{{"pub_id", c.source.pub_id}, {"version", c.source.version}, {"chunk_ids", c.source.chunk_ids}};
    if (const auto* p = engine_.store().find_publication(c.source.ref()); p != nullptr && p->doi) {
        source["doi"] = *p->doi;
    }
    json object_id = nullptr;
    if (const auto* e = std::get_if<EntityRef>(&c.object)) {
        object_id = e->entity_id;
    }
    return json{{"claim_id", c.claim_id},
                {"subject", graph.display_name(c.subject)},
                {"subject_id", c.subject},
                {"relation", c.relation},
                {"object", graph.display_object(c.object)},
                {"object_id", object_id},
                {"effect", effect},
                {"polarity", c.polarity},
                {"source", source},
                {"asserted_at", c.asserted_at},
                {"superseded", f.superseded},
                {"confidence_label", f.synthesis ? json(f.synthesis->confidence) : json(nullptr)},
                {"confidence_score", f.synthesis ? json(confidence_score(f.synthesis->confidence)) : json(nullptr)},
                {"synthesis", f.synthesis ? json(*f.synthesis) : json(nullptr)}};
}

ApiResponse ApiService::get_facts(const ApiRequest& req) {
    FactPattern pattern;
    json echo = json::object();
    for (const char* field : {"subject", "relation", "object"}) {
        const auto it = req.query.find(field);
        if (it != req.query.end() && !trim(it->second).empty()) {
            (std::string(field) == "subject"    ? pattern.subject
             : std::string(field) == "relation" ? pattern.relation
                                                : pattern.object) = it->second;
            echo[field] = it->second;
        }
    }
    if (pattern.empty()) {
        return error_response(400, "invalid_argument", "at least one of subject, relation, object is required");
    }
    bool include_superseded = false;
    if (const auto it = req.query.find("include_superseded"); it != req.query.end()) {
        const auto flag = parse_flag(it->second);
        if (!flag) {
            return error_response(400, "invalid_argument", "include_superseded must be true or false");
        }
        include_superseded = *flag;
    }
    echo["include_superseded"] = include_superseded;
    const auto result = engine_.facts(pattern, include_superseded);
    json facts = json::array();
    json synthesis = json::array();
    std::set<GroupKey> seen;
    {
        for (const auto& f : result.facts) {
            facts.push_back(fact_json(f));
            if (f.synthesis && seen.insert(f.synthesis->group).second) {
                synthesis.push_back(*f.synthesis);
            }
        }
    }
    return json_response(200, json{{"query", echo}, {"facts", facts}, {"synthesis", synthesis}, {"warnings", result.warnings}});
}

ApiResponse ApiService::get_data(const ApiRequest& req, const std::string& dataset_id) {
    std::string format = "json";
    if (const auto it = req.query.find("format"); it != req.query.end()) {
        format = it->second;
    }
    if (format != "json" && format != "csv") {
        return error_response(400, "invalid_argument", "format must be json or csv");
    }
    const auto d = engine_.dataset(dataset_id);
    if (!d) {
        return error_response(404, "not_found", "unknown dataset " + dataset_id);
    }
    const bool superseded = engine_.is_superseded(PubRef{d->pub_id, d->version});
    if (format == "csv") {
        ApiResponse r;
        r.content_type = "text/csv";
        r.body = to_csv(*d, superseded);
        return r;
    }
    return json_response(200, json{{"name", d->name}, {"columns", d->columns}, {"rows", d->rows}, {"superseded", superseded}});
}

ApiResponse ApiService::post_submit(const ApiRequest& req) {
    if (options_.auth_enabled) {
        const auto role = caller_role(req, nullptr);
        if (!role || *role == Role::reader) {
            return error_response(401, "unauthorized", role ? "key lacks contributor role" : "a valid API key is required");
        }
    }
    SubmissionFormat format = SubmissionFormat::ap_json;
    if (const auto it = req.query.find("format"); it != req.query.end()) {
        format = parse_format(it->second);
    } else if (const auto ct = req.header("Content-Type"); ct && ct->find("markdown") != std::string::npos) {
        format = SubmissionFormat::markdown;
    }
    const std::string actor = req.header("X-API-Key") ? "key:" + req.header("X-API-Key")->substr(0, 4) : "api";
    const auto result = engine_.submit(req.body, format, actor);
    if (!result.ref) {
        return json_response(422, json{{"error", json{{"code", "rejected"}, {"message", "submission rejected by validation"}}},
                                       {"report", result.report}});
    }
    return json_response(201, json{{"pub_id", result.ref->pub_id}, {"version", result.ref->version}, {"report", result.report}});
}

ApiResponse ApiService::post_feedback(const ApiRequest& req) {
    const auto body = parse_body(req);
    if (!body) {
        return error_response(400, "invalid_argument", "body must be a JSON object");
    }
    if (!body->contains("query_id") || !(*body)["query_id"].is_string()) {
        return error_response(400, "invalid_argument", "query_id must be a string");
    }
    const auto rating = body->contains("rating") && (*body)["rating"].is_string()
                            ? enum_from_string<Rating>((*body)["rating"].get<std::string>())
                            : std::nullopt;
    if (!rating) {
        return error_response(400, "invalid_argument", "rating must be up or down");
    }
    std::optional<std::string> reason;
    if (body->contains("flag_reason") && !(*body)["flag_reason"].is_null()) {
        if (!(*body)["flag_reason"].is_string()) {
            return error_response(400, "invalid_argument", "flag_reason must be a string");
        }
        reason = (*body)["flag_reason"].get<std::string>();
    }
    engine_.record_feedback((*body)["query_id"].get<std::string>(), *rating, reason);
    ApiResponse r;
    r.status = 204;
    r.content_type.clear();
    return r;
}

ApiResponse ApiService::get_publication(const ApiRequest& req, const std::string& pub_id) {
    std::optional<int> version;
    if (const auto it = req.query.find("version"); it != req.query.end()) {
        const auto v = parse_number(it->second);
        if (!v || *v < 1 || *v != static_cast<double>(static_cast<int>(*v))) {
            return error_response(400, "invalid_argument", "version must be a positive integer");
        }
        version = static_cast<int>(*v);
    }
    const auto bundle = engine_.publication(pub_id, version);
    const auto ref = bundle.publication.ref();
    json out = bundle.publication;
    out["status"] = engine_.effective_status(ref);
    const auto by = engine_.superseded_by(ref);
    out["superseded_by"] = by ? json(by->str()) : json(nullptr);
    out["latest_version"] = engine_.store().latest_version(pub_id).value_or(ref.version);
    json events = json::array();
    for (const auto& e : engine_.events_for(pub_id)) {
        if (e.subject_id == ref.str() || e.action == EventAction::commit) {
            if (e.action == EventAction::commit && e.subject_id != ref.str()) {
                continue;
            }
            events.push_back(e);
        }
    }
    out["events"] = events;
    json chunks = json::array();
    for (const auto& c : bundle.chunks) {
        chunks.push_back(json{{"chunk_id", c.chunk_id}, {"section", c.section}, {"heading", c.heading}, {"ordinal", c.ordinal}, {"text", c.text}});
    }
    out["chunks"] = chunks;
    json datasets = json::array();
    for (const auto& d : bundle.datasets) {
        datasets.push_back(d.dataset_id);
    }
    out["datasets"] = datasets;
    return json_response(200, out);
}

// ---------------------------------------------------------------------------
// Transport
// ---------------------------------------------------------------------------

namespace {

ApiRequest from_httplib(const httplib::Request& in) {
    ApiRequest out;
    out.method = in.method;
    out.path = in.path;
    for (const auto& [k, v] : in.params) {
        out.query.emplace(k, v);
    }
    for (const auto& [k, v] : in.headers) {
        out.headers.emplace(k, v);
    }
    out.body = in.body;
    out.client = in.remote_addr;
    return out;
}

void to_httplib(const ApiResponse& in, httplib::Response& out) {
    out.status = in.status;
    for (const auto& [k, v] : in.headers) {
        out.set_header(k, v);
    }
    if (in.status != 204) {
        out.set_content(in.body, in.content_type);
    }
}

}  // namespace

int ApiService::bind_ephemeral(const std::string& host) {
    if (!server_) {
        server_ = std::make_unique<Server>();
        auto handler = [this](const httplib::Request& req, httplib::Response& res) { to_httplib(handle(from_httplib(req)), res); };
        server_->http.Get(R"(/.*)", handler);
        server_->http.Post(R"(/.*)", handler);
        server_->http.Put(R"(/.*)", handler);
        server_->http.Delete(R"(/.*)", handler);
    }
    return server_->http.bind_to_any_port(host);
}

bool ApiService::serve_bound() { return server_ && server_->http.listen_after_bind(); }

bool ApiService::serve(const std::string& host, int port) {
    if (!server_) {
        bind_ephemeral(host);
        server_->http.stop();
        server_ = std::make_unique<Server>();
        auto handler = [this](const httplib::Request& req, httplib::Response& res) { to_httplib(handle(from_httplib(req)), res); };
        server_->http.Get(R"(/.*)", handler);
        server_->http.Post(R"(/.*)", handler);
        server_->http.Put(R"(/.*)", handler);
        server_->http.Delete(R"(/.*)", handler);
    }
    return server_->http.listen(host, port);
}

void ApiService::stop() {
    if (server_) {
        server_->http.stop();
    }
}

}  // namespace apub
