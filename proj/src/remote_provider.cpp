#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <regex>
#include <semaphore>
#include <sstream>
#include <thread>

#include "apub/providers.hpp"
#include "httplib.h"

namespace apub {

namespace {

constexpr std::size_t kBodyPreview = 200;

Error provider_error(const std::string& msg) { return Error(ErrorCode::provider, msg); }

std::string truncate_body(const std::string& body) {
    if (body.size() <= kBodyPreview) {
        return body;
    }
    return body.substr(0, kBodyPreview) + "...";
}

struct ParsedUrl {
    std::string origin;
    std::string path;
};

ParsedUrl parse_base_url(const std::string& url) {
    static const std::regex re(R"(^(https?)://([A-Za-z0-9.\-]+|\[[0-9A-Fa-f:]+\])(:[0-9]{1,5})?(/[^\s]*)?$)");
    std::smatch m;
    if (!std::regex_match(url, m, re)) {
        throw invalid_argument("base_url is not a valid HTTP(S) URL: '" + url + "'");
    }
    ParsedUrl out;
    out.origin = m[1].str() + "://" + m[2].str() + m[3].str();
    out.path = m[4].str();
    while (!out.path.empty() && out.path.back() == '/') {
        out.path.pop_back();
    }
    return out;
}

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
    std::size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
    return s;
}

}  // namespace

std::string default_prompt_template() {
    return "You answer questions about a research publication using ONLY the numbered context passages below.\n"
           "Write at most {max_words} words at the '{zoom}' level of detail.\n"
           "End every sentence with the identifier of the passage that supports it, in square brackets, "
           "exactly as given (for example [pub#v1#c0]).\n"
           "Never cite an identifier that is not listed. Never invent citations. If the passages do not answer "
           "the question, say that the evidence is inconclusive.\n\n"
           "Context:\n{context}\n"
           "Question: {question}\n"
           "Answer:";
}

struct RemoteProvider::Impl {
    ParsedUrl url;
    std::counting_semaphore<1024> in_flight;

    explicit Impl(ParsedUrl u, std::size_t cap)
        : url(std::move(u)), in_flight(static_cast<std::ptrdiff_t>(std::clamp<std::size_t>(cap, 1, 1024))) {}
};

RemoteProvider::RemoteProvider(RemoteConfig config) : config_(std::move(config)) {
    impl_ = std::make_unique<Impl>(parse_base_url(config_.base_url), config_.max_in_flight);
    if (config_.prompt_template.empty()) {
        config_.prompt_template = default_prompt_template();
    }
    if (!config_.log) {
        config_.log = [](const std::string& msg) { std::cerr << "[remote] " << msg << "\n"; };
    }
}

RemoteProvider::~RemoteProvider() = default;

json RemoteProvider::post(const std::string& path, const json& body) const {
    struct Slot {
        std::counting_semaphore<1024>& sem;
        explicit Slot(std::counting_semaphore<1024>& s) : sem(s) { sem.acquire(); }
        ~Slot() { sem.release(); }
    } slot(impl_->in_flight);

    const std::string full_path = impl_->url.path + path;
    const std::string payload = body.dump();
    std::string last_error;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
        if (attempt > 0) {
            const double delay = config_.backoff_initial_s * std::pow(2.0, attempt - 1);
            config_.log("retry " + std::to_string(attempt) + "/" + std::to_string(config_.max_retries) + " for " +
                        full_path + " after: " + last_error);
            std::this_thread::sleep_for(std::chrono::duration<double>(delay));
        }
        httplib::Client client(impl_->url.origin);
        const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
            std::chrono::duration<double>(config_.timeout_s));
        client.set_connection_timeout(timeout);
        client.set_read_timeout(timeout);
        client.set_write_timeout(timeout);
        httplib::Headers headers;
        if (!config_.api_key.empty()) {
            headers.emplace("Authorization", "Bearer " + config_.api_key);
        }
        auto res = client.Post(full_path, headers, payload, "application/json");
        if (!res) {
            const auto err = res.error();
            last_error = err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout
                             ? "timeout after " + format_number(config_.timeout_s) + "s"
                             : "transport error: " + httplib::to_string(err);
            continue;
        }
        if (res->status >= 500 || res->status == 429) {
            last_error = "HTTP " + std::to_string(res->status) + ": " + truncate_body(res->body);
            continue;
        }
        if (res->status < 200 || res->status >= 300) {
            throw provider_error("HTTP " + std::to_string(res->status) + ": " + truncate_body(res->body));
        }
        auto parsed = json::parse(res->body, nullptr, false);
        if (parsed.is_discarded() || !parsed.is_object()) {
            throw provider_error("malformed response (HTTP " + std::to_string(res->status) +
                                 "): " + truncate_body(res->body));
        }
        return parsed;
    }
    throw provider_error(last_error.empty() ? "request failed" : last_error);
}

std::vector<EmbeddingVector> RemoteProvider::embed_texts(const std::vector<std::string>& texts) const {
    for (const auto& t : texts) {
        if (tokenize(t).empty()) {
            throw invalid_argument("unembeddable text");
        }
    }
    const json response = post("/embed", json{{"model", config_.model_name}, {"input", texts}});
    const auto it = response.find("vectors");
    if (it == response.end() || !it->is_array() || it->size() != texts.size()) {
        throw provider_error("malformed response: expected 'vectors' with " + std::to_string(texts.size()) +
                             " entries: " + truncate_body(response.dump()));
    }
    std::vector<EmbeddingVector> out;
    for (const auto& row : *it) {
        if (!row.is_array()) {
            throw provider_error("malformed response: vector is not an array");
        }
        if (row.size() != config_.dimension) {
            throw provider_error("dimension mismatch d=" + std::to_string(row.size()) + " expected " +
                                 std::to_string(config_.dimension));
        }
        std::vector<double> values;
        double norm = 0;
        for (const auto& v : row) {
            if (!v.is_number() || !std::isfinite(v.get<double>())) {
                throw provider_error("malformed response: non-finite vector component");
            }
            values.push_back(v.get<double>());
            norm += values.back() * values.back();
        }
        if (norm == 0) {
            throw provider_error("malformed response: zero vector");
        }
        norm = std::sqrt(norm);
        EmbeddingVector vec;
        for (const double v : values) {
            vec.values.push_back(static_cast<float>(v / norm));
        }
        out.push_back(std::move(vec));
    }
    return out;
}

std::string RemoteProvider::render_prompt(const CompositionRequest& req) const {
    std::ostringstream ctx;
    for (const auto& item : req.context) {
        ctx << "[" << item.chunk_id << "] " << item.text << "\n";
    }
    std::string prompt = config_.prompt_template;
    prompt = replace_all(prompt, "{max_words}", std::to_string(budget_for(req.zoom).max_words));
    prompt = replace_all(prompt, "{zoom}", std::string(to_string(req.zoom)));
    prompt = replace_all(prompt, "{context}", ctx.str());
    prompt = replace_all(prompt, "{question}", req.question);
    if (req.style_hints) {
        prompt += "\nStyle: " + *req.style_hints;
    }
    return prompt;
}

std::string RemoteProvider::compose_answer(const CompositionRequest& req) const {
    if (req.context.empty()) {
        throw invalid_argument("composition needs a non-empty context");
    }
    const int max_tokens = budget_for(req.zoom).max_words * 2;
    const json response =
        post("/compose", json{{"model", config_.model_name}, {"prompt", render_prompt(req)}, {"max_tokens", max_tokens}});
    const auto it = response.find("text");
    if (it == response.end() || !it->is_string()) {
        throw provider_error("malformed response: expected 'text': " + truncate_body(response.dump()));
    }
    return it->get<std::string>();
}

std::optional<std::vector<std::string>> RemoteProvider::list_claims(std::string_view text) const {
    const std::string prompt =
        "List the scientific claims made in the passage below, one per line, formatted as\n"
        "subject | relation | object\n"
        "optionally followed by | effect=<number> | se=<number> | ci95=<lo>,<hi> | polarity=supports|refutes.\n"
        "Output only claim lines.\n\nPassage:\n" +
        std::string(text);
    const json response = post("/compose", json{{"model", config_.model_name}, {"prompt", prompt}, {"max_tokens", 512}});
    const auto it = response.find("text");
    if (it == response.end() || !it->is_string()) {
        throw provider_error("malformed response: expected 'text'");
    }
    std::vector<std::string> lines;
    std::istringstream in(it->get<std::string>());
    for (std::string line; std::getline(in, line);) {
        line = trim(line);
        if (!line.empty()) {
            lines.push_back(line);
        }
    }
    return lines;
}

}  // namespace apub
