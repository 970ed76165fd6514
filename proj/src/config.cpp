#include "apub/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace apub {

namespace {

double as_double(const std::string& key, const std::string& value) {
    const auto v = parse_number(value);
    if (!v) {
        throw invalid_argument("config " + key + ": '" + value + "' is not a number");
    }
    return *v;
}

long as_int(const std::string& key, const std::string& value, long min) {
    const double v = as_double(key, value);
    if (v != static_cast<double>(static_cast<long>(v)) || v < static_cast<double>(min)) {
        throw invalid_argument("config " + key + ": '" + value + "' must be an integer >= " + std::to_string(min));
    }
    return static_cast<long>(v);
}

bool as_bool(const std::string& key, const std::string& value) {
    const auto v = to_lower(value);
    if (v == "true" || v == "1" || v == "yes" || v == "on") {
        return true;
    }
    if (v == "false" || v == "0" || v == "no" || v == "off") {
        return false;
    }
    throw invalid_argument("config " + key + ": '" + value + "' is not a boolean");
}

std::string env_name(const std::string& key) {
    std::string out = "AP_";
    for (const char c : key) {
        out += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    }
    return out;
}

/// Quoted values run to the closing quote; bare values stop at a `#` or `;`
/// that follows whitespace.
std::string unquote(std::string v) {
    if (!v.empty() && (v.front() == '"' || v.front() == '\'')) {
        const auto close = v.find(v.front(), 1);
        if (close != std::string::npos) {
            return v.substr(1, close - 1);
        }
        return v;
    }
    for (std::size_t i = 1; i < v.size(); ++i) {
        if ((v[i] == '#' || v[i] == ';') && std::isspace(static_cast<unsigned char>(v[i - 1]))) {
            return trim(v.substr(0, i));
        }
    }
    return v;
}

}  // namespace

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = {
        "store.path",           "index.dimension",        "providers.mode",       "providers.base_url",
        "providers.api_key",    "providers.model",        "providers.prompt_file",        "providers.timeout_s",  "providers.max_retries",
        "query.tau_refuse",     "query.k",                "verify.gamma",         "ingest.max_words",
        "ingest.duplicate_threshold", "synth.medium_min_studies", "synth.medium_min_agreement",
        "synth.high_min_studies", "synth.high_min_agreement", "cache.ttl_s",      "auth.enabled",
        "auth.keys_file",       "auth.query_requires_key", "api.rate_limit",      "api.addr",
        "graph.aliases_file",   "graph.relations_file",
    };
    return keys;
}

void apply_setting(AppConfig& c, const std::string& key, const std::string& value) {
    if (key == "store.path") {
        c.store_path = value;
    } else if (key == "index.dimension") {
        c.index_dimension = static_cast<std::size_t>(as_int(key, value, 1));
    } else if (key == "providers.mode") {
        if (value != "mock" && value != "remote") {
            throw invalid_argument("config providers.mode must be mock or remote");
        }
        c.providers_mode = value;
    } else if (key == "providers.base_url") {
        c.providers_base_url = value;
    } else if (key == "providers.api_key") {
        c.providers_api_key = value;
    } else if (key == "providers.model") {
        c.providers_model = value;
    } else if (key == "providers.prompt_file") {
        c.providers_prompt_file = value;
    } else if (key == "providers.timeout_s") {
        c.providers_timeout_s = as_double(key, value);
    } else if (key == "providers.max_retries") {
        c.providers_max_retries = static_cast<int>(as_int(key, value, 0));
    } else if (key == "query.tau_refuse") {
        c.tau_refuse = as_double(key, value);
    } else if (key == "query.k") {
        c.top_k = static_cast<std::size_t>(as_int(key, value, 1));
    } else if (key == "verify.gamma") {
        c.gamma = as_double(key, value);
    } else if (key == "ingest.max_words") {
        c.chunk_max_words = static_cast<int>(as_int(key, value, 20));
    } else if (key == "ingest.duplicate_threshold") {
        c.duplicate_threshold = as_double(key, value);
    } else if (key == "synth.medium_min_studies") {
        c.rules.medium_min_studies = static_cast<int>(as_int(key, value, 1));
    } else if (key == "synth.medium_min_agreement") {
        c.rules.medium_min_agreement = as_double(key, value);
    } else if (key == "synth.high_min_studies") {
        c.rules.high_min_studies = static_cast<int>(as_int(key, value, 1));
    } else if (key == "synth.high_min_agreement") {
        c.rules.high_min_agreement = as_double(key, value);
    } else if (key == "cache.ttl_s") {
        c.cache_ttl_s = static_cast<int>(as_int(key, value, 0));
    } else if (key == "auth.enabled") {
        c.auth_enabled = as_bool(key, value);
    } else if (key == "auth.keys_file") {
        c.auth_keys_file = value;
    } else if (key == "auth.query_requires_key") {
        c.auth_query_requires_key = as_bool(key, value);
    } else if (key == "api.rate_limit") {
        c.rate_limit_per_s = as_double(key, value);
    } else if (key == "api.addr") {
        c.addr = value;
    } else if (key == "graph.aliases_file") {
        c.aliases_file = value;
    } else if (key == "graph.relations_file") {
        c.relations_file = value;
    } else {
        throw invalid_argument("unknown config key '" + key + "'");
    }
}

std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text) {
    std::vector<std::pair<std::string, std::string>> out;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') {
            continue;
        }
        if (t.front() == '[') {
            if (t.back() != ']') {
                throw Error(ErrorCode::parse, "config line " + std::to_string(n) + ": unterminated section header");
            }
            section = trim(t.substr(1, t.size() - 2));
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw Error(ErrorCode::parse, "config line " + std::to_string(n) + ": expected key = value");
        }
        const std::string key = trim(t.substr(0, eq));
        const std::string value = unquote(trim(t.substr(eq + 1)));
        out.emplace_back(section.empty() ? key : section + "." + key, value);
    }
    return out;
}

EnvLookup process_env() {
    return [](const std::string& name) -> std::optional<std::string> {
        const char* v = std::getenv(name.c_str());
        if (v == nullptr) {
            return std::nullopt;
        }
        return std::string(v);
    };
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::io, "cannot read " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

AppConfig load_config(const std::optional<std::filesystem::path>& file, const EnvLookup& env,
                      const std::vector<std::pair<std::string, std::string>>& overrides) {
    AppConfig c;
    if (file) {
        for (const auto& [k, v] : parse_config_text(read_file(*file))) {
            apply_setting(c, k, v);
        }
    }
    if (env) {
        for (const auto& key : config_keys()) {
            if (const auto v = env(env_name(key))) {
                apply_setting(c, key, *v);
            }
        }
    }
    for (const auto& [k, v] : overrides) {
        apply_setting(c, k, v);
    }
    return c;
}

std::vector<std::pair<std::string, std::vector<std::string>>> parse_alias_file(const std::string& text) {
    std::vector<std::pair<std::string, std::vector<std::string>>> out;
    std::istringstream in(text);
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') {
            continue;
        }
        std::vector<std::string> parts;
        std::string cur;
        for (const char ch : t) {
            if (ch == '|') {
                parts.push_back(trim(cur));
                cur.clear();
            } else {
                cur += ch;
            }
        }
        parts.push_back(trim(cur));
        std::erase_if(parts, [](const std::string& s) { return s.empty(); });
        if (parts.empty()) {
            throw Error(ErrorCode::parse, "alias line " + std::to_string(n) + ": no canonical name");
        }
        out.emplace_back(parts.front(), std::vector<std::string>(parts.begin() + 1, parts.end()));
    }
    return out;
}

std::vector<std::string> parse_relations_file(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const std::string t = trim(line);
        if (!t.empty() && t[0] != '#') {
            out.push_back(normalize_relation(t));
        }
    }
    return out;
}

EngineDeps make_deps(const AppConfig& config) {
    EngineDeps deps;
    if (config.providers_mode == "remote") {
        RemoteConfig rc;
        rc.base_url = config.providers_base_url;
        rc.model_name = config.providers_model;
        rc.api_key = config.providers_api_key;
        rc.timeout_s = config.providers_timeout_s;
        rc.max_retries = config.providers_max_retries;
        rc.dimension = config.index_dimension;
        if (!config.providers_prompt_file.empty()) {
            rc.prompt_template = read_file(config.providers_prompt_file);
        }
        auto remote = std::make_shared<RemoteProvider>(rc);
        deps.embedder = remote;
        deps.composer = remote;
    } else {
        deps.embedder = std::make_shared<HashEmbedder>(config.index_dimension);
        deps.composer = std::make_shared<ExtractiveComposer>();
    }
    return deps;
}

EngineOptions make_engine_options(const AppConfig& config) {
    EngineOptions o;
    o.store_path = config.store_path;
    o.query.tau_refuse = config.tau_refuse;
    o.query.gamma = config.gamma;
    o.query.k = config.top_k;
    o.chunk_policy.max_words = config.chunk_max_words;
    o.duplicate_threshold = config.duplicate_threshold;
    o.rules = config.rules;
    if (!config.relations_file.empty()) {
        o.relation_vocabulary = parse_relations_file(read_file(config.relations_file));
    }
    return o;
}

std::unique_ptr<Engine> open_engine(const AppConfig& config, EngineDeps deps) {
    auto engine = Engine::open(make_engine_options(config), std::move(deps));
    if (!config.aliases_file.empty()) {
        for (const auto& [canonical, aliases] : parse_alias_file(read_file(config.aliases_file))) {
            for (const auto& alias : aliases) {
                engine->add_alias(canonical, alias);
            }
            if (aliases.empty()) {
                engine->add_alias(canonical, canonical);
            }
        }
    }
    return engine;
}

}  // namespace apub
