#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "apub/engine.hpp"

namespace apub {

struct AppConfig {
    std::string store_path = "./ap-store";
    std::size_t index_dimension = kDefaultDimension;
    std::string providers_mode = "mock";
    std::string providers_base_url;
    std::string providers_api_key;
    std::string providers_model;
    std::string providers_prompt_file;
    double providers_timeout_s = 30.0;
    int providers_max_retries = 3;
    double tau_refuse = 0.25;
    double gamma = 0.55;
    std::size_t top_k = 8;
    int chunk_max_words = 200;
    double duplicate_threshold = 0.95;
    ConfidenceRules rules;
    int cache_ttl_s = 300;
    bool auth_enabled = false;
    std::string auth_keys_file;
    bool auth_query_requires_key = false;
    double rate_limit_per_s = 10.0;
    std::string aliases_file;
    std::string relations_file;
    std::string addr = "127.0.0.1:8080";
};

/// Every recognised dotted key, e.g. "store.path".
const std::vector<std::string>& config_keys();

/// Throws `invalid_argument` for unknown keys or unparsable values.
void apply_setting(AppConfig& config, const std::string& key, const std::string& value);

/// `[section]` headers and `key = value` lines; `#` and `;` start comments.
std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text);

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
EnvLookup process_env();

/// Layers file < environment (`AP_STORE_PATH` for store.path) < overrides.
AppConfig load_config(const std::optional<std::filesystem::path>& file, const EnvLookup& env,
                      const std::vector<std::pair<std::string, std::string>>& overrides = {});

/// `canonical | alias | alias ...` per line.
std::vector<std::pair<std::string, std::vector<std::string>>> parse_alias_file(const std::string& text);

/// One relation token per line; blank lines and `#` comments skipped.
std::vector<std::string> parse_relations_file(const std::string& text);

std::string read_file(const std::filesystem::path& path);

EngineDeps make_deps(const AppConfig& config);
EngineOptions make_engine_options(const AppConfig& config);

/// Opens the engine and applies the configured alias table.
std::unique_ptr<Engine> open_engine(const AppConfig& config, EngineDeps deps);

}  // namespace apub
