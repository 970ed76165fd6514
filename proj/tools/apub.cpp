// apub: operator command line for the publication engine.
//
// Exit codes: 0 ok, 1 generic failure, 2 usage, 3 accepted but flagged,
// 4 rejected. With --json nothing but one JSON document reaches stdout.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "apub/api.hpp"
#include "apub/config.hpp"

namespace {

constexpr int kExitGeneric = 1;
constexpr int kExitUsage = 2;
constexpr int kExitFlagged = 3;
constexpr int kExitRejected = 4;

struct Globals {
    std::string config_file;
    std::string store;
    std::string providers_mode;
    bool json = false;
};

apub::AppConfig load(const Globals& g, std::vector<std::pair<std::string, std::string>> overrides = {}) {
    if (!g.store.empty()) {
        overrides.emplace_back("store.path", g.store);
    }
    if (!g.providers_mode.empty()) {
        overrides.emplace_back("providers.mode", g.providers_mode);
    }
    std::optional<std::filesystem::path> file;
    if (!g.config_file.empty()) {
        file = g.config_file;
    } else if (const char* env = std::getenv("AP_CONFIG")) {
        file = env;
    }
    return apub::load_config(file, apub::process_env(), overrides);
}

std::unique_ptr<apub::Engine> open(const apub::AppConfig& cfg) { return apub::open_engine(cfg, apub::make_deps(cfg)); }

std::string read_input(const std::string& path) {
    if (path == "-") {
        std::ostringstream ss;
        ss << std::cin.rdbuf();
        return ss.str();
    }
    return apub::read_file(path);
}

apub::SubmissionFormat guess_format(const std::string& path, const std::string& flag) {
    if (!flag.empty()) {
        return apub::parse_format(flag);
    }
    const auto ext = std::filesystem::path(path).extension().string();
    if (ext == ".md" || ext == ".markdown") {
        return apub::SubmissionFormat::markdown;
    }
    return apub::SubmissionFormat::ap_json;
}

void print_findings(std::ostream& out, const apub::ValidationReport& report) {
    for (const auto& f : report.findings) {
        out << "  [" << apub::to_string(f.severity) << "] " << apub::to_string(f.gate) << ": " << f.message << "\n";
    }
}

std::string pad(const std::string& s, std::size_t w) { return s.size() >= w ? s : s + std::string(w - s.size(), ' '); }

std::string render_effect(const apub::ClaimTriple& c) {
    if (!c.effect) {
        return "-";
    }
    std::string s = apub::format_number(c.effect->estimate) + " (se " + apub::format_number(c.effect->se) + ")";
    if (c.effect->unit) {
        s += " " + *c.effect->unit;
    }
    return s;
}

int cmd_ingest(const Globals& g, const std::string& file, const std::string& format) {
    const auto cfg = load(g);
    auto engine = open(cfg);
    const auto result = engine->submit(read_input(file), guess_format(file, format), "cli");
    const auto verdict = result.report.verdict;
    if (g.json) {
        nlohmann::json out{{"report", result.report}};
        out["pub_id"] = result.ref ? nlohmann::json(result.ref->pub_id) : nlohmann::json(nullptr);
        out["version"] = result.ref ? nlohmann::json(result.ref->version) : nlohmann::json(nullptr);
        std::cout << out.dump(2) << "\n";
    } else {
        if (result.ref) {
            std::cout << (verdict == apub::Verdict::accepted ? "accepted " : "flagged ") << result.ref->str() << "\n";
        } else {
            std::cout << "rejected\n";
        }
        print_findings(std::cout, result.report);
    }
    if (verdict == apub::Verdict::rejected) {
        return kExitRejected;
    }
    return verdict == apub::Verdict::accepted_flagged ? kExitFlagged : 0;
}

int cmd_query(const Globals& g, const std::string& question, const std::string& zoom_name) {
    const auto zoom = apub::enum_from_string<apub::Zoom>(zoom_name);
    if (!zoom) {
        throw CLI::ValidationError("--zoom", "must be headline, abstract, detailed or data");
    }
    auto engine = open(load(g));
    const auto result = engine->ask(question, *zoom, "cli");
    if (g.json) {
        std::cout << apub::query_response_json(result, *engine).dump(2) << "\n";
        return 0;
    }
    const auto& a = result.detail;
    std::cout << a.text << "\n";
    if (!a.citations.empty()) {
        std::cout << "\nCitations:\n";
        for (const auto& c : a.citations) {
            std::cout << "  [" << c.chunk_id << "] score " << apub::format_number(c.score) << "\n";
        }
    }
    for (const auto& w : a.warnings) {
        std::cout << "Warning: " << w << "\n";
    }
    std::cout << "Confidence: " << apub::to_string(a.confidence) << "\n";
    if (!a.derivation.empty()) {
        std::cout << "Derivation: " << a.derivation << "\n";
    }
    return 0;
}

int cmd_facts(const Globals& g, const apub::FactPattern& pattern, bool include_superseded) {
    if (pattern.empty()) {
        throw CLI::ValidationError("facts", "give at least one of --subject, --relation, --object");
    }
    auto engine = open(load(g));
    const auto result = engine->facts(pattern, include_superseded);
    const auto& graph = engine->graph();
    if (g.json) {
        nlohmann::json facts = nlohmann::json::array();
        for (const auto& f : result.facts) {
            nlohmann::json j = f.claim;
            j["superseded"] = f.superseded;
            j["synthesis"] = f.synthesis ? nlohmann::json(*f.synthesis) : nlohmann::json(nullptr);
            facts.push_back(std::move(j));
        }
        std::cout << nlohmann::json{{"facts", facts}, {"warnings", result.warnings}}.dump(2) << "\n";
        return 0;
    }
    for (const auto& w : result.warnings) {
        std::cerr << "warning: " << w << "\n";
    }
    std::cout << pad("subject", 20) << pad("relation", 14) << pad("object", 20) << pad("effect", 24) << pad("polarity", 10)
              << "source\n";
    for (const auto& f : result.facts) {
        const auto& c = f.claim;
        std::cout << pad(graph.display_name(c.subject), 20) << pad(c.relation, 14) << pad(graph.display_object(c.object), 20)
                  << pad(render_effect(c), 24) << pad(std::string(apub::to_string(c.polarity)), 10) << c.source.ref().str()
                  << (f.superseded ? " (superseded)" : "") << "\n";
    }
    return 0;
}

int cmd_supersede(const Globals& g, const std::string& old_ref, const std::string& new_ref) {
    auto engine = open(load(g));
    const bool changed = engine->supersede(apub::PubRef::parse(old_ref), apub::PubRef::parse(new_ref), "cli");
    if (g.json) {
        std::cout << nlohmann::json{{"superseded", old_ref}, {"by", new_ref}, {"changed", changed}}.dump() << "\n";
    } else {
        std::cout << (changed ? "superseded " : "already superseded ") << old_ref << "\n";
    }
    return 0;
}

int cmd_export(const Globals& g, const std::string& pub_id, std::optional<int> version, const std::string& out_file) {
    auto engine = open(load(g));
    const auto text = engine->export_manuscript(pub_id, version);
    if (out_file.empty() || out_file == "-") {
        std::cout << text;
        return 0;
    }
    std::ofstream out(out_file, std::ios::binary);
    if (!(out << text)) {
        throw apub::Error(apub::ErrorCode::io, "cannot write " + out_file);
    }
    return 0;
}

int cmd_digest(const Globals& g, const std::string& since) {
    auto engine = open(load(g));
    apub::Timestamp t{0};
    if (!since.empty()) {
        t = apub::parse_timestamp(since.size() == 10 ? since + "T00:00:00Z" : since);
    }
    const auto digest = engine->digest(t);
    if (g.json) {
        nlohmann::json themes = nlohmann::json::array();
        for (const auto& th : digest.themes) {
            themes.push_back({{"pub_id", th.pub_id}, {"title", th.title}, {"queries", th.queries}, {"sample_questions", th.sample_questions}});
        }
        nlohmann::json flagged = nlohmann::json::array();
        for (const auto& f : digest.flagged) {
            flagged.push_back({{"query_id", f.query_id}, {"question", f.question}, {"reason", f.reason}});
        }
        std::cout << nlohmann::json{{"since", digest.since},
                                    {"queries", digest.query_count},
                                    {"refused", digest.refused_count},
                                    {"refusal_rate", digest.refusal_rate()},
                                    {"up_votes", digest.up_votes},
                                    {"down_votes", digest.down_votes},
                                    {"themes", themes},
                                    {"flagged", flagged}}
                         .dump(2)
                  << "\n";
        return 0;
    }
    std::cout << apub::render_digest(digest);
    return 0;
}

int cmd_stats(const Globals& g, const std::string& dataset_id) {
    auto engine = open(load(g));
    const auto stats = engine->dataset_stats(dataset_id);
    if (g.json) {
        nlohmann::json out = nlohmann::json::array();
        for (const auto& s : stats) {
            out.push_back({{"name", s.name},
                           {"kind", s.kind},
                           {"count", s.count},
                           {"mean", s.mean ? nlohmann::json(*s.mean) : nlohmann::json(nullptr)},
                           {"min", s.min ? nlohmann::json(*s.min) : nlohmann::json(nullptr)},
                           {"max", s.max ? nlohmann::json(*s.max) : nlohmann::json(nullptr)}});
        }
        std::cout << out.dump(2) << "\n";
        return 0;
    }
    auto num = [](const std::optional<double>& v) { return v ? apub::format_number(*v) : std::string("-"); };
    std::cout << pad("column", 20) << pad("kind", 9) << pad("count", 7) << pad("mean", 14) << pad("min", 14) << "max\n";
    for (const auto& s : stats) {
        std::cout << pad(s.name, 20) << pad(std::string(apub::to_string(s.kind)), 9) << pad(std::to_string(s.count), 7)
                  << pad(num(s.mean), 14) << pad(num(s.min), 14) << num(s.max) << "\n";
    }
    return 0;
}

int cmd_claims(const Globals& g) {
    auto engine = open(load(g));
    const auto claims = engine->claims();
    if (g.json) {
        std::cout << nlohmann::json(claims).dump(2) << "\n";
        return 0;
    }
    // Tab-separated interchange: one header line, empty cells for missing effects.
    const auto& graph = engine->graph();
    std::cout << "subject\trelation\tobject\testimate\tse\tpub_id\n";
    for (const auto& c : claims) {
        std::cout << graph.display_name(c.subject) << '\t' << c.relation << '\t' << graph.display_object(c.object) << '\t'
                  << (c.effect ? apub::format_number(c.effect->estimate) : "") << '\t'
                  << (c.effect ? apub::format_number(c.effect->se) : "") << '\t' << c.source.pub_id << "\n";
    }
    return 0;
}

std::pair<std::string, int> split_addr(const std::string& addr) {
    const auto colon = addr.rfind(':');
    if (colon == std::string::npos) {
        throw CLI::ValidationError("--addr", "expected host:port");
    }
    const auto port = apub::parse_number(addr.substr(colon + 1));
    if (!port || *port < 0 || *port > 65535) {
        throw CLI::ValidationError("--addr", "bad port in '" + addr + "'");
    }
    return {addr.substr(0, colon), static_cast<int>(*port)};
}

int cmd_serve(const Globals& g, const std::string& addr) {
    std::vector<std::pair<std::string, std::string>> overrides;
    if (!addr.empty()) {
        overrides.emplace_back("api.addr", addr);
    }
    const auto cfg = load(g, overrides);
    const auto [host, port] = split_addr(cfg.addr);
    auto engine = open(cfg);
    apub::KeyTable keys;
    if (!cfg.auth_keys_file.empty()) {
        keys = apub::KeyTable::parse(apub::read_file(cfg.auth_keys_file));
    }
    if (cfg.auth_enabled && keys.empty()) {
        std::cerr << "warning: auth enabled with an empty key table; writes will be refused\n";
    }
    apub::ApiOptions opts;
    opts.auth_enabled = cfg.auth_enabled;
    opts.query_requires_key = cfg.auth_query_requires_key;
    opts.cache_ttl_s = cfg.cache_ttl_s;
    opts.rate_limit_per_s = cfg.rate_limit_per_s;
    apub::ApiService service(*engine, opts, keys);
    std::cerr << "listening on " << host << ":" << port << "\n";
    if (!service.serve(host, port)) {
        throw apub::Error(apub::ErrorCode::io, "cannot bind " + cfg.addr);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Agentic publication engine"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config_file, "Config file (key = value sections)");
    app.add_option("--store", g.store, "Store directory (store.path)");
    app.add_option("--providers", g.providers_mode, "Provider mode: mock or remote")->check(CLI::IsMember({"mock", "remote"}));
    app.add_flag("--json", g.json, "Machine-readable output on stdout");

    std::string file;
    std::string format;
    auto* ingest = app.add_subcommand("ingest", "Validate and commit a submission");
    ingest->add_option("file", file, "Submission file, or - for stdin")->required();
    ingest->add_option("--format", format, "ap-json or markdown (default from extension)");

    std::string question;
    std::string zoom = "abstract";
    auto* query = app.add_subcommand("query", "Ask a question");
    query->add_option("question", question)->required();
    query->add_option("--zoom", zoom, "headline, abstract, detailed or data");

    std::string addr;
    auto* serve = app.add_subcommand("serve", "Run the HTTP service");
    serve->add_option("--addr", addr, "host:port (api.addr)");

    apub::FactPattern pattern;
    bool include_superseded = false;
    auto* facts = app.add_subcommand("facts", "List facts matching a pattern");
    facts->add_option("--subject", pattern.subject);
    facts->add_option("--relation", pattern.relation);
    facts->add_option("--object", pattern.object);
    facts->add_flag("--include-superseded", include_superseded);

    std::string old_ref;
    std::string new_ref;
    auto* supersede = app.add_subcommand("supersede", "Mark pub@vN superseded by pub@vM");
    supersede->add_option("old", old_ref, "pub_id@vN")->required();
    supersede->add_option("--by", new_ref, "pub_id@vM")->required();

    std::string pub_id;
    std::optional<int> version;
    std::string out_file;
    auto* exp = app.add_subcommand("export", "Render a publication as markdown");
    exp->add_option("pub_id", pub_id)->required();
    exp->add_option("--version", version);
    exp->add_option("-o,--output", out_file);

    std::string since;
    auto* digest = app.add_subcommand("digest", "Reader feedback digest");
    digest->add_option("--since", since, "ISO date or timestamp");

    std::string dataset_id;
    auto* stats = app.add_subcommand("stats", "Column statistics for a dataset");
    stats->add_option("dataset_id", dataset_id)->required();

    auto* claims = app.add_subcommand("claims", "Export every claim as tab-separated values");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitUsage;
    }

    try {
        if (*ingest) {
            return cmd_ingest(g, file, format);
        }
        if (*query) {
            return cmd_query(g, question, zoom);
        }
        if (*serve) {
            return cmd_serve(g, addr);
        }
        if (*facts) {
            return cmd_facts(g, pattern, include_superseded);
        }
        if (*supersede) {
            return cmd_supersede(g, old_ref, new_ref);
        }
        if (*exp) {
            return cmd_export(g, pub_id, version, out_file);
        }
        if (*digest) {
            return cmd_digest(g, since);
        }
        if (*stats) {
            return cmd_stats(g, dataset_id);
        }
        if (*claims) {
            return cmd_claims(g);
        }
    } catch (const CLI::ValidationError& e) {
        std::cerr << "apub: " << e.what() << "\n";
        return kExitUsage;
    } catch (const apub::Error& e) {
        std::cerr << "apub: " << e.what() << "\n";
        return e.code() == apub::ErrorCode::invalid_argument ? kExitUsage : kExitGeneric;
    } catch (const std::exception& e) {
        std::cerr << "apub: " << e.what() << "\n";
        return kExitGeneric;
    }
    return kExitUsage;
}
