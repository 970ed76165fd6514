#pragma once

// Shared fixtures for the test binaries.

#include <atomic>
#include <filesystem>
#include <random>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "apub/api.hpp"
#include "apub/config.hpp"
#include "apub/engine.hpp"

namespace apub::testing {

/// Removes the directory on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("apub-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

struct SectionSpec {
    std::string heading;
    std::string text;
};

struct DocSpec {
    std::string title;
    std::string date = "2024-01-01";
    std::vector<std::string> authors;
    std::vector<SectionSpec> sections;
    std::vector<std::string> claims;
    std::vector<std::string> references;
};

inline std::string render_markdown(const DocSpec& d) {
    std::ostringstream out;
    if (!d.title.empty()) {
        out << "# " << d.title << "\n";
    }
    if (!d.authors.empty()) {
        out << "Authors: ";
        for (std::size_t i = 0; i < d.authors.size(); ++i) {
            out << (i ? "; " : "") << d.authors[i];
        }
        out << "\n";
    }
    if (!d.date.empty()) {
        out << "Date: " << d.date << "\n";
    }
    out << "\n";
    for (const auto& s : d.sections) {
        out << "## " << s.heading << "\n\n" << s.text << "\n\n";
    }
    if (!d.claims.empty()) {
        out << "## Claims\n\n";
        for (const auto& c : d.claims) {
            out << "CLAIM: " << c << "\n";
        }
        out << "\n";
    }
    if (!d.references.empty()) {
        out << "## References\n\n";
        for (const auto& r : d.references) {
            out << "- " << r << "\n";
        }
    }
    return out.str();
}

/// Deterministic engine over `dir` with the mock providers.
inline std::unique_ptr<Engine> make_engine(const std::filesystem::path& dir, EngineOptions options = {},
                                           Timestamp start = parse_timestamp("2025-01-01T00:00:00Z")) {
    options.store_path = dir;
    EngineDeps deps;
    deps.clock = stepping_clock(start, 1000);
    auto counter = std::make_shared<std::atomic<int>>(0);
    deps.next_id = [counter] { return "q" + std::to_string(++*counter); };
    deps.embedder = std::make_shared<HashEmbedder>();
    deps.composer = std::make_shared<ExtractiveComposer>();
    return Engine::open(options, deps);
}

inline PubRef submit_ok(Engine& engine, const DocSpec& doc) {
    const auto r = engine.submit(render_markdown(doc), SubmissionFormat::markdown, "test");
    if (!r.ref) {
        std::string msg = "submission rejected:";
        for (const auto& f : r.report.findings) {
            msg += " [" + std::string(to_string(f.gate)) + "] " + f.message;
        }
        throw std::runtime_error(msg);
    }
    return *r.ref;
}

/// Topic vocabularies with no overlap between them.
inline const std::vector<std::string>& science_words() {
    static const std::vector<std::string> w = {
        "protein",  "enzyme",    "catalysis", "membrane",  "receptor",  "ligand",   "kinase",    "genome",
        "neuron",   "synapse",   "cortex",    "plasma",    "isotope",   "photon",   "quantum",   "lattice",
        "crystal",  "polymer",   "solvent",   "reactor",   "catalyst",  "mitosis",  "ribosome",  "antibody",
        "vaccine",  "pathogen",  "microbe",   "biofilm",   "glacier",   "sediment", "aquifer",   "isotherm",
        "enthalpy", "entropy",   "spectrum",  "neutrino",  "galaxy",    "nebula",   "pulsar",    "magnetar",
        "tensor",   "manifold",  "eigenvalue", "gradient", "plasmid",   "cytokine", "telomere",  "chromatin",
        "vitamin",  "cobalamin", "serum",     "dosage",    "placebo",   "cohort",   "trial",     "biomarker",
        "insulin",  "glucose",   "lipid",     "cholesterol", "hormone", "thyroid",  "hepatic",   "renal"};
    return w;
}

inline const std::vector<std::string>& offtopic_words() {
    static const std::vector<std::string> w = {
        "swallow",  "airspeed",  "football", "guitar",   "recipe",   "pasta",    "holiday",  "beach",
        "sneaker",  "karaoke",   "festival", "poker",    "lottery",  "wedding",  "garden",   "tulip",
        "parrot",   "hamster",   "sofa",     "curtain",  "carpet",   "lantern",  "picnic",   "bicycle",
        "skateboard", "umbrella", "sandwich", "pancake", "waffle",   "opera",    "ballet",   "cinema",
        "jigsaw",   "chess",     "tennis",   "cricket",  "rugby",    "marathon", "yacht",    "canoe",
        "pirate",   "castle",    "dragon",   "wizard",   "unicorn",  "cartoon",  "comic",    "puppet"};
    return w;
}

inline std::string random_sentence(std::mt19937_64& rng, const std::vector<std::string>& vocab, int min_words = 6,
                                   int max_words = 14) {
    std::uniform_int_distribution<int> len(min_words, max_words);
    std::uniform_int_distribution<std::size_t> pick(0, vocab.size() - 1);
    const int n = len(rng);
    std::string s;
    for (int i = 0; i < n; ++i) {
        std::string w = vocab[pick(rng)];
        if (i == 0) {
            w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
        }
        s += (i ? " " : "") + w;
    }
    return s + ".";
}

inline std::string random_paragraph(std::mt19937_64& rng, const std::vector<std::string>& vocab, int sentences) {
    std::string p;
    for (int i = 0; i < sentences; ++i) {
        p += (i ? " " : "") + random_sentence(rng, vocab);
    }
    return p;
}

inline std::filesystem::path source_dir() { return APUB_SOURCE_DIR; }

/// Markdown rendering of the repository's paper.md: the first line becomes the
/// title, numbered headings and the front-matter labels become `##` sections.
/// Everything from the reference list on is dropped.
inline std::string paper_fixture_markdown() {
    const std::string text = read_file(source_dir() / "paper.md");
    std::istringstream in(text);
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(in, line)) {
        lines.push_back(line);
    }
    static const std::regex numbered(R"(^\d+(\.\d+)*\.? [A-Z].*)");
    std::string title;
    std::size_t start = lines.size();
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto t = trim(lines[i]);
        if (title.empty() && !t.empty()) {
            title = t;
        }
        if (t == "Abstract") {
            start = i;
            break;
        }
    }
    std::string out = "# " + title + "\nDate: 2025-01-01\n\n";
    for (std::size_t i = start; i < lines.size(); ++i) {
        std::string t = trim(lines[i]);
        if (t == "References") {
            break;
        }
        if (t == "Abstract" || t == "Keywords" || t == "Highlights" || (t.size() < 80 && std::regex_match(t, numbered))) {
            if (!t.empty() && t.back() == ':') {
                t.pop_back();
            }
            out += "## " + t + "\n";
        } else {
            out += lines[i] + "\n";
        }
    }
    return out;
}

inline ApiRequest get(const std::string& path, std::map<std::string, std::string> query = {}) {
    ApiRequest r;
    r.method = "GET";
    r.path = path;
    r.query = std::move(query);
    r.client = "test";
    return r;
}

inline ApiRequest post(const std::string& path, std::string body, std::map<std::string, std::string> headers = {}) {
    ApiRequest r;
    r.method = "POST";
    r.path = path;
    r.body = std::move(body);
    r.headers = std::move(headers);
    r.client = "test";
    return r;
}

}  // namespace apub::testing
