#include "apub/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <regex>
#include <set>
#include <sstream>

#include "apub/graph.hpp"
#include "apub/index.hpp"
#include "apub/store.hpp"

namespace apub {

namespace {

constexpr double kZ95 = 1.96;
constexpr double kCiTolerance = 0.005;

Error parse_error(const std::string& msg) { return Error(ErrorCode::parse, msg); }

Finding finding(Gate gate, Severity severity, std::string message, std::vector<std::string> subjects = {}) {
    return Finding{gate, severity, std::move(message), std::move(subjects)};
}

std::string fmt4(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

std::string fmt_ci(double lo, double hi) { return "[" + fmt4(lo) + ", " + fmt4(hi) + "]"; }

Section section_for_heading(std::string_view heading) {
    if (const auto s = enum_from_string<Section>(to_lower(trim(heading))); s && *s != Section::other) {
        return *s;
    }
    return Section::other;
}

std::string normalize_reference(std::string ref) {
    ref = trim(ref);
    for (const char* prefix : {"https://doi.org/", "http://doi.org/", "https://dx.doi.org/", "http://dx.doi.org/", "doi:"}) {
        if (starts_with_icase(ref, prefix)) {
            return ref.substr(std::string_view(prefix).size());
        }
    }
    return ref;
}

void add_reference(std::vector<std::string>& refs, const std::string& raw) {
    const auto ref = normalize_reference(raw);
    if (!ref.empty() && std::find(refs.begin(), refs.end(), ref) == refs.end()) {
        refs.push_back(ref);
    }
}

std::string strip_blank_edges(const std::vector<std::string>& lines) {
    std::size_t begin = 0;
    std::size_t end = lines.size();
    while (begin < end && trim(lines[begin]).empty()) {
        ++begin;
    }
    while (end > begin && trim(lines[end - 1]).empty()) {
        --end;
    }
    std::string out;
    for (std::size_t i = begin; i < end; ++i) {
        if (i > begin) {
            out += '\n';
        }
        out += lines[i];
    }
    return out;
}

bool is_claim_line(std::string_view line) { return starts_with_icase(trim(line), "claim:"); }

bool has_body(const ParsedDocument& doc) {
    return std::any_of(doc.sections.begin(), doc.sections.end(),
                       [](const ParsedSection& s) { return !trim(s.text).empty(); });
}

void check_claims_strict(const std::vector<std::string>& lines, const std::vector<int>& line_numbers) {
    for (std::size_t i = 0; i < lines.size(); ++i) {
        try {
            parse_claim_line(lines[i]);
        } catch (const Error& e) {
            throw parse_error("line " + std::to_string(line_numbers[i]) + ": " + e.what());
        }
    }
}

std::vector<std::string> split_authors(std::string_view text) {
    const char sep = text.find(';') != std::string_view::npos ? ';' : ',';
    std::vector<std::string> out;
    std::string current;
    for (const char c : text) {
        if (c == sep) {
            out.push_back(trim(current));
            current.clear();
        } else {
            current += c;
        }
    }
    out.push_back(trim(current));
    std::erase_if(out, [](const std::string& s) { return s.empty(); });
    return out;
}

// -- markdown ----------------------------------------------------------------

ParsedDocument parse_markdown(std::string_view payload, bool strict, const Clock& clock) {
    static const std::regex link_re(R"(\[[^\]]*\]\(([^)\s]+)\))");
    static const std::regex refdef_re(R"(^\s*\[[^\]]+\]:\s*(\S+))");

    ParsedDocument doc;
    std::vector<std::string> lines;
    {
        std::string line;
        std::istringstream in{std::string(payload)};
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') {
                line.pop_back();
            }
            lines.push_back(line);
        }
    }

    bool have_title = false;
    bool in_fence = false;
    std::string fence;
    std::optional<ParsedSection> current;
    std::vector<std::string> current_lines;
    std::vector<std::string> preamble;
    std::vector<int> claim_line_numbers;

    auto close_section = [&]() {
        // Reference lists live in metadata; indexing them would make any two
        // papers citing the same work look like duplicates.
        if (current && !iequals(current->heading, "references")) {
            current->text = strip_blank_edges(current_lines);
            doc.sections.push_back(std::move(*current));
        }
        current.reset();
        current_lines.clear();
    };

    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::string& line = lines[i];
        const std::string t = trim(line);
        if (t.rfind("```", 0) == 0 || t.rfind("~~~", 0) == 0) {
            const std::string marker = t.substr(0, 3);
            if (!in_fence) {
                in_fence = true;
                fence = marker;
            } else if (marker == fence) {
                in_fence = false;
            }
        } else if (!in_fence) {
            if (!have_title && line.rfind("# ", 0) == 0) {
                doc.metadata.title = trim(line.substr(2));
                have_title = true;
                continue;
            }
            if (line.rfind("## ", 0) == 0) {
                close_section();
                ParsedSection s;
                s.heading = trim(line.substr(3));
                s.label = section_for_heading(s.heading);
                current = std::move(s);
                continue;
            }
            std::smatch m;
            for (auto it = std::sregex_iterator(line.begin(), line.end(), link_re); it != std::sregex_iterator(); ++it) {
                add_reference(doc.metadata.references, (*it)[1].str());
            }
            if (std::regex_search(line, m, refdef_re)) {
                add_reference(doc.metadata.references, m[1].str());
            }
            if (current && iequals(current->heading, "claims") && is_claim_line(line)) {
                doc.claims_declared.push_back(t);
                claim_line_numbers.push_back(static_cast<int>(i + 1));
            }
            if (current && iequals(current->heading, "references") && !t.empty()) {
                std::string ref = t;
                if (ref.rfind("- ", 0) == 0 || ref.rfind("* ", 0) == 0) {
                    ref = trim(ref.substr(2));
                }
                if (ref.find(' ') == std::string::npos) {
                    add_reference(doc.metadata.references, ref);
                }
            }
            if (!current) {
                const auto colon = t.find(':');
                const std::string key = colon == std::string::npos ? "" : to_lower(trim(t.substr(0, colon)));
                const std::string value = colon == std::string::npos ? "" : trim(t.substr(colon + 1));
                if (key == "authors" || key == "author") {
                    for (auto& name : split_authors(value)) {
                        doc.metadata.authors.push_back(Author{name, std::nullopt});
                    }
                    continue;
                }
                if (key == "date") {
                    doc.metadata.date = value;
                    continue;
                }
                if (key == "venue") {
                    doc.metadata.venue = value;
                    continue;
                }
                if (key == "keywords") {
                    for (auto& kw : split_authors(value)) {
                        doc.metadata.keywords.push_back(kw);
                    }
                    continue;
                }
                if (key == "status") {
                    continue;
                }
                if (key == "doi") {
                    doc.metadata.doi = normalize_reference(value);
                    continue;
                }
                preamble.push_back(line);
                continue;
            }
        }
        if (current) {
            current_lines.push_back(line);
        } else {
            preamble.push_back(line);
        }
    }
    close_section();

    const std::string pre = strip_blank_edges(preamble);
    if (!pre.empty()) {
        doc.sections.insert(doc.sections.begin(), ParsedSection{Section::other, "", pre});
    }
    if (doc.metadata.date.empty()) {
        doc.metadata.date = format_timestamp(clock()).substr(0, 10);
    }
    if (strict) {
        if (doc.metadata.title.empty()) {
            throw parse_error("missing title (expected a '# ' heading)");
        }
        if (!has_body(doc)) {
            throw parse_error("empty body");
        }
        check_claims_strict(doc.claims_declared, claim_line_numbers);
    }
    return doc;
}

// -- ap-json -----------------------------------------------------------------

template <class T>
T get_as(const json& j, const char* key, const char* what) {
    try {
        return j.get<T>();
    } catch (const json::exception&) {
        throw parse_error(std::string("field '") + key + "' must be " + what);
    }
}

std::string cell_text(const json& cell) {
    if (cell.is_string()) {
        return cell.get<std::string>();
    }
    if (cell.is_number()) {
        return format_number(cell.get<double>());
    }
    if (cell.is_null()) {
        return "";
    }
    if (cell.is_boolean()) {
        return cell.get<bool>() ? "true" : "false";
    }
    throw parse_error("dataset cells must be strings or numbers");
}

ParsedDocument parse_ap_json(std::string_view payload, bool strict) {
    json j = json::parse(payload, nullptr, false);
    if (j.is_discarded()) {
        throw parse_error("malformed JSON payload");
    }
    if (!j.is_object()) {
        throw parse_error("ap-json payload must be an object");
    }
    ParsedDocument doc;
    auto& meta = doc.metadata;
    if (j.contains("title")) {
        meta.title = trim(get_as<std::string>(j["title"], "title", "a string"));
    }
    if (j.contains("pub_id")) {
        meta.pub_id = get_as<std::string>(j["pub_id"], "pub_id", "a string");
    }
    if (j.contains("authors")) {
        if (!j["authors"].is_array()) {
            throw parse_error("field 'authors' must be an array");
        }
        for (const auto& a : j["authors"]) {
            if (a.is_string()) {
                meta.authors.push_back(Author{a.get<std::string>(), std::nullopt});
            } else if (a.is_object() && a.contains("name") && a["name"].is_string()) {
                Author author{a["name"].get<std::string>(), std::nullopt};
                if (a.contains("orcid") && a["orcid"].is_string()) {
                    author.orcid = a["orcid"].get<std::string>();
                }
                meta.authors.push_back(std::move(author));
            } else {
                throw parse_error("each author needs a string 'name'");
            }
        }
    }
    if (j.contains("date")) {
        meta.date = get_as<std::string>(j["date"], "date", "a string");
    }
    if (j.contains("keywords")) {
        meta.keywords = get_as<std::vector<std::string>>(j["keywords"], "keywords", "an array of strings");
    }
    if (j.contains("venue") && !j["venue"].is_null()) {
        meta.venue = get_as<std::string>(j["venue"], "venue", "a string");
    }
    if (j.contains("doi") && !j["doi"].is_null()) {
        meta.doi = normalize_reference(get_as<std::string>(j["doi"], "doi", "a string"));
    }
    if (j.contains("references")) {
        for (const auto& r : get_as<std::vector<std::string>>(j["references"], "references", "an array of strings")) {
            add_reference(meta.references, r);
        }
    }
    if (j.contains("review_score") && !j["review_score"].is_null()) {
        if (!j["review_score"].is_number_integer()) {
            throw parse_error("field 'review_score' must be an integer");
        }
        meta.provenance.review_score = j["review_score"].get<int>();
    }
    if (j.contains("sections")) {
        if (!j["sections"].is_array()) {
            throw parse_error("field 'sections' must be an array");
        }
        for (const auto& s : j["sections"]) {
            if (!s.is_object() || !s.contains("text") || !s["text"].is_string()) {
                throw parse_error("each section needs a string 'text'");
            }
            ParsedSection section;
            const std::string label = s.contains("label") && s["label"].is_string() ? s["label"].get<std::string>() : "";
            section.label = section_for_heading(label);
            section.heading = s.contains("heading") && s["heading"].is_string() ? s["heading"].get<std::string>() : label;
            section.text = strip_blank_edges({s["text"].get<std::string>()});
            doc.sections.push_back(std::move(section));
        }
    }
    if (j.contains("claims")) {
        doc.claims_declared = get_as<std::vector<std::string>>(j["claims"], "claims", "an array of strings");
        for (auto& c : doc.claims_declared) {
            c = trim(c);
        }
    }
    if (j.contains("datasets")) {
        if (!j["datasets"].is_array()) {
            throw parse_error("field 'datasets' must be an array");
        }
        int n = 0;
        for (const auto& d : j["datasets"]) {
            if (!d.is_object()) {
                throw parse_error("each dataset must be an object");
            }
            DatasetRecord ds;
            if (d.contains("dataset_id") && d["dataset_id"].is_string()) {
                ds.dataset_id = d["dataset_id"].get<std::string>();
            }
            ds.name = d.contains("name") && d["name"].is_string() ? d["name"].get<std::string>() : "d" + std::to_string(n);
            if (!d.contains("columns") || !d["columns"].is_array()) {
                throw parse_error("dataset '" + ds.name + "' needs a 'columns' array");
            }
            for (const auto& c : d["columns"]) {
                Column col;
                if (c.is_string()) {
                    col.name = c.get<std::string>();
                } else if (c.is_object() && c.contains("name") && c["name"].is_string()) {
                    col.name = c["name"].get<std::string>();
                    if (c.contains("kind")) {
                        const auto kind = enum_from_string<ColumnKind>(c["kind"].is_string() ? c["kind"].get<std::string>() : "");
                        if (!kind) {
                            throw parse_error("dataset '" + ds.name + "': column kind must be numeric or text");
                        }
                        col.kind = *kind;
                    }
                } else {
                    throw parse_error("dataset '" + ds.name + "': bad column");
                }
                ds.columns.push_back(std::move(col));
            }
            if (d.contains("rows")) {
                if (!d["rows"].is_array()) {
                    throw parse_error("dataset '" + ds.name + "': 'rows' must be an array");
                }
                for (const auto& row : d["rows"]) {
                    if (!row.is_array()) {
                        throw parse_error("dataset '" + ds.name + "': each row must be an array");
                    }
                    std::vector<std::string> cells;
                    for (const auto& cell : row) {
                        cells.push_back(cell_text(cell));
                    }
                    ds.rows.push_back(std::move(cells));
                }
            }
            doc.datasets.push_back(std::move(ds));
            ++n;
        }
    }
    if (strict) {
        if (meta.title.empty()) {
            throw parse_error("missing title");
        }
        if (!has_body(doc)) {
            throw parse_error("empty body");
        }
        std::vector<int> numbers;
        for (std::size_t i = 0; i < doc.claims_declared.size(); ++i) {
            numbers.push_back(static_cast<int>(i + 1));
        }
        try {
            check_claims_strict(doc.claims_declared, numbers);
        } catch (const Error& e) {
            throw parse_error(std::string("claims ") + e.what());
        }
    }
    return doc;
}

std::vector<std::string> split_paragraphs(const std::string& text) {
    std::vector<std::string> out;
    std::vector<std::string> buf;
    std::istringstream in(text);
    std::string line;
    auto flush = [&]() {
        const auto p = strip_blank_edges(buf);
        if (!p.empty()) {
            out.push_back(trim(p));
        }
        buf.clear();
    };
    while (std::getline(in, line)) {
        if (trim(line).empty()) {
            flush();
        } else {
            buf.push_back(line);
        }
    }
    flush();
    return out;
}

std::string claim_label(const DraftClaim& c) { return c.subject + " | " + c.relation + " | " + c.object; }

bool mentions(const std::string& haystack_lower, const std::string& name) {
    const auto n = normalize_name(name);
    return !n.empty() && haystack_lower.find(n) != std::string::npos;
}

}  // namespace

SubmissionFormat parse_format(std::string_view tag) {
    if (tag == "ap-json") {
        return SubmissionFormat::ap_json;
    }
    if (tag == "markdown") {
        return SubmissionFormat::markdown;
    }
    throw invalid_argument("unknown format tag '" + std::string(tag) + "' (expected ap-json or markdown)");
}

std::string_view format_tag(SubmissionFormat format) {
    return format == SubmissionFormat::ap_json ? "ap-json" : "markdown";
}

ParsedDocument parse_submission(std::string_view payload, SubmissionFormat format, bool strict, const Clock& clock) {
    return format == SubmissionFormat::ap_json ? parse_ap_json(payload, strict) : parse_markdown(payload, strict, clock);
}

DraftClaim parse_claim_line(std::string_view line, bool require_prefix) {
    std::string body = trim(line);
    if (starts_with_icase(body, "claim:")) {
        body = body.substr(6);
    } else if (require_prefix) {
        throw parse_error("claim line must start with 'CLAIM:'");
    }
    std::vector<std::string> parts;
    {
        std::string cur;
        for (const char c : body) {
            if (c == '|') {
                parts.push_back(trim(cur));
                cur.clear();
            } else {
                cur += c;
            }
        }
        parts.push_back(trim(cur));
    }
    if (parts.size() < 3 || parts[0].empty() || parts[1].empty() || parts[2].empty()) {
        throw parse_error("claim needs 'subject | relation | object'");
    }
    DraftClaim c;
    c.subject = parts[0];
    c.relation = normalize_relation(parts[1]);
    c.object = parts[2];
    c.line = trim(line);
    std::optional<double> effect;
    std::optional<double> se;
    std::optional<std::array<double, 2>> ci;
    std::optional<std::string> unit;
    std::set<std::string> seen;
    for (std::size_t i = 3; i < parts.size(); ++i) {
        const auto eq = parts[i].find('=');
        if (eq == std::string::npos) {
            throw parse_error("claim option '" + parts[i] + "' is not key=value");
        }
        const std::string key = to_lower(trim(parts[i].substr(0, eq)));
        const std::string value = trim(parts[i].substr(eq + 1));
        if (!seen.insert(key).second) {
            throw parse_error("claim option '" + key + "' given twice");
        }
        auto number = [&](const std::string& v) {
            const auto n = parse_number(v);
            if (!n) {
                throw parse_error("claim option '" + key + "': '" + v + "' is not a number");
            }
            return *n;
        };
        if (key == "effect") {
            effect = number(value);
        } else if (key == "se") {
            se = number(value);
            if (*se <= 0) {
                throw parse_error("claim option 'se' must be > 0");
            }
        } else if (key == "ci95") {
            const auto comma = value.find(',');
            if (comma == std::string::npos) {
                throw parse_error("claim option 'ci95' must be lo,hi");
            }
            ci = std::array<double, 2>{number(trim(value.substr(0, comma))), number(trim(value.substr(comma + 1)))};
            if ((*ci)[0] > (*ci)[1]) {
                throw parse_error("claim option 'ci95' has lo > hi");
            }
        } else if (key == "polarity") {
            const auto p = enum_from_string<Polarity>(to_lower(value));
            if (!p) {
                throw parse_error("claim option 'polarity' must be supports or refutes");
            }
            c.polarity = *p;
        } else if (key == "unit") {
            if (value.empty()) {
                throw parse_error("claim option 'unit' is empty");
            }
            unit = value;
        } else {
            throw parse_error("unknown claim option '" + key + "'");
        }
    }
    if (effect.has_value() != se.has_value()) {
        throw parse_error("claim options 'effect' and 'se' must be given together");
    }
    if ((ci || unit) && !effect) {
        throw parse_error("claim options 'ci95' and 'unit' need 'effect' and 'se'");
    }
    if (effect) {
        c.effect = Effect{*effect, *se, ci, unit};
    }
    return c;
}

std::string format_claim_line(const DraftClaim& c) {
    std::string out = "CLAIM: " + c.subject + " | " + c.relation + " | " + c.object;
    if (c.effect) {
        out += " | effect=" + format_number(c.effect->estimate) + " | se=" + format_number(c.effect->se);
        if (c.effect->ci95) {
            out += " | ci95=" + format_number((*c.effect->ci95)[0]) + "," + format_number((*c.effect->ci95)[1]);
        }
        if (c.effect->unit) {
            out += " | unit=" + *c.effect->unit;
        }
    }
    if (c.polarity == Polarity::refutes) {
        out += " | polarity=refutes";
    }
    return out;
}

std::vector<Chunk> chunk_document(const ParsedDocument& doc, const PubRef& ref, const ChunkPolicy& policy,
                                  std::vector<Finding>* findings) {
    if (policy.max_words < 20) {
        throw invalid_argument("chunk policy max_words must be >= 20");
    }
    std::vector<Chunk> chunks;
    auto emit = [&](const ParsedSection& s, int section_index, std::string text) {
        Chunk c;
        c.pub_id = ref.pub_id;
        c.version = ref.version;
        c.section = s.label;
        c.heading = s.heading;
        c.section_index = section_index;
        c.ordinal = static_cast<int>(chunks.size());
        c.chunk_id = make_chunk_id(ref, c.ordinal);
        c.text = std::move(text);
        c.word_count = static_cast<int>(word_count(c.text));
        if (c.word_count > policy.max_words && findings != nullptr) {
            findings->push_back(finding(Gate::schema, Severity::warn,
                                        "chunk " + c.chunk_id + " is a single sentence of " +
                                            std::to_string(c.word_count) + " words (max " +
                                            std::to_string(policy.max_words) + ")",
                                        {c.chunk_id}));
        }
        chunks.push_back(std::move(c));
    };
    for (std::size_t si = 0; si < doc.sections.size(); ++si) {
        const auto& section = doc.sections[si];
        for (const auto& paragraph : split_paragraphs(section.text)) {
            // Token-free paragraphs (rules, lone punctuation) cannot be embedded.
            if (tokenize(paragraph).empty()) {
                continue;
            }
            const auto words = static_cast<int>(word_count(paragraph));
            if (policy.split_level == ChunkPolicy::SplitLevel::paragraph && words <= policy.max_words) {
                emit(section, static_cast<int>(si), paragraph);
                continue;
            }
            std::string piece;
            int piece_words = 0;
            for (const auto& sentence : split_sentences(paragraph)) {
                if (tokenize(sentence).empty() && !piece.empty()) {
                    piece += " " + sentence;
                    continue;
                }
                const int n = static_cast<int>(word_count(sentence));
                const bool by_sentence = policy.split_level == ChunkPolicy::SplitLevel::sentence;
                if (!piece.empty() && (by_sentence || piece_words + n > policy.max_words)) {
                    emit(section, static_cast<int>(si), piece);
                    piece.clear();
                    piece_words = 0;
                }
                piece += piece.empty() ? sentence : " " + sentence;
                piece_words += n;
            }
            if (!piece.empty() && !tokenize(piece).empty()) {
                emit(section, static_cast<int>(si), piece);
            }
        }
    }
    return chunks;
}

void attribute_claims(std::vector<DraftClaim>& claims, const std::vector<Chunk>& chunks) {
    std::vector<std::string> lowered;
    for (const auto& c : chunks) {
        lowered.push_back(normalize_name(c.text));
    }
    for (auto& claim : claims) {
        if (claim.generated || chunks.empty()) {
            continue;
        }
        auto pick = [&]() -> int {
            if (!claim.line.empty()) {
                for (const auto& c : chunks) {
                    if (c.text.find(claim.line) != std::string::npos) {
                        return c.ordinal;
                    }
                }
            }
            for (std::size_t i = 0; i < chunks.size(); ++i) {
                if (mentions(lowered[i], claim.subject) && mentions(lowered[i], claim.object)) {
                    return chunks[i].ordinal;
                }
            }
            for (std::size_t i = 0; i < chunks.size(); ++i) {
                if (mentions(lowered[i], claim.subject)) {
                    return chunks[i].ordinal;
                }
            }
            return chunks.front().ordinal;
        };
        claim.chunk_ordinal = pick();
    }
}

std::vector<DraftClaim> extract_claims(const ParsedDocument& doc, const std::vector<Chunk>& chunks,
                                       const Composer* composer, std::vector<Finding>& findings) {
    std::vector<DraftClaim> out;
    for (std::size_t i = 0; i < doc.claims_declared.size(); ++i) {
        try {
            out.push_back(parse_claim_line(doc.claims_declared[i]));
        } catch (const Error& e) {
            findings.push_back(finding(Gate::schema, Severity::warn,
                                       "claim " + std::to_string(i + 1) + " skipped: " + e.what() + " ('" +
                                           doc.claims_declared[i] + "')"));
        }
    }
    attribute_claims(out, chunks);
    if (composer == nullptr) {
        return out;
    }
    for (const auto& chunk : chunks) {
        const auto lines = composer->list_claims(chunk.text);
        if (!lines) {
            break;
        }
        for (const auto& line : *lines) {
            try {
                auto claim = parse_claim_line(line, false);
                claim.generated = true;
                claim.chunk_ordinal = chunk.ordinal;
                claim.line.clear();
                out.push_back(std::move(claim));
            } catch (const Error& e) {
                findings.push_back(finding(Gate::schema, Severity::warn,
                                           "generated claim skipped in " + chunk.chunk_id + ": " + e.what(),
                                           {chunk.chunk_id}));
            }
        }
    }
    return out;
}

std::vector<Finding> check_schema(const ParsedDocument& doc) {
    std::vector<Finding> out;
    if (trim(doc.metadata.title).empty()) {
        out.push_back(finding(Gate::schema, Severity::reject, "missing title"));
    }
    if (!has_body(doc)) {
        out.push_back(finding(Gate::schema, Severity::reject, "no sections with text"));
    } else {
        bool embeddable = false;
        for (const auto& s : doc.sections) {
            embeddable = embeddable || !tokenize(s.text).empty();
        }
        if (!embeddable) {
            out.push_back(finding(Gate::schema, Severity::reject, "no section contains any words"));
        }
    }
    if (!is_valid_date(doc.metadata.date)) {
        out.push_back(finding(Gate::schema, Severity::reject, "invalid date '" + doc.metadata.date + "'"));
    }
    if (const auto& score = doc.metadata.provenance.review_score; score && (*score < 1 || *score > 5)) {
        out.push_back(finding(Gate::schema, Severity::reject, "review_score must be in 1..5"));
    }
    std::set<std::string> names;
    for (const auto& d : doc.datasets) {
        if (!names.insert(d.dataset_id.empty() ? d.name : d.dataset_id).second) {
            out.push_back(finding(Gate::schema, Severity::reject, "duplicate dataset '" + d.name + "'"));
        }
        if (d.columns.empty()) {
            out.push_back(finding(Gate::schema, Severity::reject, "dataset '" + d.name + "' has no columns"));
            continue;
        }
        for (std::size_t r = 0; r < d.rows.size(); ++r) {
            if (d.rows[r].size() != d.columns.size()) {
                out.push_back(finding(Gate::schema, Severity::reject,
                                      "dataset '" + d.name + "' row " + std::to_string(r) + " has " +
                                          std::to_string(d.rows[r].size()) + " cells, expected " +
                                          std::to_string(d.columns.size())));
                continue;
            }
            for (std::size_t c = 0; c < d.columns.size(); ++c) {
                if (d.columns[c].kind == ColumnKind::numeric && !d.rows[r][c].empty() && !parse_number(d.rows[r][c])) {
                    out.push_back(finding(Gate::schema, Severity::reject,
                                          "dataset '" + d.name + "' row " + std::to_string(r) + " column '" +
                                              d.columns[c].name + "': '" + d.rows[r][c] + "' is not numeric"));
                }
            }
        }
    }
    return out;
}

std::vector<Finding> check_duplicates(const std::vector<Chunk>& chunks, const std::vector<EmbeddingVector>& vectors,
                                      const VectorIndex& index, double threshold) {
    std::vector<Finding> out;
    if (index.size() == 0) {
        return out;
    }
    for (std::size_t i = 0; i < chunks.size() && i < vectors.size(); ++i) {
        const auto hits = index.search(vectors[i], 1);
        if (!hits.empty() && hits.front().score >= threshold) {
            out.push_back(finding(Gate::duplicate, Severity::warn,
                                  chunks[i].chunk_id + " is a near-duplicate of " + hits.front().chunk_id + " (cosine " +
                                      fmt4(hits.front().score) + ")",
                                  {chunks[i].chunk_id, hits.front().chunk_id}));
        }
    }
    return out;
}

std::vector<Finding> check_references(const ParsedDocument& doc, const Store& store) {
    std::vector<Finding> out;
    for (const auto& ref : doc.metadata.references) {
        if (is_doi(ref) || store.latest_version(ref).has_value()) {
            continue;
        }
        out.push_back(finding(Gate::reference, Severity::warn, "unresolvable reference '" + ref + "'", {ref}));
    }
    return out;
}

std::vector<Finding> check_statistics(const std::vector<DraftClaim>& claims) {
    std::vector<Finding> out;
    for (const auto& c : claims) {
        if (!c.effect || !c.effect->ci95) {
            continue;
        }
        const auto& e = *c.effect;
        const double lo = e.estimate - kZ95 * e.se;
        const double hi = e.estimate + kZ95 * e.se;
        if (std::abs((*e.ci95)[0] - lo) > kCiTolerance || std::abs((*e.ci95)[1] - hi) > kCiTolerance) {
            out.push_back(finding(Gate::statistics, Severity::warn,
                                  "claim '" + claim_label(c) + "': reported ci95 " + fmt_ci((*e.ci95)[0], (*e.ci95)[1]) +
                                      " does not match estimate " + format_number(e.estimate) + " and se " +
                                      format_number(e.se) + "; expected " + fmt_ci(lo, hi)));
        }
    }
    return out;
}

namespace {

std::optional<ClaimTriple> resolve_draft(const DraftClaim& d, const Graph& graph) {
    const auto subject = graph.lookup(d.subject);
    const auto object = graph.lookup_object(d.object);
    if (!subject || !object) {
        return std::nullopt;
    }
    ClaimTriple t;
    t.subject = *subject;
    t.relation = normalize_relation(d.relation);
    t.object = *object;
    t.effect = d.effect;
    t.polarity = d.polarity;
    return t;
}

}  // namespace

std::vector<Finding> check_contradictions(const std::vector<DraftClaim>& claims, const Graph& graph) {
    std::vector<Finding> out;
    for (const auto& d : claims) {
        const auto t = resolve_draft(d, graph);
        if (!t) {
            continue;
        }
        for (const auto& existing : graph.group_claims(group_of(*t))) {
            if (const auto reason = conflict_reason(*t, existing)) {
                out.push_back(finding(Gate::contradiction, Severity::warn,
                                      "claim '" + claim_label(d) + "' contradicts " + existing.claim_id + " (" +
                                          existing.source.ref().str() + "): " + *reason,
                                      {existing.claim_id}));
            }
        }
    }
    return out;
}

namespace {

std::vector<Finding> check_units(const std::vector<DraftClaim>& claims, const Graph& graph) {
    std::vector<Finding> out;
    for (const auto& d : claims) {
        if (!d.effect) {
            continue;
        }
        const auto t = resolve_draft(d, graph);
        if (!t) {
            continue;
        }
        for (const auto& existing : graph.group_claims(group_of(*t))) {
            if (existing.effect && existing.effect->unit != d.effect->unit) {
                out.push_back(finding(Gate::statistics, Severity::warn,
                                      "claim '" + claim_label(d) + "' has unit '" + d.effect->unit.value_or("") +
                                          "' but " + existing.claim_id + " uses '" +
                                          existing.effect->unit.value_or("") + "'; the group cannot be pooled",
                                      {existing.claim_id}));
                break;
            }
        }
    }
    return out;
}

}  // namespace

ValidationReport validate(const GateInputs& in, std::vector<Finding> extra) {
    ValidationReport report;
    auto append = [&](std::vector<Finding> f) {
        report.findings.insert(report.findings.end(), std::make_move_iterator(f.begin()), std::make_move_iterator(f.end()));
    };
    append(check_schema(*in.doc));
    append(std::move(extra));
    if (verdict_for(report.findings) != Verdict::rejected) {
        if (in.chunks != nullptr && in.vectors != nullptr && in.index != nullptr) {
            append(check_duplicates(*in.chunks, *in.vectors, *in.index, in.duplicate_threshold));
        }
        if (in.store != nullptr) {
            append(check_references(*in.doc, *in.store));
        }
        if (in.claims != nullptr) {
            append(check_statistics(*in.claims));
            if (in.graph != nullptr) {
                append(check_units(*in.claims, *in.graph));
                append(check_contradictions(*in.claims, *in.graph));
            }
        }
    }
    report.verdict = verdict_for(report.findings);
    return report;
}

std::string generate_pub_id(const Publication& meta) {
    return "ap:" + hex64(fnv1a64(meta.title + "\x1f" + meta.date)).substr(0, 12);
}

}  // namespace apub
