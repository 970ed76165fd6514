#include <gtest/gtest.h>

#include "apub/ingest.hpp"
#include "support.hpp"

using namespace apub;
using apub::testing::DocSpec;
using apub::testing::render_markdown;

namespace {

const Clock kClock = stepping_clock(parse_timestamp("2025-03-04T05:06:07Z"));

ParsedDocument parse_md(const std::string& text, bool strict = true) {
    return parse_submission(text, SubmissionFormat::markdown, strict, kClock);
}

bool has_gate(const std::vector<Finding>& findings, Gate gate, Severity severity) {
    return std::any_of(findings.begin(), findings.end(),
                       [&](const Finding& f) { return f.gate == gate && f.severity == severity; });
}

std::string words(int n, const std::string& w = "word") {
    std::string s;
    for (int i = 0; i < n; ++i) {
        s += (i ? " " : "") + w + std::to_string(i);
    }
    return s;
}

}  // namespace

TEST(ParseMarkdown, MinimalDocument) {
    const auto doc = parse_md("# T\n\n## Abstract\n\nOne paragraph of text.\n");
    EXPECT_EQ(doc.metadata.title, "T");
    ASSERT_EQ(doc.sections.size(), 1u);
    EXPECT_EQ(doc.sections[0].label, Section::abstract);
    EXPECT_EQ(doc.sections[0].text, "One paragraph of text.");
}

TEST(ParseMarkdown, FrontMatterAndSectionLabels) {
    const auto doc = parse_md(
        "# Title Here\nAuthors: Ada Lovelace; Alan Turing\nDate: 2024-05-06\nVenue: Journal\nKeywords: a, b\n"
        "DOI: https://doi.org/10.1234/abc\n\n## METHODS\n\nM.\n\n## Results\n\nR.\n\n## Appendix\n\nX.\n");
    EXPECT_EQ(doc.metadata.authors.size(), 2u);
    EXPECT_EQ(doc.metadata.authors[1].name, "Alan Turing");
    EXPECT_EQ(doc.metadata.date, "2024-05-06");
    EXPECT_EQ(doc.metadata.venue, std::string("Journal"));
    EXPECT_EQ(doc.metadata.keywords, (std::vector<std::string>{"a", "b"}));
    EXPECT_EQ(doc.metadata.doi, std::string("10.1234/abc"));
    ASSERT_EQ(doc.sections.size(), 3u);
    EXPECT_EQ(doc.sections[0].label, Section::methods);
    EXPECT_EQ(doc.sections[1].label, Section::results);
    EXPECT_EQ(doc.sections[2].label, Section::other);
    EXPECT_EQ(doc.sections[2].heading, "Appendix");
}

TEST(ParseMarkdown, MissingDateDefaultsToClock) {
    EXPECT_EQ(parse_md("# T\n\n## Abstract\n\nText.\n").metadata.date, "2025-03-04");
}

TEST(ParseMarkdown, ClaimLinesAndReferences) {
    const auto doc = parse_md(
        "# T\nDate: 2024-01-01\n\n## Results\n\nSee [this](https://doi.org/10.1371/journal.pdig.0000501).\n\n"
        "## Claims\n\nCLAIM: aspirin | reduces_risk | stroke | effect=-0.10 | se=0.02\n\n"
        "## References\n\n- ap:deadbeef0001\n- 10.5555/xyz\n");
    ASSERT_EQ(doc.claims_declared.size(), 1u);
    EXPECT_EQ(doc.metadata.references,
              (std::vector<std::string>{"10.1371/journal.pdig.0000501", "ap:deadbeef0001", "10.5555/xyz"}));
}

TEST(ParseMarkdown, FencedCodeIsNotStructure) {
    const auto doc = parse_md("# T\n\n## Abstract\n\n```\n## not a heading\n# nor a title\n```\n\nAfter.\n");
    ASSERT_EQ(doc.sections.size(), 1u);
    EXPECT_NE(doc.sections[0].text.find("## not a heading"), std::string::npos);
}

TEST(ParseMarkdown, StrictErrors) {
    EXPECT_THROW(parse_md("## Abstract\n\nText.\n"), Error);
    EXPECT_THROW(parse_md("# T\n"), Error);
    try {
        parse_md("# T\n\n## Claims\n\nok text\nCLAIM: aspirin |\n");
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("line 6"), std::string::npos) << e.what();
    }
    EXPECT_THROW(parse_format("pdf"), Error);
}

TEST(ParseMarkdown, LenientKeepsGoing) {
    const auto doc = parse_md("## Abstract\n\nText.\n", false);
    EXPECT_TRUE(doc.metadata.title.empty());
    EXPECT_TRUE(has_gate(check_schema(doc), Gate::schema, Severity::reject));
}

TEST(ParseApJson, FullFixture) {
    const std::string payload = R"({
      "title": "Fixture", "authors": [{"name": "A", "orcid": "0000-0002-1825-0097"}, {"name": "B"}],
      "date": "2023-07-08", "keywords": ["k1"], "venue": "V", "references": ["10.1/x"],
      "sections": [{"label": "abstract", "text": "Abstract text."}, {"label": "results", "text": "Result text."}],
      "claims": ["CLAIM: a | affects | b | effect=0.1 | se=0.05"],
      "datasets": [{"name": "tbl", "columns": [{"name": "x", "kind": "numeric"}, {"name": "y", "kind": "text"}],
                    "rows": [[1, "u"], ["2.5", "v"]]}],
      "review_score": 4})";
    const auto doc = parse_submission(payload, SubmissionFormat::ap_json);
    ParsedDocument expected;
    expected.metadata.title = "Fixture";
    expected.metadata.authors = {Author{"A", std::string("0000-0002-1825-0097")}, Author{"B", std::nullopt}};
    expected.metadata.date = "2023-07-08";
    expected.metadata.keywords = {"k1"};
    expected.metadata.venue = "V";
    expected.metadata.references = {"10.1/x"};
    expected.metadata.provenance.review_score = 4;
    expected.sections = {{Section::abstract, "abstract", "Abstract text."}, {Section::results, "results", "Result text."}};
    expected.claims_declared = {"CLAIM: a | affects | b | effect=0.1 | se=0.05"};
    DatasetRecord d;
    d.name = "tbl";
    d.columns = {{"x", ColumnKind::numeric}, {"y", ColumnKind::text}};
    d.rows = {{"1", "u"}, {"2.5", "v"}};
    expected.datasets = {d};
    EXPECT_EQ(doc, expected);
}

TEST(ParseApJson, Errors) {
    EXPECT_THROW(parse_submission("{not json", SubmissionFormat::ap_json), Error);
    EXPECT_THROW(parse_submission("[]", SubmissionFormat::ap_json), Error);
    EXPECT_THROW(parse_submission(R"({"title":"T","sections":[{"label":"abstract"}]})", SubmissionFormat::ap_json), Error);
}

TEST(ClaimGrammar, FieldByField) {
    const auto c = parse_claim_line("CLAIM: aspirin | reduces_risk | stroke | effect=-0.10 | se=0.02");
    EXPECT_EQ(c.subject, "aspirin");
    EXPECT_EQ(c.relation, "reduces_risk");
    EXPECT_EQ(c.object, "stroke");
    ASSERT_TRUE(c.effect);
    EXPECT_DOUBLE_EQ(c.effect->estimate, -0.10);
    EXPECT_DOUBLE_EQ(c.effect->se, 0.02);
    EXPECT_FALSE(c.effect->ci95);
    EXPECT_EQ(c.polarity, Polarity::supports);
}

TEST(ClaimGrammar, AllOptions) {
    const auto c = parse_claim_line("CLAIM: x | affects | y | effect=0.05 | se=0.02 | ci95=0.0108,0.0892 | polarity=refutes | unit=mg");
    EXPECT_EQ(c.polarity, Polarity::refutes);
    EXPECT_EQ(c.effect->unit, std::string("mg"));
    EXPECT_EQ(*c.effect->ci95, (std::array<double, 2>{0.0108, 0.0892}));
    auto again = parse_claim_line(format_claim_line(c));
    again.line = c.line;  // the raw source line is kept verbatim
    EXPECT_EQ(again, c);
}

TEST(ClaimGrammar, Violations) {
    for (const char* bad : {"CLAIM: aspirin |", "CLAIM: a | b", "CLAIM: a | r | o | effect=x | se=1",
                            "CLAIM: a | r | o | effect=0.1", "CLAIM: a | r | o | effect=0.1 | se=0",
                            "CLAIM: a | r | o | colour=red", "CLAIM: a | r | o | se=1 | se=2", "a | r | o"}) {
        EXPECT_THROW(parse_claim_line(bad), Error) << bad;
    }
    EXPECT_NO_THROW(parse_claim_line("a | r | o", false));
}

TEST(Chunking, ParagraphsBecomeChunks) {
    DocSpec spec{"T", "2024-01-01", {}, {{"Abstract", "Para one.\n\nPara two.\n\nPara three."}}, {}, {}};
    const auto doc = parse_md(render_markdown(spec));
    const auto chunks = chunk_document(doc, PubRef{"p", 1});
    ASSERT_EQ(chunks.size(), 3u);
    for (int i = 0; i < 3; ++i) {
        EXPECT_EQ(chunks[i].ordinal, i);
        EXPECT_EQ(chunks[i].chunk_id, "p#v1#c" + std::to_string(i));
        EXPECT_EQ(chunks[i].section, Section::abstract);
    }
}

TEST(Chunking, LongParagraphSplitsAtSentences) {
    std::string para;
    for (int i = 0; i < 30; ++i) {
        para += (i ? " " : "") + words(15, "s" + std::to_string(i) + "w") + ".";
    }
    ASSERT_EQ(word_count(para), 450u);
    DocSpec spec{"T", "2024-01-01", {}, {{"Results", para}}, {}, {}};
    const auto doc = parse_md(render_markdown(spec));
    std::vector<Finding> findings;
    const auto chunks = chunk_document(doc, PubRef{"p", 1}, {}, &findings);
    EXPECT_GT(chunks.size(), 2u);
    std::string joined;
    for (const auto& c : chunks) {
        EXPECT_LE(c.word_count, 200);
        EXPECT_EQ(c.word_count, static_cast<int>(word_count(c.text)));
        joined += (joined.empty() ? "" : " ") + c.text;
    }
    EXPECT_EQ(collapse_whitespace(joined), collapse_whitespace(para));
    EXPECT_TRUE(findings.empty());
}

TEST(Chunking, OverlongSentenceWarns) {
    DocSpec spec{"T", "2024-01-01", {}, {{"Results", words(230) + "."}}, {}, {}};
    std::vector<Finding> findings;
    const auto chunks = chunk_document(parse_md(render_markdown(spec)), PubRef{"p", 1}, {}, &findings);
    ASSERT_EQ(chunks.size(), 1u);
    EXPECT_EQ(chunks[0].word_count, 230);
    EXPECT_TRUE(has_gate(findings, Gate::schema, Severity::warn));
}

TEST(Chunking, ReconstructionProperty) {
    std::mt19937_64 rng(43);
    for (int trial = 0; trial < 100; ++trial) {
        DocSpec spec;
        spec.title = "T";
        const int n_sections = 1 + static_cast<int>(rng() % 4);
        std::string all;
        for (int s = 0; s < n_sections; ++s) {
            std::string text;
            const int paras = 1 + static_cast<int>(rng() % 4);
            for (int p = 0; p < paras; ++p) {
                text += (p ? "\n\n" : "") +
                        apub::testing::random_paragraph(rng, apub::testing::science_words(), 1 + static_cast<int>(rng() % 40));
            }
            spec.sections.push_back({"Section " + std::to_string(s), text});
            all += " " + text;
        }
        const auto chunks = chunk_document(parse_md(render_markdown(spec)), PubRef{"p", 1}, ChunkPolicy{50, {}});
        std::string joined;
        for (std::size_t i = 0; i < chunks.size(); ++i) {
            ASSERT_EQ(chunks[i].ordinal, static_cast<int>(i));
            joined += " " + chunks[i].text;
        }
        EXPECT_EQ(collapse_whitespace(joined), collapse_whitespace(all));
    }
}

TEST(ClaimExtraction, AttributedToContainingChunk) {
    DocSpec spec{"T",
                 "2024-01-01",
                 {},
                 {{"Results", "Aspirin and stroke were studied."}},
                 {"aspirin | reduces_risk | stroke | effect=-0.1 | se=0.02", "aspirin | reduces | headache"},
                 {}};
    const auto doc = parse_md(render_markdown(spec));
    const auto chunks = chunk_document(doc, PubRef{"p", 1});
    std::vector<Finding> findings;
    ExtractiveComposer mock;
    auto claims = extract_claims(doc, chunks, &mock, findings);
    attribute_claims(claims, chunks);
    ASSERT_EQ(claims.size(), 2u);
    for (const auto& c : claims) {
        EXPECT_NE(chunks.at(c.chunk_ordinal).text.find(c.line), std::string::npos);
        EXPECT_FALSE(c.generated);
    }
    EXPECT_TRUE(findings.empty());
}

TEST(ClaimExtraction, MalformedLineWarnsAndIsSkipped) {
    const auto doc = parse_md("# T\n\n## Claims\n\nCLAIM: aspirin |\nCLAIM: a | r | o\n", false);
    const auto chunks = chunk_document(doc, PubRef{"p", 1});
    std::vector<Finding> findings;
    const auto claims = extract_claims(doc, chunks, nullptr, findings);
    EXPECT_EQ(claims.size(), 1u);
    EXPECT_TRUE(has_gate(findings, Gate::schema, Severity::warn));
}

TEST(Gates, StatisticsTolerance) {
    auto c = parse_claim_line("CLAIM: x | affects | y | effect=0.05 | se=0.02 | ci95=0.0108,0.0892");
    EXPECT_TRUE(check_statistics({c}).empty());
    c = parse_claim_line("CLAIM: x | affects | y | effect=0.05 | se=0.02 | ci95=0.2,0.4");
    const auto f = check_statistics({c});
    ASSERT_EQ(f.size(), 1u);
    EXPECT_EQ(f[0].severity, Severity::warn);
    EXPECT_NE(f[0].message.find("[0.0108, 0.0892]"), std::string::npos) << f[0].message;
    c = parse_claim_line("CLAIM: x | affects | y | effect=0.05 | se=0.02");
    EXPECT_TRUE(check_statistics({c}).empty());
}

TEST(Gates, References) {
    apub::testing::TempDir dir;
    auto store = Store::open(dir.path());
    ParsedDocument doc;
    doc.metadata.references = {"10.1371/journal.pdig.0000501", "see my other paper"};
    const auto f = check_references(doc, *store);
    ASSERT_EQ(f.size(), 1u);
    EXPECT_EQ(f[0].gate, Gate::reference);
    EXPECT_NE(f[0].message.find("unresolvable reference"), std::string::npos);
}

TEST(Gates, DuplicatesAgainstIndex) {
    HashEmbedder e;
    VectorIndex index;
    std::vector<Chunk> chunks(1);
    chunks[0].chunk_id = "new#v1#c0";
    chunks[0].pub_id = "new";
    chunks[0].text = "aspirin reduces headache";
    const std::vector<EmbeddingVector> vectors = {e.embed(chunks[0].text)};
    EXPECT_TRUE(check_duplicates(chunks, vectors, index).empty());
    index.upsert({"old#v1#c0", e.embed("aspirin reduces headache"), "old", 1, false});
    const auto f = check_duplicates(chunks, vectors, index);
    ASSERT_EQ(f.size(), 1u);
    EXPECT_NE(f[0].message.find("near-duplicate of old#v1#c0"), std::string::npos);
    index = VectorIndex();
    index.upsert({"old#v1#c0", e.embed("bananas are yellow and ripe"), "old", 1, false});
    EXPECT_TRUE(check_duplicates(chunks, vectors, index).empty());
}

TEST(Gates, SchemaRejects) {
    ParsedDocument doc;
    doc.metadata.date = "2024-02-30";
    const auto f = check_schema(doc);
    EXPECT_EQ(verdict_for(f), Verdict::rejected);
    EXPECT_GE(std::count_if(f.begin(), f.end(), [](const Finding& x) { return x.severity == Severity::reject; }), 3);
}

TEST(Gates, VerdictInvariantOnRandomFindings) {
    std::mt19937_64 rng(47);
    for (int trial = 0; trial < 5000; ++trial) {
        std::vector<Finding> findings(rng() % 6);
        bool any_reject = false, any_warn = false;
        for (auto& f : findings) {
            f.gate = static_cast<Gate>(rng() % 5);
            f.severity = static_cast<Severity>(rng() % 3);
            any_reject |= f.severity == Severity::reject;
            any_warn |= f.severity == Severity::warn;
        }
        const auto v = verdict_for(findings);
        EXPECT_EQ(v == Verdict::rejected, any_reject);
        EXPECT_EQ(v == Verdict::accepted_flagged, any_warn && !any_reject);
        EXPECT_EQ(v == Verdict::accepted, !any_warn && !any_reject);
    }
}

TEST(Gates, PubIdIsDeterministic) {
    Publication p;
    p.title = "A title";
    p.date = "2024-01-01";
    const auto id = generate_pub_id(p);
    EXPECT_EQ(id, generate_pub_id(p));
    EXPECT_EQ(id.size(), 3u + 12u);
    EXPECT_EQ(id.rfind("ap:", 0), 0u);
    p.date = "2024-01-02";
    EXPECT_NE(generate_pub_id(p), id);
}
