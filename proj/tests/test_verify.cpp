#include <gtest/gtest.h>

#include "apub/verify.hpp"
#include "support.hpp"

using namespace apub;

namespace {

std::vector<ContextItem> sample_context() {
    return {
        {"a#v1#c0", "Aspirin lowers stroke risk in older adults. The trial ran for five years.", 0.8},
        {"b#v1#c0", "Vitamin B12 supplements reduce homocysteine levels in serum.", 0.6},
        {"c#v2#c3", "Glacier sediment records reveal aquifer isotherm shifts.", 0.4},
    };
}

GroupNote note(int n, double agreement, bool contradiction) {
    GroupNote g;
    g.label = "aspirin reduces stroke";
    g.record.n_studies = n;
    g.record.agreement_ratio = agreement;
    g.record.contradiction_flag = contradiction;
    return g;
}

}  // namespace

TEST(VerifyCitations, FabricatedMarkerFlagged) {
    const std::string draft = "Real sentence [a#v1#c0]. Fake sentence [ap:bogus#v1#c9].";
    const auto findings = verify_citations(draft, [](const std::string& id) { return id == "a#v1#c0"; });
    ASSERT_EQ(findings.size(), 1u);
    EXPECT_EQ(findings[0].sentence, 1u);
    EXPECT_EQ(findings[0].issue, VerifyIssue::unknown_citation);
    EXPECT_NE(findings[0].message.find("ap:bogus#v1#c9"), std::string::npos);
}

TEST(VerifyCitations, NoMarkersNoFindings) {
    EXPECT_TRUE(verify_citations("Plain text.", [](const std::string&) { return false; }).empty());
}

TEST(VerifyGrounding, ExtractiveOutputIsGrounded) {
    HashEmbedder e;
    ExtractiveComposer composer;
    const auto ctx = sample_context();
    for (const auto zoom : {Zoom::headline, Zoom::abstract, Zoom::detailed}) {
        const auto draft = composer.compose_answer(CompositionRequest{"does aspirin lower stroke risk", ctx, zoom, {}});
        ASSERT_FALSE(draft.empty());
        EXPECT_TRUE(verify_grounding(draft, ctx, e).empty()) << draft;
    }
}

TEST(VerifyGrounding, UnrelatedSentenceFlagged) {
    HashEmbedder e;
    const auto ctx = sample_context();
    const std::string draft =
        "Aspirin lowers stroke risk in older adults [a#v1#c0]. Pirates sail yachts past the castle at dawn [b#v1#c0].";
    const auto findings = verify_grounding(draft, ctx, e);
    ASSERT_EQ(findings.size(), 1u);
    EXPECT_EQ(findings[0].sentence, 1u);
    EXPECT_EQ(findings[0].issue, VerifyIssue::ungrounded);
}

TEST(VerifyGrounding, MarkerlessSentenceFlagged) {
    HashEmbedder e;
    const auto findings =
        verify_grounding("Aspirin lowers stroke risk in older adults.", sample_context(), e);
    ASSERT_EQ(findings.size(), 1u);
    EXPECT_EQ(findings[0].issue, VerifyIssue::missing_citation);
}

TEST(VerifyGrounding, MarkerOutsideContextFlagged) {
    HashEmbedder e;
    const auto findings =
        verify_grounding("Aspirin lowers stroke risk in older adults [z#v1#c0].", sample_context(), e);
    ASSERT_EQ(findings.size(), 1u);
    EXPECT_EQ(findings[0].issue, VerifyIssue::out_of_context);
}

TEST(Finalize, DropsFlaggedSentenceAndRebuildsCitations) {
    Answer draft;
    draft.text = "One [a#v1#c0]. Two [b#v1#c0]. Three [c#v2#c3].";
    const auto out = finalize(draft, {VerifyFinding{1, VerifyIssue::ungrounded, "x"}}, sample_context());
    EXPECT_EQ(out.text, "One [a#v1#c0]. Three [c#v2#c3].");
    ASSERT_EQ(out.citations.size(), 2u);
    EXPECT_EQ(out.citations[0], (Citation{"a", 1, "a#v1#c0", 0.8}));
    EXPECT_EQ(out.citations[1], (Citation{"c", 2, "c#v2#c3", 0.4}));
    EXPECT_FALSE(out.refused);
}

TEST(Finalize, AllFlaggedRefuses) {
    Answer draft;
    draft.text = "One [a#v1#c0]. Two [b#v1#c0].";
    const auto out = finalize(draft,
                              {VerifyFinding{0, VerifyIssue::ungrounded, ""}, VerifyFinding{1, VerifyIssue::ungrounded, ""}},
                              sample_context());
    EXPECT_TRUE(out.refused);
    EXPECT_EQ(out.text, kRefusalText);
    EXPECT_TRUE(out.citations.empty());
    EXPECT_EQ(out.confidence, Confidence::low);
    EXPECT_NE(std::find(out.warnings.begin(), out.warnings.end(), std::string(kAllFailedWarning)), out.warnings.end());
}

TEST(Finalize, DissentAndConflictWarnings) {
    Answer draft;
    draft.text = "One [a#v1#c0].";
    const auto dissent = finalize(draft, {}, sample_context(), {note(4, 0.75, false)});
    ASSERT_EQ(dissent.warnings.size(), 1u);
    EXPECT_NE(dissent.warnings[0].find("1 of 4"), std::string::npos) << dissent.warnings[0];
    const auto conflict = finalize(draft, {}, sample_context(), {note(4, 0.5, true)});
    ASSERT_EQ(conflict.warnings.size(), 1u);
    EXPECT_EQ(conflict.warnings[0], kConflictWarning);
    EXPECT_TRUE(finalize(draft, {}, sample_context(), {note(3, 1.0, false)}).warnings.empty());
}

TEST(Finalize, Idempotent) {
    HashEmbedder e;
    const auto ctx = sample_context();
    Answer draft;
    draft.text = "Aspirin lowers stroke risk [a#v1#c0]. Pirates sail yachts [b#v1#c0]. No marker here.";
    const auto once = finalize(draft, verify_grounding(draft.text, ctx, e), ctx);
    const auto twice = finalize(once, verify_grounding(once.text, ctx, e), ctx);
    EXPECT_EQ(once, twice);
    EXPECT_EQ(once.text, "Aspirin lowers stroke risk [a#v1#c0].");
}

TEST(ChunkRef, Parses) {
    const auto r = chunk_pub_ref("ap:0123abcd#v3#c12");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->pub_id, "ap:0123abcd");
    EXPECT_EQ(r->version, 3);
    EXPECT_FALSE(chunk_pub_ref("nonsense"));
}
