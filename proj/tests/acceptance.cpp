// Acceptance gate: one PASS/FAIL line per criterion. Exit status is nonzero
// when any criterion fails.

#include <gtest/gtest.h>

#include <chrono>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>

#include "support.hpp"

using namespace apub;
using namespace apub::testing;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v, int digits = 6) {
    std::ostringstream s;
    s.precision(digits);
    s << v;
    return s.str();
}

EngineDeps mock_deps(std::shared_ptr<const Composer> composer = nullptr) {
    EngineDeps deps;
    deps.clock = stepping_clock(parse_timestamp("2025-01-01T00:00:00Z"), 1000);
    auto counter = std::make_shared<int>(0);
    deps.next_id = [counter] { return "q" + std::to_string(++*counter); };
    deps.embedder = std::make_shared<HashEmbedder>();
    deps.composer = composer ? composer : std::make_shared<ExtractiveComposer>();
    return deps;
}

std::unique_ptr<Engine> engine_at(const TempDir& dir, std::shared_ptr<const Composer> composer = nullptr) {
    EngineOptions o;
    o.store_path = dir.path();
    return Engine::open(o, mock_deps(std::move(composer)));
}

DocSpec random_doc(std::mt19937_64& rng, int i, int sections = 3) {
    DocSpec d;
    d.title = "Study " + std::to_string(i) + " " + random_sentence(rng, science_words(), 3, 5);
    d.title.pop_back();
    d.date = "20" + std::to_string(10 + i % 15) + "-0" + std::to_string(1 + i % 9) + "-1" + std::to_string(i % 10);
    static const std::vector<std::string> headings = {"Abstract", "Introduction", "Methods", "Results", "Discussion"};
    for (int s = 0; s < sections; ++s) {
        d.sections.push_back({headings[static_cast<std::size_t>(s) % headings.size()], random_paragraph(rng, science_words(), 3)});
    }
    d.references = {"doi:10.4242/ref." + std::to_string(i)};
    return d;
}

/// Words drawn from one chunk, phrased as a question.
std::string question_from(std::mt19937_64& rng, const std::string& text) {
    const auto toks = tokenize(text);
    std::uniform_int_distribution<std::size_t> pick(0, toks.size() - 1);
    const int n = 4 + static_cast<int>(rng() % 4);
    std::string q = "What is known about";
    for (int i = 0; i < n; ++i) {
        q += " " + toks[pick(rng)];
    }
    return q + "?";
}

// ---------------------------------------------------------------------------

Outcome retrieval_oracle() {
    const auto start = std::chrono::steady_clock::now();
    std::mt19937_64 rng(1001);
    std::normal_distribution<double> normal(0, 1);
    const std::size_t d = 256;
    auto unit = [&] {
        std::vector<double> raw(d);
        double s = 0;
        for (auto& x : raw) {
            x = normal(rng);
            s += x * x;
        }
        EmbeddingVector v;
        for (const double x : raw) {
            v.values.push_back(static_cast<float>(x / std::sqrt(s)));
        }
        return v;
    };
    int mismatches = 0;
    int checks = 0;
    for (const std::size_t n : {1u, 10u, 500u, 5000u}) {
        VectorIndex index(d);
        std::vector<std::pair<std::string, EmbeddingVector>> entries;
        for (std::size_t i = 0; i < n; ++i) {
            // Every tenth entry duplicates an earlier vector to force ties.
            EmbeddingVector v = (i % 10 == 9) ? entries[rng() % entries.size()].second : unit();
            const std::string id = "c" + std::to_string(rng() % 1000000) + "_" + std::to_string(i);
            entries.emplace_back(id, v);
            index.upsert(IndexEntry{id, v, "p", 1, false});
        }
        for (int q = 0; q < 20; ++q) {
            const auto query = q % 4 == 3 ? entries[rng() % entries.size()].second : unit();
            // Brute force in long double with explicit norms.
            std::vector<std::pair<long double, std::string>> scored;
            for (const auto& [id, v] : entries) {
                long double dot = 0, na = 0, nb = 0;
                for (std::size_t i = 0; i < d; ++i) {
                    dot += static_cast<long double>(query.values[i]) * v.values[i];
                    na += static_cast<long double>(query.values[i]) * query.values[i];
                    nb += static_cast<long double>(v.values[i]) * v.values[i];
                }
                scored.emplace_back(dot / std::sqrt(na * nb), id);
            }
            std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
                return a.first != b.first ? a.first > b.first : a.second < b.second;
            });
            for (const std::size_t k : {1u, 5u, 10u, 50u}) {
                const auto hits = index.search(query, k);
                ++checks;
                const std::size_t expect = std::min(k, n);
                bool ok = hits.size() == expect;
                for (std::size_t i = 0; ok && i < expect; ++i) {
                    ok = hits[i].chunk_id == scored[i].second;
                }
                mismatches += ok ? 0 : 1;
            }
        }
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {mismatches == 0 && secs < 10.0,
            std::to_string(checks) + " searches, " + std::to_string(mismatches) + " mismatches, " + fmt(secs, 3) + " s"};
}

// ---------------------------------------------------------------------------

Outcome self_hosting_demo() {
    const std::string question = "What is an Agentic Publication?";
    std::vector<Answer> runs;
    std::vector<Answer> headlines;
    bool phrase = false;
    for (int run = 0; run < 2; ++run) {
        TempDir dir;
        auto engine = engine_at(dir);
        const auto r = engine->submit(paper_fixture_markdown(), SubmissionFormat::markdown, "author");
        if (!r.ref) {
            return {false, "paper fixture rejected"};
        }
        auto a = engine->answer(question, Zoom::abstract);
        auto h = engine->answer(question, Zoom::headline);
        for (const auto& c : a.citations) {
            const auto* chunk = engine->store().find_chunk(c.chunk_id);
            phrase = phrase || (chunk != nullptr && chunk->text.find("Agentic Publication") != std::string::npos);
        }
        a.query_id.clear();
        h.query_id.clear();
        runs.push_back(a);
        headlines.push_back(h);
    }
    const auto& a = runs[0];
    const auto& h = headlines[0];
    const auto sentences = split_answer_sentences(h.text);
    const bool deterministic = runs[0] == runs[1] && headlines[0] == headlines[1];
    const bool ok = !a.refused && !a.citations.empty() && phrase && !h.refused && sentences.size() == 1 && deterministic;
    return {ok, "refused=" + std::string(a.refused ? "yes" : "no") + ", citations=" + std::to_string(a.citations.size()) +
                    ", phrase cited=" + (phrase ? "yes" : "no") + ", headline sentences=" +
                    std::to_string(sentences.size()) + ", deterministic=" + (deterministic ? "yes" : "no")};
}

// ---------------------------------------------------------------------------

/// Wraps the extractive composer and swaps the first marker for a fabricated one.
class LyingComposer : public Composer {
public:
    std::function<std::string(const CompositionRequest&)> fabricate;
    mutable std::string last;

    std::string compose_answer(const CompositionRequest& req) const override {
        std::string draft = inner_.compose_answer(req);
        const auto open = draft.find('[');
        const auto close = draft.find(']', open);
        last.clear();
        if (open == std::string::npos || close == std::string::npos) {
            return draft;
        }
        last = fabricate(req);
        return draft.substr(0, open + 1) + last + draft.substr(close);
    }

private:
    ExtractiveComposer inner_;
};

Outcome grounding_soundness() {
    std::mt19937_64 rng(3003);
    auto liar = std::make_shared<LyingComposer>();
    TempDir honest_dir;
    TempDir lying_dir;
    auto honest = engine_at(honest_dir);
    auto lying = engine_at(lying_dir, liar);
    std::vector<PubRef> superseded;
    std::vector<DocSpec> docs;
    for (int i = 0; i < 40; ++i) {
        docs.push_back(random_doc(rng, i));
        for (auto* e : {honest.get(), lying.get()}) {
            submit_ok(*e, docs.back());
        }
    }
    // Replace five publications with revised versions so superseded chunks exist.
    for (int i = 0; i < 5; ++i) {
        auto doc = docs[static_cast<std::size_t>(i)];
        doc.sections = random_doc(rng, 100 + i).sections;
        for (auto* e : {honest.get(), lying.get()}) {
            const auto v2 = submit_ok(*e, doc);
            const PubRef v1{v2.pub_id, 1};
            e->supersede(v1, v2, "editor");
            if (e == honest.get()) {
                superseded.push_back(v1);
            }
        }
    }
    std::vector<std::string> live_chunks;
    std::vector<std::string> dead_chunks;
    for (const auto* c : honest->store().all_chunks()) {
        (honest->is_superseded(PubRef{c->pub_id, c->version}) ? dead_chunks : live_chunks).push_back(c->chunk_id);
    }

    int answered = 0, attempts = 0, sentences = 0, bad = 0;
    const Zoom zooms[] = {Zoom::headline, Zoom::abstract, Zoom::detailed, Zoom::data};
    while (answered < 1000 && attempts < 5000) {
        ++attempts;
        const auto& chunk = *honest->store().find_chunk(live_chunks[rng() % live_chunks.size()]);
        const auto a = honest->answer(question_from(rng, chunk.text), zooms[attempts % 4]);
        if (a.refused) {
            continue;
        }
        ++answered;
        std::set<std::string> cited;
        for (const auto& c : a.citations) {
            cited.insert(c.chunk_id);
        }
        for (const auto& s : split_answer_sentences(a.text)) {
            ++sentences;
            const auto markers = extract_markers(s);
            bool ok = !markers.empty();
            for (const auto& m : markers) {
                const auto* c = honest->store().find_chunk(m);
                ok = ok && cited.count(m) > 0 && c != nullptr && !honest->is_superseded(PubRef{c->pub_id, c->version});
            }
            bad += ok ? 0 : 1;
        }
    }

    // Lying provider: nonexistent ids, superseded chunks, and live chunks outside the context.
    int lies = 0, caught = 0;
    int kind = 0;
    liar->fabricate = [&](const CompositionRequest& req) -> std::string {
        switch (kind % 3) {
            case 0:
                return "ap:" + std::to_string(100000 + rng() % 900000) + "fab#v1#c" + std::to_string(rng() % 9);
            case 1:
                return dead_chunks[rng() % dead_chunks.size()];
            default: {
                for (;;) {
                    const auto& id = live_chunks[rng() % live_chunks.size()];
                    const bool in_context = std::any_of(req.context.begin(), req.context.end(),
                                                        [&](const ContextItem& c) { return c.chunk_id == id; });
                    if (!in_context) {
                        return id;
                    }
                }
            }
        }
    };
    int tries = 0;
    while (lies < 300 && tries < 3000) {
        ++tries;
        const auto& chunk = *lying->store().find_chunk(live_chunks[rng() % live_chunks.size()]);
        const auto a = lying->answer(question_from(rng, chunk.text), zooms[tries % 4]);
        if (liar->last.empty()) {
            continue;
        }
        ++lies;
        ++kind;
        const bool in_text = a.text.find("[" + liar->last + "]") != std::string::npos;
        const bool in_cites = std::any_of(a.citations.begin(), a.citations.end(),
                                          [&](const Citation& c) { return c.chunk_id == liar->last; });
        caught += (!in_text && !in_cites) ? 1 : 0;
    }
    const bool ok = answered == 1000 && bad == 0 && lies == 300 && caught == lies;
    return {ok, std::to_string(answered) + " answered (" + std::to_string(attempts) + " asked), " +
                    std::to_string(sentences) + " sentences, " + std::to_string(bad) + " ungrounded; " +
                    std::to_string(caught) + "/" + std::to_string(lies) + " fabricated citations stripped"};
}

// ---------------------------------------------------------------------------

Outcome synthesis_oracle() {
    std::mt19937_64 rng(4004);
    std::uniform_real_distribution<double> est(-10, 10);
    std::uniform_real_distribution<double> log_se(std::log(1e-4), std::log(50.0));
    double worst = 0;
    for (int g = 0; g < 10000; ++g) {
        const int n = 1 + static_cast<int>(rng() % 60);
        std::vector<ClaimTriple> claims;
        long double sw = 0, swx = 0;
        for (int i = 0; i < n; ++i) {
            ClaimTriple c;
            c.claim_id = "c" + std::to_string(i);
            c.effect = Effect{est(rng), std::exp(log_se(rng)), std::nullopt, std::nullopt};
            const long double w = 1.0L / (static_cast<long double>(c.effect->se) * c.effect->se);
            sw += w;
            swx += w * c.effect->estimate;
            claims.push_back(std::move(c));
        }
        const auto p = pool_effects(claims);
        const long double oe = swx / sw;
        const long double ose = std::sqrt(1.0L / sw);
        const double re = static_cast<double>(std::fabs(p.estimate - oe) / std::max<long double>(std::fabs(oe), 1e-300L));
        const double rs = static_cast<double>(std::fabs(p.se - ose) / ose);
        worst = std::max({worst, re, rs});
    }
    auto claim = [](double e, double se) {
        ClaimTriple c;
        c.effect = Effect{e, se, std::nullopt, std::nullopt};
        return c;
    };
    const auto w = pool_effects({claim(0.04, 0.02), claim(0.08, 0.04)});
    const bool worked = std::fabs(w.estimate - 0.048) < 1e-15 && std::fabs(w.se - std::sqrt(1.0 / 3125.0)) < 1e-15 &&
                        std::fabs(w.se - 0.017889) < 5e-7;
    return {worst <= 1e-9 && worked, "10000 groups, worst relative error " + fmt(worst, 3) + "; worked example (" +
                                         fmt(w.estimate, 10) + ", " + fmt(w.se, 8) + ")"};
}

// ---------------------------------------------------------------------------

Outcome update_narrative() {
    TempDir dir;
    auto engine = engine_at(dir);
    const std::vector<std::pair<double, double>> five = {{0.040, 0.020}, {0.055, 0.025}, {0.050, 0.020},
                                                         {0.060, 0.030}, {0.045, 0.020}};
    int study = 0;
    auto add = [&](double e, double se) {
        DocSpec d;
        ++study;
        d.title = "Survival cohort " + std::to_string(study);
        d.date = "2020-0" + std::to_string(study) + "-01";
        d.sections = {{"Abstract", "Treatment T and survival outcome S were followed in cohort number " + std::to_string(study) +
                                       " with " + std::to_string(100 * study + 37) + " enrolled participants."}};
        std::ostringstream c;
        c << "treatment t | improves | survival | effect=" << e << " | se=" << se;
        d.claims = {c.str()};
        d.references = {"doi:10.7777/surv." + std::to_string(study)};
        submit_ok(*engine, d);
    };
    for (const auto& [e, se] : five) {
        add(e, se);
    }
    const auto group = group_of(engine->facts(FactPattern{std::string("treatment t"), std::nullopt, std::nullopt}).facts.at(0).claim);
    const auto r5 = *engine->synthesis(group);
    add(0.065, 0.005);
    const auto r6 = *engine->synthesis(group);
    add(-0.10, 0.01);
    const auto r7 = *engine->synthesis(group);
    const auto answer = engine->answer("What is the pooled effect of treatment T on survival?", Zoom::abstract);
    const bool has_warning = std::find(answer.warnings.begin(), answer.warnings.end(), std::string(kConflictWarning)) !=
                             answer.warnings.end();

    const bool step5 = r5.n_studies == 5 && r5.confidence == Confidence::medium && !r5.contradiction_flag;
    const bool step6 = r6.n_studies == 6 && std::fabs(r6.pooled_estimate - 0.065) < std::fabs(r5.pooled_estimate - 0.065) &&
                       r6.confidence == Confidence::high;
    const bool step7 = r7.contradiction_flag && r7.confidence == Confidence::low && has_warning;
    auto label = [](const SynthesisRecord& r) {
        return std::string(to_string(r.confidence)) + " (pooled " + fmt(r.pooled_estimate, 4) + ", agreement " +
               fmt(r.agreement_ratio, 3) + ")";
    };
    return {step5 && step6 && step7, "5 studies -> " + label(r5) + (step5 ? " ok" : " expected medium") + "; 6 -> " +
                                         label(r6) + (step6 ? " ok" : " FAIL") + "; 7 -> " + label(r7) +
                                         (r7.contradiction_flag ? " flagged" : " unflagged") +
                                         (has_warning ? ", warning shown" : ", no warning") + (step7 ? " ok" : " FAIL")};
}

// ---------------------------------------------------------------------------

Outcome supersede_semantics() {
    std::mt19937_64 rng(6006);
    int leaks = 0, cited_old_before = 0, after_new = 0, after_refused = 0;
    const std::vector<std::string> subjects = {"kinase", "ligand", "hormone", "vaccine", "enzyme"};
    for (int scenario = 0; scenario < 100; ++scenario) {
        TempDir dir;
        auto engine = engine_at(dir);
        ApiService api(*engine, ApiOptions{});
        const int n = 3 + static_cast<int>(rng() % 5);
        std::vector<PubRef> refs;
        std::vector<DocSpec> docs;
        for (int i = 0; i < n; ++i) {
            auto d = random_doc(rng, scenario * 10 + i, 2);
            std::ostringstream c;
            c << subjects[rng() % subjects.size()] << " | affects | " << science_words()[rng() % 16] << " | effect=0."
              << (1 + rng() % 9) << " | se=0.05";
            d.claims = {c.str()};
            refs.push_back(submit_ok(*engine, d));
            docs.push_back(d);
        }
        const std::size_t victim = rng() % refs.size();
        const auto old_ref = refs[victim];
        const auto old_chunks = engine->publication(old_ref.pub_id, old_ref.version).chunks;
        const std::string question = question_from(rng, old_chunks[rng() % old_chunks.size()].text);
        const auto before = engine->answer(question, Zoom::detailed);
        cited_old_before += std::any_of(before.citations.begin(), before.citations.end(),
                                        [&](const Citation& c) { return PubRef{c.pub_id, c.version} == old_ref; })
                                ? 1
                                : 0;

        // Half the scenarios revise the same publication, half replace it with another one.
        PubRef new_ref;
        if (scenario % 2 == 0) {
            auto revised = docs[victim];
            revised.sections = random_doc(rng, 5000 + scenario, 2).sections;
            new_ref = submit_ok(*engine, revised);
        } else {
            auto other = random_doc(rng, 9000 + scenario, 2);
            new_ref = submit_ok(*engine, other);
        }
        engine->supersede(old_ref, new_ref, "editor");

        const auto after = engine->answer(question, Zoom::detailed);
        for (const auto& c : after.citations) {
            leaks += PubRef{c.pub_id, c.version} == old_ref ? 1 : 0;
        }
        leaks += after.text.find(old_ref.pub_id + "#v" + std::to_string(old_ref.version) + "#") != std::string::npos ? 1 : 0;
        if (after.refused) {
            ++after_refused;
        } else if (std::any_of(after.citations.begin(), after.citations.end(),
                               [&](const Citation& c) { return PubRef{c.pub_id, c.version} == new_ref; })) {
            ++after_new;
        }

        const auto old_claim = engine->publication(old_ref.pub_id, old_ref.version).claims.at(0);
        const std::string subject = engine->graph().display_name(old_claim.subject);
        auto facts_for = [&](bool include) {
            auto req = get("/v1/facts", {{"subject", subject}});
            if (include) {
                req.query["include_superseded"] = "true";
            }
            return json::parse(api.handle(req).body)["facts"];
        };
        auto mentions_old = [&](const json& facts) {
            int k = 0;
            for (const auto& f : facts) {
                k += f["source"]["pub_id"] == old_ref.pub_id && f["source"]["version"] == old_ref.version ? 1 : 0;
            }
            return k;
        };
        leaks += mentions_old(facts_for(false));
        leaks += mentions_old(facts_for(true)) == 1 ? 0 : 1;
    }
    return {leaks == 0, "100 scenarios, " + std::to_string(leaks) + " leaks; old version cited before in " +
                            std::to_string(cited_old_before) + ", after: " + std::to_string(after_new) + " cite new, " +
                            std::to_string(after_refused) + " refused"};
}

// ---------------------------------------------------------------------------

Outcome validation_gates() {
    std::vector<std::string> failures;
    auto count = [](const ValidationReport& r, Gate g, Severity s) {
        return std::count_if(r.findings.begin(), r.findings.end(),
                             [&](const Finding& f) { return f.gate == g && f.severity == s; });
    };
    TempDir dir;
    auto engine = engine_at(dir);
    std::mt19937_64 rng(7007);
    const auto base = random_doc(rng, 1);
    const auto first = engine->submit(render_markdown(base), SubmissionFormat::markdown, "t");
    if (first.report.verdict != Verdict::accepted) {
        failures.push_back("clean fixture not accepted");
    }
    const auto again = engine->submit(render_markdown(base), SubmissionFormat::markdown, "t");
    const auto chunks = engine->publication(again.ref->pub_id, again.ref->version).chunks.size();
    if (static_cast<std::size_t>(count(again.report, Gate::duplicate, Severity::warn)) != chunks ||
        again.report.verdict != Verdict::accepted_flagged) {
        failures.push_back("duplicate gate");
    }

    auto bad_ci = random_doc(rng, 2);
    bad_ci.claims = {"x | affects | y | effect=0.05 | se=0.02 | ci95=0.2,0.4"};
    const auto ci = engine->submit(render_markdown(bad_ci), SubmissionFormat::markdown, "t");
    if (count(ci.report, Gate::statistics, Severity::warn) != 1 || ci.report.verdict != Verdict::accepted_flagged) {
        failures.push_back("statistics gate");
    }

    auto unresolved = random_doc(rng, 3);
    unresolved.references = {"ap:ffffffffffff"};
    const auto ref = engine->submit(render_markdown(unresolved), SubmissionFormat::markdown, "t");
    if (count(ref.report, Gate::reference, Severity::warn) != 1 || ref.report.verdict != Verdict::accepted_flagged) {
        failures.push_back("reference gate");
    }

    const auto pubs_before = engine->store().publication_refs().size();
    const auto events_before = engine->events().size();
    auto untitled = random_doc(rng, 4);
    untitled.title.clear();
    const auto rej = engine->submit(render_markdown(untitled), SubmissionFormat::markdown, "t");
    if (count(rej.report, Gate::schema, Severity::reject) < 1 || rej.report.verdict != Verdict::rejected || rej.ref ||
        engine->store().publication_refs().size() != pubs_before || engine->events().size() != events_before) {
        failures.push_back("schema gate");
    }

    // Verdict invariant on random finding sets.
    int property_failures = 0;
    for (int trial = 0; trial < 10000; ++trial) {
        std::vector<Finding> fs;
        const int n = static_cast<int>(rng() % 6);
        for (int i = 0; i < n; ++i) {
            fs.push_back(Finding{static_cast<Gate>(rng() % 5), static_cast<Severity>(rng() % 3), "m", {}});
        }
        const bool any_reject = std::any_of(fs.begin(), fs.end(), [](const Finding& f) { return f.severity == Severity::reject; });
        const bool any_warn = std::any_of(fs.begin(), fs.end(), [](const Finding& f) { return f.severity == Severity::warn; });
        const auto expected = any_reject ? Verdict::rejected : any_warn ? Verdict::accepted_flagged : Verdict::accepted;
        property_failures += verdict_for(fs) == expected ? 0 : 1;
    }
    if (property_failures > 0) {
        failures.push_back("verdict property (" + std::to_string(property_failures) + ")");
    }
    std::string detail = "duplicate warns on " + std::to_string(chunks) + "/" + std::to_string(chunks) +
                         " chunks, statistics/reference warn, schema reject commits nothing, 10000 verdict sets";
    if (!failures.empty()) {
        detail = "failed:";
        for (const auto& f : failures) {
            detail += " " + f;
        }
    }
    return {failures.empty(), detail};
}

// ---------------------------------------------------------------------------

Outcome api_contract() {
    ::testing::GTEST_FLAG(filter) = "Api*";
    ::testing::GTEST_FLAG(brief) = true;
    const int rc = RUN_ALL_TESTS();
    const auto* unit = ::testing::UnitTest::GetInstance();
    const std::size_t goldens = std::distance(std::filesystem::directory_iterator(std::filesystem::path(APUB_TEST_DIR) / "golden"),
                                              std::filesystem::directory_iterator{});
    return {rc == 0 && unit->test_to_run_count() > 0,
            std::to_string(unit->successful_test_count()) + "/" + std::to_string(unit->test_to_run_count()) +
                " API tests passed (" + std::to_string(goldens) + " golden bodies, cache, auth, rate limit)"};
}

// ---------------------------------------------------------------------------

Outcome alias_equivalence() {
    TempDir dir;
    std::ofstream(dir / "aliases.txt") << "# canonical | aliases\nVitamin B12 | cobalamin | B12\n";
    const auto config = load_config(std::nullopt, nullptr,
                                    {{"store.path", (dir / "store").string()}, {"graph.aliases_file", (dir / "aliases.txt").string()}});
    auto engine = open_engine(config, mock_deps());
    std::mt19937_64 rng(9009);
    const std::vector<std::string> claims = {"Vitamin B12 | lowers | homocysteine | effect=-1.2 | se=0.3",
                                             "cobalamin | lowers | homocysteine | effect=-0.9 | se=0.4",
                                             "B12 | treats | pernicious anaemia | polarity=supports"};
    for (std::size_t i = 0; i < claims.size(); ++i) {
        auto d = random_doc(rng, static_cast<int>(i));
        d.claims = {claims[i]};
        submit_ok(*engine, d);
    }
    ApiService api(*engine, ApiOptions{});
    auto body = [&](const std::string& subject) {
        auto j = json::parse(api.handle(get("/v1/facts", {{"subject", subject}})).body);
        j.erase("query");
        return j;
    };
    const auto by_alias = body("cobalamin").dump();
    const auto by_name = body("Vitamin B12").dump();
    const auto n = body("cobalamin")["facts"].size();
    return {by_alias == by_name && n == 3, std::to_string(n) + " facts each way, bodies " +
                                               (by_alias == by_name ? "byte-identical" : "differ")};
}

// ---------------------------------------------------------------------------

Outcome refusal_calibration() {
    TempDir dir;
    auto engine = engine_at(dir);
    std::mt19937_64 rng(10010);
    for (int i = 0; i < 40; ++i) {
        submit_ok(*engine, random_doc(rng, i));
    }
    const auto chunks = engine->store().all_chunks();
    int refused_off = 0, answered_on = 0;
    double worst_off = 0, lowest_on = 1;
    const auto& off = offtopic_words();
    for (int i = 0; i < 50; ++i) {
        const std::string q = "What is the " + off[rng() % off.size()] + " of a " + off[rng() % off.size()] + " " +
                              off[rng() % off.size()] + "?";
        refused_off += engine->answer(q, Zoom::abstract).refused ? 1 : 0;
        const auto hits = engine->retrieve(q, 1);
        worst_off = std::max(worst_off, hits.empty() ? 0.0 : hits[0].score);
    }
    for (int i = 0; i < 50; ++i) {
        const auto q = question_from(rng, chunks[rng() % chunks.size()]->text);
        answered_on += engine->answer(q, Zoom::abstract).refused ? 0 : 1;
        const auto hits = engine->retrieve(q, 1);
        lowest_on = std::min(lowest_on, hits.empty() ? 0.0 : hits[0].score);
    }
    return {refused_off >= 49 && answered_on >= 49,
            "off-corpus refused " + std::to_string(refused_off) + "/50 (max top score " + fmt(worst_off, 3) +
                "), on-corpus answered " + std::to_string(answered_on) + "/50 (min top score " + fmt(lowest_on, 3) +
                "), tau 0.25"};
}

// ---------------------------------------------------------------------------

Outcome export_round_trip() {
    TempDir dir;
    auto engine = engine_at(dir);
    std::mt19937_64 rng(11011);
    static const std::vector<std::string> headings = {"Abstract", "Introduction", "Background", "Methods", "Results",
                                                      "Discussion", "Limitations", "Conclusion", "Data availability"};
    static const std::vector<std::string> relations = {"affects", "reduces_risk", "increases", "binds"};
    int failures = 0;
    std::string first_failure;
    for (int i = 0; i < 100; ++i) {
        DocSpec d;
        d.title = "Round trip " + std::to_string(i) + " " + random_sentence(rng, science_words(), 2, 4);
        d.title.pop_back();
        d.date = "2019-1" + std::to_string(i % 3) + "-2" + std::to_string(i % 8);
        d.authors = {"Author " + std::to_string(i)};
        const int ns = 1 + static_cast<int>(rng() % 5);
        for (int s = 0; s < ns; ++s) {
            const int paragraphs = 1 + static_cast<int>(rng() % 3);
            std::string text;
            for (int p = 0; p < paragraphs; ++p) {
                text += (p ? "\n\n" : "") + random_paragraph(rng, science_words(), 2 + static_cast<int>(rng() % 4));
            }
            d.sections.push_back({headings[rng() % headings.size()], text});
        }
        const int nc = static_cast<int>(rng() % 4);
        for (int c = 0; c < nc; ++c) {
            std::ostringstream line;
            line << science_words()[rng() % 20] << " | " << relations[rng() % relations.size()] << " | "
                 << science_words()[20 + rng() % 20];
            if (rng() % 2) {
                line << " | effect=0." << (1 + rng() % 9) << " | se=0.0" << (1 + rng() % 9);
            } else {
                line << " | polarity=" << (rng() % 2 ? "supports" : "refutes");
            }
            d.claims.push_back(line.str());
        }
        d.references = {"doi:10.1111/rt." + std::to_string(i)};
        const std::string md = render_markdown(d);
        const auto r = engine->submit(md, SubmissionFormat::markdown, "t");
        if (!r.ref) {
            ++failures;
            continue;
        }
        const auto original = parse_submission(md, SubmissionFormat::markdown);
        const auto back = parse_submission(engine->export_manuscript(r.ref->pub_id), SubmissionFormat::markdown);
        bool ok = back.metadata.title == original.metadata.title;
        // Exported sections start with the source sections, in order; only derived
        // sections (synthesis, provenance) may follow.
        ok = ok && back.sections.size() >= original.sections.size();
        for (std::size_t s = 0; ok && s < original.sections.size(); ++s) {
            ok = back.sections[s].label == original.sections[s].label && back.sections[s].heading == original.sections[s].heading;
        }
        for (std::size_t s = original.sections.size(); ok && s < back.sections.size(); ++s) {
            ok = back.sections[s].heading == "Synthesis" || back.sections[s].heading == "Provenance";
        }
        auto norm = [](const std::vector<std::string>& lines) {
            std::vector<std::string> out;
            for (const auto& l : lines) {
                auto c = parse_claim_line(l);
                c.line.clear();
                c.subject = normalize_name(c.subject);
                c.object = normalize_name(c.object);
                out.push_back(format_claim_line(c));
            }
            std::sort(out.begin(), out.end());
            return out;
        };
        ok = ok && norm(back.claims_declared) == norm(original.claims_declared);
        if (!ok) {
            ++failures;
            if (first_failure.empty()) {
                first_failure = "; first failure: " + d.title;
            }
        }
    }
    return {failures == 0, "100 publications, " + std::to_string(failures) + " mismatches" + first_failure};
}

}  // namespace

int main(int argc, char** argv) {
    ::testing::InitGoogleTest(&argc, argv);
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"retrieval oracle", retrieval_oracle},
        {"self-hosting demo", self_hosting_demo},
        {"grounding soundness", grounding_soundness},
        {"synthesis oracle", synthesis_oracle},
        {"update narrative", update_narrative},
        {"supersede semantics", supersede_semantics},
        {"validation gates", validation_gates},
        {"API contract", api_contract},
        {"alias equivalence", alias_equivalence},
        {"refusal calibration", refusal_calibration},
        {"export round-trip", export_round_trip},
    };
    std::vector<std::string> lines;
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += o.pass ? 0 : 1;
        lines.push_back(std::string(o.pass ? "PASS" : "FAIL") + " criterion " + std::to_string(i + 1) + ": " +
                        criteria[i].first + " - " + o.detail);
        std::cout << lines.back() << std::endl;
    }
    std::cout << "\nSummary: " << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed\n";
    for (const auto& l : lines) {
        std::cout << l << "\n";
    }
    return failed == 0 ? 0 : 1;
}
