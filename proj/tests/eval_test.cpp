#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "convkit/error.hpp"
#include "convkit/eval.hpp"
#include "convkit/seed.hpp"

using namespace convkit;
using namespace convkit::eval;
using corpus::Qrels;
using corpus::RunFile;

namespace {

RunFile run_of(const std::string& qid, const std::vector<std::string>& docs)
{
    RunFile run;
    double score = 10.0;
    int rank = 1;
    for (const auto& d : docs) {
        run.entries.push_back({qid, d, rank++, score});
        score -= 1.0;
    }
    return run;
}

}  // namespace

TEST_CASE("bleu2 hand values")
{
    CHECK(bleu2("what is the evidence for it ?", "what is the evidence for it ?") == doctest::Approx(1.0));
    CHECK(std::abs(bleu2("the cat sat", "the cat sat down") - 0.716531) < 1e-6);
    CHECK(bleu2("x y z", "a b c") < 0.3);
    // Disjoint: both precisions smoothed to 1/4 and 1/3, no brevity penalty.
    CHECK(bleu2("x y z", "a b c") == doctest::Approx(std::sqrt(0.25 * (1.0 / 3.0))));
    CHECK(bleu2("", "a b c") == 0.0);
}

TEST_CASE("bleu2 with a one-token candidate uses unigram precision")
{
    // p1 = 1; brevity penalty exp(1 - 3).
    CHECK(bleu2("cat", "the cat sat") == doctest::Approx(std::exp(-2.0)));
}

TEST_CASE("bleu2 clips repeated n-grams")
{
    // Candidate "the the the" vs "the cat": p1 = 1/3, p2 = 0 -> smoothed 1/3; bp = 1.
    CHECK(bleu2("the the the", "the cat") == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("bleu2 ignores casing and optionally punctuation")
{
    CHECK(bleu2("The Cat SAT", "the cat sat down") == doctest::Approx(bleu2("the cat sat", "the cat sat down")));
    TextOptions strip;
    strip.strip_punct = true;
    CHECK(bleu2("what is it", "what is it ?", strip) == doctest::Approx(1.0));
    CHECK(bleu2("what is it", "what is it ?") < 1.0);
    TextOptions cased;
    cased.lowercase = false;
    CHECK(bleu2("The cat", "the cat", cased) < 1.0);
}

TEST_CASE("rouge_l hand values")
{
    CHECK(std::abs(rouge_l("a c", "a b c") - 0.8) < 1e-9);
    CHECK(rouge_l("a b c", "a b c") == doctest::Approx(1.0));
    CHECK(rouge_l("x y", "a b c") == 0.0);
    CHECK(rouge_l("", "a") == 0.0);
    CHECK(rouge_l("a", "") == 0.0);
}

TEST_CASE("ndcg hand values")
{
    Qrels qrels{{"q", {{"d1", 3}, {"d2", 1}}}};
    CHECK(ndcg_at_k(run_of("q", {"d1", "d2"}), qrels).report.aggregate == doctest::Approx(1.0));
    const double v = ndcg_at_k(run_of("q", {"d2", "d1"}), qrels).report.aggregate;
    CHECK(std::abs(v - 0.709810) < 1e-6);
    CHECK(std::abs(v - (1.0 + 7.0 / std::log2(3.0)) / (7.0 + 1.0 / std::log2(3.0))) < 1e-12);
    CHECK(ndcg_at_k(run_of("q", {"x", "y", "z", "d1"}), qrels).report.aggregate == 0.0);
}

TEST_CASE("ndcg linear gain")
{
    Qrels qrels{{"q", {{"d1", 3}, {"d2", 1}}}};
    NdcgOptions o;
    o.gain = parse_gain("linear");
    const double v = ndcg_at_k(run_of("q", {"d2", "d1"}), qrels, o).report.aggregate;
    CHECK(v == doctest::Approx((1.0 + 3.0 / std::log2(3.0)) / (3.0 + 1.0 / std::log2(3.0))));
    CHECK_THROWS_AS(parse_gain("cubic"), Error);
}

TEST_CASE("ndcg bookkeeping")
{
    Qrels qrels{{"q1", {{"d1", 2}}}, {"q2", {{"d9", 1}}}, {"q3", {{"d1", 0}}}};
    RunFile run = run_of("q1", {"d1"});
    for (const auto& e : run_of("zz", {"d1"}).entries) {
        run.entries.push_back(e);
    }
    for (const auto& e : run_of("q3", {"d1"}).entries) {
        run.entries.push_back(e);
    }
    auto r = ndcg_at_k(run, qrels);
    CHECK(r.skipped == std::vector<std::string>{"zz"});
    // q1 perfect, q2 judged but absent counts as 0, q3 all-zero judgments scores 0.
    CHECK(r.report.per_query.at("q1") == 1.0);
    CHECK(r.report.per_query.at("q2") == 0.0);
    CHECK(r.report.per_query.at("q3") == 0.0);
    CHECK(r.report.aggregate == doctest::Approx(1.0 / 3.0));
    CHECK(r.report.metric == "ndcg@3");

    NdcgOptions o;
    o.missing_as_zero = false;
    CHECK(ndcg_at_k(run, qrels, o).report.per_query.size() == 2);
}

TEST_CASE("ndcg depends on ranks only")
{
    Rng rng(6);
    Qrels qrels;
    RunFile run;
    for (int q = 0; q < 20; ++q) {
        const auto qid = "t_" + std::to_string(q + 1);
        double score = 100.0;
        int rank = 0;
        for (int r = 1; r <= 10; ++r) {
            const auto doc = "d" + std::to_string(rng.below(30));
            if (qrels[qid].contains(doc)) {
                continue;
            }
            qrels[qid][doc] = static_cast<int>(rng.below(4));
            run.entries.push_back({qid, doc, ++rank, score});
            score -= 1.0 + rng.uniform();
        }
    }
    auto base = ndcg_at_k(run, qrels).report;
    auto scaled = run;
    for (auto& e : scaled.entries) {
        e.score = 3.5 * e.score + 11.0;
    }
    auto other = ndcg_at_k(scaled, qrels).report;
    CHECK(base.per_query == other.per_query);
    for (const auto& [q, v] : base.per_query) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0 + 1e-12);
    }
}

TEST_CASE("que_frac")
{
    CHECK(que_frac({"what is x ?", "tell me y ."}) == 0.5);
    CHECK(que_frac({"what is x ?", "why y"}) == 1.0);
    CHECK(que_frac({"tell me y ."}) == 0.0);
    CHECK_THROWS_AS(que_frac({}), Error);
}

TEST_CASE("copy_frac worked example and conventions")
{
    const auto stop = retrieval::load_stopwords();
    CHECK(copy_frac("what is the evidence for the bronze age collapse ?", "what is the evidence for it ?",
                    {"tell me about the bronze age collapse ."}, stop) == 1.0);
    CHECK(copy_frac("what is it ?", "what is it ?", {}, stop) == 1.0);
    // New = {bronze, zanzibar}; only bronze occurs in the context.
    CHECK(copy_frac("what is bronze zanzibar ?", "what is it ?", {"bronze age"}, stop) == 0.5);
}

TEST_CASE("copy_frac never decreases as context grows")
{
    const retrieval::StopwordSet stop{"the"};
    Rng rng(15);
    auto random_text = [&](std::size_t n) {
        std::string s;
        for (std::size_t i = 0; i < n; ++i) {
            s += "w" + std::to_string(rng.below(15)) + " ";
        }
        return s;
    };
    for (int trial = 0; trial < 300; ++trial) {
        const auto rewrite = random_text(1 + rng.below(8));
        const auto source = random_text(rng.below(5));
        std::vector<std::string> context;
        double prev = copy_frac(rewrite, source, context, stop);
        for (int k = 0; k < 4; ++k) {
            context.push_back(random_text(rng.below(6)));
            const double now = copy_frac(rewrite, source, context, stop);
            REQUIRE(now >= prev);
            REQUIRE(now <= 1.0);
            prev = now;
        }
    }
}

TEST_CASE("per-turn breakdown")
{
    MetricReport r;
    r.per_query = {{"a_1", 1.0}, {"b_1", 0.0}, {"a_2", 0.5}};
    r.finalize();
    auto g = per_turn_breakdown(r);
    REQUIRE(g.size() == 2);
    CHECK(g.at(1).mean == 0.5);
    CHECK(g.at(1).count == 2);
    CHECK(g.at(2).mean == 0.5);
    CHECK(format_breakdown_csv(g) == "turn,mean,count\n1,0.500000,2\n2,0.500000,1\n");

    MetricReport single;
    single.per_query = {{"t_4", 0.25}};
    CHECK(per_turn_breakdown(single).size() == 1);

    MetricReport bad;
    bad.per_query = {{"nounderscore", 1.0}};
    CHECK_THROWS_AS(per_turn_breakdown(bad), Error);
    bad.per_query = {{"x_0", 1.0}};
    CHECK_THROWS_AS(per_turn_breakdown(bad), Error);

    // Topic ids may themselves contain underscores.
    MetricReport nested;
    nested.per_query = {{"topic_a_3", 1.0}};
    CHECK(per_turn_breakdown(nested).begin()->first == 3);
}

TEST_CASE("equal-sized groups recombine to the overall mean")
{
    Rng rng(2);
    MetricReport r;
    for (int t = 1; t <= 5; ++t) {
        for (int s = 0; s < 7; ++s) {
            r.per_query["s" + std::to_string(s) + "_" + std::to_string(t)] = rng.uniform();
        }
    }
    r.finalize();
    double sum = 0.0;
    auto groups = per_turn_breakdown(r);
    for (const auto& [turn, g] : groups) {
        sum += g.mean;
    }
    CHECK(sum / static_cast<double>(groups.size()) == doctest::Approx(r.aggregate).epsilon(1e-12));
}

TEST_CASE("report formats")
{
    MetricReport r;
    r.metric = "bleu2";
    r.per_query = {{"31_1", 1.0}, {"31_2", 0.5}};
    r.finalize();
    CHECK(r.aggregate == 0.75);
    const auto csv = format_report_csv(r);
    CHECK(csv == "query_id,value\n31_1,1.000000\n31_2,0.500000\nALL,0.750000\n");
    auto back = parse_report_csv(csv);
    CHECK(back.per_query == r.per_query);
    CHECK(back.aggregate == r.aggregate);
    CHECK(format_report_json(r).find("\"aggregate\": 0.75") != std::string::npos);
    CHECK_THROWS_AS(parse_report_csv("q,notanumber\n"), ParseError);

    MetricReport empty;
    empty.finalize();
    CHECK(empty.aggregate == 0.0);
}

TEST_CASE("text metric reports pair turns by query id")
{
    std::vector<corpus::Session> refs{corpus::make_session("31", {"the cat sat down", "a b c"})};
    std::vector<corpus::Session> cands{corpus::make_session("31", {"the cat sat"})};
    auto bleu = text_metric_report("bleu2", cands, refs);
    CHECK(std::abs(bleu.per_query.at("31_1") - 0.716531) < 1e-6);
    CHECK(bleu.per_query.at("31_2") == 0.0);
    CHECK(bleu.aggregate == doctest::Approx(0.716531 / 2).epsilon(1e-5));
    auto rouge = text_metric_report("rougeL", refs, refs);
    CHECK(rouge.aggregate == 1.0);
    CHECK_THROWS_AS(text_metric_report("meteor", refs, refs), Error);
}

TEST_CASE("metric values stay in the unit interval")
{
    Rng rng(77);
    auto random_text = [&]() {
        std::string s;
        const auto n = rng.below(10);
        for (std::uint64_t i = 0; i < n; ++i) {
            s += "w" + std::to_string(rng.below(6)) + " ";
        }
        return s;
    };
    for (int i = 0; i < 2000; ++i) {
        const auto a = random_text();
        const auto b = random_text();
        const double bl = bleu2(a, b);
        const double rl = rouge_l(a, b);
        REQUIRE(bl >= 0.0);
        REQUIRE(bl <= 1.0 + 1e-12);
        REQUIRE(rl >= 0.0);
        REQUIRE(rl <= 1.0 + 1e-12);
        if (!a.empty() && a.find('w') != std::string::npos) {
            REQUIRE(bleu2(a, a) == doctest::Approx(1.0));
            REQUIRE(rouge_l(a, a) == doctest::Approx(1.0));
        }
    }
}
