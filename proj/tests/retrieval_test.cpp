#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "convkit/error.hpp"
#include "convkit/retrieval.hpp"
#include "convkit/seed.hpp"
#include "test_support.hpp"

using namespace convkit;
using namespace convkit::retrieval;

namespace {

const StopwordSet no_stopwords;

// Five documents, average length 3 with no stopwords.
const std::vector<Document> five_docs{
    {"d1", "bronze age collapse"},
    {"d2", "bronze age bronze tools"},
    {"d3", "iron age"},
    {"d4", "collapse of empires collapse"},
    {"d5", "pottery styles"},
};

std::string random_doc(Rng& rng, std::size_t vocab)
{
    std::string body;
    const auto n = 1 + rng.below(12);
    for (std::uint64_t i = 0; i < n; ++i) {
        body += (body.empty() ? "" : " ") + std::string("w") + std::to_string(rng.below(vocab));
    }
    return body;
}

}  // namespace

TEST_CASE("building a one-document index")
{
    std::vector<Document> docs{{"d1", "hello world"}};
    auto index = Index::build(docs, no_stopwords);
    CHECK(index.num_terms() == 2);
    CHECK(index.avg_length() == 2.0);
    CHECK(index.num_docs() == 1);
    CHECK(index.df("hello") == 1);
    CHECK(index.df("missing") == 0);
}

TEST_CASE("stopwords are dropped from documents")
{
    std::vector<Document> docs{{"d1", "the the cat"}};
    auto index = Index::build(docs, StopwordSet{"the"});
    CHECK(index.num_terms() == 1);
    auto p = index.postings("cat");
    REQUIRE(p.size() == 1);
    CHECK(p[0] == Posting{0, 1});
    CHECK(index.doc_length(0) == 1);
}

TEST_CASE("punctuation and case do not create terms")
{
    std::vector<Document> docs{{"d1", "Cat, cat. CAT?"}};
    auto index = Index::build(docs, no_stopwords);
    CHECK(index.terms() == std::vector<std::string>{"cat"});
    CHECK(index.postings("cat")[0].tf == 3);
    CHECK(index.doc_length(0) == 3);
}

TEST_CASE("empty collections and duplicate ids are rejected")
{
    CHECK_THROWS_AS(Index::build(std::vector<Document>{}, no_stopwords), Error);
    std::vector<Document> dup{{"a", "x"}, {"a", "y"}};
    CHECK_THROWS_AS(Index::build(dup, no_stopwords), InvariantError);
}

TEST_CASE("index invariants hold for random collections")
{
    Rng rng(8);
    std::vector<Document> docs;
    for (int i = 0; i < 200; ++i) {
        docs.push_back({"doc" + std::to_string(i), random_doc(rng, 40)});
    }
    auto index = Index::build(docs, StopwordSet{"w0", "w1"});
    std::vector<std::uint64_t> length_from_postings(index.num_docs(), 0);
    for (const auto& term : index.terms()) {
        auto list = index.postings(term);
        CHECK(std::is_sorted(list.begin(), list.end(), [](auto a, auto b) { return a.doc < b.doc; }));
        for (const auto& p : list) {
            length_from_postings[p.doc] += p.tf;
        }
    }
    for (std::uint32_t d = 0; d < index.num_docs(); ++d) {
        CHECK(length_from_postings[d] == index.doc_length(d));
    }
    CHECK(Index::build(docs, StopwordSet{"w0", "w1"}) == index);
}

TEST_CASE("single-document IDF case is ln(4/3)")
{
    std::vector<Document> docs{{"d1", "evidence"}};
    auto index = Index::build(docs, no_stopwords);
    const std::vector<std::string> q{"evidence"};
    CHECK(std::abs(score(index, Bm25Params{}, q, 0) - 0.287682) < 1e-6);
    CHECK(std::abs(score(index, Bm25Params{}, q, 0) - std::log(4.0 / 3.0)) < 1e-12);
    CHECK(std::abs(idf(1, 1) - std::log(4.0 / 3.0)) < 1e-12);
}

TEST_CASE("absent terms contribute nothing and k1 cancels at tf 1, average length")
{
    std::vector<Document> docs{{"d1", "evidence"}};
    auto index = Index::build(docs, no_stopwords);
    const std::vector<std::string> q{"evidence", "zanzibar"};
    const double base = score(index, Bm25Params{0.9, 0.4}, q, 0);
    CHECK(base == doctest::Approx(std::log(4.0 / 3.0)));
    CHECK(score(index, Bm25Params{1.8, 0.4}, q, 0) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("repeated query terms count again")
{
    auto index = Index::build(five_docs, no_stopwords);
    const std::vector<std::string> once{"iron"};
    const std::vector<std::string> twice{"iron", "iron"};
    const auto d3 = *index.internal_id("d3");
    CHECK(score(index, Bm25Params{}, twice, d3) == doctest::Approx(2 * score(index, Bm25Params{}, once, d3)));
}

TEST_CASE("five-document collection matches hand scores")
{
    auto index = Index::build(five_docs, no_stopwords);
    REQUIRE(index.avg_length() == 3.0);
    // N = 5, df(bronze) = df(collapse) = 2, so both idf = ln(1 + 3.5 / 2.5) = ln 2.4.
    // d1: tf 1, len 3 = avg: each term weighs 1.
    // d2: bronze tf 2, len 4: 2 * 1.9 / (2 + 0.9 * (0.6 + 0.4 * 4 / 3)) = 3.8 / 3.02.
    // d4: collapse tf 2, len 4: same as d2, tie broken by doc id.
    const double idf24 = std::log(2.4);
    const double expected_d1 = 2.0 * idf24;
    const double expected_d2 = idf24 * 3.8 / 3.02;
    auto hits = search(index, Bm25Params{}, "q1", "bronze collapse");
    REQUIRE(hits.size() == 3);
    CHECK(hits[0].doc_id == "d1");
    CHECK(hits[1].doc_id == "d2");
    CHECK(hits[2].doc_id == "d4");
    CHECK(std::abs(hits[0].score - expected_d1) < 1e-6);
    CHECK(std::abs(hits[1].score - expected_d2) < 1e-6);
    CHECK(std::abs(hits[2].score - expected_d2) < 1e-6);
    CHECK(std::abs(expected_d1 - 1.750937) < 1e-6);
    CHECK(std::abs(expected_d2 - 1.101583) < 1e-6);
    for (std::size_t i = 0; i < hits.size(); ++i) {
        CHECK(hits[i].rank == static_cast<int>(i) + 1);
        CHECK(hits[i].query_id == "q1");
    }
}

TEST_CASE("three-document collection in hand-computed order")
{
    std::vector<Document> docs{{"a", "apple apple banana"}, {"b", "banana cherry"}, {"c", "cherry cherry cherry date"}};
    auto index = Index::build(docs, no_stopwords);
    // avglen 3; idf(df=1, N=3) = ln(1 + 2.5/1.5) = ln(8/3); idf(df=2) = ln(1 + 1.5/2.5) = ln 1.6.
    const double idf1 = std::log(8.0 / 3.0);
    const double idf2 = std::log(1.6);
    auto w = [](double tf, double len) { return tf * 1.9 / (tf + 0.9 * (0.6 + 0.4 * len / 3.0)); };
    const double a = idf1 * w(2, 3);  // apple
    const double b = idf2 * w(1, 2);  // cherry
    const double c = idf2 * w(3, 4);  // cherry
    auto hits = search(index, Bm25Params{}, "q", "apple cherry");
    REQUIRE(hits.size() == 3);
    std::vector<std::pair<double, std::string>> expected{{a, "a"}, {b, "b"}, {c, "c"}};
    std::sort(expected.begin(), expected.end(), [](auto x, auto y) { return x.first > y.first; });
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(hits[i].doc_id == expected[i].second);
        CHECK(std::abs(hits[i].score - expected[i].first) < 1e-6);
    }
}

TEST_CASE("search result shape")
{
    auto index = Index::build(five_docs, no_stopwords);
    CHECK(search(index, Bm25Params{}, "q", "age bronze collapse pottery iron", 100).size() <= 5);
    CHECK(search(index, Bm25Params{}, "q", "age bronze collapse pottery iron", 2).size() == 2);
    CHECK(search(index, Bm25Params{}, "q", "zanzibar").empty());
    CHECK(search(index, Bm25Params{}, "q", "").empty());
    CHECK_THROWS_AS(search(index, Bm25Params{0.0, 0.4}, "q", "age"), InvariantError);
    CHECK_THROWS_AS(search(index, Bm25Params{0.9, 1.5}, "q", "age"), InvariantError);
}

TEST_CASE("identical documents take adjacent ranks by doc id")
{
    std::vector<Document> docs{{"z9", "same words here"}, {"a1", "other text"}, {"m5", "same words here"}};
    auto index = Index::build(docs, no_stopwords);
    auto hits = search(index, Bm25Params{}, "q", "same words");
    REQUIRE(hits.size() == 2);
    CHECK(hits[0].doc_id == "m5");
    CHECK(hits[1].doc_id == "z9");
    CHECK(hits[0].score == hits[1].score);
}

TEST_CASE("stopwords are removed from queries too")
{
    std::vector<Document> docs{{"d1", "the cat"}, {"d2", "the dog"}};
    auto index = Index::build(docs, StopwordSet{"the"});
    CHECK(search(index, Bm25Params{}, "q", "the").empty());
    CHECK(search(index, Bm25Params{}, "q", "the cat").size() == 1);
}

TEST_CASE("the shipped stopword list")
{
    auto stop = load_stopwords();
    CHECK(stop.contains("the"));
    CHECK(stop.contains("of"));
    CHECK_FALSE(stop.contains("bronze"));
    CHECK(analyze_terms("What is the evidence for the Bronze Age collapse?", stop) ==
          std::vector<std::string>{"evidence", "bronze", "age", "collapse"});
}

TEST_CASE("random search properties")
{
    Rng rng(21);
    std::vector<Document> docs;
    for (int i = 0; i < 300; ++i) {
        docs.push_back({"doc" + std::to_string(i), random_doc(rng, 60)});
    }
    auto index = Index::build(docs, no_stopwords);
    auto shuffled = docs;
    rng.shuffle(shuffled);
    auto index2 = Index::build(shuffled, no_stopwords);
    for (int q = 0; q < 100; ++q) {
        const auto query = random_doc(rng, 80);
        const std::size_t k = 1 + rng.below(30);
        auto hits = search(index, Bm25Params{}, "q", query, k);
        REQUIRE(hits.size() <= k);
        for (std::size_t i = 0; i + 1 < hits.size(); ++i) {
            REQUIRE(hits[i].score >= hits[i + 1].score);
        }
        for (const auto& h : hits) {
            REQUIRE(h.score > 0.0);
            REQUIRE(index.internal_id(h.doc_id).has_value());
        }
        // Insertion order changes nothing but internal ids.
        auto hits2 = search(index2, Bm25Params{}, "q", query, k);
        REQUIRE(hits2.size() == hits.size());
        for (std::size_t i = 0; i < hits.size(); ++i) {
            REQUIRE(hits2[i].doc_id == hits[i].doc_id);
            REQUIRE(std::abs(hits2[i].score - hits[i].score) < 1e-12);
        }
        // The accumulated score agrees with scoring one document at a time.
        const auto terms = analyze_terms(query, no_stopwords);
        for (const auto& h : hits) {
            REQUIRE(std::abs(score(index, Bm25Params{}, terms, *index.internal_id(h.doc_id)) - h.score) < 1e-9);
        }
    }
}

TEST_CASE("adding a query-term occurrence never lowers the score at fixed average length")
{
    // Doc a grows by one "t"; doc c shrinks by one filler word so the average stays fixed.
    Rng rng(12);
    for (int trial = 0; trial < 200; ++trial) {
        const auto tf = 1 + rng.below(5);
        const auto filler = 1 + rng.below(5);
        std::string a;
        for (std::uint64_t i = 0; i < tf; ++i) {
            a += "t ";
        }
        for (std::uint64_t i = 0; i < filler; ++i) {
            a += "x ";
        }
        std::vector<Document> before{{"a", a}, {"b", "t y y"}, {"c", "z z z z z z"}};
        std::vector<Document> after{{"a", a + "t"}, {"b", "t y y"}, {"c", "z z z z z"}};
        auto i1 = Index::build(before, no_stopwords);
        auto i2 = Index::build(after, no_stopwords);
        REQUIRE(i1.avg_length() == i2.avg_length());
        const std::vector<std::string> q{"t"};
        REQUIRE(score(i2, Bm25Params{}, q, 0) >= score(i1, Bm25Params{}, q, 0));
    }
}

TEST_CASE("index files round-trip")
{
    Rng rng(30);
    std::vector<Document> docs;
    for (int i = 0; i < 500; ++i) {
        docs.push_back({"doc" + std::to_string(i * 13), random_doc(rng, 5000)});
    }
    auto index = Index::build(docs, StopwordSet{"w1", "w2"});
    testing::TempDir dir;
    index.save(dir / "idx.bin");
    auto back = Index::load(dir / "idx.bin");
    CHECK(back == index);
    CHECK(back.internal_id("doc13") == index.internal_id("doc13"));
    CHECK(search(back, Bm25Params{}, "q", "w3 w4 w5") == search(index, Bm25Params{}, "q", "w3 w4 w5"));

    corpus::write_file(dir / "bad.bin", "NOTANINDEX");
    CHECK_THROWS_AS(Index::load(dir / "bad.bin"), Error);
    auto bytes = corpus::read_file(dir / "idx.bin");
    corpus::write_file(dir / "short.bin", bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_AS(Index::load(dir / "short.bin"), Error);
}

TEST_CASE("reranking")
{
    auto index = Index::build(five_docs, no_stopwords);
    auto hits = search(index, Bm25Params{}, "q", "bronze collapse age");
    REQUIRE(hits.size() >= 3);
    std::map<std::string, std::string> bodies;
    for (const auto& d : five_docs) {
        bodies[d.doc_id] = d.body;
    }
    auto body_of = [&](std::string_view id) -> std::string_view { return bodies.at(std::string(id)); };

    CHECK(rerank(hits, "q", body_of) == hits);

    // A scorer that reverses the first-stage order.
    std::map<std::string, double> first_stage;
    for (const auto& h : hits) {
        first_stage[std::string(bodies.at(h.doc_id))] = h.score;
    }
    auto reversed = rerank(hits, "q", body_of,
                           [&](std::string_view, std::string_view body) { return -first_stage.at(std::string(body)); });
    REQUIRE(reversed.size() == hits.size());
    for (std::size_t i = 0; i < hits.size(); ++i) {
        CHECK(reversed[i].doc_id == hits[hits.size() - 1 - i].doc_id);
        CHECK(reversed[i].rank == static_cast<int>(i) + 1);
    }

    // Any scorer yields a permutation of the candidates.
    auto by_length = rerank(hits, "q", body_of,
                            [](std::string_view, std::string_view body) { return static_cast<double>(body.size()); });
    auto ids = [](const std::vector<RunEntry>& v) {
        std::vector<std::string> out;
        for (const auto& e : v) {
            out.push_back(e.doc_id);
        }
        std::sort(out.begin(), out.end());
        return out;
    };
    CHECK(ids(by_length) == ids(hits));
}
