#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "convkit/corpus.hpp"
#include "convkit/error.hpp"
#include "convkit/seed.hpp"
#include "test_support.hpp"

using namespace convkit;
using namespace convkit::corpus;

TEST_CASE("one JSONL session line loads as a single-turn session")
{
    auto sessions = parse_sessions_jsonl(
        R"({"topic_id":"31","turns":[{"turn":1,"raw":"Tell me about the Bronze Age collapse."}]})"
        "\n");
    REQUIRE(sessions.size() == 1);
    CHECK(sessions[0].topic_id == "31");
    REQUIRE(sessions[0].turns.size() == 1);
    CHECK(sessions[0].turns[0].turn_number == 1);
    CHECK(sessions[0].turns[0].raw == "Tell me about the Bronze Age collapse.");
}

TEST_CASE("empty session file yields no sessions")
{
    CHECK(parse_sessions_jsonl("").empty());
    CHECK(parse_sessions_jsonl("\n\n").empty());
    CHECK(parse_sessions_tsv("").empty());
}

TEST_CASE("gapped turn numbering is rejected naming the topic")
{
    const std::string line = R"({"topic_id":"77","turns":[{"turn":1,"raw":"a"},{"turn":3,"raw":"b"}]})";
    try {
        parse_sessions_jsonl(line);
        FAIL("expected an invariant error");
    } catch (const InvariantError& e) {
        CHECK(std::string(e.what()).find("77") != std::string::npos);
    }
}

TEST_CASE("session invariants")
{
    CHECK_THROWS_AS(validate(Session{"t", {}}), InvariantError);
    CHECK_THROWS_AS(validate(Session{"t", {{1, "   "}}}), InvariantError);
    CHECK_THROWS_AS(validate(Session{"t", {{1, "a\nb"}}}), InvariantError);
    CHECK_THROWS_AS(validate(Session{"t", {{2, "a"}}}), InvariantError);
    CHECK_NOTHROW(validate(make_session("t", {"a", "b"})));
}

TEST_CASE("malformed JSONL reports the line number")
{
    const std::string content = R"({"topic_id":"1","turns":[{"turn":1,"raw":"a"}]})"
                                "\n{not json\n";
    try {
        parse_sessions_jsonl(content, "s.jsonl");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
        CHECK(std::string(e.what()).rfind("s.jsonl:2:", 0) == 0);
    }
}

TEST_CASE("TSV sessions group consecutive rows by topic")
{
    auto sessions = parse_sessions_tsv("31\t1\tfirst\n31\t2\tsecond\n32\t1\tother\n");
    REQUIRE(sessions.size() == 2);
    CHECK(sessions[0].turns.size() == 2);
    CHECK(sessions[1].topic_id == "32");
    CHECK_THROWS_AS(parse_sessions_tsv("31\tone\tx\n"), ParseError);
    CHECK_THROWS_AS(parse_sessions_tsv("31\t1\n"), ParseError);
}

TEST_CASE("session text is NFC-normalized on load")
{
    // The raw text spells the accent as a separate combining character.
    auto sessions = parse_sessions_jsonl("{\"topic_id\":\"1\",\"turns\":[{\"turn\":1,\"raw\":\"cafe\xcc\x81\"}]}");
    CHECK(sessions[0].turns[0].raw == "caf\xc3\xa9");
}

TEST_CASE("sessions round-trip through JSONL")
{
    std::vector<Session> sessions{make_session("31", {"Tell me about it.", "Tab\there \"quoted\""}),
                                  make_session("32", {"x"})};
    CHECK(parse_sessions_jsonl(format_sessions_jsonl(sessions)) == sessions);
    testing::TempDir dir;
    write_sessions(sessions, dir / "nested/s.jsonl");
    CHECK(load_sessions(dir / "nested/s.jsonl") == sessions);
}

TEST_CASE("collection loading")
{
    auto docs = parse_collection("d1\thello world\n");
    REQUIRE(docs.size() == 1);
    CHECK(docs[0] == Document{"d1", "hello world"});
    CHECK_THROWS_AS(parse_collection("d1\ta\nd1\tb\n"), ParseError);
    CHECK_THROWS_AS(parse_collection("no tab here\n"), ParseError);
}

TEST_CASE("large collection preserves order and count")
{
    std::string content;
    for (int i = 0; i < 10000; ++i) {
        content += "doc" + std::to_string(i) + "\tbody number " + std::to_string(i) + "\n";
    }
    testing::TempDir dir;
    write_file(dir / "c.tsv", content);
    auto docs = load_collection(dir / "c.tsv");
    const auto lines = static_cast<std::size_t>(std::count(content.begin(), content.end(), '\n'));
    REQUIRE(docs.size() == lines);
    for (std::size_t i = 0; i < docs.size(); ++i) {
        REQUIRE(docs[i].doc_id == "doc" + std::to_string(i));
    }
}

TEST_CASE("qrels parsing")
{
    auto q = parse_qrels("31_2 0 d7 2\n");
    CHECK(q.at("31_2").at("d7") == 2);
    CHECK(parse_qrels("31_2 0 d7 1\n31_2 0 d7 3\n").at("31_2").at("d7") == 3);
    CHECK_THROWS_AS(parse_qrels("31_2 0 d7 x\n"), ParseError);
    CHECK_THROWS_AS(parse_qrels("31_2 0 d7 -1\n"), ParseError);
    CHECK_THROWS_AS(parse_qrels("31_2 0 d7\n"), ParseError);
    CHECK(parse_qrels(format_qrels(q)) == q);
}

TEST_CASE("run line format")
{
    RunFile run{"convkit", {{"31_2", "d7", 1, 12.5}}};
    CHECK(format_run(run) == "31_2 Q0 d7 1 12.500000 convkit\n");
    CHECK(format_run(RunFile{}).empty());
}

TEST_CASE("run invariants are enforced on write")
{
    CHECK_THROWS_AS(format_run(RunFile{"t", {{"q", "a", 2, 1.0}}}), InvariantError);
    CHECK_THROWS_AS(format_run(RunFile{"t", {{"q", "a", 1, 1.0}, {"q", "b", 2, 2.0}}}), InvariantError);
    CHECK_THROWS_AS(format_run(RunFile{"t", {{"q", "a", 1, 1.0}, {"q", "a", 2, 1.0}}}), InvariantError);
    // Rank order is per query; entries of different queries may interleave.
    CHECK_NOTHROW(format_run(RunFile{"t", {{"q", "a", 1, 1.0}, {"r", "a", 1, 1.0}, {"q", "b", 2, 0.5}}}));
}

TEST_CASE("a 100-entry run survives write then load")
{
    Rng rng(5);
    RunFile run;
    run.run_tag = "bm25";
    for (int q = 0; q < 4; ++q) {
        double score = 50.0;
        for (int r = 1; r <= 25; ++r) {
            score -= rng.uniform();
            run.entries.push_back({"t" + std::to_string(q) + "_1", "doc" + std::to_string(r * 7 + q), r, score});
        }
    }
    testing::TempDir dir;
    write_run(run, dir / "run.txt");
    auto back = load_run(dir / "run.txt");
    CHECK(back.run_tag == run.run_tag);
    REQUIRE(back.entries.size() == run.entries.size());
    for (std::size_t i = 0; i < run.entries.size(); ++i) {
        CHECK(back.entries[i].query_id == run.entries[i].query_id);
        CHECK(back.entries[i].doc_id == run.entries[i].doc_id);
        CHECK(back.entries[i].rank == run.entries[i].rank);
        CHECK(std::abs(back.entries[i].score - run.entries[i].score) <= 1e-6);
    }
}

TEST_CASE("empty run file loads as an empty run")
{
    CHECK(parse_run("").entries.empty());
    CHECK_THROWS_AS(parse_run("q Q0 d one 1.0 tag\n"), ParseError);
}

TEST_CASE("rewrite pairs round-trip and validate")
{
    std::vector<RewritePair> pairs{{"31", 2, {"tell me about x ."}, "what is it ?", "what is x ?"}};
    CHECK(parse_pairs_jsonl(format_pairs_jsonl(pairs)) == pairs);
    CHECK(format_pairs_jsonl(pairs).find(R"("turn":2)") != std::string::npos);
    CHECK_THROWS_AS(validate(RewritePair{"31", 3, {"a"}, "b", "c"}), InvariantError);
    CHECK_THROWS_AS(validate(RewritePair{"31", 1, {}, "", "c"}), InvariantError);
    CHECK_THROWS_AS(parse_pairs_jsonl(R"({"topic_id":"1","turn":2,"context":[],"source":"a","target":"b"})"),
                    Error);
}

TEST_CASE("query ids join topic and turn")
{
    CHECK(query_id("31", 2) == "31_2");
    CHECK(parse_session_format("tsv") == SessionFormat::tsv);
    CHECK_THROWS_AS(parse_session_format("xml"), Error);
}
