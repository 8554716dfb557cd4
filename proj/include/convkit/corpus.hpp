#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace convkit::corpus {

struct Turn {
    int turn_number = 0;
    std::string raw;

    bool operator==(const Turn&) const = default;
};

/// An ordered conversation of queries. Turns are numbered 1..N.
struct Session {
    std::string topic_id;
    std::vector<Turn> turns;

    bool operator==(const Session&) const = default;
};

/// Throws InvariantError naming the topic when numbering or turn text is invalid.
void validate(const Session& session);

/// Builds a session from plain strings, numbering turns 1..N. Validates.
Session make_session(std::string topic_id, const std::vector<std::string>& raws);

/// (context queries, source, target): the unit of rewriter training and evaluation.
struct RewritePair {
    std::string topic_id;
    int turn_number = 0;
    std::vector<std::string> context;
    std::string source;
    std::string target;

    bool operator==(const RewritePair&) const = default;
};

void validate(const RewritePair& pair);

struct Document {
    std::string doc_id;
    std::string body;

    bool operator==(const Document&) const = default;
};

/// query_id -> (doc_id -> grade)
using Qrels = std::map<std::string, std::map<std::string, int>, std::less<>>;

struct RunEntry {
    std::string query_id;
    std::string doc_id;
    int rank = 0;
    double score = 0.0;

    bool operator==(const RunEntry&) const = default;
};

struct RunFile {
    std::string run_tag = "convkit";
    std::vector<RunEntry> entries;
};

/// Ranks 1..n consecutive and non-increasing scores within each query; no duplicate
/// (query_id, doc_id). Entries of one query must be contiguous.
void validate(const RunFile& run);

enum class SessionFormat { jsonl, tsv };

SessionFormat parse_session_format(std::string_view name);

std::string query_id(std::string_view topic_id, int turn_number);

// Loaders. All text is NFC-normalized; records are returned in file order.
std::vector<Session> load_sessions(const std::filesystem::path& path,
                                   SessionFormat format = SessionFormat::jsonl);
std::vector<Session> parse_sessions_jsonl(std::string_view content, std::string_view source_name = "<memory>");
std::vector<Session> parse_sessions_tsv(std::string_view content, std::string_view source_name = "<memory>");

std::vector<Document> load_collection(const std::filesystem::path& path);
std::vector<Document> parse_collection(std::string_view content, std::string_view source_name = "<memory>");

Qrels load_qrels(const std::filesystem::path& path);
Qrels parse_qrels(std::string_view content, std::string_view source_name = "<memory>");

RunFile load_run(const std::filesystem::path& path);
RunFile parse_run(std::string_view content, std::string_view source_name = "<memory>");

// Writers.
std::string format_sessions_jsonl(const std::vector<Session>& sessions);
void write_sessions(const std::vector<Session>& sessions, const std::filesystem::path& path);

std::string format_pairs_jsonl(const std::vector<RewritePair>& pairs);
std::vector<RewritePair> parse_pairs_jsonl(std::string_view content, std::string_view source_name = "<memory>");
void write_pairs(const std::vector<RewritePair>& pairs, const std::filesystem::path& path);
std::vector<RewritePair> load_pairs(const std::filesystem::path& path);

std::string format_qrels(const Qrels& qrels);

/// One line per entry: "<qid> Q0 <doc> <rank> <score:%.6f> <tag>". Validates first.
std::string format_run(const RunFile& run);
void write_run(const RunFile& run, const std::filesystem::path& path);

// File helpers shared by loaders and the CLI.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

}  // namespace convkit::corpus
