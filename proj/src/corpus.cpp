#include "convkit/corpus.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "convkit/error.hpp"
#include "convkit/text.hpp"

namespace convkit::corpus {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

template <typename Fn>
void for_each_line(std::string_view content, Fn&& fn)
{
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start < content.size()) {
        auto end = content.find('\n', start);
        if (end == std::string_view::npos) {
            end = content.size();
        }
        auto line = content.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        fn(++line_no, line);
        start = end + 1;
    }
}

std::vector<std::string_view> split_whitespace(std::string_view line)
{
    std::vector<std::string_view> fields;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && text::is_ascii_space(line[i])) {
            ++i;
        }
        auto start = i;
        while (i < line.size() && !text::is_ascii_space(line[i])) {
            ++i;
        }
        if (i > start) {
            fields.push_back(line.substr(start, i - start));
        }
    }
    return fields;
}

template <typename T>
bool parse_number(std::string_view s, T& out)
{
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

bool parse_double(std::string_view s, double& out)
{
    // from_chars for double is not available in every libstdc++ we target.
    std::string tmp(s);
    char* end = nullptr;
    out = std::strtod(tmp.c_str(), &end);
    return !tmp.empty() && end == tmp.c_str() + tmp.size();
}

}  // namespace

void validate(const Session& session)
{
    if (session.turns.empty()) {
        throw InvariantError("session " + session.topic_id + ": no turns");
    }
    for (std::size_t i = 0; i < session.turns.size(); ++i) {
        const auto& turn = session.turns[i];
        if (turn.turn_number != static_cast<int>(i) + 1) {
            throw InvariantError("session " + session.topic_id + ": turn " + std::to_string(turn.turn_number) +
                                 " found where turn " + std::to_string(i + 1) + " was expected");
        }
        if (text::trim(turn.raw).empty()) {
            throw InvariantError("session " + session.topic_id + ": turn " + std::to_string(turn.turn_number) +
                                 " is empty");
        }
        if (turn.raw.find_first_of("\r\n") != std::string::npos) {
            throw InvariantError("session " + session.topic_id + ": turn " + std::to_string(turn.turn_number) +
                                 " contains a newline");
        }
    }
}

Session make_session(std::string topic_id, const std::vector<std::string>& raws)
{
    Session s{std::move(topic_id), {}};
    for (std::size_t i = 0; i < raws.size(); ++i) {
        s.turns.push_back({static_cast<int>(i) + 1, raws[i]});
    }
    validate(s);
    return s;
}

void validate(const RewritePair& pair)
{
    if (pair.turn_number < 1) {
        throw InvariantError("pair " + pair.topic_id + ": turn number must be positive");
    }
    if (pair.context.size() != static_cast<std::size_t>(pair.turn_number - 1)) {
        throw InvariantError("pair " + query_id(pair.topic_id, pair.turn_number) + ": context has " +
                             std::to_string(pair.context.size()) + " turns, expected " +
                             std::to_string(pair.turn_number - 1));
    }
    if (text::trim(pair.source).empty() || text::trim(pair.target).empty()) {
        throw InvariantError("pair " + query_id(pair.topic_id, pair.turn_number) + ": empty source or target");
    }
}

void validate(const RunFile& run)
{
    std::unordered_map<std::string, std::pair<int, double>> last;  // qid -> (rank, score)
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& e : run.entries) {
        if (!seen.emplace(e.query_id, e.doc_id).second) {
            throw InvariantError("run: duplicate entry for query " + e.query_id + " doc " + e.doc_id);
        }
        auto it = last.find(e.query_id);
        int expected_rank = it == last.end() ? 1 : it->second.first + 1;
        if (e.rank != expected_rank) {
            throw InvariantError("run: query " + e.query_id + " has rank " + std::to_string(e.rank) +
                                 " where " + std::to_string(expected_rank) + " was expected");
        }
        if (it != last.end() && e.score > it->second.second) {
            throw InvariantError("run: query " + e.query_id + " score increases at rank " + std::to_string(e.rank));
        }
        last[e.query_id] = {e.rank, e.score};
    }
}

SessionFormat parse_session_format(std::string_view name)
{
    if (name == "jsonl") {
        return SessionFormat::jsonl;
    }
    if (name == "tsv") {
        return SessionFormat::tsv;
    }
    throw Error("unknown session format '" + std::string(name) + "' (expected jsonl or tsv)");
}

std::string query_id(std::string_view topic_id, int turn_number)
{
    return std::string(topic_id) + "_" + std::to_string(turn_number);
}

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_file(const std::filesystem::path& path, std::string_view content)
{
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) {
        throw Error("write failed for " + path.string());
    }
}

std::vector<Session> parse_sessions_jsonl(std::string_view content, std::string_view source_name)
{
    std::vector<Session> sessions;
    const std::string source(source_name);
    for_each_line(content, [&](std::size_t line_no, std::string_view line) {
        if (text::trim(line).empty()) {
            return;
        }
        Session session;
        try {
            auto j = json::parse(line);
            session.topic_id = text::nfc(j.at("topic_id").get<std::string>());
            for (const auto& t : j.at("turns")) {
                session.turns.push_back({t.at("turn").get<int>(), text::nfc(t.at("raw").get<std::string>())});
            }
        } catch (const json::exception& e) {
            throw ParseError(source, line_no, e.what());
        }
        validate(session);
        sessions.push_back(std::move(session));
    });
    return sessions;
}

std::vector<Session> parse_sessions_tsv(std::string_view content, std::string_view source_name)
{
    std::vector<Session> sessions;
    const std::string source(source_name);
    for_each_line(content, [&](std::size_t line_no, std::string_view line) {
        if (text::trim(line).empty()) {
            return;
        }
        auto fields = text::split(line, '\t');
        if (fields.size() != 3) {
            throw ParseError(source, line_no, "expected 3 tab-separated fields (topic_id, turn, raw)");
        }
        int turn = 0;
        if (!parse_number(fields[1], turn)) {
            throw ParseError(source, line_no, "turn is not an integer");
        }
        auto topic = text::nfc(fields[0]);
        if (sessions.empty() || sessions.back().topic_id != topic) {
            sessions.push_back({topic, {}});
        }
        sessions.back().turns.push_back({turn, text::nfc(fields[2])});
    });
    for (const auto& s : sessions) {
        validate(s);
    }
    return sessions;
}

std::vector<Session> load_sessions(const std::filesystem::path& path, SessionFormat format)
{
    auto content = read_file(path);
    return format == SessionFormat::jsonl ? parse_sessions_jsonl(content, path.string())
                                          : parse_sessions_tsv(content, path.string());
}

std::vector<Document> parse_collection(std::string_view content, std::string_view source_name)
{
    std::vector<Document> docs;
    std::unordered_set<std::string> ids;
    const std::string source(source_name);
    for_each_line(content, [&](std::size_t line_no, std::string_view line) {
        if (line.empty()) {
            return;
        }
        auto tab = line.find('\t');
        if (tab == std::string_view::npos || tab == 0) {
            throw ParseError(source, line_no, "expected '<doc_id>\\t<body>'");
        }
        Document doc{text::nfc(line.substr(0, tab)), text::nfc(line.substr(tab + 1))};
        if (!ids.insert(doc.doc_id).second) {
            throw ParseError(source, line_no, "duplicate doc_id " + doc.doc_id);
        }
        docs.push_back(std::move(doc));
    });
    return docs;
}

std::vector<Document> load_collection(const std::filesystem::path& path)
{
    return parse_collection(read_file(path), path.string());
}

Qrels parse_qrels(std::string_view content, std::string_view source_name)
{
    Qrels qrels;
    const std::string source(source_name);
    for_each_line(content, [&](std::size_t line_no, std::string_view line) {
        auto fields = split_whitespace(line);
        if (fields.empty()) {
            return;
        }
        if (fields.size() != 4) {
            throw ParseError(source, line_no, "expected '<query_id> 0 <doc_id> <grade>'");
        }
        int grade = 0;
        if (!parse_number(fields[3], grade)) {
            throw ParseError(source, line_no, "grade '" + std::string(fields[3]) + "' is not an integer");
        }
        if (grade < 0) {
            throw ParseError(source, line_no, "negative grade");
        }
        qrels[std::string(fields[0])][std::string(fields[2])] = grade;  // last wins
    });
    return qrels;
}

Qrels load_qrels(const std::filesystem::path& path)
{
    return parse_qrels(read_file(path), path.string());
}

std::string format_qrels(const Qrels& qrels)
{
    std::string out;
    for (const auto& [qid, docs] : qrels) {
        for (const auto& [doc, grade] : docs) {
            out += qid + " 0 " + doc + " " + std::to_string(grade) + "\n";
        }
    }
    return out;
}

RunFile parse_run(std::string_view content, std::string_view source_name)
{
    RunFile run;
    bool have_tag = false;
    const std::string source(source_name);
    for_each_line(content, [&](std::size_t line_no, std::string_view line) {
        auto fields = split_whitespace(line);
        if (fields.empty()) {
            return;
        }
        if (fields.size() != 6) {
            throw ParseError(source, line_no, "expected '<qid> Q0 <doc_id> <rank> <score> <tag>'");
        }
        RunEntry e;
        e.query_id = fields[0];
        e.doc_id = fields[2];
        if (!parse_number(fields[3], e.rank)) {
            throw ParseError(source, line_no, "rank is not an integer");
        }
        if (!parse_double(fields[4], e.score)) {
            throw ParseError(source, line_no, "score is not a number");
        }
        if (!have_tag) {
            run.run_tag = fields[5];
            have_tag = true;
        }
        run.entries.push_back(std::move(e));
    });
    try {
        validate(run);
    } catch (const InvariantError& e) {
        throw ParseError(source, 0, e.what());
    }
    return run;
}

RunFile load_run(const std::filesystem::path& path)
{
    return parse_run(read_file(path), path.string());
}

std::string format_run(const RunFile& run)
{
    validate(run);
    std::string out;
    char score[64];
    for (const auto& e : run.entries) {
        std::snprintf(score, sizeof(score), "%.6f", e.score);
        out += e.query_id + " Q0 " + e.doc_id + " " + std::to_string(e.rank) + " " + score + " " + run.run_tag + "\n";
    }
    return out;
}

void write_run(const RunFile& run, const std::filesystem::path& path)
{
    write_file(path, format_run(run));
}

std::string format_sessions_jsonl(const std::vector<Session>& sessions)
{
    std::string out;
    for (const auto& s : sessions) {
        ordered_json j;
        j["topic_id"] = s.topic_id;
        j["turns"] = ordered_json::array();
        for (const auto& t : s.turns) {
            ordered_json turn;
            turn["turn"] = t.turn_number;
            turn["raw"] = t.raw;
            j["turns"].push_back(std::move(turn));
        }
        out += j.dump() + "\n";
    }
    return out;
}

void write_sessions(const std::vector<Session>& sessions, const std::filesystem::path& path)
{
    write_file(path, format_sessions_jsonl(sessions));
}

std::string format_pairs_jsonl(const std::vector<RewritePair>& pairs)
{
    std::string out;
    for (const auto& p : pairs) {
        ordered_json j;
        j["topic_id"] = p.topic_id;
        j["turn"] = p.turn_number;
        j["context"] = p.context;
        j["source"] = p.source;
        j["target"] = p.target;
        out += j.dump() + "\n";
    }
    return out;
}

std::vector<RewritePair> parse_pairs_jsonl(std::string_view content, std::string_view source_name)
{
    std::vector<RewritePair> pairs;
    const std::string source(source_name);
    for_each_line(content, [&](std::size_t line_no, std::string_view line) {
        if (text::trim(line).empty()) {
            return;
        }
        RewritePair p;
        try {
            auto j = json::parse(line);
            p.topic_id = text::nfc(j.at("topic_id").get<std::string>());
            p.turn_number = j.at("turn").get<int>();
            for (const auto& c : j.at("context")) {
                p.context.push_back(text::nfc(c.get<std::string>()));
            }
            p.source = text::nfc(j.at("source").get<std::string>());
            p.target = text::nfc(j.at("target").get<std::string>());
        } catch (const json::exception& e) {
            throw ParseError(source, line_no, e.what());
        }
        try {
            validate(p);
        } catch (const InvariantError& e) {
            throw ParseError(source, line_no, e.what());
        }
        pairs.push_back(std::move(p));
    });
    return pairs;
}

void write_pairs(const std::vector<RewritePair>& pairs, const std::filesystem::path& path)
{
    write_file(path, format_pairs_jsonl(pairs));
}

std::vector<RewritePair> load_pairs(const std::filesystem::path& path)
{
    return parse_pairs_jsonl(read_file(path), path.string());
}

}  // namespace convkit::corpus
