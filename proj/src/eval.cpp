#include "convkit/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <set>
#include <unordered_map>

#include <json.hpp>

#include "convkit/error.hpp"
#include "convkit/linguistics.hpp"
#include "convkit/text.hpp"
#include "convkit/weaksup.hpp"

namespace convkit::eval {

namespace {

std::vector<std::string> words(std::string_view s, const TextOptions& options)
{
    std::vector<std::string> out;
    for (auto& t : ling::tokenize(s)) {
        if (options.strip_punct && ling::is_punct_token(t.surface)) {
            continue;
        }
        out.push_back(options.lowercase ? std::move(t.lower) : std::move(t.surface));
    }
    return out;
}

// Clipped n-gram matches and candidate n-gram count.
std::pair<std::size_t, std::size_t> clipped_matches(const std::vector<std::string>& cand,
                                                    const std::vector<std::string>& ref, std::size_t n)
{
    if (cand.size() < n) {
        return {0, 0};
    }
    auto grams = [n](const std::vector<std::string>& toks) {
        std::map<std::vector<std::string>, std::size_t> counts;
        for (std::size_t i = 0; i + n <= toks.size(); ++i) {
            ++counts[std::vector<std::string>(toks.begin() + static_cast<std::ptrdiff_t>(i),
                                              toks.begin() + static_cast<std::ptrdiff_t>(i + n))];
        }
        return counts;
    };
    const auto c = grams(cand);
    const auto r = grams(ref);
    std::size_t matches = 0;
    for (const auto& [gram, count] : c) {
        auto it = r.find(gram);
        if (it != r.end()) {
            matches += std::min(count, it->second);
        }
    }
    return {matches, cand.size() - n + 1};
}

double smoothed(std::pair<std::size_t, std::size_t> m)
{
    if (m.first == 0) {
        return 1.0 / static_cast<double>(m.second + 1);
    }
    return static_cast<double>(m.first) / static_cast<double>(m.second);
}

std::string fmt(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace

double bleu2(std::string_view candidate, std::string_view reference, const TextOptions& options)
{
    const auto cand = words(candidate, options);
    const auto ref = words(reference, options);
    if (cand.empty()) {
        return 0.0;
    }
    const double c = static_cast<double>(cand.size());
    const double r = static_cast<double>(ref.size());
    const double bp = std::exp(std::min(0.0, 1.0 - r / c));
    const double p1 = smoothed(clipped_matches(cand, ref, 1));
    if (cand.size() < 2) {
        return bp * p1;
    }
    const double p2 = smoothed(clipped_matches(cand, ref, 2));
    return bp * std::sqrt(p1 * p2);
}

double rouge_l(std::string_view candidate, std::string_view reference, const TextOptions& options)
{
    const auto cand = words(candidate, options);
    const auto ref = words(reference, options);
    if (cand.empty() || ref.empty()) {
        return 0.0;
    }
    std::vector<std::size_t> prev(ref.size() + 1, 0);
    std::vector<std::size_t> cur(ref.size() + 1, 0);
    for (std::size_t i = 1; i <= cand.size(); ++i) {
        for (std::size_t j = 1; j <= ref.size(); ++j) {
            cur[j] = cand[i - 1] == ref[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    const auto lcs = static_cast<double>(prev[ref.size()]);
    if (lcs == 0.0) {
        return 0.0;
    }
    const double p = lcs / static_cast<double>(cand.size());
    const double rec = lcs / static_cast<double>(ref.size());
    return 2.0 * p * rec / (p + rec);
}

void MetricReport::finalize()
{
    double sum = 0.0;
    for (const auto& [q, v] : per_query) {
        sum += v;
    }
    aggregate = per_query.empty() ? 0.0 : sum / static_cast<double>(per_query.size());
}

Gain parse_gain(std::string_view name)
{
    if (name == "exp") {
        return Gain::exponential;
    }
    if (name == "linear") {
        return Gain::linear;
    }
    throw Error("unknown gain '" + std::string(name) + "' (expected exp or linear)");
}

NdcgResult ndcg_at_k(const corpus::RunFile& run, const corpus::Qrels& qrels, const NdcgOptions& options)
{
    auto gain = [&](int grade) {
        return options.gain == Gain::exponential ? std::pow(2.0, grade) - 1.0 : static_cast<double>(grade);
    };
    std::map<std::string, std::vector<const corpus::RunEntry*>> by_query;
    for (const auto& e : run.entries) {
        by_query[e.query_id].push_back(&e);
    }

    NdcgResult result;
    result.report.metric = "ndcg@" + std::to_string(options.k);
    result.report.parameters["k"] = std::to_string(options.k);
    result.report.parameters["gain"] = options.gain == Gain::exponential ? "exp" : "linear";

    for (auto& [qid, entries] : by_query) {
        auto judged = qrels.find(qid);
        if (judged == qrels.end()) {
            result.skipped.push_back(qid);
            continue;
        }
        std::sort(entries.begin(), entries.end(), [](auto* a, auto* b) { return a->rank < b->rank; });
        double dcg = 0.0;
        for (std::size_t i = 0; i < std::min(options.k, entries.size()); ++i) {
            auto it = judged->second.find(entries[i]->doc_id);
            if (it != judged->second.end()) {
                dcg += gain(it->second) / std::log2(static_cast<double>(i) + 2.0);
            }
        }
        std::vector<int> grades;
        for (const auto& [doc, g] : judged->second) {
            grades.push_back(g);
        }
        std::sort(grades.rbegin(), grades.rend());
        double idcg = 0.0;
        for (std::size_t i = 0; i < std::min(options.k, grades.size()); ++i) {
            idcg += gain(grades[i]) / std::log2(static_cast<double>(i) + 2.0);
        }
        result.report.per_query[qid] = idcg > 0.0 ? dcg / idcg : 0.0;
    }
    if (options.missing_as_zero) {
        for (const auto& [qid, docs] : qrels) {
            const bool relevant = std::any_of(docs.begin(), docs.end(), [](const auto& d) { return d.second > 0; });
            if (relevant && !by_query.contains(qid)) {
                result.report.per_query[qid] = 0.0;
            }
        }
    }
    result.report.finalize();
    return result;
}

double que_frac(const std::vector<std::string>& rewrites)
{
    if (rewrites.empty()) {
        throw Error("QueFrac is undefined for an empty list of rewrites");
    }
    const auto questions = std::count_if(rewrites.begin(), rewrites.end(),
                                         [](const std::string& r) { return weaksup::is_question(r); });
    return static_cast<double>(questions) / static_cast<double>(rewrites.size());
}

double copy_frac(std::string_view rewrite, std::string_view source, const std::vector<std::string>& context,
                 const retrieval::StopwordSet& stopwords)
{
    const auto rewrite_terms = retrieval::analyze_terms(rewrite, stopwords);
    const auto source_terms = retrieval::analyze_terms(source, stopwords);
    std::set<std::string> source_set(source_terms.begin(), source_terms.end());
    std::set<std::string> fresh;
    for (const auto& t : rewrite_terms) {
        if (!source_set.contains(t)) {
            fresh.insert(t);
        }
    }
    if (fresh.empty()) {
        return 1.0;
    }
    std::set<std::string> context_set;
    for (const auto& c : context) {
        for (auto& t : retrieval::analyze_terms(c, stopwords)) {
            context_set.insert(std::move(t));
        }
    }
    const auto copied = std::count_if(fresh.begin(), fresh.end(),
                                      [&](const std::string& t) { return context_set.contains(t); });
    return static_cast<double>(copied) / static_cast<double>(fresh.size());
}

std::map<int, TurnGroup> per_turn_breakdown(const MetricReport& report)
{
    std::map<int, TurnGroup> groups;
    for (const auto& [qid, value] : report.per_query) {
        const auto underscore = qid.rfind('_');
        int turn = 0;
        bool ok = underscore != std::string::npos && underscore > 0;
        if (ok) {
            const char* first = qid.data() + underscore + 1;
            const char* last = qid.data() + qid.size();
            auto [ptr, ec] = std::from_chars(first, last, turn);
            ok = ec == std::errc() && ptr == last && first != last && turn >= 1;
        }
        if (!ok) {
            throw Error("query id '" + qid + "' does not follow <topic>_<turn>");
        }
        auto& g = groups[turn];
        g.mean += value;
        ++g.count;
    }
    for (auto& [turn, g] : groups) {
        g.mean /= static_cast<double>(g.count);
    }
    return groups;
}

std::string format_report_csv(const MetricReport& report)
{
    std::string out = "query_id,value\n";
    for (const auto& [qid, v] : report.per_query) {
        out += qid + "," + fmt(v) + "\n";
    }
    out += "ALL," + fmt(report.aggregate) + "\n";
    return out;
}

std::string format_report_json(const MetricReport& report)
{
    nlohmann::ordered_json j;
    j["metric"] = report.metric;
    j["parameters"] = report.parameters;
    j["aggregate"] = report.aggregate;
    j["per_query"] = report.per_query;
    return j.dump(2) + "\n";
}

std::string format_breakdown_csv(const std::map<int, TurnGroup>& breakdown)
{
    std::string out = "turn,mean,count\n";
    for (const auto& [turn, g] : breakdown) {
        out += std::to_string(turn) + "," + fmt(g.mean) + "," + std::to_string(g.count) + "\n";
    }
    return out;
}

MetricReport parse_report_csv(std::string_view content, std::string_view source_name)
{
    MetricReport report;
    std::size_t line_no = 0;
    for (auto line : text::split(content, '\n')) {
        ++line_no;
        line = text::trim(line);
        if (line.empty() || line == "query_id,value") {
            continue;
        }
        auto comma = line.rfind(',');
        if (comma == std::string_view::npos) {
            throw ParseError(std::string(source_name), line_no, "expected 'query_id,value'");
        }
        auto qid = std::string(line.substr(0, comma));
        std::string value_text(line.substr(comma + 1));
        char* end = nullptr;
        double value = std::strtod(value_text.c_str(), &end);
        if (value_text.empty() || end != value_text.c_str() + value_text.size()) {
            throw ParseError(std::string(source_name), line_no, "value is not a number");
        }
        if (qid == "ALL") {
            continue;
        }
        report.per_query[qid] = value;
    }
    report.finalize();
    return report;
}

MetricReport text_metric_report(std::string_view metric, const std::vector<corpus::Session>& candidates,
                                const std::vector<corpus::Session>& references, const TextOptions& options)
{
    double (*fn)(std::string_view, std::string_view, const TextOptions&) = nullptr;
    if (metric == "bleu2") {
        fn = &bleu2;
    } else if (metric == "rougeL") {
        fn = &rouge_l;
    } else {
        throw Error("unknown text metric '" + std::string(metric) + "'");
    }
    std::unordered_map<std::string, const std::string*> cand;
    for (const auto& s : candidates) {
        for (const auto& t : s.turns) {
            cand[corpus::query_id(s.topic_id, t.turn_number)] = &t.raw;
        }
    }
    MetricReport report;
    report.metric = std::string(metric);
    report.parameters["lowercase"] = options.lowercase ? "true" : "false";
    report.parameters["strip_punct"] = options.strip_punct ? "true" : "false";
    for (const auto& s : references) {
        for (const auto& t : s.turns) {
            auto qid = corpus::query_id(s.topic_id, t.turn_number);
            auto it = cand.find(qid);
            report.per_query[qid] = it == cand.end() ? 0.0 : fn(*it->second, t.raw, options);
        }
    }
    report.finalize();
    return report;
}

}  // namespace convkit::eval
