#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "convkit/corpus.hpp"
#include "convkit/retrieval.hpp"

namespace convkit::eval {

struct TextOptions {
    bool lowercase = true;
    bool strip_punct = false;
};

/// Sentence BLEU with n up to 2, add-one smoothing of zero precisions, brevity penalty.
double bleu2(std::string_view candidate, std::string_view reference, const TextOptions& options = {});

/// LCS-based F1.
double rouge_l(std::string_view candidate, std::string_view reference, const TextOptions& options = {});

struct MetricReport {
    std::string metric;
    std::map<std::string, double> per_query;
    double aggregate = 0.0;
    std::map<std::string, std::string> parameters;

    /// Recomputes the aggregate as the arithmetic mean (0 when empty).
    void finalize();
};

enum class Gain { exponential, linear };

Gain parse_gain(std::string_view name);

struct NdcgOptions {
    std::size_t k = 3;
    Gain gain = Gain::exponential;
    /// Judged queries (some grade > 0) that are absent from the run count as 0.
    bool missing_as_zero = true;
};

struct NdcgResult {
    MetricReport report;
    std::vector<std::string> skipped;  // run queries without judgments
};

NdcgResult ndcg_at_k(const corpus::RunFile& run, const corpus::Qrels& qrels, const NdcgOptions& options = {});

/// Fraction of rewrites that contain a question word. Throws on an empty list.
double que_frac(const std::vector<std::string>& rewrites);

/// Share of new (not in source) non-stopword token types of the rewrite that occur in
/// the context. 1.0 when nothing new was introduced.
double copy_frac(std::string_view rewrite, std::string_view source, const std::vector<std::string>& context,
                 const retrieval::StopwordSet& stopwords);

struct TurnGroup {
    double mean = 0.0;
    std::size_t count = 0;
};

/// Groups per-query values by the turn number parsed from "<topic>_<turn>".
std::map<int, TurnGroup> per_turn_breakdown(const MetricReport& report);

/// "query_id,value" lines plus "ALL,<mean>".
std::string format_report_csv(const MetricReport& report);
std::string format_report_json(const MetricReport& report);
std::string format_breakdown_csv(const std::map<int, TurnGroup>& breakdown);
MetricReport parse_report_csv(std::string_view content, std::string_view source_name = "<memory>");

/// Per-turn text metric between matching query ids of two session sets.
MetricReport text_metric_report(std::string_view metric, const std::vector<corpus::Session>& candidates,
                                const std::vector<corpus::Session>& references, const TextOptions& options = {});

}  // namespace convkit::eval
