#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "convkit/corpus.hpp"

namespace convkit::retrieval {

using corpus::Document;
using corpus::RunEntry;

using StopwordSet = std::unordered_set<std::string>;

/// The INQUERY-style list shipped as resources/stopwords.txt (or `path` when given).
StopwordSet load_stopwords(const std::optional<std::filesystem::path>& path = {});

/// Lowered tokens with stopwords and punctuation-only tokens removed.
std::vector<std::string> analyze_terms(std::string_view text, const StopwordSet& stopwords);

struct Bm25Params {
    double k1 = 0.9;
    double b = 0.4;

    void validate() const;
};

struct Posting {
    std::uint32_t doc = 0;
    std::uint32_t tf = 0;

    bool operator==(const Posting&) const = default;
};

class Index {
  public:
    /// Throws on an empty collection or duplicate ids.
    static Index build(std::span<const Document> collection, const StopwordSet& stopwords);

    std::size_t num_docs() const { return m_doc_ids.size(); }
    double avg_length() const { return m_avg_length; }
    std::uint32_t doc_length(std::uint32_t doc) const { return m_doc_lengths.at(doc); }
    const std::string& doc_id(std::uint32_t doc) const { return m_doc_ids.at(doc); }
    std::optional<std::uint32_t> internal_id(std::string_view doc_id) const;

    std::size_t num_terms() const { return m_postings.size(); }
    /// Empty span for unseen terms. Sorted by internal doc id.
    std::span<const Posting> postings(std::string_view term) const;
    std::size_t df(std::string_view term) const { return postings(term).size(); }

    /// Sorted term dictionary.
    std::vector<std::string> terms() const;

    const StopwordSet& stopwords() const { return m_stopwords; }

    void save(const std::filesystem::path& path) const;
    static Index load(const std::filesystem::path& path);

    bool operator==(const Index& other) const;

  private:
    std::unordered_map<std::string, std::vector<Posting>> m_postings;
    std::vector<std::string> m_doc_ids;
    std::unordered_map<std::string, std::uint32_t> m_doc_lookup;
    std::vector<std::uint32_t> m_doc_lengths;
    double m_avg_length = 0.0;
    StopwordSet m_stopwords;
};

/// ln(1 + (N - df + 0.5) / (df + 0.5)); never negative.
double idf(std::size_t num_docs, std::size_t df);

/// BM25 of one document for already-analyzed query terms; repeated terms count again.
double score(const Index& index, const Bm25Params& params, std::span<const std::string> query_terms,
             std::uint32_t doc);

/// Top-k documents with positive score, descending, ties by external doc id ascending.
std::vector<RunEntry> search(const Index& index, const Bm25Params& params, std::string_view query_id,
                             std::string_view query, std::size_t k = 100);

/// Scores (query, document body); higher is better.
using RerankScorer = std::function<double(std::string_view query, std::string_view body)>;

/// Reorders candidates by scorer (stable on ties, ranks reassigned). An empty scorer
/// is the identity reranker.
std::vector<RunEntry> rerank(std::span<const RunEntry> candidates, std::string_view query,
                             const std::function<std::string_view(std::string_view doc_id)>& body_of,
                             const RerankScorer& scorer = {});

}  // namespace convkit::retrieval
