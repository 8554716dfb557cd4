#include "convkit/retrieval.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "convkit/error.hpp"
#include "convkit/linguistics.hpp"
#include "convkit/resources.hpp"
#include "convkit/text.hpp"

namespace convkit::retrieval {

namespace {

constexpr std::string_view kIndexMagic{"CVKINDEX", 8};
constexpr std::uint32_t kIndexVersion = 1;

void put_varint(std::string& out, std::uint64_t v)
{
    while (v >= 0x80) {
        out.push_back(static_cast<char>((v & 0x7f) | 0x80));
        v >>= 7;
    }
    out.push_back(static_cast<char>(v));
}

void put_u32(std::string& out, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
}

void put_str(std::string& out, std::string_view s)
{
    put_varint(out, s.size());
    out.append(s);
}

class Cursor {
  public:
    Cursor(std::string_view data, std::string name) : m_data(data), m_name(std::move(name)) {}

    std::uint64_t varint()
    {
        std::uint64_t v = 0;
        for (int shift = 0; shift < 64; shift += 7) {
            const auto byte = static_cast<unsigned char>(take(1)[0]);
            v |= static_cast<std::uint64_t>(byte & 0x7f) << shift;
            if ((byte & 0x80) == 0) {
                return v;
            }
        }
        throw Error(m_name + ": malformed varint");
    }
    std::uint32_t u32()
    {
        auto b = take(4);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) {
            v = (v << 8) | static_cast<unsigned char>(b[static_cast<std::size_t>(i)]);
        }
        return v;
    }
    std::string str() { return std::string(take(varint())); }
    std::string_view take(std::size_t n)
    {
        if (n > m_data.size() - m_pos) {
            throw Error(m_name + ": truncated index file");
        }
        auto s = m_data.substr(m_pos, n);
        m_pos += n;
        return s;
    }
    bool done() const { return m_pos == m_data.size(); }

  private:
    std::string_view m_data;
    std::size_t m_pos = 0;
    std::string m_name;
};

}  // namespace

StopwordSet load_stopwords(const std::optional<std::filesystem::path>& path)
{
    auto words = path ? resources::load_word_list_file(*path) : resources::load_word_list("stopwords.txt");
    StopwordSet set;
    for (auto& w : words) {
        set.insert(text::casefold(w));
    }
    return set;
}

std::vector<std::string> analyze_terms(std::string_view text, const StopwordSet& stopwords)
{
    std::vector<std::string> terms;
    for (auto& t : ling::tokenize(text)) {
        if (ling::is_punct_token(t.surface) || stopwords.contains(t.lower)) {
            continue;
        }
        terms.push_back(std::move(t.lower));
    }
    return terms;
}

void Bm25Params::validate() const
{
    if (!(k1 > 0.0) || !(b >= 0.0 && b <= 1.0)) {
        throw InvariantError("BM25 parameters require k1 > 0 and 0 <= b <= 1");
    }
}

Index Index::build(std::span<const Document> collection, const StopwordSet& stopwords)
{
    if (collection.empty()) {
        throw Error("cannot index an empty collection");
    }
    Index index;
    index.m_stopwords = stopwords;
    std::uint64_t total_length = 0;
    for (const auto& doc : collection) {
        const auto internal = static_cast<std::uint32_t>(index.m_doc_ids.size());
        if (!index.m_doc_lookup.emplace(doc.doc_id, internal).second) {
            throw InvariantError("duplicate doc_id " + doc.doc_id);
        }
        index.m_doc_ids.push_back(doc.doc_id);
        std::map<std::string, std::uint32_t> tf;
        auto terms = analyze_terms(doc.body, stopwords);
        for (auto& t : terms) {
            ++tf[std::move(t)];
        }
        for (auto& [term, count] : tf) {
            index.m_postings[term].push_back({internal, count});
        }
        index.m_doc_lengths.push_back(static_cast<std::uint32_t>(terms.size()));
        total_length += terms.size();
    }
    index.m_avg_length = static_cast<double>(total_length) / static_cast<double>(index.m_doc_ids.size());
    return index;
}

std::optional<std::uint32_t> Index::internal_id(std::string_view doc_id) const
{
    auto it = m_doc_lookup.find(std::string(doc_id));
    if (it == m_doc_lookup.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::span<const Posting> Index::postings(std::string_view term) const
{
    auto it = m_postings.find(std::string(term));
    if (it == m_postings.end()) {
        return {};
    }
    return it->second;
}

std::vector<std::string> Index::terms() const
{
    std::vector<std::string> out;
    out.reserve(m_postings.size());
    for (const auto& [term, list] : m_postings) {
        out.push_back(term);
    }
    std::sort(out.begin(), out.end());
    return out;
}

bool Index::operator==(const Index& other) const
{
    return m_postings == other.m_postings && m_doc_ids == other.m_doc_ids && m_doc_lengths == other.m_doc_lengths &&
           m_avg_length == other.m_avg_length && m_stopwords == other.m_stopwords;
}

void Index::save(const std::filesystem::path& path) const
{
    std::string out(kIndexMagic);
    put_u32(out, kIndexVersion);
    put_varint(out, m_doc_ids.size());
    for (std::size_t d = 0; d < m_doc_ids.size(); ++d) {
        put_str(out, m_doc_ids[d]);
        put_varint(out, m_doc_lengths[d]);
    }
    std::vector<std::string> stop(m_stopwords.begin(), m_stopwords.end());
    std::sort(stop.begin(), stop.end());
    put_varint(out, stop.size());
    for (const auto& w : stop) {
        put_str(out, w);
    }
    auto dictionary = terms();
    put_varint(out, dictionary.size());
    for (const auto& term : dictionary) {
        const auto& list = m_postings.at(term);
        put_str(out, term);
        put_varint(out, list.size());
        std::uint32_t prev = 0;
        for (const auto& p : list) {
            put_varint(out, p.doc - prev);  // doc gaps; the first gap is from 0
            put_varint(out, p.tf);
            prev = p.doc;
        }
    }
    corpus::write_file(path, out);
}

Index Index::load(const std::filesystem::path& path)
{
    const auto data = corpus::read_file(path);
    Cursor in(data, path.string());
    if (in.take(kIndexMagic.size()) != kIndexMagic) {
        throw Error(path.string() + ": not an index file");
    }
    if (auto version = in.u32(); version != kIndexVersion) {
        throw Error(path.string() + ": unsupported index version " + std::to_string(version));
    }
    Index index;
    const auto n_docs = in.varint();
    std::uint64_t total_length = 0;
    for (std::uint64_t d = 0; d < n_docs; ++d) {
        auto id = in.str();
        index.m_doc_lookup.emplace(id, static_cast<std::uint32_t>(d));
        index.m_doc_ids.push_back(std::move(id));
        index.m_doc_lengths.push_back(static_cast<std::uint32_t>(in.varint()));
        total_length += index.m_doc_lengths.back();
    }
    if (n_docs == 0) {
        throw Error(path.string() + ": index has no documents");
    }
    index.m_avg_length = static_cast<double>(total_length) / static_cast<double>(n_docs);
    const auto n_stop = in.varint();
    for (std::uint64_t i = 0; i < n_stop; ++i) {
        index.m_stopwords.insert(in.str());
    }
    const auto n_terms = in.varint();
    for (std::uint64_t i = 0; i < n_terms; ++i) {
        auto term = in.str();
        const auto df = in.varint();
        std::vector<Posting> list;
        list.reserve(df);
        std::uint64_t doc = 0;
        for (std::uint64_t j = 0; j < df; ++j) {
            doc += in.varint();
            if (doc >= n_docs) {
                throw Error(path.string() + ": posting refers to a missing document");
            }
            list.push_back({static_cast<std::uint32_t>(doc), static_cast<std::uint32_t>(in.varint())});
        }
        index.m_postings.emplace(std::move(term), std::move(list));
    }
    if (!in.done()) {
        throw Error(path.string() + ": trailing bytes in index file");
    }
    return index;
}

double idf(std::size_t num_docs, std::size_t df)
{
    const auto n = static_cast<double>(num_docs);
    const auto f = static_cast<double>(df);
    return std::log(1.0 + (n - f + 0.5) / (f + 0.5));
}

namespace {

double term_weight(const Index& index, const Bm25Params& params, std::uint32_t tf, std::uint32_t doc)
{
    const double avg = index.avg_length() > 0.0 ? index.avg_length() : 1.0;
    const double norm = 1.0 - params.b + params.b * static_cast<double>(index.doc_length(doc)) / avg;
    const double f = static_cast<double>(tf);
    return f * (params.k1 + 1.0) / (f + params.k1 * norm);
}

}  // namespace

double score(const Index& index, const Bm25Params& params, std::span<const std::string> query_terms,
             std::uint32_t doc)
{
    double total = 0.0;
    for (const auto& term : query_terms) {
        auto list = index.postings(term);
        auto it = std::lower_bound(list.begin(), list.end(), doc,
                                   [](const Posting& p, std::uint32_t d) { return p.doc < d; });
        if (it == list.end() || it->doc != doc) {
            continue;
        }
        total += idf(index.num_docs(), list.size()) * term_weight(index, params, it->tf, doc);
    }
    return total;
}

std::vector<RunEntry> search(const Index& index, const Bm25Params& params, std::string_view query_id,
                             std::string_view query, std::size_t k)
{
    params.validate();
    const auto terms = analyze_terms(query, index.stopwords());
    std::vector<double> acc(index.num_docs(), 0.0);
    for (const auto& term : terms) {
        auto list = index.postings(term);
        if (list.empty()) {
            continue;
        }
        const double w = idf(index.num_docs(), list.size());
        for (const auto& p : list) {
            acc[p.doc] += w * term_weight(index, params, p.tf, p.doc);
        }
    }
    std::vector<std::uint32_t> hits;
    for (std::uint32_t d = 0; d < acc.size(); ++d) {
        if (acc[d] > 0.0) {
            hits.push_back(d);
        }
    }
    auto better = [&](std::uint32_t a, std::uint32_t b) {
        if (acc[a] != acc[b]) {
            return acc[a] > acc[b];
        }
        return index.doc_id(a) < index.doc_id(b);
    };
    const std::size_t n = std::min(k, hits.size());
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(n), hits.end(), better);
    std::vector<RunEntry> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back({std::string(query_id), index.doc_id(hits[i]), static_cast<int>(i) + 1, acc[hits[i]]});
    }
    return out;
}

std::vector<RunEntry> rerank(std::span<const RunEntry> candidates, std::string_view query,
                             const std::function<std::string_view(std::string_view doc_id)>& body_of,
                             const RerankScorer& scorer)
{
    std::vector<RunEntry> out(candidates.begin(), candidates.end());
    if (!scorer) {
        return out;
    }
    for (auto& e : out) {
        e.score = scorer(query, body_of(e.doc_id));
    }
    std::stable_sort(out.begin(), out.end(), [](const RunEntry& a, const RunEntry& b) { return a.score > b.score; });
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i].rank = static_cast<int>(i) + 1;
    }
    return out;
}

}  // namespace convkit::retrieval
