#include <algorithm>
#include <array>
#include <map>

#include "convkit/error.hpp"
#include "convkit/linguistics.hpp"
#include "convkit/rewriter.hpp"

namespace convkit::rewriter {

namespace {

constexpr std::array<std::string_view, kReservedCount> kReservedNames{"[SEP]", "[BOS]", "[EOS]", "[PAD]", "[UNK]"};

std::vector<int> encode(std::string_view text, const Vocabulary& vocab)
{
    std::vector<int> ids;
    for (const auto& w : ling::tokenize_lower(text)) {
        ids.push_back(vocab.id(w));
    }
    return ids;
}

}  // namespace

Vocabulary::Vocabulary()
{
    for (auto name : kReservedNames) {
        m_ids.emplace(std::string(name), static_cast<int>(m_tokens.size()));
        m_tokens.emplace_back(name);
    }
}

Vocabulary Vocabulary::from_words(const std::vector<std::string>& words)
{
    Vocabulary v;
    for (const auto& w : words) {
        if (w.empty() || !v.m_ids.emplace(w, static_cast<int>(v.m_tokens.size())).second) {
            throw InvariantError("vocabulary word '" + w + "' is empty or duplicated");
        }
        v.m_tokens.push_back(w);
    }
    return v;
}

Vocabulary Vocabulary::build(const std::vector<RewritePair>& pairs, int min_count)
{
    if (pairs.empty()) {
        throw Error("cannot build a vocabulary from an empty corpus");
    }
    std::map<std::string, long> counts;
    auto count = [&](std::string_view text) {
        for (auto& w : ling::tokenize_lower(text)) {
            ++counts[std::move(w)];
        }
    };
    for (const auto& p : pairs) {
        for (const auto& c : p.context) {
            count(c);
        }
        count(p.source);
        count(p.target);
    }
    std::vector<std::pair<std::string, long>> ranked;
    for (auto& [word, n] : counts) {
        if (n >= min_count && std::find(kReservedNames.begin(), kReservedNames.end(), word) == kReservedNames.end()) {
            ranked.emplace_back(word, n);
        }
    }
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });  // map order breaks ties
    std::vector<std::string> words;
    words.reserve(ranked.size());
    for (auto& [w, n] : ranked) {
        words.push_back(std::move(w));
    }
    return from_words(words);
}

int Vocabulary::id(std::string_view word) const
{
    auto it = m_ids.find(std::string(word));
    return it == m_ids.end() ? kUnk : it->second;
}

std::vector<std::string> Vocabulary::words() const
{
    return {m_tokens.begin() + kReservedCount, m_tokens.end()};
}

TokenSequence serialize(const RewritePair& pair, const Vocabulary& vocab, bool include_target, int max_seq_len)
{
    const auto max_len = static_cast<std::size_t>(max_seq_len);
    std::vector<std::vector<int>> context;
    for (const auto& c : pair.context) {
        context.push_back(encode(c, vocab));
    }
    auto source = encode(pair.source, vocab);
    std::vector<int> target;
    if (include_target) {
        target = encode(pair.target, vocab);
    }

    const std::size_t tail = source.size() + 1 + (include_target ? target.size() + 1 : 0);
    if (source.size() + 1 > max_len) {
        throw Error("query " + corpus::query_id(pair.topic_id, pair.turn_number) + " has " +
                    std::to_string(source.size()) + " tokens; it cannot fit max_seq_len " +
                    std::to_string(max_seq_len));
    }
    std::size_t context_len = 0;
    for (const auto& c : context) {
        context_len += c.size() + 1;
    }
    std::size_t first = 0;  // earliest context turn kept
    while (first < context.size() && context_len + tail > max_len) {
        context_len -= context[first].size() + 1;
        ++first;
    }

    TokenSequence seq;
    seq.ids.reserve(context_len + tail);
    for (std::size_t i = first; i < context.size(); ++i) {
        seq.ids.insert(seq.ids.end(), context[i].begin(), context[i].end());
        seq.ids.push_back(kSep);
    }
    seq.ids.insert(seq.ids.end(), source.begin(), source.end());
    seq.bos_position = seq.ids.size();
    seq.ids.push_back(kBos);
    if (include_target) {
        seq.ids.insert(seq.ids.end(), target.begin(), target.end());
        seq.ids.push_back(kEos);
    }

    if (seq.ids.size() > max_len) {
        const std::size_t cut = seq.ids.size() - max_len;
        if (cut > seq.bos_position) {
            throw Error("query " + corpus::query_id(pair.topic_id, pair.turn_number) +
                        ": target too long for max_seq_len " + std::to_string(max_seq_len));
        }
        seq.ids.erase(seq.ids.begin(), seq.ids.begin() + static_cast<std::ptrdiff_t>(cut));
        seq.bos_position -= cut;
    }
    return seq;
}

}  // namespace convkit::rewriter
