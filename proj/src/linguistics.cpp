#include "convkit/linguistics.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <utility>

#include "convkit/resources.hpp"
#include "convkit/text.hpp"

namespace convkit::ling {

namespace {

// Closed-class lists in precedence order: a word listed twice keeps the first tag.
constexpr std::array<std::pair<std::string_view, PosTag>, 7> kClassFiles{{
    {"lexicon/wh.txt", PosTag::WH},
    {"lexicon/prep.txt", PosTag::PREP},
    {"lexicon/det.txt", PosTag::DET},
    {"lexicon/pron.txt", PosTag::PRON},
    {"lexicon/verb.txt", PosTag::VERB},
    {"lexicon/adj.txt", PosTag::ADJ},
    {"lexicon/other.txt", PosTag::OTHER},
}};

bool is_digit(char c)
{
    return c >= '0' && c <= '9';
}

bool has_alnum(std::string_view s)
{
    for (unsigned char c : s) {
        if (c >= 0x80 || std::isalnum(c)) {
            return true;
        }
    }
    return false;
}

bool is_noun(PosTag t)
{
    return t == PosTag::NOUN_SG || t == PosTag::NOUN_PL;
}

bool is_modifier(PosTag t)
{
    return t == PosTag::ADJ || t == PosTag::NUM || is_noun(t);
}

bool ends_with(std::string_view s, std::string_view suffix)
{
    return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

void push_token(std::vector<Token>& out, std::string_view surface)
{
    out.push_back({std::string(surface), text::casefold(surface), out.size()});
}

}  // namespace

std::string_view to_string(PosTag tag)
{
    switch (tag) {
    case PosTag::DET: return "DET";
    case PosTag::ADJ: return "ADJ";
    case PosTag::NOUN_SG: return "NOUN_SG";
    case PosTag::NOUN_PL: return "NOUN_PL";
    case PosTag::PRON: return "PRON";
    case PosTag::PREP: return "PREP";
    case PosTag::VERB: return "VERB";
    case PosTag::WH: return "WH";
    case PosTag::NUM: return "NUM";
    case PosTag::PUNCT: return "PUNCT";
    case PosTag::OTHER: return "OTHER";
    }
    return "OTHER";
}

bool is_split_punct(char c)
{
    switch (c) {
    case '.': case ',': case '?': case '!': case ';': case ':': case '\'': case '"': case '(': case ')':
        return true;
    default:
        return false;
    }
}

bool is_punct_token(std::string_view surface)
{
    if (surface.empty()) {
        return false;
    }
    for (char c : surface) {
        if (!is_split_punct(c)) {
            return false;
        }
    }
    return true;
}

std::vector<Token> tokenize(std::string_view text)
{
    std::vector<Token> tokens;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && text::is_ascii_space(text[i])) {
            ++i;
        }
        std::size_t start = i;
        while (i < text.size() && !text::is_ascii_space(text[i])) {
            ++i;
        }
        std::string_view chunk = text.substr(start, i - start);
        if (chunk.empty()) {
            continue;
        }
        std::size_t lead = 0;
        while (lead < chunk.size() && is_split_punct(chunk[lead])) {
            ++lead;
        }
        std::size_t trail = chunk.size();
        while (trail > lead && is_split_punct(chunk[trail - 1])) {
            --trail;
        }
        for (std::size_t k = 0; k < lead; ++k) {
            push_token(tokens, chunk.substr(k, 1));
        }
        if (trail > lead) {
            push_token(tokens, chunk.substr(lead, trail - lead));
        }
        for (std::size_t k = trail; k < chunk.size(); ++k) {
            push_token(tokens, chunk.substr(k, 1));
        }
    }
    return tokens;
}

std::vector<std::string> tokenize_lower(std::string_view text)
{
    std::vector<std::string> out;
    for (auto& t : tokenize(text)) {
        out.push_back(std::move(t.lower));
    }
    return out;
}

std::string detokenize(const std::vector<std::string>& surfaces)
{
    std::string out;
    for (const auto& s : surfaces) {
        if (!out.empty() && !is_punct_token(s)) {
            out += ' ';
        }
        out += s;
    }
    return out;
}

std::string detokenize(const std::vector<Token>& tokens)
{
    std::vector<std::string> surfaces;
    surfaces.reserve(tokens.size());
    for (const auto& t : tokens) {
        surfaces.push_back(t.surface);
    }
    return detokenize(surfaces);
}

void Lexicon::add(std::string word, PosTag tag)
{
    m_closed.emplace(std::move(word), tag);
}

Lexicon Lexicon::load(const std::optional<std::filesystem::path>& dir)
{
    Lexicon lex;
    for (const auto& [file, tag] : kClassFiles) {
        for (auto& w : resources::load_word_list(file, dir)) {
            lex.add(text::casefold(w), tag);
        }
    }
    for (auto& w : resources::load_word_list("no_plural.txt", dir)) {
        lex.m_no_plural.insert(text::casefold(w));
    }
    return lex;
}

const Lexicon& Lexicon::builtin()
{
    static const Lexicon lex = load(std::nullopt);
    return lex;
}

std::optional<PosTag> Lexicon::closed_class(std::string_view lower) const
{
    auto it = m_closed.find(std::string(lower));
    if (it == m_closed.end()) {
        return std::nullopt;
    }
    return it->second;
}

PosTag tag_word(std::string_view lower, const Lexicon& lexicon)
{
    if (is_punct_token(lower)) {
        return PosTag::PUNCT;
    }
    if (auto tag = lexicon.closed_class(lower)) {
        return *tag;
    }
    if (!has_alnum(lower)) {
        return PosTag::OTHER;
    }
    if (is_digit(lower.front())) {
        return PosTag::NUM;
    }
    if (lower.size() >= 3 && ends_with(lower, "s") && !ends_with(lower, "ss") && !ends_with(lower, "us") &&
        !ends_with(lower, "is") && !ends_with(lower, "'s") && !lexicon.is_no_plural(lower)) {
        return PosTag::NOUN_PL;
    }
    return PosTag::NOUN_SG;
}

std::vector<PosTag> pos_tag(const std::vector<Token>& tokens, const Lexicon& lexicon)
{
    std::vector<PosTag> tags;
    tags.reserve(tokens.size());
    for (const auto& t : tokens) {
        tags.push_back(tag_word(t.lower, lexicon));
    }
    return tags;
}

std::vector<NounPhrase> chunk_noun_phrases(const std::vector<Token>& tokens, const std::vector<PosTag>& tags)
{
    std::vector<NounPhrase> phrases;
    const std::size_t n = std::min(tokens.size(), tags.size());
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        if (tags[j] == PosTag::DET) {
            ++j;
        }
        std::size_t last_noun = n;  // sentinel: none
        while (j < n && is_modifier(tags[j])) {
            if (is_noun(tags[j])) {
                last_noun = j;
            }
            ++j;
        }
        if (last_noun == n) {
            ++i;
            continue;
        }
        NounPhrase np;
        np.start = i;
        np.end = last_noun + 1;
        np.head_plural = tags[last_noun] == PosTag::NOUN_PL;
        np.follows_preposition = i > 0 && tags[i - 1] == PosTag::PREP;
        phrases.push_back(np);
        i = np.end;
    }
    return phrases;
}

std::string np_key(const std::vector<Token>& tokens, const std::vector<PosTag>& tags, const NounPhrase& np)
{
    std::string key;
    for (std::size_t i = np.start; i < np.end; ++i) {
        if (tags[i] == PosTag::DET) {
            continue;
        }
        if (!key.empty()) {
            key += ' ';
        }
        key += tokens[i].lower;
    }
    return key;
}

Analysis analyze(std::string_view text, const Lexicon& lexicon)
{
    Analysis a;
    a.tokens = tokenize(text);
    a.tags = pos_tag(a.tokens, lexicon);
    a.phrases = chunk_noun_phrases(a.tokens, a.tags);
    return a;
}

}  // namespace convkit::ling
