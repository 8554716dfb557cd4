#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace convkit::ling {

struct Token {
    std::string surface;
    std::string lower;
    std::size_t position = 0;

    bool operator==(const Token&) const = default;
};

enum class PosTag { DET, ADJ, NOUN_SG, NOUN_PL, PRON, PREP, VERB, WH, NUM, PUNCT, OTHER };

std::string_view to_string(PosTag tag);

/// Half-open token span [start, end).
struct NounPhrase {
    std::size_t start = 0;
    std::size_t end = 0;
    bool head_plural = false;
    bool follows_preposition = false;

    bool operator==(const NounPhrase&) const = default;
};

/// Characters peeled off word boundaries into their own tokens.
bool is_split_punct(char c);

/// True when every byte of the token is a split-punctuation character.
bool is_punct_token(std::string_view surface);

/// Whitespace split, then leading/trailing punctuation from .,?!;:'"() peeled off one
/// character per token. Internal hyphens and apostrophes stay inside the word.
std::vector<Token> tokenize(std::string_view text);

/// Lowered forms of tokenize(text).
std::vector<std::string> tokenize_lower(std::string_view text);

/// Single spaces between tokens, none before punctuation tokens.
std::string detokenize(const std::vector<Token>& tokens);
std::string detokenize(const std::vector<std::string>& surfaces);

/// Closed-class word lists plus the no-plural exception list.
class Lexicon {
  public:
    /// The lists shipped under resources/lexicon and resources/no_plural.txt.
    static const Lexicon& builtin();

    /// Loads each list from `dir` when present there, falling back to the built-in list.
    static Lexicon load(const std::optional<std::filesystem::path>& dir);

    /// Tag of a lowered word from the closed-class lists, if any.
    std::optional<PosTag> closed_class(std::string_view lower) const;

    bool is_no_plural(std::string_view lower) const { return m_no_plural.contains(std::string(lower)); }

    void add(std::string word, PosTag tag);

  private:
    std::unordered_map<std::string, PosTag> m_closed;
    std::unordered_set<std::string> m_no_plural;
};

PosTag tag_word(std::string_view lower, const Lexicon& lexicon = Lexicon::builtin());

std::vector<PosTag> pos_tag(const std::vector<Token>& tokens, const Lexicon& lexicon = Lexicon::builtin());

/// Maximal left-to-right spans of DET? (ADJ|NUM|NOUN_SG|NOUN_PL)* (NOUN_SG|NOUN_PL).
std::vector<NounPhrase> chunk_noun_phrases(const std::vector<Token>& tokens, const std::vector<PosTag>& tags);

/// Matching key: lowered tokens of the span with determiners removed, space-joined.
std::string np_key(const std::vector<Token>& tokens, const std::vector<PosTag>& tags, const NounPhrase& np);

/// Tokens, tags and noun phrases of one text.
struct Analysis {
    std::vector<Token> tokens;
    std::vector<PosTag> tags;
    std::vector<NounPhrase> phrases;
};

Analysis analyze(std::string_view text, const Lexicon& lexicon = Lexicon::builtin());

}  // namespace convkit::ling
