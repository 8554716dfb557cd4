#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "convkit/corpus.hpp"
#include "convkit/linguistics.hpp"

namespace convkit::weaksup {

using corpus::RewritePair;
using corpus::Session;

struct WeightedWord {
    std::string word;
    double probability = 0.0;
};

struct SimplifierConfig {
    std::uint64_t seed = 0;
    std::vector<WeightedWord> singular_pronouns{{"it", 0.96}, {"he", 0.02}, {"she", 0.02}};
    std::vector<WeightedWord> plural_pronouns{{"they", 0.75}, {"them", 0.25}};
};

/// Each distribution must be non-empty with probabilities summing to 1 within 1e-9.
void validate(const SimplifierConfig& config);

/// Inverse-CDF draw from a validated distribution given u in [0, 1).
const std::string& sample_word(const std::vector<WeightedWord>& distribution, double u);

/// The stream used for (topic, turn): derived from config.seed so results do not depend
/// on processing order.
std::uint64_t turn_seed(std::uint64_t seed, std::string_view topic_id, int turn_number);

bool is_question_word(std::string_view lower);

/// True iff some token's lowered form is a question word.
bool is_question(std::string_view query);

/// Keeps question turns only (renumbered 1..n); drops sessions left with fewer than two.
std::vector<Session> filter_sessions(const std::vector<Session>& sessions);

enum class EditKind { omitted, replaced };

/// One rule application on one turn, in original-turn token coordinates.
struct Edit {
    int turn_number = 0;
    ling::NounPhrase phrase;
    std::string key;
    EditKind kind = EditKind::omitted;
    std::string pronoun;        // replacements only
    int matched_turn = 0;       // earliest earlier turn holding the same phrase
};

struct SimplifyResult {
    Session session;
    std::vector<Edit> edits;
};

/// Rule-based conversion of a fully specified session into a conversation-like one.
/// A noun phrase seen in an earlier original turn is dropped when it follows a
/// preposition and otherwise replaced with a sampled pronoun.
SimplifyResult simplify_session_traced(const Session& session, const SimplifierConfig& config,
                                       const ling::Lexicon& lexicon = ling::Lexicon::builtin());

Session simplify_session(const Session& session, const SimplifierConfig& config,
                         const ling::Lexicon& lexicon = ling::Lexicon::builtin());

/// Simplifies every session; parallel across sessions, output in input order.
std::vector<Session> simplify_sessions(const std::vector<Session>& sessions, const SimplifierConfig& config,
                                       const ling::Lexicon& lexicon = ling::Lexicon::builtin());

enum class Provenance { rule_based, self_learn };

std::string_view to_string(Provenance p);

struct WeakPairSet {
    std::vector<RewritePair> pairs;
    Provenance provenance = Provenance::rule_based;
};

/// One pair per turn k >= 2: context = simplified turns before k, source = simplified
/// turn k, target = original turn k. Throws InvariantError on misaligned sessions.
WeakPairSet build_rewrite_pairs(const Session& original, const Session& simplified,
                                Provenance provenance = Provenance::rule_based, bool keep_unchanged = true);

}  // namespace convkit::weaksup
