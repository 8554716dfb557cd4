#include "convkit/weaksup.hpp"

#include <array>
#include <cmath>
#include <unordered_map>

#include "convkit/error.hpp"
#include "convkit/parallel.hpp"
#include "convkit/seed.hpp"

namespace convkit::weaksup {

namespace {

constexpr std::array<std::string_view, 9> kQuestionWords{"what", "who",   "whom", "whose", "when",
                                                         "where", "why", "which", "how"};

void validate_distribution(const std::vector<WeightedWord>& dist, std::string_view name)
{
    if (dist.empty()) {
        throw InvariantError(std::string(name) + " pronoun distribution is empty");
    }
    double total = 0.0;
    for (const auto& w : dist) {
        if (!(w.probability >= 0.0) || w.word.empty()) {
            throw InvariantError(std::string(name) + " pronoun distribution has an invalid entry");
        }
        total += w.probability;
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw InvariantError(std::string(name) + " pronoun probabilities sum to " + std::to_string(total));
    }
}

}  // namespace

void validate(const SimplifierConfig& config)
{
    validate_distribution(config.singular_pronouns, "singular");
    validate_distribution(config.plural_pronouns, "plural");
}

const std::string& sample_word(const std::vector<WeightedWord>& distribution, double u)
{
    double cumulative = 0.0;
    for (const auto& w : distribution) {
        cumulative += w.probability;
        if (u < cumulative) {
            return w.word;
        }
    }
    return distribution.back().word;
}

std::uint64_t turn_seed(std::uint64_t seed, std::string_view topic_id, int turn_number)
{
    return derive_seed(derive_seed(seed, "simplify"), topic_id, static_cast<std::uint64_t>(turn_number));
}

bool is_question_word(std::string_view lower)
{
    for (auto w : kQuestionWords) {
        if (w == lower) {
            return true;
        }
    }
    return false;
}

bool is_question(std::string_view query)
{
    for (const auto& t : ling::tokenize(query)) {
        if (is_question_word(t.lower)) {
            return true;
        }
    }
    return false;
}

std::vector<Session> filter_sessions(const std::vector<Session>& sessions)
{
    std::vector<Session> kept;
    for (const auto& s : sessions) {
        Session filtered{s.topic_id, {}};
        for (const auto& t : s.turns) {
            if (is_question(t.raw)) {
                filtered.turns.push_back({static_cast<int>(filtered.turns.size()) + 1, t.raw});
            }
        }
        if (filtered.turns.size() >= 2) {
            kept.push_back(std::move(filtered));
        }
    }
    return kept;
}

SimplifyResult simplify_session_traced(const Session& session, const SimplifierConfig& config,
                                       const ling::Lexicon& lexicon)
{
    validate(config);
    corpus::validate(session);

    SimplifyResult result{{session.topic_id, {}}, {}};
    // key -> earliest original turn containing it
    std::unordered_map<std::string, int> seen;

    for (const auto& turn : session.turns) {
        auto analysis = ling::analyze(turn.raw, lexicon);
        std::vector<std::string> keys;
        keys.reserve(analysis.phrases.size());
        for (const auto& np : analysis.phrases) {
            keys.push_back(ling::np_key(analysis.tokens, analysis.tags, np));
        }

        if (turn.turn_number == 1) {
            result.session.turns.push_back(turn);
        } else {
            Rng rng(turn_seed(config.seed, session.topic_id, turn.turn_number));
            std::vector<std::string> out;
            std::size_t next_phrase = 0;
            for (std::size_t i = 0; i < analysis.tokens.size();) {
                if (next_phrase < analysis.phrases.size() && analysis.phrases[next_phrase].start == i) {
                    const auto& np = analysis.phrases[next_phrase];
                    const auto& key = keys[next_phrase];
                    ++next_phrase;
                    auto hit = seen.find(key);
                    if (hit != seen.end()) {
                        Edit edit{turn.turn_number, np, key, EditKind::omitted, {}, hit->second};
                        if (!np.follows_preposition) {
                            edit.kind = EditKind::replaced;
                            edit.pronoun = sample_word(np.head_plural ? config.plural_pronouns
                                                                      : config.singular_pronouns,
                                                       rng.uniform());
                            out.push_back(edit.pronoun);
                        }
                        result.edits.push_back(std::move(edit));
                        i = np.end;
                        continue;
                    }
                }
                out.push_back(analysis.tokens[i].surface);
                ++i;
            }
            result.session.turns.push_back({turn.turn_number, ling::detokenize(out)});
        }

        // Matching is against original turns, so register this turn's phrases as-is.
        for (const auto& key : keys) {
            seen.emplace(key, turn.turn_number);
        }
    }
    return result;
}

Session simplify_session(const Session& session, const SimplifierConfig& config, const ling::Lexicon& lexicon)
{
    return simplify_session_traced(session, config, lexicon).session;
}

std::vector<Session> simplify_sessions(const std::vector<Session>& sessions, const SimplifierConfig& config,
                                       const ling::Lexicon& lexicon)
{
    validate(config);
    std::vector<Session> out(sessions.size());
    parallel_for(sessions.size(), [&](std::size_t i) { out[i] = simplify_session(sessions[i], config, lexicon); });
    return out;
}

std::string_view to_string(Provenance p)
{
    return p == Provenance::rule_based ? "rule_based" : "self_learn";
}

WeakPairSet build_rewrite_pairs(const Session& original, const Session& simplified, Provenance provenance,
                                bool keep_unchanged)
{
    if (original.topic_id != simplified.topic_id || original.turns.size() != simplified.turns.size()) {
        throw InvariantError("sessions " + original.topic_id + " and " + simplified.topic_id +
                             " are not aligned turn-by-turn");
    }
    WeakPairSet set{{}, provenance};
    for (std::size_t k = 1; k < original.turns.size(); ++k) {
        const auto& source = simplified.turns[k].raw;
        const auto& target = original.turns[k].raw;
        if (!keep_unchanged && source == target) {
            continue;
        }
        corpus::RewritePair pair;
        pair.topic_id = original.topic_id;
        pair.turn_number = original.turns[k].turn_number;
        for (std::size_t c = 0; c < k; ++c) {
            pair.context.push_back(simplified.turns[c].raw);
        }
        pair.source = source;
        pair.target = target;
        corpus::validate(pair);
        set.pairs.push_back(std::move(pair));
    }
    return set;
}

}  // namespace convkit::weaksup
