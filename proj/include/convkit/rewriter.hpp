#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "convkit/corpus.hpp"

namespace convkit::rewriter {

using corpus::RewritePair;

// Reserved ids, fixed across vocabularies.
inline constexpr int kSep = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kPad = 3;
inline constexpr int kUnk = 4;
inline constexpr int kReservedCount = 5;

class Vocabulary {
  public:
    Vocabulary();

    /// Lowered word tokens of every context, source and target with count >= min_count,
    /// ordered by frequency (desc) then lexicographically. Throws on an empty corpus.
    static Vocabulary build(const std::vector<RewritePair>& pairs, int min_count = 1);

    /// Reserved markers followed by `words` in the given order.
    static Vocabulary from_words(const std::vector<std::string>& words);

    /// [UNK] for unknown words.
    int id(std::string_view word) const;
    bool contains(std::string_view word) const { return m_ids.find(std::string(word)) != m_ids.end(); }
    const std::string& token(int id) const { return m_tokens.at(static_cast<std::size_t>(id)); }
    std::size_t size() const { return m_tokens.size(); }

    /// Non-reserved words in id order.
    std::vector<std::string> words() const;

    bool operator==(const Vocabulary& other) const { return m_tokens == other.m_tokens; }

  private:
    std::vector<std::string> m_tokens;
    std::unordered_map<std::string, int> m_ids;
};

struct TokenSequence {
    std::vector<int> ids;
    std::size_t bos_position = 0;  // index of [BOS] within ids
};

struct ModelConfig {
    int layers = 2;
    int heads = 4;
    int model_dim = 128;
    int ff_dim = 512;
    int max_seq_len = 150;
    double learning_rate = 5e-5;
    int batch_size = 2;
    std::uint64_t seed = 0;

    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

/// context_1 [SEP] ... context_n [SEP] source [BOS] (target [EOS]). Over-long input loses
/// whole context turns from the front first, then is cut from the left. Throws when the
/// source with [BOS] alone cannot fit.
TokenSequence serialize(const RewritePair& pair, const Vocabulary& vocab, bool include_target, int max_seq_len);

struct TensorInfo {
    std::string name;
    std::vector<std::size_t> shape;
    std::size_t offset = 0;
    std::size_t size = 0;
};

/// Pre-norm decoder-only transformer: token + learned position embeddings, causal
/// multi-head attention, GELU feed-forward, final layer norm, output projection tied
/// to the token embedding. Parameters live in one flat buffer described by tensors().
class RewriterModel {
  public:
    RewriterModel(const ModelConfig& config, std::size_t vocab_size);

    const ModelConfig& config() const { return m_config; }
    std::size_t vocab_size() const { return m_vocab_size; }
    const std::vector<TensorInfo>& tensors() const { return m_tensors; }
    const TensorInfo& tensor(std::string_view name) const;

    std::span<double> parameters() { return m_params; }
    std::span<const double> parameters() const { return m_params; }

    std::uint64_t step() const { return m_step; }
    void set_step(std::uint64_t step) { m_step = step; }

    bool all_finite() const;

    /// Logits for every position, row-major [ids.size() x vocab_size].
    std::vector<double> logits(std::span<const int> ids) const;

    /// Mean cross-entropy over the positions after [BOS] whose next token is not [PAD].
    double loss(std::span<const TokenSequence> batch) const;

    /// Same loss; writes d(loss)/d(parameters) into `grad` (size parameters().size()).
    double loss_and_gradient(std::span<const TokenSequence> batch, std::span<double> grad) const;

  private:
    double run(std::span<const TokenSequence> batch, std::span<double> grad, bool want_grad) const;

    ModelConfig m_config;
    std::size_t m_vocab_size;
    std::vector<TensorInfo> m_tensors;
    std::vector<double> m_params;
    std::uint64_t m_step = 0;
};

enum class Direction { rewrite, simplify };

Direction parse_direction(std::string_view name);
std::string_view to_string(Direction direction);

/// simplify trains the reverse mapping: source and target swap.
RewritePair oriented(const RewritePair& pair, Direction direction);

struct StepReport {
    std::uint64_t step = 0;
    int epoch = 0;
    double loss = 0.0;
};

struct TrainOptions {
    int epochs = 1;
    /// Called after every optimizer step; the model reference reflects the update.
    std::function<void(const StepReport&, const RewriterModel&)> on_step;
};

struct TrainResult {
    RewriterModel model;
    std::vector<double> loss_log;  // one entry per optimizer step
};

/// Adam over mini-batches of config.batch_size; epoch order shuffled from config.seed.
/// Throws DivergenceError on a non-finite loss.
TrainResult train(const std::vector<RewritePair>& pairs, const Vocabulary& vocab, const ModelConfig& config,
                  Direction direction, const TrainOptions& options = {});

/// Continues from an existing model (fine-tuning); the optimizer state starts fresh.
TrainResult train_from(RewriterModel model, const std::vector<RewritePair>& pairs, const Vocabulary& vocab,
                       Direction direction, const TrainOptions& options = {});

struct Generation {
    std::vector<int> ids;  // generated ids, [EOS] excluded
    std::string text;
};

/// Greedy decoding (lowest id wins ties) until [EOS] or max_seq_len.
Generation generate_ids(const RewriterModel& model, const Vocabulary& vocab, const std::vector<std::string>& context,
                        const std::string& source);

std::string generate(const RewriterModel& model, const Vocabulary& vocab, const std::vector<std::string>& context,
                     const std::string& source);

/// Rewrites every turn of every session. Context is the raw previous turns, or the
/// previously generated rewrites when self_feed is set.
std::vector<corpus::Session> rewrite_sessions(const RewriterModel& model, const Vocabulary& vocab,
                                              const std::vector<corpus::Session>& sessions, bool self_feed = false);

struct Checkpoint {
    RewriterModel model;
    Vocabulary vocab;
};

/// Versioned binary: magic, config, vocabulary, then little-endian float32 tensors in
/// declaration order.
void save_checkpoint(const std::filesystem::path& path, const RewriterModel& model, const Vocabulary& vocab);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string format_loss_log(std::span<const double> losses);

}  // namespace convkit::rewriter
