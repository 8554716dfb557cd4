#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>

#include "convkit/error.hpp"
#include "convkit/linguistics.hpp"
#include "convkit/parallel.hpp"
#include "convkit/rewriter.hpp"
#include "convkit/seed.hpp"

namespace convkit::rewriter {

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

class Adam {
  public:
    explicit Adam(std::size_t n) : m_m(n, 0.0), m_v(n, 0.0) {}

    void step(std::span<double> params, std::span<const double> grad, double lr)
    {
        ++m_t;
        const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(m_t));
        const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(m_t));
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_m[i] = kBeta1 * m_m[i] + (1.0 - kBeta1) * grad[i];
            m_v[i] = kBeta2 * m_v[i] + (1.0 - kBeta2) * grad[i] * grad[i];
            params[i] -= lr * (m_m[i] / c1) / (std::sqrt(m_v[i] / c2) + kAdamEps);
        }
    }

  private:
    std::vector<double> m_m;
    std::vector<double> m_v;
    std::uint64_t m_t = 0;
};

// Little-endian binary writer/reader for checkpoints.
class Writer {
  public:
    explicit Writer(std::ostream& out) : m_out(out) {}

    void u32(std::uint32_t v)
    {
        std::array<char, 4> b{};
        for (int i = 0; i < 4; ++i) {
            b[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xff);
        }
        m_out.write(b.data(), 4);
    }
    void u64(std::uint64_t v)
    {
        u32(static_cast<std::uint32_t>(v & 0xffffffffu));
        u32(static_cast<std::uint32_t>(v >> 32));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void str(std::string_view s)
    {
        u32(static_cast<std::uint32_t>(s.size()));
        m_out.write(s.data(), static_cast<std::streamsize>(s.size()));
    }
    void raw(std::string_view s) { m_out.write(s.data(), static_cast<std::streamsize>(s.size())); }

  private:
    std::ostream& m_out;
};

class Reader {
  public:
    Reader(std::istream& in, std::string name) : m_in(in), m_name(std::move(name)) {}

    std::uint32_t u32()
    {
        std::array<unsigned char, 4> b{};
        m_in.read(reinterpret_cast<char*>(b.data()), 4);
        check();
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) {
            v = (v << 8) | b[static_cast<std::size_t>(i)];
        }
        return v;
    }
    std::uint64_t u64()
    {
        const std::uint64_t lo = u32();
        const std::uint64_t hi = u32();
        return lo | (hi << 32);
    }
    double f64() { return std::bit_cast<double>(u64()); }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string str()
    {
        const auto n = u32();
        if (n > (1u << 24)) {
            throw Error(m_name + ": corrupt string length");
        }
        std::string s(n, '\0');
        m_in.read(s.data(), n);
        check();
        return s;
    }
    std::string raw(std::size_t n)
    {
        std::string s(n, '\0');
        m_in.read(s.data(), static_cast<std::streamsize>(n));
        check();
        return s;
    }

  private:
    void check()
    {
        if (!m_in) {
            throw Error(m_name + ": truncated checkpoint");
        }
    }

    std::istream& m_in;
    std::string m_name;
};

constexpr std::string_view kCheckpointMagic{"CVKMODEL", 8};
constexpr std::uint32_t kCheckpointVersion = 1;

std::string render(int id, const Vocabulary& vocab)
{
    return id == kUnk ? std::string("<unk>") : vocab.token(id);
}

}  // namespace

Direction parse_direction(std::string_view name)
{
    if (name == "rewrite") {
        return Direction::rewrite;
    }
    if (name == "simplify") {
        return Direction::simplify;
    }
    throw Error("unknown direction '" + std::string(name) + "' (expected rewrite or simplify)");
}

std::string_view to_string(Direction direction)
{
    return direction == Direction::rewrite ? "rewrite" : "simplify";
}

RewritePair oriented(const RewritePair& pair, Direction direction)
{
    RewritePair p = pair;
    if (direction == Direction::simplify) {
        std::swap(p.source, p.target);
    }
    return p;
}

TrainResult train(const std::vector<RewritePair>& pairs, const Vocabulary& vocab, const ModelConfig& config,
                  Direction direction, const TrainOptions& options)
{
    return train_from(RewriterModel(config, vocab.size()), pairs, vocab, direction, options);
}

TrainResult train_from(RewriterModel model, const std::vector<RewritePair>& pairs, const Vocabulary& vocab,
                       Direction direction, const TrainOptions& options)
{
    if (pairs.empty()) {
        throw Error("training needs at least one pair");
    }
    if (model.vocab_size() != vocab.size()) {
        throw Error("model and vocabulary sizes differ");
    }
    const ModelConfig& config = model.config();
    std::vector<TokenSequence> sequences;
    sequences.reserve(pairs.size());
    for (const auto& p : pairs) {
        sequences.push_back(serialize(oriented(p, direction), vocab, true, config.max_seq_len));
    }

    Rng order_rng(derive_seed(config.seed, "shuffle"));
    std::vector<std::size_t> order(sequences.size());
    Adam adam(model.parameters().size());
    std::vector<double> grad(model.parameters().size());
    std::vector<TokenSequence> batch;
    const auto batch_size = static_cast<std::size_t>(config.batch_size);

    TrainResult result{std::move(model), {}};
    RewriterModel& m = result.model;
    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        order_rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            batch.clear();
            for (std::size_t i = start; i < std::min(order.size(), start + batch_size); ++i) {
                batch.push_back(sequences[order[i]]);
            }
            const double loss = m.loss_and_gradient(batch, grad);
            if (!std::isfinite(loss)) {
                throw DivergenceError("training diverged at step " + std::to_string(m.step() + 1) +
                                      " (non-finite loss)");
            }
            adam.step(m.parameters(), grad, config.learning_rate);
            m.set_step(m.step() + 1);
            if (!m.all_finite()) {
                throw DivergenceError("training diverged at step " + std::to_string(m.step()) +
                                      " (non-finite parameters)");
            }
            result.loss_log.push_back(loss);
            if (options.on_step) {
                options.on_step({m.step(), epoch, loss}, m);
            }
        }
    }
    return result;
}

Generation generate_ids(const RewriterModel& model, const Vocabulary& vocab, const std::vector<std::string>& context,
                        const std::string& source)
{
    RewritePair pair;
    pair.turn_number = static_cast<int>(context.size()) + 1;
    pair.context = context;
    pair.source = source;
    const auto max_len = static_cast<std::size_t>(model.config().max_seq_len);
    auto seq = serialize(pair, vocab, false, model.config().max_seq_len);

    Generation gen;
    const std::size_t V = model.vocab_size();
    while (seq.ids.size() < max_len) {
        auto logits = model.logits(seq.ids);
        const double* last = logits.data() + (seq.ids.size() - 1) * V;
        std::size_t best = 0;
        for (std::size_t v = 1; v < V; ++v) {
            if (last[v] > last[best]) {
                best = v;
            }
        }
        const int id = static_cast<int>(best);
        if (id == kEos) {
            break;
        }
        gen.ids.push_back(id);
        seq.ids.push_back(id);
    }
    std::vector<std::string> words;
    words.reserve(gen.ids.size());
    for (int id : gen.ids) {
        words.push_back(render(id, vocab));
    }
    gen.text = ling::detokenize(words);
    return gen;
}

std::string generate(const RewriterModel& model, const Vocabulary& vocab, const std::vector<std::string>& context,
                     const std::string& source)
{
    return generate_ids(model, vocab, context, source).text;
}

std::vector<corpus::Session> rewrite_sessions(const RewriterModel& model, const Vocabulary& vocab,
                                              const std::vector<corpus::Session>& sessions, bool self_feed)
{
    std::vector<corpus::Session> out(sessions.size());
    parallel_for(sessions.size(), [&](std::size_t s) {
        const auto& session = sessions[s];
        corpus::Session rewritten{session.topic_id, {}};
        std::vector<std::string> context;
        for (const auto& turn : session.turns) {
            auto text = generate(model, vocab, context, turn.raw);
            if (text.empty()) {
                text = turn.raw;  // immediate [EOS]: keep the query as-is
            }
            rewritten.turns.push_back({turn.turn_number, text});
            context.push_back(self_feed ? text : turn.raw);
        }
        out[s] = std::move(rewritten);
    });
    return out;
}

void save_checkpoint(const std::filesystem::path& path, const RewriterModel& model, const Vocabulary& vocab)
{
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    Writer w(out);
    const auto& c = model.config();
    w.raw(kCheckpointMagic);
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(c.layers));
    w.u32(static_cast<std::uint32_t>(c.heads));
    w.u32(static_cast<std::uint32_t>(c.model_dim));
    w.u32(static_cast<std::uint32_t>(c.ff_dim));
    w.u32(static_cast<std::uint32_t>(c.max_seq_len));
    w.u32(static_cast<std::uint32_t>(c.batch_size));
    w.f64(c.learning_rate);
    w.u64(c.seed);
    w.u64(model.step());
    auto words = vocab.words();
    w.u32(static_cast<std::uint32_t>(words.size()));
    for (const auto& word : words) {
        w.str(word);
    }
    const auto params = model.parameters();
    w.u32(static_cast<std::uint32_t>(model.tensors().size()));
    for (const auto& t : model.tensors()) {
        w.str(t.name);
        w.u32(static_cast<std::uint32_t>(t.shape.size()));
        for (auto d : t.shape) {
            w.u32(static_cast<std::uint32_t>(d));
        }
        for (std::size_t i = 0; i < t.size; ++i) {
            w.f32(static_cast<float>(params[t.offset + i]));
        }
    }
    if (!out) {
        throw Error("write failed for " + path.string());
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    Reader r(in, path.string());
    if (r.raw(kCheckpointMagic.size()) != kCheckpointMagic) {
        throw Error(path.string() + ": not a model checkpoint");
    }
    if (auto version = r.u32(); version != kCheckpointVersion) {
        throw Error(path.string() + ": unsupported checkpoint version " + std::to_string(version));
    }
    ModelConfig c;
    c.layers = static_cast<int>(r.u32());
    c.heads = static_cast<int>(r.u32());
    c.model_dim = static_cast<int>(r.u32());
    c.ff_dim = static_cast<int>(r.u32());
    c.max_seq_len = static_cast<int>(r.u32());
    c.batch_size = static_cast<int>(r.u32());
    c.learning_rate = r.f64();
    c.seed = r.u64();
    const auto step = r.u64();
    const auto n_words = r.u32();
    std::vector<std::string> words;
    words.reserve(n_words);
    for (std::uint32_t i = 0; i < n_words; ++i) {
        words.push_back(r.str());
    }
    auto vocab = Vocabulary::from_words(words);
    RewriterModel model(c, vocab.size());
    model.set_step(step);
    const auto n_tensors = r.u32();
    if (n_tensors != model.tensors().size()) {
        throw Error(path.string() + ": tensor count does not match the configuration");
    }
    auto params = model.parameters();
    for (const auto& t : model.tensors()) {
        if (r.str() != t.name) {
            throw Error(path.string() + ": unexpected tensor order at " + t.name);
        }
        const auto rank = r.u32();
        if (rank != t.shape.size()) {
            throw Error(path.string() + ": rank mismatch for " + t.name);
        }
        for (auto d : t.shape) {
            if (r.u32() != d) {
                throw Error(path.string() + ": shape mismatch for " + t.name);
            }
        }
        for (std::size_t i = 0; i < t.size; ++i) {
            params[t.offset + i] = static_cast<double>(r.f32());
        }
    }
    return {std::move(model), std::move(vocab)};
}

std::string format_loss_log(std::span<const double> losses)
{
    std::string out = "step,loss\n";
    char line[64];
    for (std::size_t i = 0; i < losses.size(); ++i) {
        std::snprintf(line, sizeof(line), "%zu,%.9g\n", i + 1, losses[i]);
        out += line;
    }
    return out;
}

}  // namespace convkit::rewriter
