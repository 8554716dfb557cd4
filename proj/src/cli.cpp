#include "convkit/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>

#include <CLI11.hpp>
#include <json.hpp>

#include "convkit/corpus.hpp"
#include "convkit/error.hpp"
#include "convkit/eval.hpp"
#include "convkit/linguistics.hpp"
#include "convkit/parallel.hpp"
#include "convkit/retrieval.hpp"
#include "convkit/rewriter.hpp"
#include "convkit/seed.hpp"
#include "convkit/weaksup.hpp"

namespace convkit::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

class UsageError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

std::string fixed6(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::string hex64(std::uint64_t v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// A flag value plus the options it was registered under, so "given on the command line"
// can be told apart from "left at its default".
template <typename T>
struct Flag {
    T value{};
    std::vector<CLI::Option*> options;

    std::optional<T> get() const
    {
        for (auto* o : options) {
            if (o->count() > 0) {
                return value;
            }
        }
        return std::nullopt;
    }
};

template <typename T>
void add(CLI::App& app, const std::string& name, Flag<T>& flag, const std::string& help)
{
    flag.options.push_back(app.add_option(name, flag.value, help));
}

void add_switch(CLI::App& app, const std::string& name, Flag<bool>& flag, const std::string& help)
{
    flag.options.push_back(app.add_flag(name, flag.value, help));
}

struct Flags {
    Flag<std::uint64_t> seed;
    Flag<std::string> config;
    Flag<std::string> lexicon_dir;
    Flag<std::string> stopwords;

    Flag<std::string> sessions;
    Flag<std::string> format;
    Flag<std::string> collection;
    Flag<std::string> qrels;
    Flag<std::string> out;
    Flag<std::string> simplified;
    Flag<std::string> pairs;
    Flag<std::string> train_pairs;
    Flag<std::string> checkpoint;
    Flag<std::vector<std::string>> checkpoints;
    Flag<std::vector<std::size_t>> subsets;
    Flag<std::string> index;
    Flag<std::string> run;
    Flag<std::string> run_tag;
    Flag<std::string> references;
    Flag<std::string> sources;
    Flag<std::string> report;
    Flag<std::string> direction;
    Flag<std::string> metric;
    Flag<std::string> gain;

    Flag<std::size_t> k;
    Flag<double> k1;
    Flag<double> b;

    Flag<int> layers;
    Flag<int> heads;
    Flag<int> dim;
    Flag<int> ff_dim;
    Flag<int> max_seq_len;
    Flag<int> batch_size;
    Flag<int> epochs;
    Flag<int> min_count;
    Flag<int> save_every;
    Flag<double> lr;

    Flag<bool> self_feed;
    Flag<bool> drop_unchanged;
    Flag<bool> filter;
    Flag<bool> strip_punct;
    Flag<bool> keep_case;
};

/// Resolves settings with the precedence flag > config file > default and remembers
/// every resolved value, so the sidecar describes exactly what ran.
class Settings {
  public:
    explicit Settings(json file) : m_file(std::move(file)) {}

    template <typename T>
    T get(const std::string& pointer, const std::optional<T>& flag, const T& fallback)
    {
        const json::json_pointer p(pointer);
        T value = flag ? *flag : (m_file.contains(p) ? m_file.at(p).get<T>() : fallback);
        m_resolved[p] = value;
        return value;
    }

    bool get_switch(const std::string& pointer, const std::optional<bool>& flag)
    {
        return get<bool>(pointer, flag && *flag ? flag : std::nullopt, false);
    }

    // Input and output paths are recorded but kept out of the config hash, so the same
    // configuration run in two directories hashes the same.
    std::optional<fs::path> optional_path(const std::string& key, const std::optional<std::string>& flag)
    {
        std::optional<std::string> value = flag;
        if (!value && m_file.contains(key)) {
            value = m_file.at(key).get<std::string>();
        }
        if (!value) {
            return std::nullopt;
        }
        m_paths[key] = *value;
        return fs::path(*value);
    }

    fs::path path(const std::string& key, const std::optional<std::string>& flag)
    {
        auto p = optional_path(key, flag);
        if (!p) {
            auto flag_name = key;
            std::replace(flag_name.begin(), flag_name.end(), '_', '-');
            throw UsageError("--" + flag_name + " is required");
        }
        return *p;
    }

    const json& file() const { return m_file; }
    json& resolved() { return m_resolved; }
    const json& resolved() const { return m_resolved; }
    const json& paths() const { return m_paths; }

  private:
    json m_file;
    json m_resolved = json::object();
    json m_paths = json::object();
};

struct Context {
    std::string command;
    Settings settings;
    std::ostream& out;
    std::ostream& err;
    std::uint64_t seed = 0;
    std::optional<fs::path> lexicon_dir;
    std::optional<fs::path> stopwords_path;
};

void write_meta(const fs::path& artifact, const Context& ctx, const json& extra = json::object())
{
    json meta;
    meta["command"] = ctx.command;
    meta["seed"] = ctx.seed;
    meta["config"] = ctx.settings.resolved();
    meta["config_hash"] = hex64(fnv1a64(ctx.settings.resolved().dump()));
    meta["paths"] = ctx.settings.paths();
    for (const auto& [key, value] : extra.items()) {
        meta[key] = value;
    }
    corpus::write_file(artifact.string() + ".meta.json", meta.dump(2) + "\n");
}

void write_artifact(const fs::path& path, std::string_view content, const Context& ctx,
                    const json& extra = json::object())
{
    corpus::write_file(path, content);
    write_meta(path, ctx, extra);
}

std::vector<corpus::Session> read_sessions(Context& ctx, const Flags& f, const std::string& key,
                                           const std::optional<std::string>& flag)
{
    const auto path = ctx.settings.path(key, flag);
    const auto format = ctx.settings.get<std::string>("/format", f.format.get(), "jsonl");
    return corpus::load_sessions(path, corpus::parse_session_format(format));
}

std::vector<weaksup::WeightedWord> read_distribution(const json& j)
{
    std::vector<weaksup::WeightedWord> dist;
    for (const auto& item : j) {
        dist.push_back({item.at("word").get<std::string>(), item.at("probability").get<double>()});
    }
    return dist;
}

json distribution_json(const std::vector<weaksup::WeightedWord>& dist)
{
    json j = json::array();
    for (const auto& w : dist) {
        j.push_back({{"word", w.word}, {"probability", w.probability}});
    }
    return j;
}

weaksup::SimplifierConfig simplifier_config(Context& ctx)
{
    weaksup::SimplifierConfig config;
    config.seed = ctx.seed;
    const auto& file = ctx.settings.file();
    const json::json_pointer singular("/simplifier/singular_pronouns");
    const json::json_pointer plural("/simplifier/plural_pronouns");
    if (file.contains(singular)) {
        config.singular_pronouns = read_distribution(file.at(singular));
    }
    if (file.contains(plural)) {
        config.plural_pronouns = read_distribution(file.at(plural));
    }
    weaksup::validate(config);
    ctx.settings.resolved()[singular] = distribution_json(config.singular_pronouns);
    ctx.settings.resolved()[plural] = distribution_json(config.plural_pronouns);
    return config;
}

rewriter::ModelConfig model_config(Context& ctx, const Flags& f)
{
    rewriter::ModelConfig defaults;
    rewriter::ModelConfig c;
    auto& s = ctx.settings;
    c.layers = s.get("/model/layers", f.layers.get(), defaults.layers);
    c.heads = s.get("/model/heads", f.heads.get(), defaults.heads);
    c.model_dim = s.get("/model/model_dim", f.dim.get(), defaults.model_dim);
    c.ff_dim = s.get("/model/ff_dim", f.ff_dim.get(), defaults.ff_dim);
    c.max_seq_len = s.get("/model/max_seq_len", f.max_seq_len.get(), defaults.max_seq_len);
    c.learning_rate = s.get("/model/learning_rate", f.lr.get(), defaults.learning_rate);
    c.batch_size = s.get("/model/batch_size", f.batch_size.get(), defaults.batch_size);
    c.seed = ctx.seed;
    c.validate();
    return c;
}

ling::Lexicon lexicon(const Context& ctx)
{
    return ling::Lexicon::load(ctx.lexicon_dir);
}

retrieval::StopwordSet stopwords(const Context& ctx)
{
    return retrieval::load_stopwords(ctx.stopwords_path);
}

// ---- subcommands -------------------------------------------------------------------------

int cmd_filter(Context& ctx, const Flags& f)
{
    const auto sessions = read_sessions(ctx, f, "sessions", f.sessions.get());
    const auto out = ctx.settings.path("out", f.out.get());
    const auto kept = weaksup::filter_sessions(sessions);
    write_artifact(out, corpus::format_sessions_jsonl(kept), ctx);
    ctx.out << "kept " << kept.size() << " of " << sessions.size() << " sessions\n";
    return 0;
}

int cmd_simplify(Context& ctx, const Flags& f)
{
    const auto sessions = read_sessions(ctx, f, "sessions", f.sessions.get());
    const auto out = ctx.settings.path("out", f.out.get());
    const auto config = simplifier_config(ctx);
    const auto lex = lexicon(ctx);
    const auto simplified = weaksup::simplify_sessions(sessions, config, lex);
    write_artifact(out, corpus::format_sessions_jsonl(simplified), ctx);
    ctx.out << "simplified " << simplified.size() << " sessions\n";
    return 0;
}

std::map<std::string, const corpus::Session*> by_topic(const std::vector<corpus::Session>& sessions)
{
    std::map<std::string, const corpus::Session*> m;
    for (const auto& s : sessions) {
        if (!m.emplace(s.topic_id, &s).second) {
            throw InvariantError("duplicate topic_id " + s.topic_id);
        }
    }
    return m;
}

int cmd_pairs(Context& ctx, const Flags& f)
{
    const auto original = read_sessions(ctx, f, "sessions", f.sessions.get());
    const auto out = ctx.settings.path("out", f.out.get());
    const bool keep_unchanged = !ctx.settings.get_switch("/pairs/drop_unchanged", f.drop_unchanged.get());
    std::vector<corpus::Session> simplified;
    if (auto path = ctx.settings.optional_path("simplified", f.simplified.get())) {
        simplified = corpus::load_sessions(*path);
    } else {
        simplified = weaksup::simplify_sessions(original, simplifier_config(ctx), lexicon(ctx));
    }
    const auto lookup = by_topic(simplified);
    std::vector<corpus::RewritePair> pairs;
    for (const auto& s : original) {
        auto it = lookup.find(s.topic_id);
        if (it == lookup.end()) {
            throw InvariantError("no simplified session for topic " + s.topic_id);
        }
        auto set = weaksup::build_rewrite_pairs(s, *it->second, weaksup::Provenance::rule_based, keep_unchanged);
        pairs.insert(pairs.end(), set.pairs.begin(), set.pairs.end());
    }
    write_artifact(out, corpus::format_pairs_jsonl(pairs), ctx,
                   {{"provenance", std::string(weaksup::to_string(weaksup::Provenance::rule_based))}});
    ctx.out << "wrote " << pairs.size() << " pairs\n";
    return 0;
}

int cmd_train(Context& ctx, const Flags& f)
{
    const auto pairs = corpus::load_pairs(ctx.settings.path("pairs", f.pairs.get()));
    const auto out = ctx.settings.path("out", f.out.get());
    const auto direction =
        rewriter::parse_direction(ctx.settings.get<std::string>("/train/direction", f.direction.get(), "rewrite"));
    const auto config = model_config(ctx, f);
    const int epochs = ctx.settings.get("/train/epochs", f.epochs.get(), 1);
    const int min_count = ctx.settings.get("/train/min_count", f.min_count.get(), 1);
    const int save_every = ctx.settings.get("/train/save_every", f.save_every.get(), 0);
    if (epochs < 1 || min_count < 1 || save_every < 0) {
        throw UsageError("--epochs and --min-count must be positive, --save-every non-negative");
    }
    const auto vocab = rewriter::Vocabulary::build(pairs, min_count);
    rewriter::TrainOptions options;
    options.epochs = epochs;
    if (save_every > 0) {
        options.on_step = [&](const rewriter::StepReport& report, const rewriter::RewriterModel& model) {
            if (report.step % static_cast<std::uint64_t>(save_every) == 0) {
                const fs::path path = out.string() + ".step" + std::to_string(report.step);
                rewriter::save_checkpoint(path, model, vocab);
                write_meta(path, ctx, {{"step", report.step}});
            }
        };
    }
    auto result = rewriter::train(pairs, vocab, config, direction, options);
    rewriter::save_checkpoint(out, result.model, vocab);
    write_meta(out, ctx, {{"step", result.model.step()}, {"vocab_size", vocab.size()}});
    write_artifact(out.string() + ".loss.csv", rewriter::format_loss_log(result.loss_log), ctx);
    ctx.out << "trained " << result.model.step() << " steps, final loss "
            << (result.loss_log.empty() ? std::string("n/a") : fixed6(result.loss_log.back())) << "\n";
    return 0;
}

int cmd_rewrite(Context& ctx, const Flags& f)
{
    const auto checkpoint = rewriter::load_checkpoint(ctx.settings.path("checkpoint", f.checkpoint.get()));
    const auto sessions = read_sessions(ctx, f, "sessions", f.sessions.get());
    const auto out = ctx.settings.path("out", f.out.get());
    const bool self_feed = ctx.settings.get_switch("/rewrite/self_feed", f.self_feed.get());
    const auto rewritten = rewriter::rewrite_sessions(checkpoint.model, checkpoint.vocab, sessions, self_feed);
    write_artifact(out, corpus::format_sessions_jsonl(rewritten), ctx);
    ctx.out << "rewrote " << rewritten.size() << " sessions\n";
    return 0;
}

// Each later turn is regenerated by the simplify-direction model from its fully specified
// form, with the already simplified earlier turns as context, as in training.
int cmd_self_learn_convert(Context& ctx, const Flags& f)
{
    const auto checkpoint = rewriter::load_checkpoint(ctx.settings.path("checkpoint", f.checkpoint.get()));
    auto sessions = read_sessions(ctx, f, "sessions", f.sessions.get());
    const auto out = ctx.settings.path("out", f.out.get());
    if (ctx.settings.get_switch("/self_learn/filter", f.filter.get())) {
        sessions = weaksup::filter_sessions(sessions);
    }
    const bool keep_unchanged = !ctx.settings.get_switch("/pairs/drop_unchanged", f.drop_unchanged.get());
    std::vector<corpus::Session> simplified(sessions.size());
    parallel_for(sessions.size(), [&](std::size_t i) {
        const auto& s = sessions[i];
        corpus::Session result{s.topic_id, {}};
        std::vector<std::string> context;
        for (std::size_t k = 0; k < s.turns.size(); ++k) {
            std::string text = s.turns[k].raw;
            if (k > 0) {
                text = rewriter::generate(checkpoint.model, checkpoint.vocab, context, s.turns[k].raw);
                if (text.empty()) {
                    text = s.turns[k].raw;
                }
            }
            result.turns.push_back({s.turns[k].turn_number, text});
            context.push_back(text);
        }
        simplified[i] = std::move(result);
    });
    std::vector<corpus::RewritePair> pairs;
    for (std::size_t i = 0; i < sessions.size(); ++i) {
        auto set = weaksup::build_rewrite_pairs(sessions[i], simplified[i], weaksup::Provenance::self_learn,
                                                keep_unchanged);
        pairs.insert(pairs.end(), set.pairs.begin(), set.pairs.end());
    }
    write_artifact(out, corpus::format_pairs_jsonl(pairs), ctx,
                   {{"provenance", std::string(weaksup::to_string(weaksup::Provenance::self_learn))}});
    ctx.out << "wrote " << pairs.size() << " pairs\n";
    return 0;
}

json stopword_source(const Context& ctx)
{
    return ctx.stopwords_path ? json(ctx.stopwords_path->string()) : json("builtin");
}

int cmd_index(Context& ctx, const Flags& f)
{
    const auto docs = corpus::load_collection(ctx.settings.path("collection", f.collection.get()));
    const auto out = ctx.settings.path("out", f.out.get());
    ctx.settings.resolved()["stopwords"] = stopword_source(ctx);
    const auto index = retrieval::Index::build(docs, stopwords(ctx));
    index.save(out);
    write_meta(out, ctx, {{"num_docs", index.num_docs()}, {"num_terms", index.num_terms()}});
    ctx.out << "indexed " << index.num_docs() << " documents, " << index.num_terms() << " terms\n";
    return 0;
}

int cmd_search(Context& ctx, const Flags& f)
{
    std::optional<retrieval::Index> index;
    if (auto path = ctx.settings.optional_path("index", f.index.get())) {
        index = retrieval::Index::load(*path);
        ctx.settings.resolved()["stopwords"] = "index";
    } else if (auto collection = ctx.settings.optional_path("collection", f.collection.get())) {
        ctx.settings.resolved()["stopwords"] = stopword_source(ctx);
        index = retrieval::Index::build(corpus::load_collection(*collection), stopwords(ctx));
    } else {
        throw UsageError("search needs --index or --collection");
    }
    const auto sessions = read_sessions(ctx, f, "sessions", f.sessions.get());
    const auto out = ctx.settings.path("out", f.out.get());
    retrieval::Bm25Params params;
    params.k1 = ctx.settings.get("/bm25/k1", f.k1.get(), params.k1);
    params.b = ctx.settings.get("/bm25/b", f.b.get(), params.b);
    params.validate();
    const auto k = ctx.settings.get<std::size_t>("/search/k", f.k.get(), 100);
    corpus::RunFile run;
    run.run_tag = ctx.settings.get<std::string>("/search/run_tag", f.run_tag.get(), run.run_tag);

    std::vector<std::pair<std::string, std::string>> queries;
    for (const auto& s : sessions) {
        for (const auto& t : s.turns) {
            queries.emplace_back(corpus::query_id(s.topic_id, t.turn_number), t.raw);
        }
    }
    std::vector<std::vector<corpus::RunEntry>> results(queries.size());
    parallel_for(queries.size(), [&](std::size_t i) {
        results[i] = retrieval::search(*index, params, queries[i].first, queries[i].second, k);
    });
    for (auto& r : results) {
        run.entries.insert(run.entries.end(), r.begin(), r.end());
    }
    write_artifact(out, corpus::format_run(run), ctx);
    ctx.out << "searched " << queries.size() << " queries\n";
    return 0;
}

int cmd_eval(Context& ctx, const Flags& f)
{
    const auto metric = ctx.settings.get<std::string>("/eval/metric", f.metric.get(), "ndcg");
    const auto out = ctx.settings.optional_path("out", f.out.get());
    eval::MetricReport report;
    if (metric == "ndcg") {
        const auto run = corpus::load_run(ctx.settings.path("run", f.run.get()));
        const auto qrels = corpus::load_qrels(ctx.settings.path("qrels", f.qrels.get()));
        eval::NdcgOptions options;
        options.k = ctx.settings.get<std::size_t>("/eval/k", f.k.get(), options.k);
        options.gain = eval::parse_gain(ctx.settings.get<std::string>("/eval/gain", f.gain.get(), "exp"));
        auto result = eval::ndcg_at_k(run, qrels, options);
        if (!result.skipped.empty()) {
            ctx.err << "skipped " << result.skipped.size() << " run queries without judgments\n";
        }
        report = std::move(result.report);
    } else if (metric == "bleu2" || metric == "rougeL") {
        const auto candidates = read_sessions(ctx, f, "sessions", f.sessions.get());
        const auto references = corpus::load_sessions(ctx.settings.path("references", f.references.get()));
        eval::TextOptions options;
        options.lowercase = !ctx.settings.get_switch("/eval/keep_case", f.keep_case.get());
        options.strip_punct = ctx.settings.get_switch("/eval/strip_punct", f.strip_punct.get());
        report = eval::text_metric_report(metric, candidates, references, options);
    } else {
        throw UsageError("unknown metric '" + metric + "' (expected bleu2, rougeL or ndcg)");
    }
    if (out) {
        write_artifact(*out, eval::format_report_csv(report), ctx);
        write_artifact(out->string() + ".json", eval::format_report_json(report), ctx);
    }
    ctx.out << fixed6(report.aggregate) << "\n";
    return 0;
}

// Rewritten turns only: first turns have no context to resolve.
std::vector<std::pair<const corpus::Session*, std::size_t>> later_turns(const std::vector<corpus::Session>& sessions)
{
    std::vector<std::pair<const corpus::Session*, std::size_t>> turns;
    for (const auto& s : sessions) {
        for (std::size_t k = 1; k < s.turns.size(); ++k) {
            turns.emplace_back(&s, k);
        }
    }
    return turns;
}

int cmd_quefrac(Context& ctx, const Flags& f)
{
    const auto sessions = read_sessions(ctx, f, "sessions", f.sessions.get());
    std::vector<std::string> rewrites;
    for (auto [s, k] : later_turns(sessions)) {
        rewrites.push_back(s->turns[k].raw);
    }
    ctx.out << fixed6(eval::que_frac(rewrites)) << "\n";
    return 0;
}

int cmd_copyfrac(Context& ctx, const Flags& f)
{
    const auto rewrites = read_sessions(ctx, f, "sessions", f.sessions.get());
    const auto sources = corpus::load_sessions(ctx.settings.path("sources", f.sources.get()));
    const auto out = ctx.settings.optional_path("out", f.out.get());
    ctx.settings.resolved()["stopwords"] = stopword_source(ctx);
    const auto stop = stopwords(ctx);
    const auto lookup = by_topic(sources);
    eval::MetricReport report;
    report.metric = "copy_frac";
    for (auto [s, k] : later_turns(rewrites)) {
        auto it = lookup.find(s->topic_id);
        if (it == lookup.end() || it->second->turns.size() != s->turns.size()) {
            throw InvariantError("rewrites and sources are not aligned at topic " + s->topic_id);
        }
        const auto& src = it->second->turns;
        std::vector<std::string> context;
        for (std::size_t j = 0; j < k; ++j) {
            context.push_back(src[j].raw);
        }
        report.per_query[corpus::query_id(s->topic_id, s->turns[k].turn_number)] =
            eval::copy_frac(s->turns[k].raw, src[k].raw, context, stop);
    }
    report.finalize();
    if (out) {
        write_artifact(*out, eval::format_report_csv(report), ctx);
    }
    ctx.out << fixed6(report.aggregate) << "\n";
    return 0;
}

int cmd_per_turn(Context& ctx, const Flags& f)
{
    const auto path = ctx.settings.path("report", f.report.get());
    const auto report = eval::parse_report_csv(corpus::read_file(path), path.string());
    const auto csv = eval::format_breakdown_csv(eval::per_turn_breakdown(report));
    if (auto out = ctx.settings.optional_path("out", f.out.get())) {
        write_artifact(*out, csv, ctx);
    } else {
        ctx.out << csv;
    }
    return 0;
}

struct CurvePoint {
    double loss = 0.0;
    double bleu = 0.0;
};

CurvePoint evaluate_model(const rewriter::RewriterModel& model, const rewriter::Vocabulary& vocab,
                          const std::vector<corpus::RewritePair>& pairs, rewriter::Direction direction)
{
    if (pairs.empty()) {
        throw InvariantError("learning curve needs at least one evaluation pair");
    }
    std::vector<CurvePoint> points(pairs.size());
    parallel_for(pairs.size(), [&](std::size_t i) {
        const auto p = rewriter::oriented(pairs[i], direction);
        const auto seq = rewriter::serialize(p, vocab, true, model.config().max_seq_len);
        points[i].loss = model.loss(std::span<const rewriter::TokenSequence>(&seq, 1));
        points[i].bleu = eval::bleu2(rewriter::generate(model, vocab, p.context, p.source), p.target);
    });
    CurvePoint mean;
    for (const auto& p : points) {
        mean.loss += p.loss / static_cast<double>(points.size());
        mean.bleu += p.bleu / static_cast<double>(points.size());
    }
    return mean;
}

// Two curves: one point per saved checkpoint, or one freshly trained model per number of
// training sessions. Sessions are taken in a seeded order so smaller subsets nest in larger ones.
int cmd_learning_curve(Context& ctx, const Flags& f)
{
    const auto eval_pairs = corpus::load_pairs(ctx.settings.path("pairs", f.pairs.get()));
    const auto direction =
        rewriter::parse_direction(ctx.settings.get<std::string>("/train/direction", f.direction.get(), "rewrite"));
    std::string csv;
    if (auto ckpts = f.checkpoints.get()) {
        csv = "checkpoint,step,loss,bleu2\n";
        for (const auto& path : *ckpts) {
            const auto c = rewriter::load_checkpoint(path);
            const auto point = evaluate_model(c.model, c.vocab, eval_pairs, direction);
            csv += path + "," + std::to_string(c.model.step()) + "," + fixed6(point.loss) + "," +
                   fixed6(point.bleu) + "\n";
        }
        ctx.settings.resolved()["checkpoints"] = *ckpts;
    } else if (auto subsets = f.subsets.get()) {
        const auto train_pairs = corpus::load_pairs(ctx.settings.path("train_pairs", f.train_pairs.get()));
        const auto config = model_config(ctx, f);
        const int epochs = ctx.settings.get("/train/epochs", f.epochs.get(), 1);
        const int min_count = ctx.settings.get("/train/min_count", f.min_count.get(), 1);
        ctx.settings.resolved()["subsets"] = *subsets;
        std::vector<std::string> topics;
        std::set<std::string> seen;
        for (const auto& p : train_pairs) {
            if (seen.insert(p.topic_id).second) {
                topics.push_back(p.topic_id);
            }
        }
        Rng rng(derive_seed(ctx.seed, "learning-curve"));
        rng.shuffle(topics);
        csv = "sessions,pairs,loss,bleu2\n";
        for (auto n : *subsets) {
            if (n == 0 || n > topics.size()) {
                throw UsageError("subset size " + std::to_string(n) + " outside 1.." + std::to_string(topics.size()));
            }
            const std::set<std::string> chosen(topics.begin(), topics.begin() + static_cast<std::ptrdiff_t>(n));
            std::vector<corpus::RewritePair> subset;
            std::copy_if(train_pairs.begin(), train_pairs.end(), std::back_inserter(subset),
                         [&](const auto& p) { return chosen.contains(p.topic_id); });
            const auto vocab = rewriter::Vocabulary::build(subset, min_count);
            rewriter::TrainOptions options;
            options.epochs = epochs;
            const auto result = rewriter::train(subset, vocab, config, direction, options);
            const auto point = evaluate_model(result.model, vocab, eval_pairs, direction);
            csv += std::to_string(n) + "," + std::to_string(subset.size()) + "," + fixed6(point.loss) + "," +
                   fixed6(point.bleu) + "\n";
        }
    } else {
        throw UsageError("learning-curve needs --checkpoints or --subsets");
    }
    if (auto out = ctx.settings.optional_path("out", f.out.get())) {
        write_artifact(*out, csv, ctx);
    } else {
        ctx.out << csv;
    }
    return 0;
}

void add_session_input(CLI::App& app, Flags& f)
{
    add(app, "--sessions", f.sessions, "Session file");
    add(app, "--format", f.format, "Session file format: jsonl or tsv");
}

void add_model_flags(CLI::App& app, Flags& f)
{
    add(app, "--layers", f.layers, "Transformer blocks");
    add(app, "--heads", f.heads, "Attention heads");
    add(app, "--dim", f.dim, "Model width");
    add(app, "--ff-dim", f.ff_dim, "Feed-forward width");
    add(app, "--max-seq-len", f.max_seq_len, "Longest serialized sequence");
    add(app, "--lr", f.lr, "Adam learning rate");
    add(app, "--batch-size", f.batch_size, "Pairs per optimizer step");
    add(app, "--epochs", f.epochs, "Passes over the training pairs");
    add(app, "--min-count", f.min_count, "Minimum token count for the vocabulary");
    add(app, "--direction", f.direction, "rewrite or simplify");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Weakly supervised conversational query rewriting toolkit", "convkit"};
    app.require_subcommand(1);
    app.fallthrough();
    Flags f;
    add(app, "--seed", f.seed, "Global seed");
    add(app, "--config", f.config, "JSON config file; flags take precedence over it");
    add(app, "--lexicon-dir", f.lexicon_dir, "Directory overriding the built-in word lists");
    add(app, "--stopwords", f.stopwords, "Stopword file overriding the built-in list");

    std::map<CLI::App*, int (*)(Context&, const Flags&)> handlers;
    auto sub = [&](const std::string& name, const std::string& help, int (*handler)(Context&, const Flags&),
                   CLI::App* parent = nullptr) {
        auto* s = (parent ? parent : &app)->add_subcommand(name, help);
        s->fallthrough();
        handlers[s] = handler;
        return s;
    };

    auto* filter = sub("filter", "Keep only question turns of each session", cmd_filter);
    add_session_input(*filter, f);
    add(*filter, "--out", f.out, "Output sessions JSONL");

    auto* simplify = sub("simplify", "Rule-based simplification of fully specified sessions", cmd_simplify);
    add_session_input(*simplify, f);
    add(*simplify, "--out", f.out, "Output sessions JSONL");

    auto* pairs = sub("pairs", "Build rewrite pairs from original and simplified sessions", cmd_pairs);
    add_session_input(*pairs, f);
    add(*pairs, "--simplified", f.simplified, "Simplified sessions; simplified on the fly when absent");
    add_switch(*pairs, "--drop-unchanged", f.drop_unchanged, "Skip turns the simplifier left alone");
    add(*pairs, "--out", f.out, "Output pairs JSONL");

    auto* train = sub("train", "Train a rewriter in either direction", cmd_train);
    add(*train, "--pairs", f.pairs, "Training pairs JSONL");
    add_model_flags(*train, f);
    add(*train, "--save-every", f.save_every, "Also save a checkpoint every N steps");
    add(*train, "--out", f.out, "Checkpoint path");

    auto* rewrite = sub("rewrite", "Rewrite every turn of each session with a trained model", cmd_rewrite);
    add(*rewrite, "--checkpoint", f.checkpoint, "Model checkpoint");
    add_session_input(*rewrite, f);
    add_switch(*rewrite, "--self-feed", f.self_feed, "Use earlier rewrites as context instead of raw turns");
    add(*rewrite, "--out", f.out, "Output sessions JSONL");

    auto* self_learn = sub("self-learn-convert", "Simplify sessions with a simplify-direction model into weak pairs",
                           cmd_self_learn_convert);
    add(*self_learn, "--checkpoint", f.checkpoint, "Simplify-direction checkpoint");
    add_session_input(*self_learn, f);
    add_switch(*self_learn, "--filter", f.filter, "Apply question filtering first");
    add_switch(*self_learn, "--drop-unchanged", f.drop_unchanged, "Skip turns the model left alone");
    add(*self_learn, "--out", f.out, "Output pairs JSONL");

    auto* index = sub("index", "Build and save a BM25 index", cmd_index);
    add(*index, "--collection", f.collection, "Collection TSV");
    add(*index, "--out", f.out, "Index file");

    auto* search = sub("search", "Search every session turn and write a TREC run", cmd_search);
    add(*search, "--index", f.index, "Saved index");
    add(*search, "--collection", f.collection, "Collection TSV, indexed in memory");
    add_session_input(*search, f);
    add(*search, "--k", f.k, "Results per query");
    add(*search, "--k1", f.k1, "BM25 k1");
    add(*search, "--b", f.b, "BM25 b");
    add(*search, "--run-tag", f.run_tag, "Run tag column");
    add(*search, "--out", f.out, "Run file");

    auto* evaluate = sub("eval", "Score a run or rewrites", cmd_eval);
    add(*evaluate, "--metric", f.metric, "bleu2, rougeL or ndcg");
    add(*evaluate, "--run", f.run, "TREC run (ndcg)");
    add(*evaluate, "--qrels", f.qrels, "TREC qrels (ndcg)");
    add(*evaluate, "--k", f.k, "NDCG cutoff");
    add(*evaluate, "--gain", f.gain, "exp or linear");
    add_session_input(*evaluate, f);
    add(*evaluate, "--references", f.references, "Reference sessions (bleu2, rougeL)");
    add_switch(*evaluate, "--strip-punct", f.strip_punct, "Drop punctuation tokens before scoring");
    add_switch(*evaluate, "--keep-case", f.keep_case, "Compare tokens without lowercasing");
    add(*evaluate, "--out", f.out, "Per-query report CSV, with a JSON copy next to it");

    auto* analyze = app.add_subcommand("analyze", "Diagnostics over rewrites, reports and models");
    analyze->require_subcommand(1);
    analyze->fallthrough();
    auto* quefrac = sub("quefrac", "Fraction of rewritten turns that are questions", cmd_quefrac, analyze);
    add_session_input(*quefrac, f);
    auto* copyfrac = sub("copyfrac", "Fraction of new rewrite words found in earlier turns", cmd_copyfrac, analyze);
    add_session_input(*copyfrac, f);
    add(*copyfrac, "--sources", f.sources, "The contextual sessions that were rewritten");
    add(*copyfrac, "--out", f.out, "Per-query report CSV");
    auto* per_turn = sub("per-turn", "Mean metric per turn depth", cmd_per_turn, analyze);
    add(*per_turn, "--report", f.report, "Per-query report CSV");
    add(*per_turn, "--out", f.out, "Breakdown CSV");
    auto* curve = sub("learning-curve", "Loss and BLEU-2 over checkpoints or training-set sizes",
                      cmd_learning_curve, analyze);
    add(*curve, "--pairs", f.pairs, "Evaluation pairs JSONL");
    f.checkpoints.options.push_back(curve->add_option("--checkpoints", f.checkpoints.value, "Checkpoints, comma separated")
                                        ->delimiter(','));
    f.subsets.options.push_back(
        curve->add_option("--subsets", f.subsets.value, "Training-session counts, comma separated")->delimiter(','));
    add(*curve, "--train-pairs", f.train_pairs, "Training pairs for the subset curve");
    add_model_flags(*curve, f);
    add(*curve, "--out", f.out, "Curve CSV");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? 0 : 2;
    }

    CLI::App* chosen = nullptr;
    std::string command;
    for (CLI::App* level = &app; level != nullptr;) {
        auto subs = level->get_subcommands();
        level = subs.empty() ? nullptr : subs.front();
        if (level) {
            chosen = level;
            command += (command.empty() ? "" : " ") + level->get_name();
        }
    }
    auto handler = handlers.find(chosen);
    if (handler == handlers.end()) {
        err << "error: missing subcommand\n";
        return 2;
    }

    try {
        json file = json::object();
        if (auto path = f.config.get()) {
            file = json::parse(corpus::read_file(*path));
            if (!file.is_object()) {
                throw Error(*path + ": config must be a JSON object");
            }
        }
        Context ctx{command, Settings(std::move(file)), out, err, 0, std::nullopt, std::nullopt};
        ctx.seed = ctx.settings.get<std::uint64_t>("/seed", f.seed.get(), 0);
        ctx.lexicon_dir = ctx.settings.optional_path("lexicon_dir", f.lexicon_dir.get());
        ctx.stopwords_path = ctx.settings.optional_path("stopwords", f.stopwords.get());
        return handler->second(ctx, f);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace convkit::cli
