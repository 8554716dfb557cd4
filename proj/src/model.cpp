#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "convkit/error.hpp"
#include "convkit/rewriter.hpp"
#include "convkit/seed.hpp"

namespace convkit::rewriter {

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kInitStd = 0.02;

// Parameter block of one transformer layer, as offsets into the flat buffer.
struct LayerParams {
    std::size_t ln1_g, ln1_b, attn_w, attn_b, proj_w, proj_b, ln2_g, ln2_b, fc_w, fc_b, out_w, out_b;
};

struct Shape {
    std::size_t vocab, seq, dim, heads, head_dim, ff, layers;
};

Shape shape_of(const ModelConfig& c, std::size_t vocab)
{
    return {vocab,
            static_cast<std::size_t>(c.max_seq_len),
            static_cast<std::size_t>(c.model_dim),
            static_cast<std::size_t>(c.heads),
            static_cast<std::size_t>(c.model_dim / c.heads),
            static_cast<std::size_t>(c.ff_dim),
            static_cast<std::size_t>(c.layers)};
}

// y[rows x n] = x[rows x m] * w[m x n] + b
void linear_forward(const double* x, const double* w, const double* b, double* y, std::size_t rows, std::size_t m,
                    std::size_t n)
{
    for (std::size_t t = 0; t < rows; ++t) {
        double* yr = y + t * n;
        std::copy(b, b + n, yr);
        const double* xr = x + t * m;
        for (std::size_t i = 0; i < m; ++i) {
            const double xi = xr[i];
            const double* wr = w + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                yr[j] += xi * wr[j];
            }
        }
    }
}

// dx += dy * w^T, dw += x^T * dy, db += colsum(dy)
void linear_backward(const double* x, const double* w, const double* dy, double* dx, double* dw, double* db,
                     std::size_t rows, std::size_t m, std::size_t n)
{
    for (std::size_t t = 0; t < rows; ++t) {
        const double* dyr = dy + t * n;
        for (std::size_t j = 0; j < n; ++j) {
            db[j] += dyr[j];
        }
        const double* xr = x + t * m;
        double* dxr = dx + t * m;
        for (std::size_t i = 0; i < m; ++i) {
            const double* wr = w + i * n;
            double* dwr = dw + i * n;
            const double xi = xr[i];
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                acc += dyr[j] * wr[j];
                dwr[j] += xi * dyr[j];
            }
            dxr[i] += acc;
        }
    }
}

void layer_norm_forward(const double* x, const double* g, const double* b, double* xhat, double* rstd, double* y,
                        std::size_t rows, std::size_t d)
{
    for (std::size_t t = 0; t < rows; ++t) {
        const double* xr = x + t * d;
        double mean = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            mean += xr[i];
        }
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            const double c = xr[i] - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double r = 1.0 / std::sqrt(var + kLayerNormEps);
        rstd[t] = r;
        double* hr = xhat + t * d;
        double* yr = y + t * d;
        for (std::size_t i = 0; i < d; ++i) {
            hr[i] = (xr[i] - mean) * r;
            yr[i] = hr[i] * g[i] + b[i];
        }
    }
}

// dx += layer-norm input gradient; dg, db accumulate.
void layer_norm_backward(const double* xhat, const double* rstd, const double* g, const double* dy, double* dx,
                         double* dg, double* db, std::size_t rows, std::size_t d)
{
    const double inv_d = 1.0 / static_cast<double>(d);
    for (std::size_t t = 0; t < rows; ++t) {
        const double* hr = xhat + t * d;
        const double* dyr = dy + t * d;
        double mean_dh = 0.0;
        double mean_dh_h = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            const double dh = dyr[i] * g[i];
            dg[i] += dyr[i] * hr[i];
            db[i] += dyr[i];
            mean_dh += dh;
            mean_dh_h += dh * hr[i];
        }
        mean_dh *= inv_d;
        mean_dh_h *= inv_d;
        double* dxr = dx + t * d;
        for (std::size_t i = 0; i < d; ++i) {
            const double dh = dyr[i] * g[i];
            dxr[i] += rstd[t] * (dh - mean_dh - hr[i] * mean_dh_h);
        }
    }
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

double gelu(double x)
{
    return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
}

double gelu_grad(double x)
{
    const double u = kGeluC * (x + kGeluA * x * x * x);
    const double th = std::tanh(u);
    return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
}

struct LayerCache {
    std::vector<double> x_in, xhat1, rstd1, a, qkv, probs, attn, x_mid, xhat2, rstd2, c, h, g;
};

struct SequenceCache {
    std::size_t len = 0;
    std::vector<LayerCache> layers;
    std::vector<double> x_final, xhat_f, rstd_f, y;
};

std::size_t effective_length(const TokenSequence& seq)
{
    std::size_t n = seq.ids.size();
    while (n > 0 && seq.ids[n - 1] == kPad) {
        --n;
    }
    return n;
}

}  // namespace

void ModelConfig::validate() const
{
    if (layers < 1 || heads < 1 || model_dim < 1 || ff_dim < 1 || batch_size < 1) {
        throw InvariantError("model config: layers, heads, dims and batch size must be positive");
    }
    if (model_dim % heads != 0) {
        throw InvariantError("model config: model_dim must be divisible by heads");
    }
    if (max_seq_len < 8) {
        throw InvariantError("model config: max_seq_len must be at least 8");
    }
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw InvariantError("model config: learning_rate must be positive");
    }
}

RewriterModel::RewriterModel(const ModelConfig& config, std::size_t vocab_size)
    : m_config(config), m_vocab_size(vocab_size)
{
    config.validate();
    if (vocab_size <= static_cast<std::size_t>(kReservedCount)) {
        throw InvariantError("vocabulary has no words beyond the reserved markers");
    }
    const Shape s = shape_of(config, vocab_size);
    std::size_t offset = 0;
    auto add = [&](std::string name, std::vector<std::size_t> shape) {
        std::size_t n = 1;
        for (auto d : shape) {
            n *= d;
        }
        m_tensors.push_back({std::move(name), std::move(shape), offset, n});
        offset += n;
    };
    add("wte", {s.vocab, s.dim});
    add("wpe", {s.seq, s.dim});
    for (std::size_t l = 0; l < s.layers; ++l) {
        const std::string p = "h" + std::to_string(l) + ".";
        add(p + "ln1.g", {s.dim});
        add(p + "ln1.b", {s.dim});
        add(p + "attn.w", {s.dim, 3 * s.dim});
        add(p + "attn.b", {3 * s.dim});
        add(p + "proj.w", {s.dim, s.dim});
        add(p + "proj.b", {s.dim});
        add(p + "ln2.g", {s.dim});
        add(p + "ln2.b", {s.dim});
        add(p + "fc.w", {s.dim, s.ff});
        add(p + "fc.b", {s.ff});
        add(p + "out.w", {s.ff, s.dim});
        add(p + "out.b", {s.dim});
    }
    add("lnf.g", {s.dim});
    add("lnf.b", {s.dim});
    m_params.assign(offset, 0.0);

    Rng rng(derive_seed(config.seed, "init"));
    const double residual_std = kInitStd / std::sqrt(2.0 * static_cast<double>(s.layers));
    for (const auto& t : m_tensors) {
        double* p = m_params.data() + t.offset;
        const bool gain = t.name.ends_with(".g");
        const bool bias = t.name.ends_with(".b");
        double std_dev = kInitStd;
        if (t.name == "wpe") {
            std_dev = 0.01;
        } else if (t.name.ends_with("proj.w") || t.name.ends_with("out.w")) {
            std_dev = residual_std;
        }
        for (std::size_t i = 0; i < t.size; ++i) {
            p[i] = gain ? 1.0 : bias ? 0.0 : std_dev * rng.normal();
        }
    }
}

const TensorInfo& RewriterModel::tensor(std::string_view name) const
{
    for (const auto& t : m_tensors) {
        if (t.name == name) {
            return t;
        }
    }
    throw Error("no tensor named " + std::string(name));
}

bool RewriterModel::all_finite() const
{
    return std::all_of(m_params.begin(), m_params.end(), [](double v) { return std::isfinite(v); });
}

namespace {

// Forward/backward kernels bound to one model's flat parameter buffer.
class Network {
  public:
    Network(const ModelConfig& config, std::size_t vocab, const std::vector<TensorInfo>& tensors,
            std::span<const double> params)
        : m_s(shape_of(config, vocab)), m_p(params.data())
    {
        auto off = [&](const std::string& name) {
            for (const auto& t : tensors) {
                if (t.name == name) {
                    return t.offset;
                }
            }
            throw Error("missing tensor " + name);
        };
        m_wte = off("wte");
        m_wpe = off("wpe");
        for (std::size_t l = 0; l < m_s.layers; ++l) {
            const std::string p = "h" + std::to_string(l) + ".";
            m_layers.push_back({off(p + "ln1.g"), off(p + "ln1.b"), off(p + "attn.w"), off(p + "attn.b"),
                                off(p + "proj.w"), off(p + "proj.b"), off(p + "ln2.g"), off(p + "ln2.b"),
                                off(p + "fc.w"), off(p + "fc.b"), off(p + "out.w"), off(p + "out.b")});
        }
        m_lnf_g = off("lnf.g");
        m_lnf_b = off("lnf.b");
    }

    void forward(std::span<const int> ids, SequenceCache& cache) const
    {
        const std::size_t L = ids.size();
        const std::size_t D = m_s.dim;
        if (L > m_s.seq) {
            throw Error("sequence of length " + std::to_string(L) + " exceeds max_seq_len");
        }
        cache.len = L;
        cache.layers.resize(m_s.layers);

        std::vector<double> x(L * D);
        for (std::size_t t = 0; t < L; ++t) {
            const auto id = static_cast<std::size_t>(ids[t]);
            if (ids[t] < 0 || id >= m_s.vocab) {
                throw Error("token id " + std::to_string(ids[t]) + " outside the vocabulary");
            }
            const double* te = m_p + m_wte + id * D;
            const double* pe = m_p + m_wpe + t * D;
            for (std::size_t i = 0; i < D; ++i) {
                x[t * D + i] = te[i] + pe[i];
            }
        }

        for (std::size_t l = 0; l < m_s.layers; ++l) {
            x = layer_forward(m_layers[l], std::move(x), L, cache.layers[l]);
        }

        cache.x_final = std::move(x);
        cache.xhat_f.resize(L * D);
        cache.rstd_f.resize(L);
        cache.y.resize(L * D);
        layer_norm_forward(cache.x_final.data(), m_p + m_lnf_g, m_p + m_lnf_b, cache.xhat_f.data(),
                           cache.rstd_f.data(), cache.y.data(), L, D);
    }

    // logits[v] = y_t . wte[v]
    void output_logits(const double* y, double* logits) const
    {
        const std::size_t D = m_s.dim;
        for (std::size_t v = 0; v < m_s.vocab; ++v) {
            const double* e = m_p + m_wte + v * D;
            double acc = 0.0;
            for (std::size_t i = 0; i < D; ++i) {
                acc += y[i] * e[i];
            }
            logits[v] = acc;
        }
    }

    // dy holds d(loss)/d(y) for every position; accumulates into grad.
    void backward(std::span<const int> ids, const SequenceCache& cache, std::vector<double> dy, double* grad) const
    {
        const std::size_t L = cache.len;
        const std::size_t D = m_s.dim;
        std::vector<double> dx(L * D, 0.0);
        layer_norm_backward(cache.xhat_f.data(), cache.rstd_f.data(), m_p + m_lnf_g, dy.data(), dx.data(),
                            grad + m_lnf_g, grad + m_lnf_b, L, D);
        for (std::size_t l = m_s.layers; l-- > 0;) {
            dx = layer_backward(m_layers[l], cache.layers[l], std::move(dx), L, grad);
        }
        for (std::size_t t = 0; t < L; ++t) {
            double* gte = grad + m_wte + static_cast<std::size_t>(ids[t]) * D;
            double* gpe = grad + m_wpe + t * D;
            for (std::size_t i = 0; i < D; ++i) {
                gte[i] += dx[t * D + i];
                gpe[i] += dx[t * D + i];
            }
        }
    }

    std::size_t vocab() const { return m_s.vocab; }
    std::size_t dim() const { return m_s.dim; }
    std::size_t wte() const { return m_wte; }
    const double* params() const { return m_p; }

  private:
    std::vector<double> layer_forward(const LayerParams& lp, std::vector<double> x, std::size_t L,
                                      LayerCache& c) const
    {
        const std::size_t D = m_s.dim;
        const std::size_t H = m_s.heads;
        const std::size_t hd = m_s.head_dim;
        const std::size_t F = m_s.ff;
        const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

        c.x_in = std::move(x);
        c.xhat1.resize(L * D);
        c.rstd1.resize(L);
        c.a.resize(L * D);
        layer_norm_forward(c.x_in.data(), m_p + lp.ln1_g, m_p + lp.ln1_b, c.xhat1.data(), c.rstd1.data(),
                           c.a.data(), L, D);

        c.qkv.resize(L * 3 * D);
        linear_forward(c.a.data(), m_p + lp.attn_w, m_p + lp.attn_b, c.qkv.data(), L, D, 3 * D);

        c.probs.assign(H * L * L, 0.0);
        c.attn.assign(L * D, 0.0);
        for (std::size_t h = 0; h < H; ++h) {
            for (std::size_t t = 0; t < L; ++t) {
                const double* q = c.qkv.data() + t * 3 * D + h * hd;
                double* p = c.probs.data() + (h * L + t) * L;
                double max_score = -std::numeric_limits<double>::infinity();
                for (std::size_t u = 0; u <= t; ++u) {
                    const double* k = c.qkv.data() + u * 3 * D + D + h * hd;
                    double s = 0.0;
                    for (std::size_t i = 0; i < hd; ++i) {
                        s += q[i] * k[i];
                    }
                    p[u] = s * scale;
                    max_score = std::max(max_score, p[u]);
                }
                double sum = 0.0;
                for (std::size_t u = 0; u <= t; ++u) {
                    p[u] = std::exp(p[u] - max_score);
                    sum += p[u];
                }
                double* o = c.attn.data() + t * D + h * hd;
                for (std::size_t u = 0; u <= t; ++u) {
                    p[u] /= sum;
                    const double* v = c.qkv.data() + u * 3 * D + 2 * D + h * hd;
                    for (std::size_t i = 0; i < hd; ++i) {
                        o[i] += p[u] * v[i];
                    }
                }
            }
        }

        c.x_mid.resize(L * D);
        linear_forward(c.attn.data(), m_p + lp.proj_w, m_p + lp.proj_b, c.x_mid.data(), L, D, D);
        for (std::size_t i = 0; i < L * D; ++i) {
            c.x_mid[i] += c.x_in[i];
        }

        c.xhat2.resize(L * D);
        c.rstd2.resize(L);
        c.c.resize(L * D);
        layer_norm_forward(c.x_mid.data(), m_p + lp.ln2_g, m_p + lp.ln2_b, c.xhat2.data(), c.rstd2.data(),
                           c.c.data(), L, D);

        c.h.resize(L * F);
        linear_forward(c.c.data(), m_p + lp.fc_w, m_p + lp.fc_b, c.h.data(), L, D, F);
        c.g.resize(L * F);
        for (std::size_t i = 0; i < L * F; ++i) {
            c.g[i] = gelu(c.h[i]);
        }

        std::vector<double> out(L * D);
        linear_forward(c.g.data(), m_p + lp.out_w, m_p + lp.out_b, out.data(), L, F, D);
        for (std::size_t i = 0; i < L * D; ++i) {
            out[i] += c.x_mid[i];
        }
        return out;
    }

    std::vector<double> layer_backward(const LayerParams& lp, const LayerCache& c, std::vector<double> dout,
                                       std::size_t L, double* grad) const
    {
        const std::size_t D = m_s.dim;
        const std::size_t H = m_s.heads;
        const std::size_t hd = m_s.head_dim;
        const std::size_t F = m_s.ff;
        const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

        // Feed-forward branch; the residual passes dout straight through to x_mid.
        std::vector<double> dg(L * F, 0.0);
        linear_backward(c.g.data(), m_p + lp.out_w, dout.data(), dg.data(), grad + lp.out_w, grad + lp.out_b, L, F,
                        D);
        for (std::size_t i = 0; i < L * F; ++i) {
            dg[i] *= gelu_grad(c.h[i]);
        }
        std::vector<double> dc(L * D, 0.0);
        linear_backward(c.c.data(), m_p + lp.fc_w, dg.data(), dc.data(), grad + lp.fc_w, grad + lp.fc_b, L, D, F);
        std::vector<double> dmid = std::move(dout);
        layer_norm_backward(c.xhat2.data(), c.rstd2.data(), m_p + lp.ln2_g, dc.data(), dmid.data(),
                            grad + lp.ln2_g, grad + lp.ln2_b, L, D);

        // Attention branch.
        std::vector<double> dattn(L * D, 0.0);
        linear_backward(c.attn.data(), m_p + lp.proj_w, dmid.data(), dattn.data(), grad + lp.proj_w,
                        grad + lp.proj_b, L, D, D);
        std::vector<double> dqkv(L * 3 * D, 0.0);
        std::vector<double> dp(L);
        for (std::size_t h = 0; h < H; ++h) {
            for (std::size_t t = 0; t < L; ++t) {
                const double* p = c.probs.data() + (h * L + t) * L;
                const double* dout_h = dattn.data() + t * D + h * hd;
                double weighted = 0.0;
                for (std::size_t u = 0; u <= t; ++u) {
                    const double* v = c.qkv.data() + u * 3 * D + 2 * D + h * hd;
                    double* dv = dqkv.data() + u * 3 * D + 2 * D + h * hd;
                    double acc = 0.0;
                    for (std::size_t i = 0; i < hd; ++i) {
                        acc += dout_h[i] * v[i];
                        dv[i] += p[u] * dout_h[i];
                    }
                    dp[u] = acc;
                    weighted += p[u] * acc;
                }
                const double* q = c.qkv.data() + t * 3 * D + h * hd;
                double* dq = dqkv.data() + t * 3 * D + h * hd;
                for (std::size_t u = 0; u <= t; ++u) {
                    const double ds = p[u] * (dp[u] - weighted) * scale;
                    const double* k = c.qkv.data() + u * 3 * D + D + h * hd;
                    double* dk = dqkv.data() + u * 3 * D + D + h * hd;
                    for (std::size_t i = 0; i < hd; ++i) {
                        dq[i] += ds * k[i];
                        dk[i] += ds * q[i];
                    }
                }
            }
        }
        std::vector<double> da(L * D, 0.0);
        linear_backward(c.a.data(), m_p + lp.attn_w, dqkv.data(), da.data(), grad + lp.attn_w, grad + lp.attn_b, L,
                        D, 3 * D);
        std::vector<double> din = std::move(dmid);
        layer_norm_backward(c.xhat1.data(), c.rstd1.data(), m_p + lp.ln1_g, da.data(), din.data(), grad + lp.ln1_g,
                            grad + lp.ln1_b, L, D);
        return din;
    }

    Shape m_s;
    const double* m_p;
    std::size_t m_wte = 0;
    std::size_t m_wpe = 0;
    std::size_t m_lnf_g = 0;
    std::size_t m_lnf_b = 0;
    std::vector<LayerParams> m_layers;
};

}  // namespace

std::vector<double> RewriterModel::logits(std::span<const int> ids) const
{
    Network net(m_config, m_vocab_size, m_tensors, m_params);
    SequenceCache cache;
    net.forward(ids, cache);
    const std::size_t L = ids.size();
    std::vector<double> out(L * m_vocab_size);
    for (std::size_t t = 0; t < L; ++t) {
        net.output_logits(cache.y.data() + t * net.dim(), out.data() + t * m_vocab_size);
    }
    return out;
}

double RewriterModel::loss(std::span<const TokenSequence> batch) const
{
    return run(batch, {}, false);
}

double RewriterModel::loss_and_gradient(std::span<const TokenSequence> batch, std::span<double> grad) const
{
    if (grad.size() != m_params.size()) {
        throw Error("gradient buffer size does not match the parameter count");
    }
    std::fill(grad.begin(), grad.end(), 0.0);
    return run(batch, grad, true);
}

double RewriterModel::run(std::span<const TokenSequence> batch, std::span<double> grad, bool want_grad) const
{
    // Loss positions: t in [bos, len - 2], predicting ids[t + 1].
    std::size_t total = 0;
    for (const auto& seq : batch) {
        const std::size_t len = effective_length(seq);
        if (seq.bos_position >= seq.ids.size() || seq.ids[seq.bos_position] != kBos) {
            throw Error("sequence has no [BOS] at its declared position");
        }
        if (len > seq.bos_position + 1) {
            total += len - seq.bos_position - 1;
        }
    }
    if (total == 0) {
        throw Error("batch has no target positions");
    }

    Network net(m_config, m_vocab_size, m_tensors, m_params);
    const std::size_t V = m_vocab_size;
    const std::size_t D = net.dim();
    const double inv_total = 1.0 / static_cast<double>(total);
    double loss_sum = 0.0;
    std::vector<double> logits(V);
    SequenceCache cache;

    for (const auto& seq : batch) {
        const std::size_t len = effective_length(seq);
        if (len <= seq.bos_position + 1) {
            continue;
        }
        std::span<const int> ids(seq.ids.data(), len);
        net.forward(ids, cache);
        std::vector<double> dy;
        if (want_grad) {
            dy.assign(len * D, 0.0);
        }
        for (std::size_t t = seq.bos_position; t + 1 < len; ++t) {
            const double* y = cache.y.data() + t * D;
            net.output_logits(y, logits.data());
            const double max_logit = *std::max_element(logits.begin(), logits.end());
            double sum = 0.0;
            for (std::size_t v = 0; v < V; ++v) {
                sum += std::exp(logits[v] - max_logit);
            }
            const auto target = static_cast<std::size_t>(ids[t + 1]);
            loss_sum += max_logit + std::log(sum) - logits[target];
            if (!want_grad) {
                continue;
            }
            double* dyt = dy.data() + t * D;
            double* gwte = grad.data() + net.wte();
            const double* wte = net.params() + net.wte();
            for (std::size_t v = 0; v < V; ++v) {
                double dl = std::exp(logits[v] - max_logit) / sum;
                if (v == target) {
                    dl -= 1.0;
                }
                dl *= inv_total;
                const double* e = wte + v * D;
                double* ge = gwte + v * D;
                for (std::size_t i = 0; i < D; ++i) {
                    dyt[i] += dl * e[i];
                    ge[i] += dl * y[i];
                }
            }
        }
        if (want_grad) {
            net.backward(ids, cache, std::move(dy), grad.data());
        }
    }
    return loss_sum * inv_total;
}

}  // namespace convkit::rewriter
