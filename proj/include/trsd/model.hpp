#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "trsd/errors.hpp"
#include "trsd/kernels.hpp"
#include "trsd/rng.hpp"
#include "trsd/vocab.hpp"

namespace trsd {

// A small decoder-only transformer: learned positional embeddings, pre-norm
// residual blocks, GELU feed-forward, untied unbiased output head. Forward,
// exact reverse-mode backward, AdamW, and KV-cached sampling all live here,
// templated on the scalar type so the gradient-check suite can rebuild the
// whole model at double precision.

struct ModelConfig {
    int vocab_size = 0;
    int context_length = 0;
    int n_layers = 0;
    int n_heads = 0;
    int d_model = 0;
    int d_ff = 0;

    int head_dim() const { return d_model / n_heads; }

    void validate() const {
        if (vocab_size <= 0 || context_length <= 0 || n_layers <= 0 || n_heads <= 0 ||
            d_model <= 0 || d_ff <= 0) {
            throw InvalidConfig("model config fields must be positive");
        }
        if (d_model % n_heads != 0) {
            throw InvalidConfig("d_model must be divisible by n_heads");
        }
    }

    bool operator==(const ModelConfig&) const = default;
};

enum class InitKind : uint8_t { GAUSSIAN, ZERO, ONE };

struct TensorSpec {
    std::string name;
    std::vector<int> shape;
    size_t offset = 0;  // elements into the flat parameter buffer
    size_t numel = 0;
    InitKind init = InitKind::GAUSSIAN;
};

// Flat parameter layout; fixed by the config and shared by checkpoints.
struct ParamLayout {
    struct Layer {
        size_t ln1_w, ln1_b;
        size_t wq, bq, wk, bk, wv, bv, wo, bo;
        size_t ln2_w, ln2_b;
        size_t w1, b1, w2, b2;
    };

    std::vector<TensorSpec> tensors;
    size_t tok_emb = 0, pos_emb = 0;
    std::vector<Layer> layer;
    size_t lnf_w = 0, lnf_b = 0, head_w = 0;
    size_t total = 0;

    explicit ParamLayout(const ModelConfig& cfg) {
        const int V = cfg.vocab_size, C = cfg.context_length, D = cfg.d_model, F = cfg.d_ff;
        auto add = [&](const std::string& name, std::vector<int> shape, InitKind init) {
            size_t numel = 1;
            for (int s : shape) {
                numel *= static_cast<size_t>(s);
            }
            const size_t off = total;
            tensors.push_back({name, std::move(shape), off, numel, init});
            total += numel;
            return off;
        };
        tok_emb = add("tok_emb", {V, D}, InitKind::GAUSSIAN);
        pos_emb = add("pos_emb", {C, D}, InitKind::GAUSSIAN);
        for (int l = 0; l < cfg.n_layers; ++l) {
            const std::string p = "blk" + std::to_string(l) + ".";
            Layer lay{};
            lay.ln1_w = add(p + "ln1.w", {D}, InitKind::ONE);
            lay.ln1_b = add(p + "ln1.b", {D}, InitKind::ZERO);
            lay.wq = add(p + "attn.wq", {D, D}, InitKind::GAUSSIAN);
            lay.bq = add(p + "attn.bq", {D}, InitKind::ZERO);
            lay.wk = add(p + "attn.wk", {D, D}, InitKind::GAUSSIAN);
            lay.bk = add(p + "attn.bk", {D}, InitKind::ZERO);
            lay.wv = add(p + "attn.wv", {D, D}, InitKind::GAUSSIAN);
            lay.bv = add(p + "attn.bv", {D}, InitKind::ZERO);
            lay.wo = add(p + "attn.wo", {D, D}, InitKind::GAUSSIAN);
            lay.bo = add(p + "attn.bo", {D}, InitKind::ZERO);
            lay.ln2_w = add(p + "ln2.w", {D}, InitKind::ONE);
            lay.ln2_b = add(p + "ln2.b", {D}, InitKind::ZERO);
            lay.w1 = add(p + "mlp.w1", {F, D}, InitKind::GAUSSIAN);
            lay.b1 = add(p + "mlp.b1", {F}, InitKind::ZERO);
            lay.w2 = add(p + "mlp.w2", {D, F}, InitKind::GAUSSIAN);
            lay.b2 = add(p + "mlp.b2", {D}, InitKind::ZERO);
            layer.push_back(lay);
        }
        lnf_w = add("lnf.w", {D}, InitKind::ONE);
        lnf_b = add("lnf.b", {D}, InitKind::ZERO);
        head_w = add("head.w", {V, D}, InitKind::GAUSSIAN);
    }
};

template <typename S>
struct ModelState {
    ModelConfig cfg;
    std::vector<S> params;  // flat, per ParamLayout
    std::vector<S> adam_m, adam_v;
    int64_t step = 0;

    ParamLayout layout() const { return ParamLayout(cfg); }
};

inline size_t param_count(const ModelConfig& cfg) {
    return ParamLayout(cfg).total;
}

constexpr double kInitStd = 0.02;
constexpr double kLnEps = 1e-5;

template <typename S>
ModelState<S> init_model(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    ParamLayout layout(cfg);
    ModelState<S> m;
    m.cfg = cfg;
    m.params.assign(layout.total, S(0));
    m.adam_m.assign(layout.total, S(0));
    m.adam_v.assign(layout.total, S(0));
    Rng rng(stream_key(seed, "model_init"));
    for (const TensorSpec& t : layout.tensors) {
        S* p = m.params.data() + t.offset;
        switch (t.init) {
            case InitKind::ZERO:
                break;
            case InitKind::ONE:
                std::fill(p, p + t.numel, S(1));
                break;
            case InitKind::GAUSSIAN:
                for (size_t i = 0; i < t.numel; ++i) {
                    p[i] = static_cast<S>(kInitStd * rng.gaussian());
                }
                break;
        }
    }
    return m;
}

// ------------------------------------------------------------------ forward

template <typename S>
struct LayerCache {
    std::vector<S> h_in, ln1_out, ln1_mean, ln1_rstd;
    std::vector<S> q, k, v, att, ctx, h_mid;
    std::vector<S> ln2_out, ln2_mean, ln2_rstd;
    std::vector<S> ff_pre, ff_act;
};

template <typename S>
struct ForwardCache {
    int T = 0;
    std::vector<LayerCache<S>> layers;
    std::vector<S> h_final, lnf_out, lnf_mean, lnf_rstd, logits;
    // backward scratch
    std::vector<S> dh, dq, dk, dv, dctx, d_ln, d_ff_pre, d_ff_act, tmp_td, row_a, row_b;

    void ensure(const ModelConfig& cfg) {
        const size_t C = static_cast<size_t>(cfg.context_length);
        const size_t D = static_cast<size_t>(cfg.d_model);
        const size_t F = static_cast<size_t>(cfg.d_ff);
        const size_t V = static_cast<size_t>(cfg.vocab_size);
        const size_t H = static_cast<size_t>(cfg.n_heads);
        if (layers.size() == static_cast<size_t>(cfg.n_layers) && h_final.size() >= C * D &&
            logits.size() >= C * V) {
            return;
        }
        layers.assign(static_cast<size_t>(cfg.n_layers), {});
        for (auto& lc : layers) {
            lc.h_in.resize(C * D);
            lc.ln1_out.resize(C * D);
            lc.ln1_mean.resize(C);
            lc.ln1_rstd.resize(C);
            lc.q.resize(C * D);
            lc.k.resize(C * D);
            lc.v.resize(C * D);
            lc.att.resize(H * C * C);
            lc.ctx.resize(C * D);
            lc.h_mid.resize(C * D);
            lc.ln2_out.resize(C * D);
            lc.ln2_mean.resize(C);
            lc.ln2_rstd.resize(C);
            lc.ff_pre.resize(C * F);
            lc.ff_act.resize(C * F);
        }
        h_final.resize(C * D);
        lnf_out.resize(C * D);
        lnf_mean.resize(C);
        lnf_rstd.resize(C);
        logits.resize(C * V);
        dh.resize(C * D);
        dq.resize(C * D);
        dk.resize(C * D);
        dv.resize(C * D);
        dctx.resize(C * D);
        d_ln.resize(C * D);
        d_ff_pre.resize(C * F);
        d_ff_act.resize(C * F);
        tmp_td.resize(C * std::max(D, F));
        row_a.resize(C);
        row_b.resize(C);
    }
};

template <typename S>
inline void layernorm_tokens(const S* w, const S* b, const S* X, S* Y, S* mean, S* rstd, int T,
                             int D) {
    for (int t = 0; t < T; ++t) {
        const S* x = X + static_cast<size_t>(t) * D;
        S* y = Y + static_cast<size_t>(t) * D;
        S mu = 0;
        for (int i = 0; i < D; ++i) {
            mu += x[i];
        }
        mu /= S(D);
        S var = 0;
        for (int i = 0; i < D; ++i) {
            const S d = x[i] - mu;
            var += d * d;
        }
        var /= S(D);
        const S r = S(1) / std::sqrt(var + S(kLnEps));
        mean[t] = mu;
        rstd[t] = r;
        for (int i = 0; i < D; ++i) {
            y[i] = w[i] * ((x[i] - mu) * r) + b[i];
        }
    }
}

// Accumulates dX, dW, dB for the layernorm rows described by (X, mean, rstd).
template <typename S>
inline void layernorm_backward_tokens(const S* w, const S* X, const S* mean, const S* rstd,
                                      const S* dY, S* dX, S* dW, S* dB, int T, int D) {
    for (int t = 0; t < T; ++t) {
        const S* x = X + static_cast<size_t>(t) * D;
        const S* dy = dY + static_cast<size_t>(t) * D;
        S* dx = dX + static_cast<size_t>(t) * D;
        const S mu = mean[t], r = rstd[t];
        S sum_dxhat = 0, sum_dxhat_xhat = 0;
        for (int i = 0; i < D; ++i) {
            const S xhat = (x[i] - mu) * r;
            const S dxhat = dy[i] * w[i];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
            dW[i] += dy[i] * xhat;
            dB[i] += dy[i];
        }
        const S inv_d = S(1) / S(D);
        for (int i = 0; i < D; ++i) {
            const S xhat = (x[i] - mu) * r;
            const S dxhat = dy[i] * w[i];
            dx[i] += r * (dxhat - sum_dxhat * inv_d - xhat * sum_dxhat_xhat * inv_d);
        }
    }
}

template <typename S>
void forward(const ModelState<S>& m, const TokenSeq& tokens, const ParamLayout& L,
             ForwardCache<S>& cache) {
    const ModelConfig& cfg = m.cfg;
    const int T = static_cast<int>(tokens.size());
    if (T > cfg.context_length) {
        throw ContextOverflow("input length " + std::to_string(T) + " exceeds context " +
                              std::to_string(cfg.context_length));
    }
    const int D = cfg.d_model, F = cfg.d_ff, V = cfg.vocab_size, H = cfg.n_heads;
    const int hd = cfg.head_dim();
    const S inv_sqrt_hd = S(1) / std::sqrt(S(hd));
    cache.ensure(cfg);
    cache.T = T;
    if (T == 0) {
        return;
    }
    const S* P = m.params.data();

    // embeddings
    S* h = cache.layers[0].h_in.data();
    for (int t = 0; t < T; ++t) {
        const TokenId tok = tokens[static_cast<size_t>(t)];
        if (tok < 0 || tok >= V) {
            throw ShapeMismatch("token id out of range for model vocab");
        }
        const S* te = P + L.tok_emb + static_cast<size_t>(tok) * D;
        const S* pe = P + L.pos_emb + static_cast<size_t>(t) * D;
        S* x = h + static_cast<size_t>(t) * D;
        for (int i = 0; i < D; ++i) {
            x[i] = te[i] + pe[i];
        }
    }

    for (int l = 0; l < cfg.n_layers; ++l) {
        LayerCache<S>& lc = cache.layers[static_cast<size_t>(l)];
        const ParamLayout::Layer& lw = L.layer[static_cast<size_t>(l)];
        const S* x = lc.h_in.data();

        layernorm_tokens(P + lw.ln1_w, P + lw.ln1_b, x, lc.ln1_out.data(), lc.ln1_mean.data(),
                         lc.ln1_rstd.data(), T, D);
        linear_tokens(P + lw.wq, P + lw.bq, lc.ln1_out.data(), lc.q.data(), T, D, D);
        linear_tokens(P + lw.wk, P + lw.bk, lc.ln1_out.data(), lc.k.data(), T, D, D);
        linear_tokens(P + lw.wv, P + lw.bv, lc.ln1_out.data(), lc.v.data(), T, D, D);

        for (int head = 0; head < H; ++head) {
            const int off = head * hd;
            for (int t = 0; t < T; ++t) {
                S* att = lc.att.data() + (static_cast<size_t>(head) * T + t) * T;
                const S* qt = lc.q.data() + static_cast<size_t>(t) * D + off;
                for (int u = 0; u <= t; ++u) {
                    att[u] = inv_sqrt_hd *
                             dot(qt, lc.k.data() + static_cast<size_t>(u) * D + off, hd);
                }
                softmax_row(att, t + 1);
                S* ctx = lc.ctx.data() + static_cast<size_t>(t) * D + off;
                zero(ctx, static_cast<size_t>(hd));
                for (int u = 0; u <= t; ++u) {
                    axpy(ctx, att[u], lc.v.data() + static_cast<size_t>(u) * D + off, hd);
                }
            }
        }

        linear_tokens(P + lw.wo, P + lw.bo, lc.ctx.data(), lc.h_mid.data(), T, D, D);
        for (size_t i = 0; i < static_cast<size_t>(T) * D; ++i) {
            lc.h_mid[i] += x[i];
        }

        layernorm_tokens(P + lw.ln2_w, P + lw.ln2_b, lc.h_mid.data(), lc.ln2_out.data(),
                         lc.ln2_mean.data(), lc.ln2_rstd.data(), T, D);
        linear_tokens(P + lw.w1, P + lw.b1, lc.ln2_out.data(), lc.ff_pre.data(), T, F, D);
        for (size_t i = 0; i < static_cast<size_t>(T) * F; ++i) {
            lc.ff_act[i] = gelu(lc.ff_pre[i]);
        }
        S* out = (l + 1 < cfg.n_layers) ? cache.layers[static_cast<size_t>(l) + 1].h_in.data()
                                        : cache.h_final.data();
        linear_tokens(P + lw.w2, P + lw.b2, lc.ff_act.data(), out, T, D, F);
        for (size_t i = 0; i < static_cast<size_t>(T) * D; ++i) {
            out[i] += lc.h_mid[i];
        }
    }

    layernorm_tokens(P + L.lnf_w, P + L.lnf_b, cache.h_final.data(), cache.lnf_out.data(),
                     cache.lnf_mean.data(), cache.lnf_rstd.data(), T, D);
    linear_tokens(P + L.head_w, static_cast<const S*>(nullptr), cache.lnf_out.data(),
                  cache.logits.data(), T, V, D);
}

// One row of pre-softmax scores per input position.
template <typename S>
std::vector<std::vector<S>> forward_logits(const ModelState<S>& m, const TokenSeq& tokens) {
    ParamLayout L(m.cfg);
    ForwardCache<S> cache;
    forward(m, tokens, L, cache);
    std::vector<std::vector<S>> rows(tokens.size());
    for (size_t t = 0; t < tokens.size(); ++t) {
        const S* r = cache.logits.data() + t * static_cast<size_t>(m.cfg.vocab_size);
        rows[t].assign(r, r + m.cfg.vocab_size);
    }
    return rows;
}

template <typename S>
std::vector<S> log_softmax(const std::vector<S>& row) {
    std::vector<S> out(row.size());
    log_softmax_row(row.data(), out.data(), static_cast<int>(row.size()));
    return out;
}

// ----------------------------------------------------------------- backward

// Accumulates exact gradients of sum_t dot(dlogits[t], logits[t]) into the
// flat `grads` buffer. `dlogits` is [T, V]; rows outside the loss span must
// be zero. Requires the cache produced by forward() on the same inputs.
template <typename S>
void backward_from_cache(const ModelState<S>& m, const TokenSeq& tokens, const ParamLayout& L,
                         ForwardCache<S>& cache, const S* dlogits, S* grads) {
    const ModelConfig& cfg = m.cfg;
    const int T = cache.T, D = cfg.d_model, F = cfg.d_ff, V = cfg.vocab_size, H = cfg.n_heads;
    const int hd = cfg.head_dim();
    const S inv_sqrt_hd = S(1) / std::sqrt(S(hd));
    if (static_cast<int>(tokens.size()) != T) {
        throw ShapeMismatch("backward tokens do not match forward cache");
    }
    if (T == 0) {
        return;
    }
    const S* P = m.params.data();
    const size_t TD = static_cast<size_t>(T) * D;
    const size_t TF = static_cast<size_t>(T) * F;

    zero(cache.d_ln.data(), TD);
    linear_backward_tokens(P + L.head_w, cache.lnf_out.data(), dlogits, cache.d_ln.data(),
                           grads + L.head_w, static_cast<S*>(nullptr), T, V, D);

    zero(cache.dh.data(), TD);
    layernorm_backward_tokens(P + L.lnf_w, cache.h_final.data(), cache.lnf_mean.data(),
                              cache.lnf_rstd.data(), cache.d_ln.data(), cache.dh.data(),
                              grads + L.lnf_w, grads + L.lnf_b, T, D);

    for (int l = cfg.n_layers - 1; l >= 0; --l) {
        LayerCache<S>& lc = cache.layers[static_cast<size_t>(l)];
        const ParamLayout::Layer& lw = L.layer[static_cast<size_t>(l)];

        // feed-forward half: h_out = h_mid + W2·gelu(W1·ln2(h_mid) + b1) + b2
        zero(cache.d_ff_act.data(), TF);
        linear_backward_tokens(P + lw.w2, lc.ff_act.data(), cache.dh.data(),
                               cache.d_ff_act.data(), grads + lw.w2, grads + lw.b2, T, D, F);
        for (size_t i = 0; i < TF; ++i) {
            cache.d_ff_pre[i] = cache.d_ff_act[i] * gelu_grad(lc.ff_pre[i]);
        }
        zero(cache.d_ln.data(), TD);
        linear_backward_tokens(P + lw.w1, lc.ln2_out.data(), cache.d_ff_pre.data(),
                               cache.d_ln.data(), grads + lw.w1, grads + lw.b1, T, F, D);
        // residual: dh already holds d(h_mid); add the ln2 path
        layernorm_backward_tokens(P + lw.ln2_w, lc.h_mid.data(), lc.ln2_mean.data(),
                                  lc.ln2_rstd.data(), cache.d_ln.data(), cache.dh.data(),
                                  grads + lw.ln2_w, grads + lw.ln2_b, T, D);

        // attention half: h_mid = h_in + Wo·ctx + bo
        zero(cache.dctx.data(), TD);
        linear_backward_tokens(P + lw.wo, lc.ctx.data(), cache.dh.data(), cache.dctx.data(),
                               grads + lw.wo, grads + lw.bo, T, D, D);

        zero(cache.dq.data(), TD);
        zero(cache.dk.data(), TD);
        zero(cache.dv.data(), TD);
        for (int head = 0; head < H; ++head) {
            const int off = head * hd;
            for (int t = 0; t < T; ++t) {
                const S* att = lc.att.data() + (static_cast<size_t>(head) * T + t) * T;
                const S* dctx_t = cache.dctx.data() + static_cast<size_t>(t) * D + off;
                S* da = cache.row_a.data();
                S* ds = cache.row_b.data();
                S sum = 0;
                for (int u = 0; u <= t; ++u) {
                    da[u] = dot(dctx_t, lc.v.data() + static_cast<size_t>(u) * D + off, hd);
                    sum += att[u] * da[u];
                }
                S* dq_t = cache.dq.data() + static_cast<size_t>(t) * D + off;
                const S* q_t = lc.q.data() + static_cast<size_t>(t) * D + off;
                for (int u = 0; u <= t; ++u) {
                    ds[u] = att[u] * (da[u] - sum);
                    axpy(dq_t, ds[u] * inv_sqrt_hd,
                         lc.k.data() + static_cast<size_t>(u) * D + off, hd);
                    axpy(cache.dk.data() + static_cast<size_t>(u) * D + off,
                         ds[u] * inv_sqrt_hd, q_t, hd);
                    axpy(cache.dv.data() + static_cast<size_t>(u) * D + off, att[u], dctx_t,
                         hd);
                }
            }
        }

        zero(cache.d_ln.data(), TD);
        linear_backward_tokens(P + lw.wq, lc.ln1_out.data(), cache.dq.data(), cache.d_ln.data(),
                               grads + lw.wq, grads + lw.bq, T, D, D);
        linear_backward_tokens(P + lw.wk, lc.ln1_out.data(), cache.dk.data(), cache.d_ln.data(),
                               grads + lw.wk, grads + lw.bk, T, D, D);
        linear_backward_tokens(P + lw.wv, lc.ln1_out.data(), cache.dv.data(), cache.d_ln.data(),
                               grads + lw.wv, grads + lw.bv, T, D, D);
        // residual: dh holds d(h_in) from the attention residual; add ln1 path
        layernorm_backward_tokens(P + lw.ln1_w, lc.h_in.data(), lc.ln1_mean.data(),
                                  lc.ln1_rstd.data(), cache.d_ln.data(), cache.dh.data(),
                                  grads + lw.ln1_w, grads + lw.ln1_b, T, D);
    }

    for (int t = 0; t < T; ++t) {
        const S* dh_t = cache.dh.data() + static_cast<size_t>(t) * D;
        axpy(grads + L.tok_emb + static_cast<size_t>(tokens[static_cast<size_t>(t)]) * D, S(1),
             dh_t, D);
        axpy(grads + L.pos_emb + static_cast<size_t>(t) * D, S(1), dh_t, D);
    }
}

// Convenience wrapper matching the spec contract: runs its own forward pass
// and returns a fresh flat gradient buffer.
template <typename S>
std::vector<S> backward(const ModelState<S>& m, const TokenSeq& tokens,
                        const std::vector<std::vector<S>>& dlogit_rows) {
    if (dlogit_rows.size() != tokens.size()) {
        throw ShapeMismatch("one loss-gradient row per input position required");
    }
    ParamLayout L(m.cfg);
    ForwardCache<S> cache;
    forward(m, tokens, L, cache);
    std::vector<S> dlogits(tokens.size() * static_cast<size_t>(m.cfg.vocab_size), S(0));
    for (size_t t = 0; t < tokens.size(); ++t) {
        if (static_cast<int>(dlogit_rows[t].size()) != m.cfg.vocab_size) {
            throw ShapeMismatch("loss-gradient row has wrong width");
        }
        std::copy(dlogit_rows[t].begin(), dlogit_rows[t].end(),
                  dlogits.begin() + static_cast<long>(t * static_cast<size_t>(m.cfg.vocab_size)));
    }
    std::vector<S> grads(m.params.size(), S(0));
    backward_from_cache(m, tokens, L, cache, dlogits.data(), grads.data());
    return grads;
}

// -------------------------------------------------------------------- adamw

struct AdamParams {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    double clip_norm = 1.0;
};

// Global-norm clipping, then a bias-corrected decoupled AdamW update.
template <typename S>
void adamw_step(ModelState<S>& m, const std::vector<S>& grads, const AdamParams& p) {
    if (grads.size() != m.params.size()) {
        throw ShapeMismatch("gradient buffer size mismatch");
    }
    double norm2 = 0;
    for (S g : grads) {
        norm2 += static_cast<double>(g) * static_cast<double>(g);
    }
    if (!std::isfinite(norm2)) {
        throw NonFiniteGradient("non-finite gradient norm");
    }
    const double norm = std::sqrt(norm2);
    const double scale = (p.clip_norm > 0 && norm > p.clip_norm) ? p.clip_norm / norm : 1.0;

    m.step += 1;
    const double bc1 = 1.0 - std::pow(p.beta1, static_cast<double>(m.step));
    const double bc2 = 1.0 - std::pow(p.beta2, static_cast<double>(m.step));
    for (size_t i = 0; i < m.params.size(); ++i) {
        const double g = static_cast<double>(grads[i]) * scale;
        const double mi = p.beta1 * static_cast<double>(m.adam_m[i]) + (1.0 - p.beta1) * g;
        const double vi = p.beta2 * static_cast<double>(m.adam_v[i]) + (1.0 - p.beta2) * g * g;
        m.adam_m[i] = static_cast<S>(mi);
        m.adam_v[i] = static_cast<S>(vi);
        const double update = (mi / bc1) / (std::sqrt(vi / bc2) + p.eps) +
                              p.weight_decay * static_cast<double>(m.params[i]);
        m.params[i] = static_cast<S>(static_cast<double>(m.params[i]) - p.lr * update);
    }
}

// ----------------------------------------------------------------- sampling

// Picks the next token from a logits row. Temperature 0 is argmax with
// lowest-id tie-break and consumes no randomness.
template <typename S>
TokenId pick_token(const S* logits, int n, double temperature, Rng& rng) {
    if (temperature <= 0.0) {
        int best = 0;
        for (int i = 1; i < n; ++i) {
            if (logits[i] > logits[best]) {
                best = i;
            }
        }
        return best;
    }
    S m = logits[0];
    for (int i = 1; i < n; ++i) {
        m = logits[i] > m ? logits[i] : m;
    }
    double sum = 0;
    std::vector<double> p(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        p[static_cast<size_t>(i)] =
            std::exp(static_cast<double>(logits[i] - m) / temperature);
        sum += p[static_cast<size_t>(i)];
    }
    const double u = rng.uniform() * sum;
    double c = 0;
    for (int i = 0; i < n; ++i) {
        c += p[static_cast<size_t>(i)];
        if (u < c) {
            return i;
        }
    }
    return n - 1;
}

// Incremental decoding state. append() runs the exact same per-position math
// as the batch forward, so greedy decoding matches it token for token.
template <typename S>
class KvCache {
public:
    explicit KvCache(const ModelConfig& cfg) : cfg_(cfg), L_(cfg) {
        const size_t C = static_cast<size_t>(cfg.context_length);
        const size_t D = static_cast<size_t>(cfg.d_model);
        k_.assign(static_cast<size_t>(cfg.n_layers), std::vector<S>(C * D));
        v_.assign(static_cast<size_t>(cfg.n_layers), std::vector<S>(C * D));
        x_.resize(D);
        a_.resize(D);
        q_.resize(D);
        ctx_.resize(D);
        tmp_.resize(D);
        ffp_.resize(static_cast<size_t>(cfg.d_ff));
        ffa_.resize(static_cast<size_t>(cfg.d_ff));
        att_.resize(C);
        logits_.resize(static_cast<size_t>(cfg.vocab_size));
    }

    int size() const { return len_; }
    void reset() { len_ = 0; }
    void truncate(int len) {
        if (len < 0 || len > len_) {
            throw ShapeMismatch("bad KV cache truncation length");
        }
        len_ = len;
    }

    const std::vector<S>& logits() const { return logits_; }

    // Appends one token and returns the logits row at its position.
    const std::vector<S>& append(const ModelState<S>& m, TokenId tok) {
        const ModelConfig& cfg = m.cfg;
        if (len_ >= cfg.context_length) {
            throw ContextOverflow("KV cache is full");
        }
        if (tok < 0 || tok >= cfg.vocab_size) {
            throw ShapeMismatch("token id out of range for model vocab");
        }
        const int D = cfg.d_model, F = cfg.d_ff, V = cfg.vocab_size, H = cfg.n_heads;
        const int hd = cfg.head_dim();
        const S inv_sqrt_hd = S(1) / std::sqrt(S(hd));
        const int t = len_;
        const S* P = m.params.data();

        const S* te = P + L_.tok_emb + static_cast<size_t>(tok) * D;
        const S* pe = P + L_.pos_emb + static_cast<size_t>(t) * D;
        for (int i = 0; i < D; ++i) {
            x_[static_cast<size_t>(i)] = te[i] + pe[i];
        }

        for (int l = 0; l < cfg.n_layers; ++l) {
            const ParamLayout::Layer& lw = L_.layer[static_cast<size_t>(l)];
            S mean = 0, rstd = 0;
            layernorm_tokens(P + lw.ln1_w, P + lw.ln1_b, x_.data(), a_.data(), &mean, &rstd, 1,
                             D);
            S* k_row = k_[static_cast<size_t>(l)].data() + static_cast<size_t>(t) * D;
            S* v_row = v_[static_cast<size_t>(l)].data() + static_cast<size_t>(t) * D;
            linear_tokens(P + lw.wq, P + lw.bq, a_.data(), q_.data(), 1, D, D);
            linear_tokens(P + lw.wk, P + lw.bk, a_.data(), k_row, 1, D, D);
            linear_tokens(P + lw.wv, P + lw.bv, a_.data(), v_row, 1, D, D);

            for (int head = 0; head < H; ++head) {
                const int off = head * hd;
                for (int u = 0; u <= t; ++u) {
                    att_[static_cast<size_t>(u)] =
                        inv_sqrt_hd * dot(q_.data() + off,
                                          k_[static_cast<size_t>(l)].data() +
                                              static_cast<size_t>(u) * D + off,
                                          hd);
                }
                softmax_row(att_.data(), t + 1);
                S* ctx = ctx_.data() + off;
                zero(ctx, static_cast<size_t>(hd));
                for (int u = 0; u <= t; ++u) {
                    axpy(ctx, att_[static_cast<size_t>(u)],
                         v_[static_cast<size_t>(l)].data() + static_cast<size_t>(u) * D + off,
                         hd);
                }
            }

            linear_tokens(P + lw.wo, P + lw.bo, ctx_.data(), tmp_.data(), 1, D, D);
            for (int i = 0; i < D; ++i) {
                x_[static_cast<size_t>(i)] += tmp_[static_cast<size_t>(i)];
            }
            layernorm_tokens(P + lw.ln2_w, P + lw.ln2_b, x_.data(), a_.data(), &mean, &rstd, 1,
                             D);
            linear_tokens(P + lw.w1, P + lw.b1, a_.data(), ffp_.data(), 1, F, D);
            for (int i = 0; i < F; ++i) {
                ffa_[static_cast<size_t>(i)] = gelu(ffp_[static_cast<size_t>(i)]);
            }
            linear_tokens(P + lw.w2, P + lw.b2, ffa_.data(), tmp_.data(), 1, D, F);
            for (int i = 0; i < D; ++i) {
                x_[static_cast<size_t>(i)] += tmp_[static_cast<size_t>(i)];
            }
        }

        S mean = 0, rstd = 0;
        layernorm_tokens(P + L_.lnf_w, P + L_.lnf_b, x_.data(), a_.data(), &mean, &rstd, 1, D);
        linear_tokens(P + L_.head_w, static_cast<const S*>(nullptr), a_.data(), logits_.data(),
                      1, V, D);
        len_ += 1;
        return logits_;
    }

private:
    ModelConfig cfg_;
    ParamLayout L_;
    int len_ = 0;
    std::vector<std::vector<S>> k_, v_;
    std::vector<S> x_, a_, q_, ctx_, tmp_, ffp_, ffa_, att_, logits_;
};

// Autoregressive sampling. Halts when a stop token is produced (kept in the
// output) or after max_new tokens.
template <typename S>
TokenSeq sample(const ModelState<S>& m, const TokenSeq& prefix, double temperature, int max_new,
                const std::vector<TokenId>& stop_tokens, Rng& rng) {
    if (prefix.empty()) {
        throw ShapeMismatch("sample requires a nonempty prefix");
    }
    if (static_cast<int>(prefix.size()) + max_new > m.cfg.context_length) {
        throw ContextOverflow("prefix plus max_new exceeds context length");
    }
    KvCache<S> cache(m.cfg);
    for (TokenId tok : prefix) {
        cache.append(m, tok);
    }
    TokenSeq out;
    for (int i = 0; i < max_new; ++i) {
        const TokenId next =
            pick_token(cache.logits().data(), m.cfg.vocab_size, temperature, rng);
        out.push_back(next);
        if (std::find(stop_tokens.begin(), stop_tokens.end(), next) != stop_tokens.end()) {
            break;
        }
        if (i + 1 < max_new) {
            cache.append(m, next);
        }
    }
    return out;
}

}  // namespace trsd
