#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trsd/model.hpp"
#include "trsd/tasks.hpp"
#include "trsd/trsd.hpp"
#include "trsd/vocab.hpp"

namespace trsd {

enum class LossMask : uint8_t { ALL_TOKENS, THINK_AND_ANSWER };

const char* to_string(LossMask m);
LossMask loss_mask_from_string(const std::string& s);

struct SftConfig {
    int steps = 3000;
    int batch_size = 32;
    double lr = 1e-3;
    double lr_final = 1e-4;  // cosine decay target
    double clip_norm = 1.0;
    uint64_t seed = 0;
    LossMask loss_mask = LossMask::THINK_AND_ANSWER;
};

// Next-token cross-entropy over bos · prompt · <think> r </think>
// <answer> y </answer> · eos. THINK_AND_ANSWER masks out positions whose
// target is a prompt token; tags, both bodies, and eos are always supervised.
// Internal variant: forward already done on `input` into `cache`; writes the
// full dlogits block and returns the mean loss.
template <typename S>
double sft_loss_from_cache(const ForwardCache<S>& cache, const TokenSeq& input,
                           size_t prompt_len, LossMask mask, int vocab, S* dlogits) {
    const int T = cache.T;
    zero(dlogits, static_cast<size_t>(T) * vocab);
    const size_t first = mask == LossMask::ALL_TOKENS ? 0 : prompt_len;
    const size_t last = input.size() - 1;  // predicting positions are [0, last)
    const int n_positions = static_cast<int>(last - first);
    if (n_positions <= 0) {
        throw ShapeMismatch("no supervised positions in trace");
    }
    const double inv = 1.0 / static_cast<double>(n_positions);
    double loss = 0.0;
    std::vector<S> ls(static_cast<size_t>(vocab));
    for (size_t t = first; t < last; ++t) {
        const TokenId target = input[t + 1];
        log_softmax_row(cache.logits.data() + t * static_cast<size_t>(vocab), ls.data(), vocab);
        loss -= static_cast<double>(ls[static_cast<size_t>(target)]);
        S* g = dlogits + t * static_cast<size_t>(vocab);
        for (int v = 0; v < vocab; ++v) {
            g[v] = static_cast<S>(std::exp(static_cast<double>(ls[static_cast<size_t>(v)])) *
                                  inv);
        }
        g[target] -= static_cast<S>(inv);
    }
    return loss * inv;
}

// serialized trace with bos/eos wrappers, the model-facing training sequence
inline TokenSeq sft_input(const TaggedTrace& trace, const Vocab& vocab) {
    TokenSeq input;
    const TokenSeq body = serialize_trace(trace, vocab);
    input.reserve(body.size() + 2);
    input.push_back(Vocab::kBos);
    input.insert(input.end(), body.begin(), body.end());
    input.push_back(Vocab::kEos);
    return input;
}

template <typename S>
LossResult<S> sft_loss(const ModelState<S>& model, const TaggedTrace& trace,
                       LossMask mask = LossMask::THINK_AND_ANSWER) {
    const TokenSeq input = sft_input(trace, task_vocab());
    ParamLayout L(model.cfg);
    ForwardCache<S> cache;
    forward(model, input, L, cache);
    const int V = model.cfg.vocab_size;
    std::vector<S> dlogits(input.size() * static_cast<size_t>(V));
    LossResult<S> res;
    res.loss = sft_loss_from_cache(cache, input, trace.prompt.size(), mask, V, dlogits.data());
    res.grad_rows.resize(input.size());
    for (size_t t = 0; t < input.size(); ++t) {
        const S* r = dlogits.data() + t * static_cast<size_t>(V);
        res.grad_rows[t].assign(r, r + V);
    }
    return res;
}

struct SftStepMetrics {
    int64_t step = 0;
    double loss = 0.0;
    double lr = 0.0;
    double wallclock_ms = 0.0;
};

struct SftRunResult {
    std::string checkpoint;
    std::vector<SftStepMetrics> metrics;
};

// Bootstraps the reasoning teacher on reference traces. Writes the final
// checkpoint under out_prefix and a loss curve next to it.
SftRunResult train_sft(const std::vector<ReferenceTrace>& data, const ModelConfig& model_cfg,
                       const SftConfig& cfg, const std::string& out_prefix, int n_workers = 1);

// Tokenizes a reference trace over the task vocab.
TaggedTrace reference_to_trace(const ReferenceTrace& ref);

}  // namespace trsd
