#include "trsd/generate.hpp"

namespace trsd {

namespace {

// samples until a stop token, <eos>, or the cap; <eos> is dropped
TokenSeq sample_until(const ModelState<float>& m, KvCache<float>& cache, int cap,
                      TokenId stop_token, double temperature, Rng& rng) {
    TokenSeq out;
    while (static_cast<int>(out.size()) < cap && cache.size() < m.cfg.context_length) {
        const TokenId tok =
            pick_token(cache.logits().data(), m.cfg.vocab_size, temperature, rng);
        if (tok == Vocab::kEos) {
            break;
        }
        out.push_back(tok);
        if (tok == stop_token) {
            break;
        }
        if (cache.size() < m.cfg.context_length) {
            cache.append(m, tok);
        }
    }
    return out;
}

}  // namespace

RawGeneration generate_raw(const ModelState<float>& m, const TokenSeq& prompt, int think_budget,
                           double temperature, Rng& rng) {
    if (think_budget < 0) {
        throw InvalidConfig("think_budget must be >= 0");
    }
    // room for bos · prompt · <think> · budget · </think> · <answer> · forced answer
    const int worst = 2 + static_cast<int>(prompt.size()) + think_budget + 2 +
                      kAnswerForceBudget + 1;
    if (worst > m.cfg.context_length) {
        throw ContextOverflow("prompt plus budgets exceed the model context");
    }

    KvCache<float> cache(m.cfg);
    cache.append(m, Vocab::kBos);
    for (TokenId tok : prompt) {
        cache.append(m, tok);
    }
    cache.append(m, Vocab::kThinkOpen);

    RawGeneration raw;
    raw.tokens.push_back(Vocab::kThinkOpen);

    // reasoning region: </think> stops it and does not count against budget
    bool closed = false;
    bool saw_eos = false;
    int think_count = 0;
    while (think_count < think_budget) {
        const TokenId tok =
            pick_token(cache.logits().data(), m.cfg.vocab_size, temperature, rng);
        if (tok == Vocab::kEos) {
            saw_eos = true;
            break;
        }
        raw.tokens.push_back(tok);
        cache.append(m, tok);
        if (tok == Vocab::kThinkClose) {
            closed = true;
            break;
        }
        ++think_count;
    }
    if (!closed) {
        raw.truncated_by_budget = !saw_eos;
        return raw;
    }

    // answer region, same allowance as answer forcing
    const TokenSeq answer =
        sample_until(m, cache, kAnswerForceBudget, Vocab::kAnswerClose, temperature, rng);
    raw.tokens.insert(raw.tokens.end(), answer.begin(), answer.end());
    return raw;
}

TokenSeq force_answer(const ModelState<float>& m, const TokenSeq& context, double temperature,
                      Rng& rng) {
    if (context.empty() || context.back() != Vocab::kAnswerOpen) {
        throw ShapeMismatch("force_answer context must end with <answer>");
    }
    return model_forcer(m, temperature, rng)(context);
}

Forcer model_forcer(const ModelState<float>& m, double temperature, Rng& rng) {
    return [&m, temperature, &rng](const TokenSeq& context) {
        if (static_cast<int>(context.size()) + 2 > m.cfg.context_length) {
            throw ContextOverflow("forcing context exceeds the model context");
        }
        KvCache<float> cache(m.cfg);
        cache.append(m, Vocab::kBos);
        for (TokenId tok : context) {
            cache.append(m, tok);
        }
        return sample_until(m, cache, kAnswerForceBudget, Vocab::kAnswerClose, temperature,
                            rng);
    };
}

}  // namespace trsd
