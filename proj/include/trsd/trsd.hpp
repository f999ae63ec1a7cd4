#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trsd/model.hpp"
#include "trsd/sanitize.hpp"
#include "trsd/vocab.hpp"

namespace trsd {

// Truncation ratio draw: alpha ~ U(0,1), prefix keeps floor(alpha*|r|) tokens.
struct TruncationDraw {
    double alpha = 0.0;
    int prefix_len = 0;
};

inline TruncationDraw sample_truncation(Rng& rng, int r_len) {
    if (r_len < 0) {
        throw InvalidConfig("r_len must be >= 0");
    }
    TruncationDraw d;
    d.alpha = rng.uniform();
    d.prefix_len = static_cast<int>(d.alpha * static_cast<double>(r_len));
    return d;
}

// One training item: the full trace, its truncation draw, the paired
// teacher/student conditioning contexts, the supervised answer span
// (answer body plus </answer>), and the teacher's log-distributions there.
// Teacher rows are kept at double precision so they normalize within 1e-9
// regardless of the model scalar type.
template <typename S>
struct DistillExample {
    TaggedTrace trace;
    TruncationDraw draw;
    TokenSeq teacher_context;  // x · <think> · r · </think> · <answer>
    TokenSeq student_context;  // x · <think> · r̄ · </think> · <answer>
    TokenSeq target_tokens;    // y · </answer>
    std::vector<double> teacher_logprobs;  // [targets, V] row-major
};

template <typename S>
struct LossResult {
    double loss = 0.0;
    // one row per input position; zero outside the loss span
    std::vector<std::vector<S>> grad_rows;
};

namespace detail {

inline TokenSeq make_input(const TokenSeq& context, const TokenSeq& target) {
    TokenSeq input;
    input.reserve(1 + context.size() + target.size());
    input.push_back(Vocab::kBos);
    input.insert(input.end(), context.begin(), context.end());
    input.insert(input.end(), target.begin(), target.end());
    return input;
}

}  // namespace detail

// Teacher-forced forward over bos · context · target; returns the
// log-distribution rows at the positions predicting each target token.
// No optimizer or gradient state is touched.
template <typename S>
std::vector<double> answer_logprobs(const ModelState<S>& m, const ParamLayout& L,
                                    ForwardCache<S>& cache, const TokenSeq& context,
                                    const TokenSeq& target) {
    const TokenSeq input = detail::make_input(context, target);
    forward(m, input, L, cache);
    const int V = m.cfg.vocab_size;
    std::vector<double> rows(target.size() * static_cast<size_t>(V));
    std::vector<double> logits(static_cast<size_t>(V));
    for (size_t j = 0; j < target.size(); ++j) {
        const size_t row = context.size() + j;  // position predicting target[j]
        for (int v = 0; v < V; ++v) {
            logits[static_cast<size_t>(v)] = static_cast<double>(
                cache.logits[row * static_cast<size_t>(V) + static_cast<size_t>(v)]);
        }
        log_softmax_row(logits.data(), rows.data() + j * static_cast<size_t>(V), V);
    }
    return rows;
}

template <typename S>
DistillExample<S> build_distill_example(const TaggedTrace& trace, const TruncationDraw& draw,
                                        const ModelState<S>& teacher) {
    if (draw.prefix_len < 0 || draw.prefix_len > static_cast<int>(trace.think_body.size())) {
        throw ShapeMismatch("truncation prefix exceeds think length");
    }
    DistillExample<S> ex;
    ex.trace = trace;
    ex.draw = draw;

    auto context_of = [&](int keep) {
        TokenSeq c = trace.prompt;
        c.push_back(Vocab::kThinkOpen);
        c.insert(c.end(), trace.think_body.begin(), trace.think_body.begin() + keep);
        c.push_back(Vocab::kThinkClose);
        c.push_back(Vocab::kAnswerOpen);
        return c;
    };
    ex.teacher_context = context_of(static_cast<int>(trace.think_body.size()));
    ex.student_context = context_of(draw.prefix_len);
    ex.target_tokens = trace.answer_body;
    ex.target_tokens.push_back(Vocab::kAnswerClose);

    ParamLayout L(teacher.cfg);
    ForwardCache<S> cache;
    ex.teacher_logprobs =
        answer_logprobs(teacher, L, cache, ex.teacher_context, ex.target_tokens);
    return ex;
}

// Pure KL head over paired rows: loss = mean_j KL(p_T[j] || p_S[j]) with
// p_S = softmax(student_logits[j]); writes d(loss)/d(student_logits) rows.
template <typename S>
double kl_from_rows(const double* teacher_logprobs, const S* student_logits, int n_rows,
                    int vocab, S* grad_rows) {
    double total = 0.0;
    std::vector<double> ls(static_cast<size_t>(vocab));
    std::vector<double> sl(static_cast<size_t>(vocab));
    const double inv_rows = 1.0 / static_cast<double>(n_rows);
    for (int j = 0; j < n_rows; ++j) {
        const double* lt = teacher_logprobs + static_cast<size_t>(j) * vocab;
        for (int v = 0; v < vocab; ++v) {
            sl[static_cast<size_t>(v)] = static_cast<double>(
                student_logits[static_cast<size_t>(j) * vocab + static_cast<size_t>(v)]);
        }
        log_softmax_row(sl.data(), ls.data(), vocab);
        double kl = 0.0;
        S* g = grad_rows + static_cast<size_t>(j) * vocab;
        for (int v = 0; v < vocab; ++v) {
            const double pt = std::exp(lt[v]);
            kl += pt * (lt[v] - ls[static_cast<size_t>(v)]);
            const double ps = std::exp(ls[static_cast<size_t>(v)]);
            g[v] = static_cast<S>((ps - pt) * inv_rows);
        }
        total += kl;
    }
    return total * inv_rows;
}

// Internal: student forward already done into `cache` for
// bos·student_context·target. Writes dlogits (full [T,V], zeroed first).
template <typename S>
double kl_loss_from_cache(const ForwardCache<S>& cache, const DistillExample<S>& ex, int vocab,
                          S* dlogits) {
    const int n_targets = static_cast<int>(ex.target_tokens.size());
    zero(dlogits, static_cast<size_t>(cache.T) * vocab);
    const size_t base = ex.student_context.size();  // first predicting row
    std::vector<S> student_rows(static_cast<size_t>(n_targets) * vocab);
    for (int j = 0; j < n_targets; ++j) {
        std::copy_n(cache.logits.data() + (base + static_cast<size_t>(j)) * vocab, vocab,
                    student_rows.data() + static_cast<size_t>(j) * vocab);
    }
    std::vector<S> grad_rows(static_cast<size_t>(n_targets) * vocab);
    const double loss = kl_from_rows(ex.teacher_logprobs.data(), student_rows.data(), n_targets,
                                     vocab, grad_rows.data());
    for (int j = 0; j < n_targets; ++j) {
        std::copy_n(grad_rows.data() + static_cast<size_t>(j) * vocab, vocab,
                    dlogits + (base + static_cast<size_t>(j)) * vocab);
    }
    return loss;
}

// Spec-level entry point: runs its own student forward.
template <typename S>
LossResult<S> kl_answer_loss(const DistillExample<S>& ex, const ModelState<S>& student) {
    if (ex.teacher_logprobs.size() !=
        ex.target_tokens.size() * static_cast<size_t>(student.cfg.vocab_size)) {
        throw ShapeMismatch("teacher logprob rows do not match target span");
    }
    ParamLayout L(student.cfg);
    ForwardCache<S> cache;
    const TokenSeq input = detail::make_input(ex.student_context, ex.target_tokens);
    forward(student, input, L, cache);
    const int V = student.cfg.vocab_size;
    std::vector<S> dlogits(input.size() * static_cast<size_t>(V));
    LossResult<S> res;
    res.loss = kl_loss_from_cache(cache, ex, V, dlogits.data());
    res.grad_rows.resize(input.size());
    for (size_t t = 0; t < input.size(); ++t) {
        const S* r = dlogits.data() + t * static_cast<size_t>(V);
        res.grad_rows[t].assign(r, r + V);
    }
    return res;
}

// ------------------------------------------------------------ training loop

struct DistillConfig {
    int steps = 2000;
    int batch_size = 32;
    double lr = 3e-4;  // desk-scale default; 3e-6 suits billion-parameter models
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    double clip_norm = 1.0;
    double gen_temperature = 1.0;
    int teacher_budget = 256;  // reasoning-token cap for teacher generation
    std::vector<int> checkpoint_steps = {250, 500, 1000, 2000};
    uint64_t seed = 0;
};

struct DistillStepMetrics {
    int64_t step = 0;
    double loss = 0.0;
    double mean_r_len = 0.0;
    double mean_prefix_len = 0.0;
    double forced_frac = 0.0;
    double wallclock_ms = 0.0;
};

// One optimizer step of the self-distillation loop: the frozen teacher
// generates and scores, the student matches under truncation. Per-example
// randomness is keyed on (cfg.seed, student.step * batch + i), so any worker
// count yields identical results.
DistillStepMetrics distill_step(const ModelState<float>& teacher, ModelState<float>& student,
                                const std::vector<TokenSeq>& prompt_batch,
                                const DistillConfig& cfg, int n_workers = 1);

struct DistillRunResult {
    std::vector<std::string> checkpoints;  // one prefix per cfg.checkpoint_steps
    std::vector<DistillStepMetrics> metrics;
};

// Full run: student starts as an exact parameter copy of the teacher (fresh
// optimizer state), trains for cfg.steps, checkpoints at cfg.checkpoint_steps
// under out_dir/student_step<N>, and appends one metrics line per step to
// out_dir/distill_metrics.jsonl. With resume=true, continues from the latest
// saved student checkpoint.
DistillRunResult run_distillation(const std::string& teacher_ckpt_prefix,
                                  const std::vector<TokenSeq>& prompt_source,
                                  const DistillConfig& cfg, const std::string& out_dir,
                                  bool resume = false, int n_workers = 1);

}  // namespace trsd
