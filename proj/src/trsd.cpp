#include "trsd/trsd.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "trsd/checkpoint.hpp"
#include "trsd/generate.hpp"
#include "trsd/trainer_util.hpp"

namespace trsd {

namespace {

struct ExampleStats {
    double loss = 0.0;
    int r_len = 0;
    int prefix_len = 0;
    bool forced = false;
};

struct StepWorkspace {
    std::vector<ForwardCache<float>> caches;     // per worker
    std::vector<std::vector<float>> dlogits;     // per worker
    BatchGradients grads;

    void ensure(const ModelConfig& cfg, int batch, int workers) {
        if (caches.size() != static_cast<size_t>(workers)) {
            caches.assign(static_cast<size_t>(workers), {});
            dlogits.assign(static_cast<size_t>(workers),
                           std::vector<float>(static_cast<size_t>(cfg.context_length) *
                                              static_cast<size_t>(cfg.vocab_size)));
        }
        grads.ensure(batch, param_count(cfg));
    }
};

DistillStepMetrics distill_step_impl(const ModelState<float>& teacher,
                                     ModelState<float>& student,
                                     const std::vector<TokenSeq>& prompts,
                                     const DistillConfig& cfg, int n_workers,
                                     StepWorkspace& ws, const ParamLayout& layout) {
    const auto t0 = std::chrono::steady_clock::now();
    const int batch = static_cast<int>(prompts.size());
    ws.ensure(student.cfg, batch, std::max(1, n_workers));
    ws.grads.zero_all();
    std::vector<ExampleStats> stats(static_cast<size_t>(batch));

    const int64_t step = student.step;
    parallel_batch(batch, n_workers, [&](int i, int w) {
        const uint64_t gidx =
            static_cast<uint64_t>(step) * static_cast<uint64_t>(cfg.batch_size) +
            static_cast<uint64_t>(i);
        Rng gen_rng(stream_key(cfg.seed, "distill", "gen", gidx));
        Rng alpha_rng(stream_key(cfg.seed, "distill", "alpha", gidx));

        const TokenSeq& prompt = prompts[static_cast<size_t>(i)];
        const RawGeneration raw =
            generate_raw(teacher, prompt, cfg.teacher_budget, cfg.gen_temperature, gen_rng);
        const SanitizeReport rep =
            sanitize(raw, prompt, model_forcer(teacher, cfg.gen_temperature, gen_rng));

        const TruncationDraw draw =
            sample_truncation(alpha_rng, static_cast<int>(rep.trace.think_body.size()));

        // teacher-forced scoring, then the student pass reuses the cache
        ForwardCache<float>& cache = ws.caches[static_cast<size_t>(w)];
        DistillExample<float> ex;
        ex.trace = rep.trace;
        ex.draw = draw;
        auto context_of = [&](int keep) {
            TokenSeq c = rep.trace.prompt;
            c.push_back(Vocab::kThinkOpen);
            c.insert(c.end(), rep.trace.think_body.begin(),
                     rep.trace.think_body.begin() + keep);
            c.push_back(Vocab::kThinkClose);
            c.push_back(Vocab::kAnswerOpen);
            return c;
        };
        ex.teacher_context = context_of(static_cast<int>(rep.trace.think_body.size()));
        ex.student_context = context_of(draw.prefix_len);
        ex.target_tokens = rep.trace.answer_body;
        ex.target_tokens.push_back(Vocab::kAnswerClose);
        ex.teacher_logprobs =
            answer_logprobs(teacher, layout, cache, ex.teacher_context, ex.target_tokens);

        const TokenSeq input = detail::make_input(ex.student_context, ex.target_tokens);
        forward(student, input, layout, cache);
        float* dl = ws.dlogits[static_cast<size_t>(w)].data();
        const double loss = kl_loss_from_cache(cache, ex, student.cfg.vocab_size, dl);
        backward_from_cache(student, input, layout, cache, dl,
                            ws.grads.per_example[static_cast<size_t>(i)].data());

        stats[static_cast<size_t>(i)] = {loss, static_cast<int>(rep.trace.think_body.size()),
                                         draw.prefix_len, rep.forced};
    });

    ws.grads.reduce_mean();
    AdamParams ap;
    ap.lr = cfg.lr;
    ap.beta1 = cfg.beta1;
    ap.beta2 = cfg.beta2;
    ap.eps = cfg.eps;
    ap.weight_decay = cfg.weight_decay;
    ap.clip_norm = cfg.clip_norm;
    adamw_step(student, ws.grads.reduced, ap);

    DistillStepMetrics m;
    m.step = student.step;
    for (const ExampleStats& s : stats) {
        m.loss += s.loss;
        m.mean_r_len += s.r_len;
        m.mean_prefix_len += s.prefix_len;
        m.forced_frac += s.forced ? 1.0 : 0.0;
    }
    const double inv = 1.0 / static_cast<double>(batch);
    m.loss *= inv;
    m.mean_r_len *= inv;
    m.mean_prefix_len *= inv;
    m.forced_frac *= inv;
    m.wallclock_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - t0)
                         .count();
    return m;
}

std::string metrics_line(const DistillStepMetrics& m) {
    nlohmann::ordered_json j;
    j["step"] = m.step;
    j["loss"] = m.loss;
    j["mean_r_len"] = m.mean_r_len;
    j["mean_prefix_len"] = m.mean_prefix_len;
    j["forced_frac"] = m.forced_frac;
    j["wallclock_ms"] = m.wallclock_ms;
    return j.dump();
}

}  // namespace

DistillStepMetrics distill_step(const ModelState<float>& teacher, ModelState<float>& student,
                                const std::vector<TokenSeq>& prompt_batch,
                                const DistillConfig& cfg, int n_workers) {
    if (teacher.cfg != student.cfg) {
        throw ShapeMismatch("teacher and student must share a config");
    }
    StepWorkspace ws;
    const ParamLayout layout(student.cfg);
    return distill_step_impl(teacher, student, prompt_batch, cfg, n_workers, ws, layout);
}

DistillRunResult run_distillation(const std::string& teacher_ckpt_prefix,
                                  const std::vector<TokenSeq>& prompt_source,
                                  const DistillConfig& cfg, const std::string& out_dir,
                                  bool resume, int n_workers) {
    if (prompt_source.empty()) {
        throw InvalidConfig("prompt source is empty");
    }
    const ModelState<float> teacher = load_checkpoint(teacher_ckpt_prefix);
    std::filesystem::create_directories(out_dir);
    const auto ckpt_prefix = [&](int64_t s) {
        return out_dir + "/student_step" + std::to_string(s);
    };

    ModelState<float> student;
    if (resume) {
        int64_t latest = -1;
        if (checkpoint_exists(ckpt_prefix(0))) {
            latest = 0;
        }
        for (int s : cfg.checkpoint_steps) {
            if (s <= cfg.steps && checkpoint_exists(ckpt_prefix(s))) {
                latest = std::max<int64_t>(latest, s);
            }
        }
        if (latest < 0) {
            throw CheckpointIOError("resume requested but no student checkpoint in " + out_dir);
        }
        student = load_checkpoint(ckpt_prefix(latest));
    } else {
        // exact parameter copy of the frozen teacher, fresh optimizer
        student = teacher;
        std::fill(student.adam_m.begin(), student.adam_m.end(), 0.0f);
        std::fill(student.adam_v.begin(), student.adam_v.end(), 0.0f);
        student.step = 0;
        save_checkpoint(student, ckpt_prefix(0));
    }

    std::ofstream metrics_out(out_dir + "/distill_metrics.jsonl", std::ios::app);
    if (!metrics_out) {
        throw IOError("cannot open metrics stream in " + out_dir);
    }

    DistillRunResult result;
    StepWorkspace ws;
    const ParamLayout layout(student.cfg);
    while (student.step < cfg.steps) {
        std::vector<TokenSeq> batch(static_cast<size_t>(cfg.batch_size));
        for (int i = 0; i < cfg.batch_size; ++i) {
            const uint64_t gidx = static_cast<uint64_t>(student.step) *
                                      static_cast<uint64_t>(cfg.batch_size) +
                                  static_cast<uint64_t>(i);
            const uint64_t pick = stream_key(cfg.seed, "distill", "prompt", gidx) %
                                  prompt_source.size();
            batch[static_cast<size_t>(i)] = prompt_source[pick];
        }
        const DistillStepMetrics m =
            distill_step_impl(teacher, student, batch, cfg, n_workers, ws, layout);
        metrics_out << metrics_line(m) << "\n";
        result.metrics.push_back(m);
        for (int s : cfg.checkpoint_steps) {
            if (s == student.step) {
                save_checkpoint(student, ckpt_prefix(s));
            }
        }
    }
    for (int s : cfg.checkpoint_steps) {
        if (s <= cfg.steps) {
            result.checkpoints.push_back(ckpt_prefix(s));
        }
    }
    return result;
}

}  // namespace trsd
