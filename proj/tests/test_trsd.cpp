#include "trsd/trsd.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "trsd/checkpoint.hpp"
#include "trsd/tasks.hpp"

namespace trsd {
namespace {

TEST(SampleTruncation, FloorArithmetic) {
    // alpha = 0.37 with |r| = 10 keeps floor(3.7) = 3 tokens
    Rng rng(0);
    for (int i = 0; i < 1000; ++i) {
        const TruncationDraw d = sample_truncation(rng, 10);
        EXPECT_EQ(d.prefix_len, static_cast<int>(d.alpha * 10.0));
        EXPECT_GE(d.prefix_len, 0);
        EXPECT_LT(d.prefix_len, 10);
    }
}

TEST(SampleTruncation, EmptyTraceAlwaysZero) {
    Rng rng(1);
    for (int i = 0; i < 100; ++i) {
        EXPECT_EQ(sample_truncation(rng, 0).prefix_len, 0);
    }
}

TEST(SampleTruncation, MeanNearExactExpectation) {
    // E[floor(100*alpha)] = sum_{k=0..99} k/100 = 49.5; 20k draws here, the
    // full 100k-draw check runs in the acceptance suite
    double sum = 0;
    const int draws = 20000;
    for (int i = 0; i < draws; ++i) {
        Rng rng(stream_key(99, "alpha", static_cast<uint64_t>(i)));
        sum += sample_truncation(rng, 100).prefix_len;
    }
    EXPECT_NEAR(sum / draws, 49.5, 0.7);
}

TEST(SampleTruncation, KeyedByIndexNotCallOrder) {
    // draws are a pure function of the stream key, so evaluating examples in
    // any order (or on any worker) yields the same per-example alphas
    std::vector<double> forward_order, reverse_order(32);
    for (int i = 0; i < 32; ++i) {
        Rng rng(stream_key(7, "distill", "alpha", static_cast<uint64_t>(i)));
        forward_order.push_back(sample_truncation(rng, 50).alpha);
    }
    for (int i = 31; i >= 0; --i) {
        Rng rng(stream_key(7, "distill", "alpha", static_cast<uint64_t>(i)));
        reverse_order[static_cast<size_t>(i)] = sample_truncation(rng, 50).alpha;
    }
    EXPECT_EQ(forward_order, reverse_order);
}

ModelConfig small_cfg() {
    ModelConfig cfg;
    cfg.vocab_size = task_vocab().size();
    cfg.context_length = 256;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.d_model = 16;
    cfg.d_ff = 32;
    return cfg;
}

TaggedTrace demo_trace() {
    const Vocab& v = task_vocab();
    TaggedTrace t;
    t.prompt = v.encode_text("4+5=");
    t.think_body = v.encode_text("4+5=9;");
    t.answer_body = v.encode_text("9");
    return t;
}

TEST(BuildDistillExample, ContextsAndTargets) {
    const auto teacher = init_model<float>(small_cfg(), 3);
    const TaggedTrace trace = demo_trace();
    TruncationDraw draw{0.0, 0};
    const auto ex = build_distill_example(trace, draw, teacher);

    const Vocab& v = task_vocab();
    EXPECT_EQ(v.render_tokens(ex.student_context),
              "4 + 5 = <think> </think> <answer>");
    EXPECT_EQ(v.render_tokens(ex.teacher_context),
              "4 + 5 = <think> 4 + 5 = 9 ; </think> <answer>");
    EXPECT_EQ(v.render_tokens(ex.target_tokens), "9 </answer>");

    // teacher rows are log-distributions: exp sums to 1 within 1e-9
    const int V = teacher.cfg.vocab_size;
    for (size_t j = 0; j < ex.target_tokens.size(); ++j) {
        double sum = 0;
        for (int t = 0; t < V; ++t) {
            sum += std::exp(static_cast<double>(
                ex.teacher_logprobs[j * static_cast<size_t>(V) + static_cast<size_t>(t)]));
        }
        EXPECT_NEAR(sum, 1.0, 1e-9);
    }
}

TEST(BuildDistillExample, PrefixBoundsRespected) {
    const auto teacher = init_model<float>(small_cfg(), 3);
    const TaggedTrace trace = demo_trace();
    const int r = static_cast<int>(trace.think_body.size());
    TruncationDraw draw{0.999, r};  // prefix_len == |r| is out of range for alpha<1
    EXPECT_NO_THROW(build_distill_example(trace, TruncationDraw{0.99, r - 1}, teacher));
    EXPECT_THROW(build_distill_example(trace, TruncationDraw{0.0, r + 1}, teacher),
                 ShapeMismatch);
    (void)draw;
}

TEST(KlAnswerLoss, ZeroWhenContextsAndModelsCoincide) {
    // |r| = 0 makes the truncated and full contexts identical; with the
    // student equal to the teacher the KL must vanish
    const auto teacher = init_model<float>(small_cfg(), 5);
    const Vocab& v = task_vocab();
    TaggedTrace t;
    t.prompt = v.encode_text("3+0=");
    t.answer_body = v.encode_text("3");
    const auto ex = build_distill_example(t, TruncationDraw{0.5, 0}, teacher);
    const auto res = kl_answer_loss(ex, teacher);
    EXPECT_GE(res.loss, -1e-7);
    EXPECT_LE(std::abs(res.loss), 1e-7);
}

TEST(KlAnswerLoss, OneHotTeacherVsUniformStudent) {
    // single target position, teacher one-hot on v*, student uniform over 4
    const int V = 4;
    std::vector<double> teacher_logprobs = {std::log(1.0 - 3e-12), std::log(1e-12),
                                            std::log(1e-12), std::log(1e-12)};
    std::vector<double> student_logits = {0.0, 0.0, 0.0, 0.0};
    std::vector<double> grad(4);
    const double loss =
        kl_from_rows(teacher_logprobs.data(), student_logits.data(), 1, V, grad.data());
    EXPECT_NEAR(loss, std::log(4.0), 1e-9);
    // gradient: softmax(student) - p_teacher
    EXPECT_NEAR(grad[0], 0.25 - 1.0, 1e-9);
    EXPECT_NEAR(grad[1], 0.25, 1e-9);
}

TEST(KlAnswerLoss, MatchesBruteForceOracle) {
    // direct summation over random teacher/student rows at double precision
    Rng rng(stream_key(11, "kl_oracle"));
    for (int iter = 0; iter < 50; ++iter) {
        const int V = 2 + static_cast<int>(rng.below(15));
        const int rows = 1 + static_cast<int>(rng.below(8));
        std::vector<double> t_logits(static_cast<size_t>(rows * V)),
            s_logits(static_cast<size_t>(rows * V));
        for (double& x : t_logits) {
            x = 2.0 * rng.gaussian();
        }
        for (double& x : s_logits) {
            x = 2.0 * rng.gaussian();
        }
        std::vector<double> t_logprobs(t_logits.size());
        for (int j = 0; j < rows; ++j) {
            log_softmax_row(t_logits.data() + j * V, t_logprobs.data() + j * V, V);
        }
        std::vector<double> grad(t_logits.size());
        const double loss =
            kl_from_rows(t_logprobs.data(), s_logits.data(), rows, V, grad.data());

        // oracle: plain softmax + ratio logs
        double expected = 0;
        for (int j = 0; j < rows; ++j) {
            double tz = 0, sz = 0, tm = -1e30, sm = -1e30;
            for (int i = 0; i < V; ++i) {
                tm = std::max(tm, t_logits[static_cast<size_t>(j * V + i)]);
                sm = std::max(sm, s_logits[static_cast<size_t>(j * V + i)]);
            }
            for (int i = 0; i < V; ++i) {
                tz += std::exp(t_logits[static_cast<size_t>(j * V + i)] - tm);
                sz += std::exp(s_logits[static_cast<size_t>(j * V + i)] - sm);
            }
            for (int i = 0; i < V; ++i) {
                const double pt = std::exp(t_logits[static_cast<size_t>(j * V + i)] - tm) / tz;
                const double ps = std::exp(s_logits[static_cast<size_t>(j * V + i)] - sm) / sz;
                expected += pt * std::log(pt / ps);
            }
        }
        expected /= rows;
        EXPECT_NEAR(loss, expected, 1e-10);
        EXPECT_GE(loss, 0.0);
    }
}

// ------------------------------------------------------------- distill loop

std::vector<TokenSeq> demo_prompts(int n) {
    std::vector<TokenSeq> prompts;
    const Vocab& v = task_vocab();
    for (const auto& [inst, ref] : gen_chain_arith(17, 1, n)) {
        (void)ref;
        prompts.push_back(v.encode_text(inst.prompt_text));
    }
    return prompts;
}

DistillConfig quick_cfg() {
    DistillConfig cfg;
    cfg.steps = 3;
    cfg.batch_size = 4;
    cfg.teacher_budget = 8;
    cfg.checkpoint_steps = {2, 3};
    cfg.seed = 5;
    return cfg;
}

TEST(DistillStep, ZeroLearningRateLeavesStudentUnchanged) {
    const auto teacher = init_model<float>(small_cfg(), 8);
    ModelState<float> student = teacher;
    student.step = 0;
    DistillConfig cfg = quick_cfg();
    cfg.lr = 0.0;
    const auto before = student.params;
    distill_step(teacher, student, demo_prompts(cfg.batch_size), cfg);
    EXPECT_EQ(student.params, before);
    EXPECT_EQ(student.step, 1);
}

TEST(DistillStep, DeterministicMetricsAndTeacherFrozen) {
    const auto teacher = init_model<float>(small_cfg(), 8);
    const auto teacher_params = teacher.params;
    DistillConfig cfg = quick_cfg();
    const auto prompts = demo_prompts(cfg.batch_size);

    ModelState<float> s1 = teacher;
    s1.step = 0;
    ModelState<float> s2 = teacher;
    s2.step = 0;
    const auto m1 = distill_step(teacher, s1, prompts, cfg);
    const auto m2 = distill_step(teacher, s2, prompts, cfg);
    EXPECT_EQ(m1.loss, m2.loss);
    EXPECT_EQ(m1.mean_r_len, m2.mean_r_len);
    EXPECT_EQ(m1.mean_prefix_len, m2.mean_prefix_len);
    EXPECT_EQ(m1.forced_frac, m2.forced_frac);
    EXPECT_EQ(s1.params, s2.params);
    EXPECT_EQ(teacher.params, teacher_params);
    EXPECT_GE(m1.loss, -1e-7);
}

TEST(DistillStep, WorkerCountDoesNotChangeResults) {
    const auto teacher = init_model<float>(small_cfg(), 8);
    DistillConfig cfg = quick_cfg();
    const auto prompts = demo_prompts(cfg.batch_size);
    ModelState<float> s1 = teacher;
    s1.step = 0;
    ModelState<float> s2 = teacher;
    s2.step = 0;
    const auto m1 = distill_step(teacher, s1, prompts, cfg, 1);
    const auto m2 = distill_step(teacher, s2, prompts, cfg, 2);
    EXPECT_EQ(m1.loss, m2.loss);
    EXPECT_EQ(s1.params, s2.params);
}

TEST(RunDistillation, CheckpointsMetricsAndCopyInit) {
    const auto dir = std::filesystem::temp_directory_path() / "trsd_distill_test";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    const std::string teacher_prefix = (dir / "teacher").string();
    const auto teacher = init_model<float>(small_cfg(), 21);
    save_checkpoint(teacher, teacher_prefix);

    const DistillConfig cfg = quick_cfg();
    const auto result = run_distillation(teacher_prefix, demo_prompts(8), cfg,
                                         (dir / "out").string());
    ASSERT_EQ(result.checkpoints.size(), 2u);
    EXPECT_EQ(static_cast<int>(result.metrics.size()), cfg.steps);

    // the step-0 dump is parameter-identical to the teacher blob
    EXPECT_EQ(blob_hash((dir / "out" / "student_step0").string() + ".bin"),
              blob_hash(teacher_prefix + ".bin"));
    // teacher untouched on disk after the run
    const auto reloaded = load_checkpoint(teacher_prefix);
    EXPECT_EQ(reloaded.params, teacher.params);

    for (const std::string& prefix : result.checkpoints) {
        EXPECT_TRUE(checkpoint_exists(prefix));
    }
}

TEST(RunDistillation, ResumeReproducesMetricsStream) {
    const auto dir = std::filesystem::temp_directory_path() / "trsd_resume_test";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    const std::string teacher_prefix = (dir / "teacher").string();
    save_checkpoint(init_model<float>(small_cfg(), 33), teacher_prefix);
    const auto prompts = demo_prompts(8);

    DistillConfig cfg = quick_cfg();
    cfg.steps = 4;
    cfg.checkpoint_steps = {2, 4};

    const auto full = run_distillation(teacher_prefix, prompts, cfg,
                                       (dir / "full").string());

    DistillConfig first_half = cfg;
    first_half.steps = 2;
    run_distillation(teacher_prefix, prompts, first_half, (dir / "resumed").string());
    const auto second_half = run_distillation(teacher_prefix, prompts, cfg,
                                              (dir / "resumed").string(), /*resume=*/true);

    ASSERT_EQ(second_half.metrics.size(), 2u);
    EXPECT_EQ(second_half.metrics[0].step, full.metrics[2].step);
    EXPECT_EQ(second_half.metrics[0].loss, full.metrics[2].loss);
    EXPECT_EQ(second_half.metrics[1].loss, full.metrics[3].loss);
    EXPECT_EQ(blob_hash((dir / "full" / "student_step4").string() + ".bin"),
              blob_hash((dir / "resumed" / "student_step4").string() + ".bin"));
}

}  // namespace
}  // namespace trsd
