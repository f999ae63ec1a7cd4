#include "trsd/sft.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "trsd/checkpoint.hpp"
#include "trsd/trainer_util.hpp"

namespace trsd {

const char* to_string(LossMask m) {
    return m == LossMask::ALL_TOKENS ? "ALL_TOKENS" : "THINK_AND_ANSWER";
}

LossMask loss_mask_from_string(const std::string& s) {
    if (s == "ALL_TOKENS") {
        return LossMask::ALL_TOKENS;
    }
    if (s == "THINK_AND_ANSWER") {
        return LossMask::THINK_AND_ANSWER;
    }
    throw ConfigError("unknown loss mask: " + s);
}

TaggedTrace reference_to_trace(const ReferenceTrace& ref) {
    const Vocab& vocab = task_vocab();
    TaggedTrace t;
    t.prompt = vocab.encode_text(ref.instance.prompt_text);
    t.think_body = vocab.encode_text(ref.think_text);
    t.answer_body = vocab.encode_text(ref.answer_text);
    return t;
}

SftRunResult train_sft(const std::vector<ReferenceTrace>& data, const ModelConfig& model_cfg,
                       const SftConfig& cfg, const std::string& out_prefix, int n_workers) {
    if (data.empty()) {
        throw InvalidConfig("sft training data is empty");
    }
    std::vector<TaggedTrace> traces;
    traces.reserve(data.size());
    std::vector<TokenSeq> inputs;
    inputs.reserve(data.size());
    const Vocab& vocab = task_vocab();
    for (const ReferenceTrace& ref : data) {
        traces.push_back(reference_to_trace(ref));
        inputs.push_back(sft_input(traces.back(), vocab));
        if (static_cast<int>(inputs.back().size()) > model_cfg.context_length) {
            throw ContextOverflow("reference trace longer than model context");
        }
    }

    ModelState<float> model = init_model<float>(model_cfg, stream_key(cfg.seed, "sft", "init"));
    const ParamLayout layout(model_cfg);
    const int workers = std::max(1, n_workers);

    std::vector<ForwardCache<float>> caches(static_cast<size_t>(workers));
    std::vector<std::vector<float>> dlogits(
        static_cast<size_t>(workers),
        std::vector<float>(static_cast<size_t>(model_cfg.context_length) *
                           static_cast<size_t>(model_cfg.vocab_size)));
    BatchGradients grads;
    grads.ensure(cfg.batch_size, param_count(model_cfg));

    const std::filesystem::path out_path(out_prefix);
    if (out_path.has_parent_path()) {
        std::filesystem::create_directories(out_path.parent_path());
    }
    std::ofstream metrics_out(out_prefix + "_metrics.jsonl", std::ios::trunc);
    if (!metrics_out) {
        throw IOError("cannot open sft metrics stream at " + out_prefix);
    }

    SftRunResult result;
    std::vector<double> losses(static_cast<size_t>(cfg.batch_size));
    while (model.step < cfg.steps) {
        const auto t0 = std::chrono::steady_clock::now();
        grads.zero_all();
        const int64_t step = model.step;
        parallel_batch(cfg.batch_size, workers, [&](int i, int w) {
            const uint64_t gidx = static_cast<uint64_t>(step) *
                                      static_cast<uint64_t>(cfg.batch_size) +
                                  static_cast<uint64_t>(i);
            const size_t pick = stream_key(cfg.seed, "sft", "pick", gidx) % inputs.size();
            const TokenSeq& input = inputs[pick];
            ForwardCache<float>& cache = caches[static_cast<size_t>(w)];
            forward(model, input, layout, cache);
            float* dl = dlogits[static_cast<size_t>(w)].data();
            losses[static_cast<size_t>(i)] =
                sft_loss_from_cache(cache, input, traces[pick].prompt.size(), cfg.loss_mask,
                                    model_cfg.vocab_size, dl);
            backward_from_cache(model, input, layout, cache, dl,
                                grads.per_example[static_cast<size_t>(i)].data());
        });
        grads.reduce_mean();

        // cosine decay from lr to lr_final over the run
        const double progress = static_cast<double>(step) / static_cast<double>(cfg.steps);
        AdamParams ap;
        ap.lr = cfg.lr_final +
                0.5 * (cfg.lr - cfg.lr_final) * (1.0 + std::cos(3.141592653589793 * progress));
        ap.clip_norm = cfg.clip_norm;
        adamw_step(model, grads.reduced, ap);

        SftStepMetrics m;
        m.step = model.step;
        for (double l : losses) {
            m.loss += l;
        }
        m.loss /= static_cast<double>(cfg.batch_size);
        m.lr = ap.lr;
        m.wallclock_ms = std::chrono::duration<double, std::milli>(
                             std::chrono::steady_clock::now() - t0)
                             .count();
        nlohmann::ordered_json j;
        j["step"] = m.step;
        j["loss"] = m.loss;
        j["lr"] = m.lr;
        j["wallclock_ms"] = m.wallclock_ms;
        metrics_out << j.dump() << "\n";
        result.metrics.push_back(m);
    }

    save_checkpoint(model, out_prefix);
    result.checkpoint = out_prefix;
    return result;
}

}  // namespace trsd
