#include "trsd/cli_commands.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "trsd/checkpoint.hpp"
#include "trsd/generate.hpp"

namespace trsd {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed,
                         const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (allowed.find(key) == allowed.end()) {
            throw ConfigError("unknown config key '" + key + "' in " + where);
        }
    }
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) {
        out = j.at(key).get<T>();
    }
}

}  // namespace

RunConfig load_run_config(const std::string& config_path) {
    RunConfig cfg;
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) {
            throw ConfigError("cannot open config file: " + config_path);
        }
        json j;
        try {
            j = json::parse(in);
        } catch (const json::exception& e) {
            throw ConfigError(std::string("bad config: ") + e.what());
        }
        reject_unknown_keys(
            j, {"seed", "out_dir", "workers", "model", "data", "sft", "distill", "eval"},
            "config root");
        maybe(j, "seed", cfg.seed);
        maybe(j, "out_dir", cfg.out_dir);
        maybe(j, "workers", cfg.workers);
        if (j.contains("model")) {
            const json& m = j["model"];
            reject_unknown_keys(m, {"context_length", "n_layers", "n_heads", "d_model", "d_ff"},
                                "model");
            maybe(m, "context_length", cfg.model.context_length);
            maybe(m, "n_layers", cfg.model.n_layers);
            maybe(m, "n_heads", cfg.model.n_heads);
            maybe(m, "d_model", cfg.model.d_model);
            maybe(m, "d_ff", cfg.model.d_ff);
        }
        if (j.contains("data")) {
            const json& d = j["data"];
            reject_unknown_keys(d,
                                {"train_per_task", "eval_per_task", "chain_difficulties",
                                 "chain_eval_difficulty", "countdown_operands", "redundancy"},
                                "data");
            maybe(d, "train_per_task", cfg.data.train_per_task);
            maybe(d, "eval_per_task", cfg.data.eval_per_task);
            maybe(d, "chain_difficulties", cfg.data.chain_difficulties);
            maybe(d, "chain_eval_difficulty", cfg.data.chain_eval_difficulty);
            maybe(d, "countdown_operands", cfg.data.countdown_operands);
            maybe(d, "redundancy", cfg.data.redundancy);
        }
        if (j.contains("sft")) {
            const json& s = j["sft"];
            reject_unknown_keys(
                s, {"steps", "batch_size", "lr", "lr_final", "clip_norm", "loss_mask"}, "sft");
            maybe(s, "steps", cfg.sft.steps);
            maybe(s, "batch_size", cfg.sft.batch_size);
            maybe(s, "lr", cfg.sft.lr);
            maybe(s, "lr_final", cfg.sft.lr_final);
            maybe(s, "clip_norm", cfg.sft.clip_norm);
            if (s.contains("loss_mask")) {
                cfg.sft.loss_mask = loss_mask_from_string(s.at("loss_mask").get<std::string>());
            }
        }
        if (j.contains("distill")) {
            const json& d = j["distill"];
            reject_unknown_keys(d,
                                {"steps", "batch_size", "lr", "beta1", "beta2", "eps",
                                 "weight_decay", "clip_norm", "gen_temperature",
                                 "teacher_budget", "checkpoint_steps", "prompt_dataset"},
                                "distill");
            maybe(d, "steps", cfg.distill.steps);
            maybe(d, "batch_size", cfg.distill.batch_size);
            maybe(d, "lr", cfg.distill.lr);
            maybe(d, "beta1", cfg.distill.beta1);
            maybe(d, "beta2", cfg.distill.beta2);
            maybe(d, "eps", cfg.distill.eps);
            maybe(d, "weight_decay", cfg.distill.weight_decay);
            maybe(d, "clip_norm", cfg.distill.clip_norm);
            maybe(d, "gen_temperature", cfg.distill.gen_temperature);
            maybe(d, "teacher_budget", cfg.distill.teacher_budget);
            maybe(d, "checkpoint_steps", cfg.distill.checkpoint_steps);
            maybe(d, "prompt_dataset", cfg.distill_prompt_dataset);
        }
        if (j.contains("eval")) {
            const json& e = j["eval"];
            reject_unknown_keys(e, {"budgets", "temperature", "prompts", "greedy"}, "eval");
            maybe(e, "budgets", cfg.eval.budgets);
            maybe(e, "temperature", cfg.eval.temperature);
            maybe(e, "prompts", cfg.eval.prompts);
            maybe(e, "greedy", cfg.eval.greedy);
        }
    }

    cfg.model.vocab_size = task_vocab().size();
    cfg.model.validate();
    // substream roots derive from the single run seed
    cfg.sft.seed = stream_key(cfg.seed, "sft");
    cfg.distill.seed = stream_key(cfg.seed, "distill");

    if (const char* root = std::getenv("TRSD_OUT");
        root != nullptr && !std::filesystem::path(cfg.out_dir).is_absolute()) {
        cfg.out_dir = (std::filesystem::path(root) / cfg.out_dir).string();
    }
    return cfg;
}

RunPaths::RunPaths(const RunConfig& cfg) {
    root = cfg.out_dir;
    data_dir = root + "/data";
    eval_dir = root + "/eval";
    distill_dir = root + "/distill";
    teacher_prefix = root + "/teacher";
}

std::string RunPaths::dataset_file(const std::string& name, bool train) const {
    return data_dir + "/" + name + (train ? "_train.jsonl" : "_eval.jsonl");
}

std::string RunPaths::student_prefix(int step) const {
    return distill_dir + "/student_step" + std::to_string(step);
}

std::vector<TaskInstance> load_instances(const std::string& path, int limit) {
    std::ifstream in(path);
    if (!in) {
        throw IOError("cannot read dataset: " + path);
    }
    std::vector<TaskInstance> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        out.push_back(dataset_from_line(line).first);
        if (limit > 0 && static_cast<int>(out.size()) >= limit) {
            break;
        }
    }
    return out;
}

std::vector<ReferenceTrace> load_references(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IOError("cannot read dataset: " + path);
    }
    std::vector<ReferenceTrace> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) {
            out.push_back(dataset_from_line(line).second);
        }
    }
    return out;
}

// ---------------------------------------------------------------- gen-data

namespace {

void write_dataset(const std::string& path,
                   const std::vector<std::pair<TaskInstance, ReferenceTrace>>& items) {
    const std::filesystem::path p(path);
    if (p.has_parent_path()) {
        std::filesystem::create_directories(p.parent_path());
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IOError("cannot write dataset: " + path);
    }
    for (const auto& [inst, ref] : items) {
        out << dataset_line(inst, ref) << "\n";
    }
}

// draws eval instances whose prompts do not collide with the train split
std::vector<std::pair<TaskInstance, ReferenceTrace>> disjoint_eval(
    const std::function<std::vector<std::pair<TaskInstance, ReferenceTrace>>(uint64_t, int)>&
        gen,
    uint64_t seed, int want, const std::set<std::string>& train_prompts) {
    std::vector<std::pair<TaskInstance, ReferenceTrace>> kept;
    std::set<std::string> seen;
    uint64_t round = 0;
    while (static_cast<int>(kept.size()) < want && round < 64) {
        auto batch = gen(stream_key(seed, "round", round), want);
        for (auto& item : batch) {
            const std::string& prompt = item.first.prompt_text;
            if (train_prompts.count(prompt) != 0 || seen.count(prompt) != 0) {
                continue;
            }
            seen.insert(prompt);
            kept.push_back(std::move(item));
            if (static_cast<int>(kept.size()) >= want) {
                break;
            }
        }
        ++round;
    }
    return kept;
}

}  // namespace

void cmd_gen_data(const RunConfig& cfg) {
    const RunPaths paths(cfg);
    const uint64_t dseed = stream_key(cfg.seed, "data");

    // chain arithmetic: train mixes the configured difficulties, eval is the
    // held-out difficulty with prompts disjoint from train
    std::vector<std::pair<TaskInstance, ReferenceTrace>> chain_train;
    const int n_diff = static_cast<int>(cfg.data.chain_difficulties.size());
    for (int di = 0; di < n_diff; ++di) {
        const int d = cfg.data.chain_difficulties[static_cast<size_t>(di)];
        const int count = cfg.data.train_per_task / n_diff +
                          (di == n_diff - 1 ? cfg.data.train_per_task % n_diff : 0);
        auto part = gen_chain_arith(stream_key(dseed, "chain_train"), d, count,
                                    cfg.data.redundancy);
        chain_train.insert(chain_train.end(), std::make_move_iterator(part.begin()),
                           std::make_move_iterator(part.end()));
    }
    std::set<std::string> chain_prompts;
    for (const auto& [inst, ref] : chain_train) {
        (void)ref;
        chain_prompts.insert(inst.prompt_text);
    }
    auto chain_eval = disjoint_eval(
        [&](uint64_t s, int n) {
            return gen_chain_arith(s, cfg.data.chain_eval_difficulty, n, cfg.data.redundancy);
        },
        stream_key(dseed, "chain_eval"), cfg.data.eval_per_task, chain_prompts);

    auto cd_train = gen_mini_countdown(stream_key(dseed, "countdown_train"),
                                       cfg.data.countdown_operands, cfg.data.train_per_task,
                                       cfg.data.redundancy);
    std::set<std::string> cd_prompts;
    for (const auto& [inst, ref] : cd_train) {
        (void)ref;
        cd_prompts.insert(inst.prompt_text);
    }
    auto cd_eval = disjoint_eval(
        [&](uint64_t s, int n) {
            return gen_mini_countdown(s, cfg.data.countdown_operands, n, cfg.data.redundancy);
        },
        stream_key(dseed, "countdown_eval"), cfg.data.eval_per_task, cd_prompts);

    write_dataset(paths.dataset_file("chain_arith", true), chain_train);
    write_dataset(paths.dataset_file("chain_arith", false), chain_eval);
    write_dataset(paths.dataset_file("mini_countdown", true), cd_train);
    write_dataset(paths.dataset_file("mini_countdown", false), cd_eval);
}

// ---------------------------------------------------------------- train-sft

void cmd_train_sft(const RunConfig& cfg, bool force) {
    const RunPaths paths(cfg);
    if (checkpoint_exists(paths.teacher_prefix) && !force) {
        throw IOError("teacher checkpoint exists at " + paths.teacher_prefix +
                      " (use --force to overwrite)");
    }
    const auto refs = load_references(paths.dataset_file("chain_arith", true));
    train_sft(refs, cfg.model, cfg.sft, paths.teacher_prefix, cfg.workers);
}

// ------------------------------------------------------------------ distill

void cmd_distill(const RunConfig& cfg, bool resume, bool force) {
    const RunPaths paths(cfg);
    const std::string final_prefix = paths.student_prefix(cfg.distill.steps);
    if (!resume && !force && checkpoint_exists(final_prefix)) {
        throw IOError("distilled checkpoints exist in " + paths.distill_dir +
                      " (use --resume or --force)");
    }
    const auto instances =
        load_instances(paths.dataset_file(cfg.distill_prompt_dataset, true));
    std::vector<TokenSeq> prompts;
    prompts.reserve(instances.size());
    const Vocab& vocab = task_vocab();
    for (const TaskInstance& inst : instances) {
        prompts.push_back(vocab.encode_text(inst.prompt_text));
    }
    run_distillation(paths.teacher_prefix, prompts, cfg.distill, paths.distill_dir, resume,
                     cfg.workers);
}

// ----------------------------------------------------------------- evaluate

namespace {

struct NamedModel {
    std::string name;
    int step = -1;  // training step for checkpoint selection; -1 for baseline
    ModelState<float> model;
};

std::string records_path(const RunPaths& paths, const std::string& model_name,
                         const std::string& dataset) {
    return paths.eval_dir + "/" + model_name + "_" + dataset + ".records.jsonl";
}

std::string curve_path(const RunPaths& paths, const std::string& model_name,
                       const std::string& dataset) {
    return paths.eval_dir + "/" + model_name + "_" + dataset + ".curve.csv";
}

double mean_over_budgets(const BudgetCurve& curve) {
    double sum = 0.0;
    for (double a : curve.accuracy) {
        sum += a;
    }
    return curve.accuracy.empty() ? 0.0 : sum / static_cast<double>(curve.accuracy.size());
}

void write_comparison(const std::string& path, const std::string& dataset,
                      const BudgetCurve& baseline, const BudgetCurve& trsd,
                      const std::string& trsd_name) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IOError("cannot write " + path);
    }
    out << "# " << dataset << ": baseline vs " << trsd_name << "\n\n";
    out << "| budget | baseline | trsd | delta |\n";
    out << "|-------:|---------:|-----:|------:|\n";
    char buf[128];
    for (size_t i = 0; i < baseline.budgets.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "| %d | %.4f | %.4f | %+.4f |\n", baseline.budgets[i],
                      baseline.accuracy[i], trsd.accuracy[i],
                      trsd.accuracy[i] - baseline.accuracy[i]);
        out << buf;
    }
    out << "\nthink length at max budget (correct/wrong):\n";
    std::snprintf(buf, sizeof(buf), "baseline %.2f / %.2f, trsd %.2f / %.2f\n",
                  baseline.mean_len_correct, baseline.mean_len_wrong, trsd.mean_len_correct,
                  trsd.mean_len_wrong);
    out << buf;
}

}  // namespace

void cmd_evaluate(const RunConfig& cfg) {
    const RunPaths paths(cfg);
    std::filesystem::create_directories(paths.eval_dir);

    std::vector<NamedModel> models;
    models.push_back({"baseline", -1, load_checkpoint(paths.teacher_prefix)});
    for (int s : cfg.distill.checkpoint_steps) {
        const std::string prefix = paths.student_prefix(s);
        if (!checkpoint_exists(prefix)) {
            throw IOError("missing distilled checkpoint " + prefix + "; run distill first");
        }
        models.push_back({"trsd_step" + std::to_string(s), s, load_checkpoint(prefix)});
    }

    const std::vector<std::string> datasets = {"chain_arith", "mini_countdown"};
    std::map<std::string, std::map<std::string, BudgetCurve>> curves;  // model -> dataset
    for (const std::string& ds : datasets) {
        const auto instances =
            load_instances(paths.dataset_file(ds, false), cfg.eval.prompts);
        for (const NamedModel& nm : models) {
            const uint64_t seed = stream_key(cfg.seed, "eval", nm.name, ds);
            const SweepResult sweep =
                sweep_budgets(nm.model, instances, cfg.eval.budgets, cfg.eval.temperature,
                              seed, cfg.workers, cfg.eval.greedy);
            write_records(records_path(paths, nm.name, ds), sweep.records);
            write_curve_csv(curve_path(paths, nm.name, ds), sweep.curve);
            curves[nm.name][ds] = sweep.curve;
        }
    }

    // checkpoint selection from per-dataset mean accuracy over the ladder
    std::vector<CheckpointScore> scores;
    for (const NamedModel& nm : models) {
        if (nm.step < 0) {
            continue;
        }
        std::map<std::string, double> per_dataset;
        for (const std::string& ds : datasets) {
            per_dataset[ds] = mean_over_budgets(curves[nm.name][ds]);
        }
        scores.push_back(make_checkpoint_score(nm.name, nm.step, per_dataset));
    }

    nlohmann::ordered_json report;
    auto table = nlohmann::ordered_json::array();
    for (const CheckpointScore& s : scores) {
        nlohmann::ordered_json row;
        row["checkpoint"] = s.checkpoint_id;
        row["step"] = s.step;
        for (const auto& [ds, acc] : s.per_dataset_accuracy) {
            row[ds] = acc;
        }
        row["mean"] = s.mean_accuracy;
        table.push_back(row);
    }
    report["scores"] = table;
    nlohmann::ordered_json in_dist;
    for (const std::string& ds : datasets) {
        in_dist[ds] = select_checkpoint_in_dist(scores, ds);
    }
    report["in_distribution"] = in_dist;
    report["out_of_distribution"] = select_checkpoint_ood(scores);
    {
        std::ofstream out(paths.eval_dir + "/selection.json", std::ios::trunc);
        out << report.dump(2) << "\n";
    }

    // per-dataset comparison vs the in-distribution selection, plus plots
    for (const std::string& ds : datasets) {
        const std::string chosen = in_dist[ds].get<std::string>();
        write_comparison(paths.eval_dir + "/" + ds + "_comparison.md", ds,
                         curves["baseline"][ds], curves[chosen][ds], chosen);
        std::vector<CurveSeries> series;
        series.push_back({"baseline", curves["baseline"][ds].budgets,
                          curves["baseline"][ds].accuracy});
        series.push_back({chosen, curves[chosen][ds].budgets, curves[chosen][ds].accuracy});
        write_budget_plot_svg(paths.eval_dir + "/" + ds + "_budget_curve.svg", series);
    }
}

// -------------------------------------------------------------- dump-traces

void cmd_dump_traces(const RunConfig& cfg, const std::string& filter, int count) {
    if (!filter.empty() && filter != "both-correct" && filter != "both-wrong") {
        throw ConfigError("filter must be empty, both-correct, or both-wrong");
    }
    const RunPaths paths(cfg);
    const ModelState<float> baseline = load_checkpoint(paths.teacher_prefix);

    // use the out-of-distribution selection when available, else the last step
    std::string student_prefix;
    const std::string selection_file = paths.eval_dir + "/selection.json";
    if (std::filesystem::exists(selection_file)) {
        std::ifstream in(selection_file);
        json j = json::parse(in);
        const std::string name = j.at("out_of_distribution").get<std::string>();
        student_prefix = paths.distill_dir + "/student_step" + name.substr(name.rfind("step") + 4);
    } else {
        student_prefix = paths.student_prefix(cfg.distill.steps);
    }
    const ModelState<float> student = load_checkpoint(student_prefix);

    const auto instances = load_instances(paths.dataset_file("chain_arith", false));
    const int max_budget = cfg.eval.budgets.back();
    const Vocab& vocab = task_vocab();

    std::filesystem::create_directories(paths.eval_dir);
    std::ofstream out(paths.eval_dir + "/trace_dump.txt", std::ios::trunc);
    if (!out) {
        throw IOError("cannot write trace dump");
    }

    Rng pick_rng(stream_key(cfg.seed, "dump", "pick"));
    int emitted = 0;
    int attempts = 0;
    while (emitted < count && attempts < static_cast<int>(instances.size())) {
        const size_t idx = pick_rng.below(instances.size());
        ++attempts;
        const TaskInstance& inst = instances[idx];
        const TokenSeq prompt = vocab.encode_text(inst.prompt_text);

        auto one = [&](const ModelState<float>& m, const char* tag) {
            Rng rng(stream_key(cfg.seed, "dump", tag, static_cast<uint64_t>(idx)));
            const RawGeneration raw =
                generate_raw(m, prompt, max_budget, cfg.eval.temperature, rng);
            const SanitizeReport rep =
                sanitize(raw, prompt, model_forcer(m, cfg.eval.temperature, rng));
            return rep.trace;
        };
        const TaggedTrace bt = one(baseline, "baseline");
        const TaggedTrace st = one(student, "student");
        const bool b_ok = verify_answer(inst, vocab.decode_text(bt.answer_body));
        const bool s_ok = verify_answer(inst, vocab.decode_text(st.answer_body));
        if (filter == "both-correct" && !(b_ok && s_ok)) {
            continue;
        }
        if (filter == "both-wrong" && (b_ok || s_ok)) {
            continue;
        }
        out << "=== prompt: " << inst.prompt_text << " (gold " << inst.gold_answer << ")\n";
        out << "baseline [" << (b_ok ? "correct" : "wrong")
            << "] think: " << vocab.decode_text(bt.think_body)
            << "\nbaseline answer: " << vocab.decode_text(bt.answer_body) << "\n";
        out << "trsd     [" << (s_ok ? "correct" : "wrong")
            << "] think: " << vocab.decode_text(st.think_body)
            << "\ntrsd answer: " << vocab.decode_text(st.answer_body) << "\n\n";
        ++emitted;
    }
}

// ------------------------------------------------------------------- report

void cmd_report(const RunConfig& cfg) {
    const RunPaths paths(cfg);
    const std::string selection_file = paths.eval_dir + "/selection.json";
    if (!std::filesystem::exists(selection_file)) {
        throw IOError("no evaluation artifacts under " + paths.eval_dir + "; run evaluate");
    }
    std::ifstream in(selection_file);
    json sel = json::parse(in);
    for (const std::string ds : {"chain_arith", "mini_countdown"}) {
        const std::string chosen = sel.at("in_distribution").at(ds).get<std::string>();
        const BudgetCurve baseline = read_curve_csv(curve_path(paths, "baseline", ds));
        const BudgetCurve trsd = read_curve_csv(curve_path(paths, chosen, ds));
        write_comparison(paths.eval_dir + "/" + ds + "_comparison.md", ds, baseline, trsd,
                         chosen);
        std::vector<CurveSeries> series;
        series.push_back({"baseline", baseline.budgets, baseline.accuracy});
        series.push_back({chosen, trsd.budgets, trsd.accuracy});
        write_budget_plot_svg(paths.eval_dir + "/" + ds + "_budget_curve.svg", series);
    }
}

}  // namespace trsd
