#include "trsd/eval.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "trsd/generate.hpp"
#include "trsd/trainer_util.hpp"

namespace trsd {

namespace {

int think_len_of(const RawGeneration& raw) {
    // tokens sampled in the reasoning region: after the leading <think>,
    // up to the first </think>
    for (size_t i = 1; i < raw.tokens.size(); ++i) {
        if (raw.tokens[i] == Vocab::kThinkClose) {
            return static_cast<int>(i) - 1;
        }
    }
    return static_cast<int>(raw.tokens.size()) - 1;
}

EvalRecord record_from_raw(const ModelState<float>& model, const TaskInstance& instance,
                           const RawGeneration& raw, const TokenSeq& prompt, int budget,
                           double temperature, Rng& rng) {
    const SanitizeReport rep = sanitize(raw, prompt, model_forcer(model, temperature, rng));
    EvalRecord rec;
    rec.budget = budget;
    rec.generated_think_len = think_len_of(raw);
    rec.forced = rep.forced;
    rec.answer_text = task_vocab().decode_text(rep.trace.answer_body);
    rec.correct = verify_answer(instance, rec.answer_text);
    return rec;
}

}  // namespace

EvalRecord generate_with_budget(const ModelState<float>& model, const TaskInstance& instance,
                                int budget, double temperature, Rng& rng) {
    if (budget < 0) {
        throw InvalidConfig("budget must be >= 0");
    }
    const TokenSeq prompt = task_vocab().encode_text(instance.prompt_text);
    const RawGeneration raw = generate_raw(model, prompt, budget, temperature, rng);
    return record_from_raw(model, instance, raw, prompt, budget, temperature, rng);
}

BudgetCurve aggregate_curve(const std::vector<EvalRecord>& records,
                            const std::vector<int>& budgets) {
    BudgetCurve curve;
    curve.budgets = budgets;
    const int max_budget = budgets.empty() ? -1 : budgets.back();
    double len_correct = 0.0, len_wrong = 0.0;
    for (int b : budgets) {
        int n = 0, correct = 0, forced = 0;
        for (const EvalRecord& r : records) {
            if (r.budget != b) {
                continue;
            }
            ++n;
            correct += r.correct ? 1 : 0;
            forced += r.forced ? 1 : 0;
            if (b == max_budget) {
                if (r.correct) {
                    len_correct += r.generated_think_len;
                    ++curve.n_correct_at_max;
                } else {
                    len_wrong += r.generated_think_len;
                    ++curve.n_wrong_at_max;
                }
            }
        }
        curve.n.push_back(n);
        curve.accuracy.push_back(n > 0 ? static_cast<double>(correct) / n : 0.0);
        curve.forced_frac.push_back(n > 0 ? static_cast<double>(forced) / n : 0.0);
    }
    curve.mean_len_correct =
        curve.n_correct_at_max > 0 ? len_correct / curve.n_correct_at_max : 0.0;
    curve.mean_len_wrong = curve.n_wrong_at_max > 0 ? len_wrong / curve.n_wrong_at_max : 0.0;
    return curve;
}

SweepResult sweep_budgets(const ModelState<float>& model,
                          const std::vector<TaskInstance>& dataset,
                          const std::vector<int>& budgets, double temperature, uint64_t seed,
                          int n_workers, bool greedy_fast) {
    if (!std::is_sorted(budgets.begin(), budgets.end())) {
        throw InvalidConfig("budgets must be sorted ascending");
    }
    if (greedy_fast && temperature != 0.0) {
        throw InvalidConfig("the prefix-sharing fast path requires temperature 0");
    }
    const size_t n_budgets = budgets.size();
    SweepResult out;
    out.records.assign(dataset.size() * n_budgets, {});

    const Vocab& vocab = task_vocab();
    parallel_batch(static_cast<int>(dataset.size()), n_workers, [&](int pid, int) {
        const TaskInstance& instance = dataset[static_cast<size_t>(pid)];
        const TokenSeq prompt = vocab.encode_text(instance.prompt_text);

        if (!greedy_fast) {
            for (size_t bi = 0; bi < n_budgets; ++bi) {
                Rng rng(stream_key(seed, "eval", static_cast<uint64_t>(pid),
                                   static_cast<uint64_t>(budgets[bi])));
                EvalRecord rec = generate_with_budget(model, instance, budgets[bi],
                                                      temperature, rng);
                rec.prompt_id = pid;
                out.records[static_cast<size_t>(pid) * n_budgets + bi] = rec;
            }
            return;
        }

        // Greedy prefix sharing: the reasoning stream is generated once at
        // the top budget; every smaller budget sees the identical prefix, so
        // records match independent generation token for token.
        Rng rng(0);  // greedy decoding consumes no randomness
        const int max_budget = budgets.back();
        const RawGeneration full = generate_raw(model, prompt, max_budget, 0.0, rng);
        const int stream_len = think_len_of(full);
        const bool closed = static_cast<size_t>(stream_len) + 1 < full.tokens.size() &&
                            full.tokens[static_cast<size_t>(stream_len) + 1] ==
                                Vocab::kThinkClose;

        EvalRecord shared;
        bool have_shared = false;
        for (size_t bi = 0; bi < n_budgets; ++bi) {
            const int b = budgets[bi];
            EvalRecord rec;
            // </think> does not count against the budget, so the unforced
            // generation needs strictly more than stream_len
            if (closed && b > stream_len) {
                if (!have_shared) {
                    shared = record_from_raw(model, instance, full, prompt, b, 0.0, rng);
                    have_shared = true;
                }
                rec = shared;
                rec.budget = b;
            } else {
                RawGeneration cut;
                const int keep = std::min(b, stream_len);
                cut.tokens.assign(full.tokens.begin(), full.tokens.begin() + 1 + keep);
                cut.truncated_by_budget = b <= stream_len;
                rec = record_from_raw(model, instance, cut, prompt, b, 0.0, rng);
            }
            rec.prompt_id = pid;
            out.records[static_cast<size_t>(pid) * n_budgets + bi] = rec;
        }
    });

    out.curve = aggregate_curve(out.records, budgets);
    return out;
}

// ------------------------------------------------------ checkpoint selection

CheckpointScore make_checkpoint_score(std::string id, int step,
                                      std::map<std::string, double> per_dataset) {
    CheckpointScore s;
    s.checkpoint_id = std::move(id);
    s.step = step;
    s.per_dataset_accuracy = std::move(per_dataset);
    double sum = 0.0;
    for (const auto& [k, v] : s.per_dataset_accuracy) {
        (void)k;
        sum += v;
    }
    s.mean_accuracy = s.per_dataset_accuracy.empty()
                          ? 0.0
                          : sum / static_cast<double>(s.per_dataset_accuracy.size());
    return s;
}

std::string select_checkpoint_in_dist(const std::vector<CheckpointScore>& scores,
                                      const std::string& dataset) {
    if (scores.empty()) {
        throw IncompleteScores("no checkpoint scores");
    }
    const CheckpointScore* best = nullptr;
    double best_acc = 0.0;
    for (const CheckpointScore& s : scores) {
        const auto it = s.per_dataset_accuracy.find(dataset);
        if (it == s.per_dataset_accuracy.end()) {
            throw MissingDataset("score for " + s.checkpoint_id + " lacks dataset " + dataset);
        }
        if (best == nullptr || it->second > best_acc ||
            (it->second == best_acc && s.step < best->step)) {
            best = &s;
            best_acc = it->second;
        }
    }
    return best->checkpoint_id;
}

std::string select_checkpoint_ood(const std::vector<CheckpointScore>& scores) {
    if (scores.empty()) {
        throw IncompleteScores("no checkpoint scores");
    }
    for (const CheckpointScore& s : scores) {
        if (s.per_dataset_accuracy.size() != scores[0].per_dataset_accuracy.size()) {
            throw IncompleteScores("checkpoint scores cover different dataset sets");
        }
        for (const auto& [k, v] : scores[0].per_dataset_accuracy) {
            (void)v;
            if (s.per_dataset_accuracy.find(k) == s.per_dataset_accuracy.end()) {
                throw IncompleteScores("score for " + s.checkpoint_id + " lacks dataset " + k);
            }
        }
    }
    const CheckpointScore* best = nullptr;
    double best_mean = 0.0;
    for (const CheckpointScore& s : scores) {
        double sum = 0.0;
        for (const auto& [k, v] : s.per_dataset_accuracy) {
            (void)k;
            sum += v;
        }
        const double mean = sum / static_cast<double>(s.per_dataset_accuracy.size());
        if (best == nullptr || mean > best_mean ||
            (mean == best_mean && s.step < best->step)) {
            best = &s;
            best_mean = mean;
        }
    }
    return best->checkpoint_id;
}

// -------------------------------------------------------------- file formats

std::string eval_record_line(const EvalRecord& r) {
    nlohmann::ordered_json j;
    j["prompt_id"] = r.prompt_id;
    j["budget"] = r.budget;
    j["generated_think_len"] = r.generated_think_len;
    j["forced"] = r.forced;
    j["answer_text"] = r.answer_text;
    j["correct"] = r.correct;
    return j.dump();
}

EvalRecord eval_record_from_line(const std::string& line) {
    nlohmann::json j = nlohmann::json::parse(line);
    EvalRecord r;
    r.prompt_id = j.at("prompt_id").get<int>();
    r.budget = j.at("budget").get<int>();
    r.generated_think_len = j.at("generated_think_len").get<int>();
    r.forced = j.at("forced").get<bool>();
    r.answer_text = j.at("answer_text").get<std::string>();
    r.correct = j.at("correct").get<bool>();
    return r;
}

void write_records(const std::string& path, const std::vector<EvalRecord>& records) {
    const std::filesystem::path p(path);
    if (p.has_parent_path()) {
        std::filesystem::create_directories(p.parent_path());
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IOError("cannot write " + path);
    }
    for (const EvalRecord& r : records) {
        out << eval_record_line(r) << "\n";
    }
}

std::vector<EvalRecord> read_records(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IOError("cannot read " + path);
    }
    std::vector<EvalRecord> records;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) {
            records.push_back(eval_record_from_line(line));
        }
    }
    return records;
}

namespace {

std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", x);
    return buf;
}

}  // namespace

void write_curve_csv(const std::string& path, const BudgetCurve& curve) {
    const std::filesystem::path p(path);
    if (p.has_parent_path()) {
        std::filesystem::create_directories(p.parent_path());
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IOError("cannot write " + path);
    }
    out << "budget,accuracy,n,forced_frac\n";
    for (size_t i = 0; i < curve.budgets.size(); ++i) {
        out << curve.budgets[i] << "," << fmt(curve.accuracy[i]) << "," << curve.n[i] << ","
            << fmt(curve.forced_frac[i]) << "\n";
    }
    out << "mean_len_correct,mean_len_wrong,n_correct_at_max,n_wrong_at_max\n";
    out << fmt(curve.mean_len_correct) << "," << fmt(curve.mean_len_wrong) << ","
        << curve.n_correct_at_max << "," << curve.n_wrong_at_max << "\n";
}

BudgetCurve read_curve_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IOError("cannot read " + path);
    }
    BudgetCurve curve;
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (line.rfind("mean_len_correct", 0) == 0) {
            break;
        }
        std::stringstream ss(line);
        std::string field;
        std::getline(ss, field, ',');
        curve.budgets.push_back(std::stoi(field));
        std::getline(ss, field, ',');
        curve.accuracy.push_back(std::stod(field));
        std::getline(ss, field, ',');
        curve.n.push_back(std::stoi(field));
        std::getline(ss, field, ',');
        curve.forced_frac.push_back(std::stod(field));
    }
    if (std::getline(in, line)) {
        std::stringstream ss(line);
        std::string field;
        std::getline(ss, field, ',');
        curve.mean_len_correct = std::stod(field);
        std::getline(ss, field, ',');
        curve.mean_len_wrong = std::stod(field);
        std::getline(ss, field, ',');
        curve.n_correct_at_max = std::stoi(field);
        std::getline(ss, field, ',');
        curve.n_wrong_at_max = std::stoi(field);
    }
    return curve;
}

void write_budget_plot_svg(const std::string& path, const std::vector<CurveSeries>& series) {
    const int W = 640, H = 420, ml = 60, mr = 160, mt = 30, mb = 50;
    const int pw = W - ml - mr, ph = H - mt - mb;
    double lo = 1e30, hi = -1e30;
    for (const CurveSeries& s : series) {
        for (int b : s.budgets) {
            lo = std::min(lo, static_cast<double>(std::max(1, b)));
            hi = std::max(hi, static_cast<double>(std::max(1, b)));
        }
    }
    if (series.empty() || lo > hi) {
        lo = 1;
        hi = 2;
    }
    const double llo = std::log2(lo), lhi = std::log2(hi > lo ? hi : lo * 2);
    auto px = [&](int budget) {
        const double t = (std::log2(static_cast<double>(std::max(1, budget))) - llo) /
                         (lhi - llo);
        return ml + t * pw;
    };
    auto py = [&](double acc) { return mt + (1.0 - acc) * ph; };

    static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                    "#9467bd", "#8c564b"};
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IOError("cannot write " + path);
    }
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
        << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    out << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    // axes
    out << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw << "\" y2=\""
        << mt + ph << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << mt + ph
        << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 10; i += 2) {
        const double acc = i / 10.0;
        out << "<line x1=\"" << ml - 4 << "\" y1=\"" << py(acc) << "\" x2=\"" << ml
            << "\" y2=\"" << py(acc) << "\" stroke=\"black\"/>\n";
        out << "<text x=\"" << ml - 8 << "\" y=\"" << py(acc) + 4
            << "\" text-anchor=\"end\">" << fmt(acc).substr(0, 3) << "</text>\n";
    }
    if (!series.empty()) {
        for (int b : series[0].budgets) {
            out << "<line x1=\"" << px(b) << "\" y1=\"" << mt + ph << "\" x2=\"" << px(b)
                << "\" y2=\"" << mt + ph + 4 << "\" stroke=\"black\"/>\n";
            out << "<text x=\"" << px(b) << "\" y=\"" << mt + ph + 18
                << "\" text-anchor=\"middle\">" << b << "</text>\n";
        }
    }
    out << "<text x=\"" << ml + pw / 2 << "\" y=\"" << H - 12
        << "\" text-anchor=\"middle\">reasoning budget (tokens)</text>\n";
    out << "<text x=\"16\" y=\"" << mt + ph / 2
        << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << mt + ph / 2
        << ")\">accuracy</text>\n";
    for (size_t si = 0; si < series.size(); ++si) {
        const CurveSeries& s = series[si];
        const char* color = kColors[si % 6];
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (size_t i = 0; i < s.budgets.size(); ++i) {
            out << px(s.budgets[i]) << "," << py(s.accuracy[i]) << " ";
        }
        out << "\"/>\n";
        for (size_t i = 0; i < s.budgets.size(); ++i) {
            out << "<circle cx=\"" << px(s.budgets[i]) << "\" cy=\"" << py(s.accuracy[i])
                << "\" r=\"3\" fill=\"" << color << "\"/>\n";
        }
        const double ly = mt + 10 + 18 * static_cast<double>(si);
        out << "<line x1=\"" << ml + pw + 10 << "\" y1=\"" << ly << "\" x2=\"" << ml + pw + 34
            << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        out << "<text x=\"" << ml + pw + 40 << "\" y=\"" << ly + 4 << "\">" << s.label
            << "</text>\n";
    }
    out << "</svg>\n";
}

}  // namespace trsd
