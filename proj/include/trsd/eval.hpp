#pragma once

#include <map>
#include <string>
#include <vector>

#include "trsd/model.hpp"
#include "trsd/tasks.hpp"

namespace trsd {

struct EvalRecord {
    int prompt_id = 0;
    int budget = 0;
    int generated_think_len = 0;  // sampled reasoning tokens, always <= budget
    bool forced = false;
    std::string answer_text;
    bool correct = false;
};

struct BudgetCurve {
    std::vector<int> budgets;
    std::vector<double> accuracy;
    std::vector<int> n;
    std::vector<double> forced_frac;
    // think-length statistics at the maximum budget, split by correctness
    double mean_len_correct = 0.0;
    double mean_len_wrong = 0.0;
    int n_correct_at_max = 0;
    int n_wrong_at_max = 0;
};

struct SweepResult {
    std::vector<EvalRecord> records;  // prompt-major, then budget
    BudgetCurve curve;
};

// Budget-limited generation for one prompt: reasoning sampled after
// prompt·<think> up to `budget` tokens; on exhaustion the end-of-thinking and
// answer tags are appended and the answer is forced.
EvalRecord generate_with_budget(const ModelState<float>& model, const TaskInstance& instance,
                                int budget, double temperature, Rng& rng);

// Evaluates every prompt at every budget (fresh generation per pair, RNG
// keyed on (seed, prompt_id, budget)). greedy_fast enables the
// prefix-sharing path, valid only at temperature 0 where it is provably
// token-identical to independent generation.
SweepResult sweep_budgets(const ModelState<float>& model,
                          const std::vector<TaskInstance>& dataset,
                          const std::vector<int>& budgets, double temperature, uint64_t seed,
                          int n_workers = 1, bool greedy_fast = false);

BudgetCurve aggregate_curve(const std::vector<EvalRecord>& records,
                            const std::vector<int>& budgets);

// ------------------------------------------------------ checkpoint selection

struct CheckpointScore {
    std::string checkpoint_id;
    int step = 0;
    std::map<std::string, double> per_dataset_accuracy;
    double mean_accuracy = 0.0;
};

CheckpointScore make_checkpoint_score(std::string id, int step,
                                      std::map<std::string, double> per_dataset);

// Best accuracy on the named dataset; ties go to the earliest training step.
std::string select_checkpoint_in_dist(const std::vector<CheckpointScore>& scores,
                                      const std::string& dataset);

// Best mean accuracy across all datasets; ties go to the earliest step.
std::string select_checkpoint_ood(const std::vector<CheckpointScore>& scores);

// -------------------------------------------------------------- file formats

std::string eval_record_line(const EvalRecord& r);
EvalRecord eval_record_from_line(const std::string& line);
void write_records(const std::string& path, const std::vector<EvalRecord>& records);
std::vector<EvalRecord> read_records(const std::string& path);

// CSV: budget,accuracy,n,forced_frac rows plus a summary record with the
// length-by-correctness means at the maximum budget.
void write_curve_csv(const std::string& path, const BudgetCurve& curve);
BudgetCurve read_curve_csv(const std::string& path);

struct CurveSeries {
    std::string label;
    std::vector<int> budgets;
    std::vector<double> accuracy;
};

// Standalone accuracy-vs-log-budget line plot.
void write_budget_plot_svg(const std::string& path, const std::vector<CurveSeries>& series);

}  // namespace trsd
