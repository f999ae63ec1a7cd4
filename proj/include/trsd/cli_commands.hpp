#pragma once

#include <string>
#include <vector>

#include "trsd/eval.hpp"
#include "trsd/model.hpp"
#include "trsd/sft.hpp"
#include "trsd/trsd.hpp"

namespace trsd {

struct DataConfig {
    int train_per_task = 10000;
    int eval_per_task = 1000;
    std::vector<int> chain_difficulties = {1, 2, 3};
    int chain_eval_difficulty = 3;
    int countdown_operands = 4;
    int redundancy = 2;
};

struct EvalConfig {
    std::vector<int> budgets = {4, 8, 16, 32, 64, 128, 256};
    double temperature = 0.8;
    int prompts = 500;
    bool greedy = false;
};

struct RunConfig {
    uint64_t seed = 42;
    std::string out_dir = "runs/default";
    int workers = 1;
    ModelConfig model{0, 512, 2, 2, 64, 256};  // vocab filled from the task alphabet
    DataConfig data;
    SftConfig sft;
    DistillConfig distill;
    EvalConfig eval;
    std::string distill_prompt_dataset = "chain_arith";
};

// Defaults, overlaid by the JSON config file when given. Unknown keys are
// rejected. The TRSD_OUT environment variable, when set, roots relative
// output directories.
RunConfig load_run_config(const std::string& config_path);

// Derived output paths under cfg.out_dir.
struct RunPaths {
    std::string root, data_dir, eval_dir, distill_dir;
    std::string teacher_prefix;

    explicit RunPaths(const RunConfig& cfg);
    std::string dataset_file(const std::string& name, bool train) const;
    std::string student_prefix(int step) const;
};

void cmd_gen_data(const RunConfig& cfg);
void cmd_train_sft(const RunConfig& cfg, bool force = false);
void cmd_distill(const RunConfig& cfg, bool resume = false, bool force = false);
void cmd_evaluate(const RunConfig& cfg);
void cmd_dump_traces(const RunConfig& cfg, const std::string& filter = "", int count = 10);
void cmd_report(const RunConfig& cfg);

// Loads instances from a dataset file (first `limit` lines; 0 keeps all).
std::vector<TaskInstance> load_instances(const std::string& path, int limit = 0);
std::vector<ReferenceTrace> load_references(const std::string& path);

}  // namespace trsd
