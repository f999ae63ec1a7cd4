#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "trsd/vocab.hpp"

namespace trsd {

enum class TaskKind : uint8_t { CHAIN_ARITH, MINI_COUNTDOWN };

const char* to_string(TaskKind k);
TaskKind task_kind_from_string(const std::string& s);

struct TaskInstance {
    TaskKind kind = TaskKind::CHAIN_ARITH;
    std::string prompt_text;
    std::string gold_answer;
    int difficulty = 1;  // reasoning steps (chain) / operand count (countdown)
};

struct ReferenceTrace {
    TaskInstance instance;
    std::string think_text;
    std::string answer_text;
};

// The fixed character alphabet the task renderers emit over. Digits,
// operators, parentheses and separators; no spaces, so tokens render cleanly
// space-separated in files.
const std::vector<std::string>& task_alphabet();
const Vocab& task_vocab();

// Left-to-right chains of `difficulty` +/- steps over [0,99] operands with
// intermediates in [0,999]. Think text states each step `redundancy` times.
std::vector<std::pair<TaskInstance, ReferenceTrace>> gen_chain_arith(
    uint64_t seed, int difficulty, int count, int redundancy = 2);

// Countdown-style instances: operands in [1,25], target built by folding
// random ops over the operands, so it is reachable by construction.
std::vector<std::pair<TaskInstance, ReferenceTrace>> gen_mini_countdown(
    uint64_t seed, int operand_count, int count, int redundancy = 2);

// CHAIN_ARITH: trimmed string equality with the gold answer.
// MINI_COUNTDOWN: answer parses as an arithmetic expression over the
// instance's operands (each used at most once) and evaluates exactly to the
// target under rational arithmetic. Unparseable answers are false.
bool verify_answer(const TaskInstance& instance, const std::string& answer_text);

// Exposed for the countdown verifier's oracle tests: exact rational
// evaluation of an expression, plus the multiset of integer literals used.
// Returns nullopt on parse error, division by zero, or overflow.
struct RationalValue {
    long long num = 0;
    long long den = 1;
};
std::optional<RationalValue> eval_expression(const std::string& text,
                                             std::vector<long long>* literals_used = nullptr);

// Countdown prompt fields; parse_countdown_prompt throws Error on bad text.
struct CountdownSpec {
    long long target = 0;
    std::vector<long long> operands;
};
CountdownSpec parse_countdown_prompt(const std::string& prompt_text);

// Dataset files: one JSON object per line with fields
// {kind, prompt, gold, difficulty, reference_think}.
std::string dataset_line(const TaskInstance& inst, const ReferenceTrace& ref);
std::pair<TaskInstance, ReferenceTrace> dataset_from_line(const std::string& line);

}  // namespace trsd
