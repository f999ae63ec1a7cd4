#pragma once

#include <functional>

#include "trsd/vocab.hpp"

namespace trsd {

// Raw model output after the prompt (prompt excluded), possibly tag-broken.
struct RawGeneration {
    TokenSeq tokens;
    bool truncated_by_budget = false;
};

struct SanitizeReport {
    TaggedTrace trace;
    bool forced = false;
    std::vector<SanitizeFlag> actions;  // in application order
};

// Answer-forcing callback: given prompt · partial trace ending inside an open
// answer block (usually right after <answer>), returns up to 200 continuation
// tokens, stopping at </answer>.
using Forcer = std::function<TokenSeq(const TokenSeq& context)>;

constexpr int kAnswerForceBudget = 200;

// Deterministic repair of raw generations into well-formed traces:
//   1. prepend <think> if missing
//   2. append </think> if missing (marks the example for forcing)
//   3. after the final </think>: no <answer> -> drop trailing content,
//      append <answer>, invoke the forcer
//   4. <answer> without </answer> -> forcer continues under the 200-token
//      budget; </answer> appended if the budget runs out first
//   5. multiple answer pairs -> first kept, rest discarded
// Residual tag tokens inside either body are stripped (DROPPED_TRAILING).
// The result always parses, and sanitizing it again applies no actions.
SanitizeReport sanitize(const RawGeneration& raw, const TokenSeq& prompt, const Forcer& forcer);

}  // namespace trsd
