#pragma once

#include "trsd/model.hpp"
#include "trsd/sanitize.hpp"

namespace trsd {

// Generation harness shared by the distillation trainer and the evaluation
// sweep. All entry points prepend <bos> internally; callers pass plain token
// sequences. <eos> halts generation and is dropped from the output.

// Seeds <bos>·prompt·<think>, samples up to think_budget reasoning tokens
// (stopping at </think>), then continues through the answer region with a
// 200-token allowance. Returned tokens start at <think>; truncated_by_budget
// is set when the reasoning budget ran out before </think>.
RawGeneration generate_raw(const ModelState<float>& m, const TokenSeq& prompt, int think_budget,
                           double temperature, Rng& rng);

// Answer forcing: context must end with <answer>; samples up to 200 tokens,
// stopping at </answer> (kept). Returns only the continuation.
TokenSeq force_answer(const ModelState<float>& m, const TokenSeq& context, double temperature,
                      Rng& rng);

// Forcer callback backed by a model; also accepts contexts that end inside a
// partially generated answer (sanitize step 4). The rng reference must
// outlive the callback.
Forcer model_forcer(const ModelState<float>& m, double temperature, Rng& rng);

}  // namespace trsd
