#pragma once

#include <string>

#include "trsd/model.hpp"

namespace trsd {

// Checkpoint on disk: <prefix>.json manifest (config, step, tensor table with
// byte offsets) plus <prefix>.bin, the parameters as little-endian float32 in
// manifest order. When `with_optimizer` is set, <prefix>.opt.bin holds the
// Adam moments (m then v) so training can resume exactly.
void save_checkpoint(const ModelState<float>& m, const std::string& prefix,
                     bool with_optimizer = true);

ModelState<float> load_checkpoint(const std::string& prefix);

bool checkpoint_exists(const std::string& prefix);

// FNV-1a over the raw parameter blob bytes; used for immutability checks.
uint64_t blob_hash(const std::string& bin_path);

}  // namespace trsd
