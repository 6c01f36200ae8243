#pragma once

#include <string>
#include <vector>

#include "qfuse/optim.hpp"

namespace qfuse {

/// Checkpoint directory layout:
///   manifest.json  — ordered [{name, shape, dtype:"f32"}]
///   params.bin     — little-endian f32 values concatenated in manifest order
///   optimizer.bin  — AdaGrad accumulators, same order
void save_checkpoint(const std::string& dir, const std::vector<Parameter<float>*>& params);

/// Loads into an existing parameter set; names and shapes must match the
/// manifest exactly.
void load_checkpoint(const std::string& dir, const std::vector<Parameter<float>*>& params);

}  // namespace qfuse
