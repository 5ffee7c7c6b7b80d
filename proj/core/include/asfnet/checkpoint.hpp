#pragma once

#include <filesystem>

#include "asfnet/autodiff.hpp"
#include "asfnet/prune.hpp"

namespace asfnet {

// "ASFC" checkpoint format, version 1: magic 'ASFC', u32 LE version, u32 LE
// tensor count, then per tensor a u16 LE name length, the UTF-8 name, and an
// ASFT-format payload. Prune masks ride along as extra tensors named
// "__mask__.<param>".

struct LoadedCheckpoint {
    ParamStore params;
    PruneMask mask;  // empty when the checkpoint carries no masks
};

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params,
                     const PruneMask* mask = nullptr);

/// Parameters come back in file order; lambda entries are marked no-decay
/// and take their trainable flag from `lambda_trainable`.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path,
                                 bool lambda_trainable = false);

}  // namespace asfnet
