#pragma once

#include <map>
#include <string>

#include "asfnet/autodiff.hpp"
#include "asfnet/tensor.hpp"

namespace asfnet {

enum class PruneCriterion {
    L1Unstructured,      // zero the ceil(fraction*N) smallest-|w| weights per tensor
    L2StructuredChannel  // zero whole output channels with the smallest L2 norms
};

PruneCriterion prune_criterion_from_string(const std::string& name);
std::string prune_criterion_name(PruneCriterion criterion);

/// Binary keep-masks over the convolution weight tensors (biases and lambda
/// multipliers are never pruned). Masks compose with checkpoints and must be
/// reapplied after optimizer steps to keep pruned positions at zero.
struct PruneMask {
    std::map<std::string, Tensor> masks;  // 1 = keep, 0 = pruned
    std::string criterion;
    double fraction = 0.0;

    bool empty() const { return masks.empty(); }
};

/// Masks the store's conv weights in place and returns the mask.
/// L1 ties break toward the lowest flat index; the L2 channel count is the
/// one whose fraction is nearest the target (round half up), and at least
/// one channel always survives.
PruneMask prune(ParamStore& params, PruneCriterion criterion, double fraction);

/// Re-zeroes pruned positions (after an optimizer step).
void apply_mask(ParamStore& params, const PruneMask& mask);

struct SparsityReport {
    std::map<std::string, double> per_tensor;  // exact zero fraction of each mask
    double global = 0.0;                       // weighted by element counts
};

SparsityReport sparsity_report(const PruneMask& mask);

std::string sparsity_report_json(const PruneMask& mask);

}  // namespace asfnet
