#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "asfnet/autodiff.hpp"
#include "asfnet/backbone.hpp"
#include "asfnet/tensor.hpp"

namespace asfnet {

/// Square odd-sized kernel with same-padding (pad = dilation*(size-1)/2).
struct KernelSpec {
    int size = 1;
    int dilation = 1;

    int padding() const { return dilation * (size - 1) / 2; }
    void validate(const std::string& what) const;
};

/// The density head: per-scale weighted branches, pairwise fusion of the
/// branch outputs, then a fuse/net/1x1 stack ending in a rectified
/// one-channel density map. The per-branch lambda multipliers and the
/// pairing of scales are the ablation levers.
struct FusionConfig {
    std::array<KernelSpec, 4> branch_kernels{{{3, 2}, {3, 1}, {1, 1}, {1, 1}}};
    std::array<double, 4> lambdas{0.1, 0.1, 0.5, 1.0};
    std::array<std::array<int, 2>, 2> pairing{{{1, 2}, {3, 4}}};  // 1-based tap indices
    int branch_out_channels = 32;
    KernelSpec fuse1_kernel{3, 1};
    KernelSpec fuse2_kernel{1, 1};
    KernelSpec fused_kernel{3, 2};
    KernelSpec net_kernel{3, 1};
    int net_out_channels = 16;
    std::string target_resolution = "largest";  // branch maps resize to F1's size

    void validate() const;
};

void init_head_params(ParamStore& store, const BackboneConfig& backbone,
                      const FusionConfig& config, std::uint64_t seed, bool lambda_trainable);

/// Builds the full head on the tape: branch each tap, fuse per pairing,
/// then the fused/net/output stack. Output is (N, 1, H_t, W_t), H_t/W_t
/// being F1's spatial size, and is non-negative by construction.
template <typename T>
typename TapeT<T>::Value fusion_forward(GraphBuilder<T>& gb,
                                        const std::array<typename TapeT<T>::Value, 4>& taps,
                                        const FusionConfig& config);

/// Per-branch building block, exposed for tests: conv -> relu -> lambda
/// scale -> resize to (target_h, target_w).
template <typename T>
typename TapeT<T>::Value fusion_branch(GraphBuilder<T>& gb, typename TapeT<T>::Value tap,
                                       int branch_index, const FusionConfig& config, int target_h,
                                       int target_w);

/// Pairwise fusion: concat -> stage conv (2*branch_out -> branch_out) -> relu.
template <typename T>
typename TapeT<T>::Value fusion_pair(GraphBuilder<T>& gb, typename TapeT<T>::Value a,
                                     typename TapeT<T>::Value b, const std::string& stage_name,
                                     const KernelSpec& kernel, const FusionConfig& config);

/// Sum over all pixels of each batch item: the count a density map encodes.
std::vector<double> predicted_count(const Tensor& density);

// ConvSpecs realized for the head layers — shared with the cost model.
ConvSpec head_branch_spec(const BackboneConfig& backbone, const FusionConfig& config, int i);
ConvSpec head_fuse_spec(const FusionConfig& config, const KernelSpec& kernel);
ConvSpec head_fused_spec(const FusionConfig& config);
ConvSpec head_net_spec(const FusionConfig& config);
ConvSpec head_out_spec(const FusionConfig& config);

}  // namespace asfnet
