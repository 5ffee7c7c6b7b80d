#pragma once

#include <array>
#include <cstdint>

#include "asfnet/autodiff.hpp"
#include "asfnet/tensor.hpp"

namespace asfnet {

/// Four-stage depthwise-separable feature extractor. Each stage is a strided
/// depthwise 3x3 (no bias) followed by a pointwise 1x1 (with bias), each
/// rectified; the tap after stage k is F_{k+1}. Defaults keep the full model
/// well under 1M parameters.
struct BackboneConfig {
    std::array<int, 4> stage_channels{16, 32, 64, 128};
    std::array<int, 4> stage_strides{2, 2, 2, 2};
    int input_channels = 3;

    void validate() const;
    int total_stride() const;
};

/// He-style fan-in initialization; each tensor draws from a stream derived
/// from (seed, parameter name), so identical seeds are bit-identical.
void init_backbone_params(ParamStore& store, const BackboneConfig& config, std::uint64_t seed);

/// Records the four-stage extraction on the tape and returns the tap values
/// F1..F4 (F1 highest resolution, lowest channel count).
template <typename T>
std::array<typename TapeT<T>::Value, 4> backbone_extract(GraphBuilder<T>& gb,
                                                         typename TapeT<T>::Value input,
                                                         const BackboneConfig& config);

// ConvSpecs realized for stage `k` (0-based) — shared with the cost model.
ConvSpec backbone_dw_spec(const BackboneConfig& config, int k);
ConvSpec backbone_pw_spec(const BackboneConfig& config, int k);

}  // namespace asfnet
