#pragma once

#include <cstdint>

#include "asfnet/autodiff.hpp"
#include "asfnet/backbone.hpp"
#include "asfnet/fusion_head.hpp"
#include "asfnet/tensor.hpp"

namespace asfnet {

/// Everything needed to realize the network: the extractor stages and the
/// fusion head wiring.
struct NetworkConfig {
    BackboneConfig backbone;
    FusionConfig fusion;

    void validate() const {
        backbone.validate();
        fusion.validate();
    }
};

ParamStore init_model_params(const NetworkConfig& config, std::uint64_t seed,
                             bool lambda_trainable = false);

/// Full forward pass: backbone taps into the fusion head. Output is the
/// (N, 1, H/s1, W/s1) density map where s1 is the first stage's stride.
template <typename T>
typename TapeT<T>::Value model_forward(GraphBuilder<T>& gb, typename TapeT<T>::Value input,
                                       const NetworkConfig& config);

/// Inference convenience: runs one forward pass on a throwaway tape.
Tensor model_infer(const ParamStore& params, const NetworkConfig& config, const Tensor& image);

}  // namespace asfnet
