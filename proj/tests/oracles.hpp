#pragma once

// Independent reference implementations used only by tests. Each one is a
// direct transcription of the operation's definition, deliberately coded a
// different way than the library kernels (padded buffers instead of bounds
// checks, scalar sampling instead of precomputed weight tables) so that a
// shared bug is unlikely.

#include <cstdint>
#include <vector>

#include "asfnet/tensor.hpp"

namespace oracles {

struct FlopCount {
    std::uint64_t multiplies = 0;
    std::uint64_t adds = 0;
    std::uint64_t total() const { return multiplies + adds; }
};

/// Six-deep loop-nest convolution over an explicitly zero-padded copy of the
/// input. When `count` is non-null every executed multiply and add is tallied.
template <typename T>
asfnet::TensorT<T> naive_conv2d(const asfnet::TensorT<T>& input,
                                const asfnet::TensorT<T>& weights, const std::vector<T>* bias,
                                const asfnet::ConvSpec& spec, FlopCount* count = nullptr);

template <typename T>
asfnet::TensorT<T> naive_conv2d(const asfnet::TensorT<T>& input,
                                const asfnet::TensorT<T>& weights, std::nullptr_t,
                                const asfnet::ConvSpec& spec, FlopCount* count = nullptr) {
    return naive_conv2d(input, weights, static_cast<const std::vector<T>*>(nullptr), spec, count);
}

/// Direct evaluation of the 4x4 cubic-convolution weighted sum at one source
/// coordinate of a single-channel plane, clamping sample indices to the
/// image. The weight function is evaluated pointwise from its piecewise
/// definition (a = -0.5).
double scalar_bicubic_sample(const std::vector<double>& plane, int height, int width, double src_y,
                             double src_x);

/// k-NN mean distance by fully sorting all pairwise distances.
double knn_mean_by_sort(const std::vector<std::array<double, 2>>& points, std::size_t i, int k);

extern template asfnet::TensorT<float> naive_conv2d<float>(const asfnet::TensorT<float>&,
                                                           const asfnet::TensorT<float>&,
                                                           const std::vector<float>*,
                                                           const asfnet::ConvSpec&, FlopCount*);
extern template asfnet::TensorT<double> naive_conv2d<double>(const asfnet::TensorT<double>&,
                                                             const asfnet::TensorT<double>&,
                                                             const std::vector<double>*,
                                                             const asfnet::ConvSpec&, FlopCount*);

}  // namespace oracles
