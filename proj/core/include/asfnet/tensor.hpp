#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "asfnet/error.hpp"

namespace asfnet {

/// Dense rank-4 (N, C, H, W) value, row-major with W fastest. Immutable by
/// convention once handed to an operation; every public kernel returns a
/// fresh tensor. T is float in the production pipeline; double instantiations
/// back the gradient checker.
template <typename T>
struct TensorT {
    std::array<int, 4> dims{0, 0, 0, 0};
    std::vector<T> data;

    TensorT() = default;

    TensorT(int n, int c, int h, int w, T fill = T(0)) : dims{n, c, h, w} {
        check_dims();
        data.assign(count(), fill);
    }

    TensorT(std::array<int, 4> d, std::vector<T> values) : dims(d), data(std::move(values)) {
        check_dims();
        if (data.size() != count()) {
            throw ShapeError("tensor: data length " + std::to_string(data.size()) +
                             " does not equal N*C*H*W = " + std::to_string(count()));
        }
    }

    static TensorT zeros(int n, int c, int h, int w) { return TensorT(n, c, h, w, T(0)); }
    static TensorT full(int n, int c, int h, int w, T v) { return TensorT(n, c, h, w, v); }

    int n() const { return dims[0]; }
    int c() const { return dims[1]; }
    int h() const { return dims[2]; }
    int w() const { return dims[3]; }

    std::size_t count() const {
        return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) *
               static_cast<std::size_t>(dims[2]) * static_cast<std::size_t>(dims[3]);
    }

    std::size_t index(int in, int ic, int iy, int ix) const {
        return ((static_cast<std::size_t>(in) * dims[1] + ic) * dims[2] + iy) * dims[3] + ix;
    }

    T& at(int in, int ic, int iy, int ix) { return data[index(in, ic, iy, ix)]; }
    T at(int in, int ic, int iy, int ix) const { return data[index(in, ic, iy, ix)]; }

    bool same_dims(const TensorT& other) const { return dims == other.dims; }

    std::string dims_str() const {
        return "(" + std::to_string(dims[0]) + ", " + std::to_string(dims[1]) + ", " +
               std::to_string(dims[2]) + ", " + std::to_string(dims[3]) + ")";
    }

private:
    void check_dims() const {
        for (int d : dims) {
            if (d < 0) throw ShapeError("tensor: negative dimension in " + dims_str());
        }
    }
};

using Tensor = TensorT<float>;

/// Static description of one convolution layer. Depthwise convolution is the
/// grouped special case groups == in_channels; out_channels must then be a
/// multiple of in_channels.
struct ConvSpec {
    int in_channels = 1;
    int out_channels = 1;
    int kh = 1, kw = 1;
    int sh = 1, sw = 1;
    int ph = 0, pw = 0;
    int dh = 1, dw = 1;
    bool depthwise = false;
    bool has_bias = true;

    void validate() const;

    // floor((H + 2*ph - dh*(kh-1) - 1)/sh) + 1; throws SpecError when < 1.
    int out_h(int in_h) const;
    int out_w(int in_w) const;

    int groups() const { return depthwise ? in_channels : 1; }
};

// Throws NumericError naming `what` if any element is NaN or infinite.
template <typename T>
void ensure_finite(const TensorT<T>& t, const std::string& what);

/// Cross-correlation with zero padding (deep-learning convention, no kernel
/// flip). Weights are (out_c, in_c/groups, kh, kw); bias, when present, has
/// out_c entries. Dot products accumulate in 64-bit and are stored in T.
template <typename T>
TensorT<T> conv2d(const TensorT<T>& input, const TensorT<T>& weights,
                  const std::vector<T>* bias, const ConvSpec& spec);

template <typename T>
TensorT<T> conv2d(const TensorT<T>& input, const TensorT<T>& weights, std::nullptr_t,
                  const ConvSpec& spec) {
    return conv2d(input, weights, static_cast<const std::vector<T>*>(nullptr), spec);
}

template <typename T>
TensorT<T> relu(const TensorT<T>& input);

template <typename T>
TensorT<T> scale(const TensorT<T>& input, T lambda);

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b);

/// Channel concatenation: a's channels first, values copied verbatim.
template <typename T>
TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b);

/// Channels [c_begin, c_end) of the input; inverse of concat_channels.
template <typename T>
TensorT<T> slice_channels(const TensorT<T>& input, int c_begin, int c_end);

/// Keys cubic-convolution resampling (a = -0.5) over the 4x4 neighborhood
/// anchored at floor(src) - 1. Source coordinates use half-pixel-center
/// alignment so the size-preserving case is an exact identity; border
/// samples clamp to the nearest valid pixel.
template <typename T>
TensorT<T> bicubic_resize(const TensorT<T>& input, int out_h, int out_w);

// The four Keys kernel weights for a fractional offset t in [0, 1), covering
// source offsets {-1, 0, +1, +2} relative to floor(src). Rows sum to 1.
std::array<double, 4> bicubic_weights(double t);

// Maps a destination index to a source coordinate under half-pixel centers.
inline double bicubic_source_coord(int dst, int in_size, int out_size) {
    return (static_cast<double>(dst) + 0.5) * static_cast<double>(in_size) /
               static_cast<double>(out_size) -
           0.5;
}

}  // namespace asfnet
