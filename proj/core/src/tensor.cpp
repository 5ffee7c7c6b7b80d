#include "asfnet/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace asfnet {

void ConvSpec::validate() const {
    if (in_channels < 1 || out_channels < 1) {
        throw SpecError("conv spec: channel counts must be positive, got in=" +
                        std::to_string(in_channels) + " out=" + std::to_string(out_channels));
    }
    if (kh < 1 || kw < 1) throw SpecError("conv spec: kernel must be at least 1x1");
    if (sh < 1 || sw < 1) throw SpecError("conv spec: stride must be positive");
    if (ph < 0 || pw < 0) throw SpecError("conv spec: padding must be non-negative");
    if (dh < 1 || dw < 1) throw SpecError("conv spec: dilation must be positive");
    if (depthwise && out_channels % in_channels != 0) {
        throw SpecError("conv spec: depthwise out_channels (" + std::to_string(out_channels) +
                        ") must be a multiple of in_channels (" + std::to_string(in_channels) + ")");
    }
}

int ConvSpec::out_h(int in_h) const {
    const int numer = in_h + 2 * ph - dh * (kh - 1) - 1;
    const int out = numer < 0 ? 0 : numer / sh + 1;
    if (out < 1) {
        throw SpecError("conv spec: output height < 1 for input height " + std::to_string(in_h));
    }
    return out;
}

int ConvSpec::out_w(int in_w) const {
    const int numer = in_w + 2 * pw - dw * (kw - 1) - 1;
    const int out = numer < 0 ? 0 : numer / sw + 1;
    if (out < 1) {
        throw SpecError("conv spec: output width < 1 for input width " + std::to_string(in_w));
    }
    return out;
}

template <typename T>
void ensure_finite(const TensorT<T>& t, const std::string& what) {
    for (std::size_t i = 0; i < t.data.size(); ++i) {
        if (!std::isfinite(t.data[i])) {
            throw NumericError(what + ": non-finite value at flat index " + std::to_string(i));
        }
    }
}

template void ensure_finite<float>(const TensorT<float>&, const std::string&);
template void ensure_finite<double>(const TensorT<double>&, const std::string&);

template <typename T>
TensorT<T> conv2d(const TensorT<T>& input, const TensorT<T>& weights, const std::vector<T>* bias,
                  const ConvSpec& spec) {
    spec.validate();
    if (input.c() != spec.in_channels) {
        throw ShapeError("conv2d: input channel axis C=" + std::to_string(input.c()) +
                         " does not match spec in_channels=" + std::to_string(spec.in_channels));
    }
    const int cpg = spec.in_channels / spec.groups();   // input channels per group
    if (weights.n() != spec.out_channels || weights.c() != cpg || weights.h() != spec.kh ||
        weights.w() != spec.kw) {
        throw ShapeError("conv2d: weight dims " + weights.dims_str() + " do not match spec (" +
                         std::to_string(spec.out_channels) + ", " + std::to_string(cpg) + ", " +
                         std::to_string(spec.kh) + ", " + std::to_string(spec.kw) + ")");
    }
    if (spec.has_bias) {
        if (bias == nullptr || static_cast<int>(bias->size()) != spec.out_channels) {
            throw ShapeError("conv2d: spec declares bias but bias vector is missing or has wrong "
                             "length for out_channels axis");
        }
    } else if (bias != nullptr) {
        throw ShapeError("conv2d: bias vector supplied but spec has has_bias=false");
    }
    ensure_finite(input, "conv2d input");
    ensure_finite(weights, "conv2d weights");

    const int oh = spec.out_h(input.h());
    const int ow = spec.out_w(input.w());
    const int filters_per_group = spec.out_channels / spec.groups();
    TensorT<T> out(input.n(), spec.out_channels, oh, ow);

    for (int in = 0; in < input.n(); ++in) {
        for (int oc = 0; oc < spec.out_channels; ++oc) {
            const int group = spec.depthwise ? oc / filters_per_group : 0;
            const double b = spec.has_bias ? static_cast<double>((*bias)[oc]) : 0.0;
            for (int oy = 0; oy < oh; ++oy) {
                const int iy0 = oy * spec.sh - spec.ph;
                for (int ox = 0; ox < ow; ++ox) {
                    const int ix0 = ox * spec.sw - spec.pw;
                    double acc = b;
                    for (int icg = 0; icg < cpg; ++icg) {
                        const int ic = group * cpg + icg;
                        for (int ky = 0; ky < spec.kh; ++ky) {
                            const int iy = iy0 + ky * spec.dh;
                            if (iy < 0 || iy >= input.h()) continue;
                            for (int kx = 0; kx < spec.kw; ++kx) {
                                const int ix = ix0 + kx * spec.dw;
                                if (ix < 0 || ix >= input.w()) continue;
                                acc += static_cast<double>(input.at(in, ic, iy, ix)) *
                                       static_cast<double>(weights.at(oc, icg, ky, kx));
                            }
                        }
                    }
                    out.at(in, oc, oy, ox) = static_cast<T>(acc);
                }
            }
        }
    }
    ensure_finite(out, "conv2d output");
    return out;
}

template <typename T>
TensorT<T> relu(const TensorT<T>& input) {
    ensure_finite(input, "relu input");
    TensorT<T> out = input;
    for (T& v : out.data) v = v > T(0) ? v : T(0);
    return out;
}

template <typename T>
TensorT<T> scale(const TensorT<T>& input, T lambda) {
    if (!std::isfinite(lambda)) throw NumericError("scale: lambda is non-finite");
    ensure_finite(input, "scale input");
    TensorT<T> out = input;
    for (T& v : out.data) v *= lambda;
    ensure_finite(out, "scale output");
    return out;
}

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
    if (!a.same_dims(b)) {
        throw ShapeError("add: dims " + a.dims_str() + " vs " + b.dims_str());
    }
    ensure_finite(a, "add input a");
    ensure_finite(b, "add input b");
    TensorT<T> out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
    ensure_finite(out, "add output");
    return out;
}

template <typename T>
TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b) {
    if (a.n() != b.n()) {
        throw ShapeError("concat_channels: batch axis N mismatch (" + std::to_string(a.n()) +
                         " vs " + std::to_string(b.n()) + ")");
    }
    if (a.h() != b.h()) {
        throw ShapeError("concat_channels: spatial axis H mismatch (" + std::to_string(a.h()) +
                         " vs " + std::to_string(b.h()) + ")");
    }
    if (a.w() != b.w()) {
        throw ShapeError("concat_channels: spatial axis W mismatch (" + std::to_string(a.w()) +
                         " vs " + std::to_string(b.w()) + ")");
    }
    ensure_finite(a, "concat_channels input a");
    ensure_finite(b, "concat_channels input b");
    TensorT<T> out(a.n(), a.c() + b.c(), a.h(), a.w());
    const std::size_t plane = static_cast<std::size_t>(a.h()) * a.w();
    for (int in = 0; in < a.n(); ++in) {
        std::copy_n(a.data.begin() + static_cast<std::ptrdiff_t>(in * a.c() * plane),
                    static_cast<std::size_t>(a.c()) * plane,
                    out.data.begin() + static_cast<std::ptrdiff_t>(in * out.c() * plane));
        std::copy_n(b.data.begin() + static_cast<std::ptrdiff_t>(in * b.c() * plane),
                    static_cast<std::size_t>(b.c()) * plane,
                    out.data.begin() +
                        static_cast<std::ptrdiff_t>((in * out.c() + a.c()) * plane));
    }
    return out;
}

template <typename T>
TensorT<T> slice_channels(const TensorT<T>& input, int c_begin, int c_end) {
    if (c_begin < 0 || c_end < c_begin || c_end > input.c()) {
        throw ShapeError("slice_channels: range [" + std::to_string(c_begin) + ", " +
                         std::to_string(c_end) + ") out of bounds for C=" +
                         std::to_string(input.c()));
    }
    TensorT<T> out(input.n(), c_end - c_begin, input.h(), input.w());
    const std::size_t plane = static_cast<std::size_t>(input.h()) * input.w();
    for (int in = 0; in < input.n(); ++in) {
        std::copy_n(input.data.begin() +
                        static_cast<std::ptrdiff_t>((in * input.c() + c_begin) * plane),
                    static_cast<std::size_t>(c_end - c_begin) * plane,
                    out.data.begin() + static_cast<std::ptrdiff_t>(in * out.c() * plane));
    }
    return out;
}

std::array<double, 4> bicubic_weights(double t) {
    // Keys cubic convolution kernel, a = -0.5. Offsets -1, 0, +1, +2 around
    // the anchor have |x| = 1+t, t, 1-t, 2-t.
    auto near = [](double x) { return ((1.5 * x - 2.5) * x) * x + 1.0; };       // |x| <= 1
    auto far = [](double x) { return (((-0.5 * x + 2.5) * x) - 4.0) * x + 2.0; };  // 1 < |x| < 2
    return {far(1.0 + t), near(t), near(1.0 - t), far(2.0 - t)};
}

template <typename T>
TensorT<T> bicubic_resize(const TensorT<T>& input, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) {
        throw SpecError("bicubic_resize: target size must be positive, got " +
                        std::to_string(out_h) + "x" + std::to_string(out_w));
    }
    if (input.h() < 1 || input.w() < 1) {
        throw SpecError("bicubic_resize: input spatial size must be at least 1x1");
    }
    ensure_finite(input, "bicubic_resize input");

    struct Axis {
        int anchor;                   // floor(src) - 1
        std::array<double, 4> w;
    };
    std::vector<Axis> xs(out_w), ys(out_h);
    for (int ox = 0; ox < out_w; ++ox) {
        const double src = bicubic_source_coord(ox, input.w(), out_w);
        const double fl = std::floor(src);
        xs[ox] = {static_cast<int>(fl) - 1, bicubic_weights(src - fl)};
    }
    for (int oy = 0; oy < out_h; ++oy) {
        const double src = bicubic_source_coord(oy, input.h(), out_h);
        const double fl = std::floor(src);
        ys[oy] = {static_cast<int>(fl) - 1, bicubic_weights(src - fl)};
    }

    TensorT<T> out(input.n(), input.c(), out_h, out_w);
    for (int in = 0; in < input.n(); ++in) {
        for (int ic = 0; ic < input.c(); ++ic) {
            for (int oy = 0; oy < out_h; ++oy) {
                const Axis& ay = ys[oy];
                int ry[4];
                for (int i = 0; i < 4; ++i) ry[i] = std::clamp(ay.anchor + i, 0, input.h() - 1);
                for (int ox = 0; ox < out_w; ++ox) {
                    const Axis& ax = xs[ox];
                    double acc = 0.0;
                    for (int i = 0; i < 4; ++i) {
                        double row = 0.0;
                        for (int j = 0; j < 4; ++j) {
                            const int rx = std::clamp(ax.anchor + j, 0, input.w() - 1);
                            row += ax.w[j] * static_cast<double>(input.at(in, ic, ry[i], rx));
                        }
                        acc += ay.w[i] * row;
                    }
                    out.at(in, ic, oy, ox) = static_cast<T>(acc);
                }
            }
        }
    }
    ensure_finite(out, "bicubic_resize output");
    return out;
}

#define ASFNET_INSTANTIATE_OPS(T)                                                              \
    template TensorT<T> conv2d<T>(const TensorT<T>&, const TensorT<T>&, const std::vector<T>*, \
                                  const ConvSpec&);                                            \
    template TensorT<T> relu<T>(const TensorT<T>&);                                           \
    template TensorT<T> scale<T>(const TensorT<T>&, T);                                       \
    template TensorT<T> add<T>(const TensorT<T>&, const TensorT<T>&);                         \
    template TensorT<T> concat_channels<T>(const TensorT<T>&, const TensorT<T>&);             \
    template TensorT<T> slice_channels<T>(const TensorT<T>&, int, int);                       \
    template TensorT<T> bicubic_resize<T>(const TensorT<T>&, int, int);

ASFNET_INSTANTIATE_OPS(float)
ASFNET_INSTANTIATE_OPS(double)

#undef ASFNET_INSTANTIATE_OPS

}  // namespace asfnet
