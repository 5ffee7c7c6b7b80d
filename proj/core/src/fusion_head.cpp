#include "asfnet/fusion_head.hpp"

#include <algorithm>
#include <cmath>

#include "asfnet/rng.hpp"

namespace asfnet {

void KernelSpec::validate(const std::string& what) const {
    if (size < 1 || size % 2 == 0) {
        throw SpecError(what + ": kernel size must be odd and positive, got " +
                        std::to_string(size));
    }
    if (dilation < 1) throw SpecError(what + ": dilation must be positive");
}

void FusionConfig::validate() const {
    for (int i = 0; i < 4; ++i) {
        branch_kernels[static_cast<std::size_t>(i)].validate("fusion branch kernel " +
                                                             std::to_string(i + 1));
        if (!std::isfinite(lambdas[static_cast<std::size_t>(i)])) {
            throw SpecError("fusion: lambda " + std::to_string(i + 1) + " is non-finite");
        }
    }
    fuse1_kernel.validate("fuse1 kernel");
    fuse2_kernel.validate("fuse2 kernel");
    fused_kernel.validate("fused kernel");
    net_kernel.validate("net kernel");
    if (branch_out_channels < 1) throw SpecError("fusion: branch_out_channels must be positive");
    if (net_out_channels < 1) throw SpecError("fusion: net_out_channels must be positive");
    if (target_resolution != "largest") {
        throw SpecError("fusion: unknown target_resolution rule '" + target_resolution + "'");
    }

    // The pairing must partition {1,2,3,4}.
    std::array<int, 4> seen{0, 0, 0, 0};
    for (const auto& pair : pairing) {
        for (int idx : pair) {
            if (idx < 1 || idx > 4) {
                throw SpecError("fusion: pairing index " + std::to_string(idx) +
                                " out of range 1..4");
            }
            seen[static_cast<std::size_t>(idx - 1)]++;
        }
    }
    for (int i = 0; i < 4; ++i) {
        if (seen[static_cast<std::size_t>(i)] != 1) {
            throw SpecError("fusion: pairing is not a partition, tap " + std::to_string(i + 1) +
                            " appears " + std::to_string(seen[static_cast<std::size_t>(i)]) +
                            " times");
        }
    }
}

ConvSpec head_branch_spec(const BackboneConfig& backbone, const FusionConfig& config, int i) {
    const KernelSpec& k = config.branch_kernels[static_cast<std::size_t>(i)];
    ConvSpec s;
    s.in_channels = backbone.stage_channels[static_cast<std::size_t>(i)];
    s.out_channels = config.branch_out_channels;
    s.kh = s.kw = k.size;
    s.dh = s.dw = k.dilation;
    s.ph = s.pw = k.padding();
    s.has_bias = true;
    return s;
}

namespace {

ConvSpec square_spec(int in_channels, int out_channels, const KernelSpec& k) {
    ConvSpec s;
    s.in_channels = in_channels;
    s.out_channels = out_channels;
    s.kh = s.kw = k.size;
    s.dh = s.dw = k.dilation;
    s.ph = s.pw = k.padding();
    s.has_bias = true;
    return s;
}

}  // namespace

ConvSpec head_fuse_spec(const FusionConfig& config, const KernelSpec& kernel) {
    return square_spec(2 * config.branch_out_channels, config.branch_out_channels, kernel);
}

ConvSpec head_fused_spec(const FusionConfig& config) {
    return square_spec(2 * config.branch_out_channels, config.branch_out_channels,
                       config.fused_kernel);
}

ConvSpec head_net_spec(const FusionConfig& config) {
    return square_spec(config.branch_out_channels, config.net_out_channels, config.net_kernel);
}

ConvSpec head_out_spec(const FusionConfig& config) {
    return square_spec(config.net_out_channels, 1, KernelSpec{1, 1});
}

namespace {

constexpr float kOutBiasInit = 0.01f;
constexpr float kOutWeightScale = 0.01f;

Tensor he_weights(const ConvSpec& spec, std::uint64_t stream_seed) {
    const int fan_in = spec.kh * spec.kw * (spec.in_channels / spec.groups());
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    Tensor w(spec.out_channels, spec.in_channels / spec.groups(), spec.kh, spec.kw);
    Rng rng(stream_seed);
    for (float& v : w.data) v = static_cast<float>(rng.normal(0.0, stddev));
    return w;
}

void add_conv(ParamStore& store, const std::string& name, const ConvSpec& spec,
              std::uint64_t seed) {
    store.add(name + ".weight", he_weights(spec, Rng::derive_seed(seed, name + ".weight")));
    if (spec.has_bias) store.add(name + ".bias", Tensor(spec.out_channels, 1, 1, 1));
}

}  // namespace

void init_head_params(ParamStore& store, const BackboneConfig& backbone,
                      const FusionConfig& config, std::uint64_t seed, bool lambda_trainable) {
    config.validate();
    for (int i = 0; i < 4; ++i) {
        add_conv(store, "head.branch" + std::to_string(i + 1),
                 head_branch_spec(backbone, config, i), seed);
        Tensor lambda(1, 1, 1, 1,
                      static_cast<float>(config.lambdas[static_cast<std::size_t>(i)]));
        // Lambdas never take weight decay: decaying a branch multiplier
        // toward zero silently disables the branch.
        store.add("head.lambda" + std::to_string(i + 1), std::move(lambda), lambda_trainable,
                  /*decay=*/false);
    }
    add_conv(store, "head.fuse1", head_fuse_spec(config, config.fuse1_kernel), seed);
    add_conv(store, "head.fuse2", head_fuse_spec(config, config.fuse2_kernel), seed);
    add_conv(store, "head.fused", head_fused_spec(config), seed);
    add_conv(store, "head.net", head_net_spec(config), seed);
    add_conv(store, "head.out", head_out_spec(config), seed);
    // The output layer starts near zero with a small positive bias, so the
    // initial density is a flat, live prior of the target's scale. A
    // full-scale start overshoots the sparse targets and drives the
    // rectified output all-negative (dead, gradient-free) within the first
    // optimizer steps.
    for (auto& v : store.at("head.out.weight").value.data) v *= kOutWeightScale;
    store.at("head.out.bias").value.data[0] = kOutBiasInit;
}

template <typename T>
typename TapeT<T>::Value fusion_branch(GraphBuilder<T>& gb, typename TapeT<T>::Value tap,
                                       int branch_index, const FusionConfig& config, int target_h,
                                       int target_w) {
    auto& tape = gb.tape();
    const std::string name = "head.branch" + std::to_string(branch_index + 1);
    const auto& in_val = tape.value(tap);
    // Branch spec is derived from the tap's channel count rather than the
    // backbone config, so hand-built feature maps work too.
    ConvSpec spec;
    spec.in_channels = in_val.c();
    spec.out_channels = config.branch_out_channels;
    const KernelSpec& k = config.branch_kernels[static_cast<std::size_t>(branch_index)];
    spec.kh = spec.kw = k.size;
    spec.dh = spec.dw = k.dilation;
    spec.ph = spec.pw = k.padding();
    spec.has_bias = true;

    auto x = tape.conv(tap, gb.p(name + ".weight"), std::optional{gb.p(name + ".bias")}, spec);
    x = tape.relu(x);
    x = tape.scale_by(x, gb.p("head.lambda" + std::to_string(branch_index + 1)));
    const auto& dims = tape.value(x);
    if (dims.h() != target_h || dims.w() != target_w) {
        x = tape.resize(x, target_h, target_w);
    }
    return x;
}

template <typename T>
typename TapeT<T>::Value fusion_pair(GraphBuilder<T>& gb, typename TapeT<T>::Value a,
                                     typename TapeT<T>::Value b, const std::string& stage_name,
                                     const KernelSpec& kernel, const FusionConfig& config) {
    auto& tape = gb.tape();
    auto x = tape.concat(a, b);
    x = tape.conv(x, gb.p(stage_name + ".weight"), std::optional{gb.p(stage_name + ".bias")},
                  head_fuse_spec(config, kernel));
    return tape.relu(x);
}

template <typename T>
typename TapeT<T>::Value fusion_forward(GraphBuilder<T>& gb,
                                        const std::array<typename TapeT<T>::Value, 4>& taps,
                                        const FusionConfig& config) {
    config.validate();
    auto& tape = gb.tape();
    const auto& f1 = tape.value(taps[0]);
    const int target_h = f1.h();
    const int target_w = f1.w();

    std::array<typename TapeT<T>::Value, 4> branches;
    for (int i = 0; i < 4; ++i) {
        branches[static_cast<std::size_t>(i)] =
            fusion_branch(gb, taps[static_cast<std::size_t>(i)], i, config, target_h, target_w);
    }

    auto pick = [&](int one_based) { return branches[static_cast<std::size_t>(one_based - 1)]; };
    auto fused_a = fusion_pair(gb, pick(config.pairing[0][0]), pick(config.pairing[0][1]),
                               "head.fuse1", config.fuse1_kernel, config);
    auto fused_b = fusion_pair(gb, pick(config.pairing[1][0]), pick(config.pairing[1][1]),
                               "head.fuse2", config.fuse2_kernel, config);

    auto x = tape.concat(fused_a, fused_b);
    x = tape.conv(x, gb.p("head.fused.weight"), std::optional{gb.p("head.fused.bias")},
                  head_fused_spec(config));
    x = tape.relu(x);
    x = tape.conv(x, gb.p("head.net.weight"), std::optional{gb.p("head.net.bias")},
                  head_net_spec(config));
    x = tape.relu(x);
    x = tape.conv(x, gb.p("head.out.weight"), std::optional{gb.p("head.out.bias")},
                  head_out_spec(config));
    // Final relu keeps the density map non-negative during training too.
    return tape.relu(x);
}

std::vector<double> predicted_count(const Tensor& density) {
    std::vector<double> counts(static_cast<std::size_t>(density.n()), 0.0);
    const std::size_t per_item = static_cast<std::size_t>(density.c()) *
                                 static_cast<std::size_t>(density.h()) *
                                 static_cast<std::size_t>(density.w());
    for (int in = 0; in < density.n(); ++in) {
        double acc = 0.0;
        const float* base = density.data.data() + static_cast<std::size_t>(in) * per_item;
        for (std::size_t i = 0; i < per_item; ++i) acc += static_cast<double>(base[i]);
        counts[static_cast<std::size_t>(in)] = acc;
    }
    return counts;
}

#define ASFNET_INSTANTIATE_HEAD(T)                                                          \
    template TapeT<T>::Value fusion_branch<T>(GraphBuilder<T>&, TapeT<T>::Value, int,       \
                                              const FusionConfig&, int, int);               \
    template TapeT<T>::Value fusion_pair<T>(GraphBuilder<T>&, TapeT<T>::Value,              \
                                            TapeT<T>::Value, const std::string&,            \
                                            const KernelSpec&, const FusionConfig&);        \
    template TapeT<T>::Value fusion_forward<T>(GraphBuilder<T>&,                            \
                                               const std::array<TapeT<T>::Value, 4>&,       \
                                               const FusionConfig&);

ASFNET_INSTANTIATE_HEAD(float)
ASFNET_INSTANTIATE_HEAD(double)

#undef ASFNET_INSTANTIATE_HEAD

}  // namespace asfnet
