#include "asfnet/backbone.hpp"

#include <cmath>
#include <string>

#include "asfnet/rng.hpp"

namespace asfnet {

void BackboneConfig::validate() const {
    if (input_channels < 1) throw SpecError("backbone: input_channels must be positive");
    for (int c : stage_channels) {
        if (c < 1) throw SpecError("backbone: stage channel counts must be positive");
    }
    for (int s : stage_strides) {
        if (s < 1) throw SpecError("backbone: stage strides must be positive");
    }
}

int BackboneConfig::total_stride() const {
    int p = 1;
    for (int s : stage_strides) p *= s;
    return p;
}

ConvSpec backbone_dw_spec(const BackboneConfig& config, int k) {
    const int cin = k == 0 ? config.input_channels : config.stage_channels[k - 1];
    ConvSpec s;
    s.in_channels = cin;
    s.out_channels = cin;
    s.kh = s.kw = 3;
    s.sh = s.sw = config.stage_strides[k];
    s.ph = s.pw = 1;
    s.depthwise = true;
    s.has_bias = false;
    return s;
}

ConvSpec backbone_pw_spec(const BackboneConfig& config, int k) {
    const int cin = k == 0 ? config.input_channels : config.stage_channels[k - 1];
    ConvSpec s;
    s.in_channels = cin;
    s.out_channels = config.stage_channels[k];
    s.kh = s.kw = 1;
    s.has_bias = true;
    return s;
}

namespace {

Tensor he_weights(const ConvSpec& spec, std::uint64_t stream_seed) {
    const int fan_in = spec.kh * spec.kw * (spec.in_channels / spec.groups());
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    Tensor w(spec.out_channels, spec.in_channels / spec.groups(), spec.kh, spec.kw);
    Rng rng(stream_seed);
    for (float& v : w.data) v = static_cast<float>(rng.normal(0.0, stddev));
    return w;
}

}  // namespace

void init_backbone_params(ParamStore& store, const BackboneConfig& config, std::uint64_t seed) {
    config.validate();
    for (int k = 0; k < 4; ++k) {
        const std::string stage = "backbone.stage" + std::to_string(k + 1);
        const ConvSpec dw = backbone_dw_spec(config, k);
        const ConvSpec pw = backbone_pw_spec(config, k);
        store.add(stage + ".dw.weight",
                  he_weights(dw, Rng::derive_seed(seed, stage + ".dw.weight")));
        store.add(stage + ".pw.weight",
                  he_weights(pw, Rng::derive_seed(seed, stage + ".pw.weight")));
        store.add(stage + ".pw.bias", Tensor(pw.out_channels, 1, 1, 1));
    }
}

template <typename T>
std::array<typename TapeT<T>::Value, 4> backbone_extract(GraphBuilder<T>& gb,
                                                         typename TapeT<T>::Value input,
                                                         const BackboneConfig& config) {
    config.validate();
    auto& tape = gb.tape();
    const auto& in_val = tape.value(input);
    if (in_val.c() != config.input_channels) {
        throw ShapeError("backbone: input channel axis C=" + std::to_string(in_val.c()) +
                         " does not match configured input_channels=" +
                         std::to_string(config.input_channels));
    }
    const int stride = config.total_stride();
    if (in_val.h() % stride != 0 || in_val.w() % stride != 0) {
        throw SpecError("backbone: input " + std::to_string(in_val.h()) + "x" +
                        std::to_string(in_val.w()) + " is not divisible by the cumulative stride " +
                        std::to_string(stride) + "; pad the image to a multiple first");
    }

    std::array<typename TapeT<T>::Value, 4> taps;
    auto x = input;
    for (int k = 0; k < 4; ++k) {
        const std::string stage = "backbone.stage" + std::to_string(k + 1);
        x = tape.relu(tape.conv(x, gb.p(stage + ".dw.weight"), std::nullopt,
                                backbone_dw_spec(config, k)));
        x = tape.relu(tape.conv(x, gb.p(stage + ".pw.weight"),
                                std::optional{gb.p(stage + ".pw.bias")},
                                backbone_pw_spec(config, k)));
        taps[static_cast<std::size_t>(k)] = x;
    }
    return taps;
}

template std::array<TapeT<float>::Value, 4> backbone_extract<float>(GraphBuilder<float>&,
                                                                    TapeT<float>::Value,
                                                                    const BackboneConfig&);
template std::array<TapeT<double>::Value, 4> backbone_extract<double>(GraphBuilder<double>&,
                                                                      TapeT<double>::Value,
                                                                      const BackboneConfig&);

}  // namespace asfnet
