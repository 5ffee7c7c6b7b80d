#include "asfnet/model.hpp"

namespace asfnet {

ParamStore init_model_params(const NetworkConfig& config, std::uint64_t seed,
                             bool lambda_trainable) {
    config.validate();
    ParamStore store;
    init_backbone_params(store, config.backbone, seed);
    init_head_params(store, config.backbone, config.fusion, seed, lambda_trainable);
    return store;
}

template <typename T>
typename TapeT<T>::Value model_forward(GraphBuilder<T>& gb, typename TapeT<T>::Value input,
                                       const NetworkConfig& config) {
    auto taps = backbone_extract(gb, input, config.backbone);
    return fusion_forward(gb, taps, config.fusion);
}

Tensor model_infer(const ParamStore& params, const NetworkConfig& config, const Tensor& image) {
    Tape tape;
    GraphBuilder<float> gb(tape, params);
    auto out = model_forward(gb, tape.input(image), config);
    return tape.value(out);
}

template TapeT<float>::Value model_forward<float>(GraphBuilder<float>&, TapeT<float>::Value,
                                                  const NetworkConfig&);
template TapeT<double>::Value model_forward<double>(GraphBuilder<double>&, TapeT<double>::Value,
                                                    const NetworkConfig&);

}  // namespace asfnet
