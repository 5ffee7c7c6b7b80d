#include "asfnet/cost.hpp"

#include <algorithm>
#include <sstream>

#include <nlohmann/json.hpp>

#include "asfnet/tensor_io.hpp"

namespace asfnet {

std::uint64_t conv_params(const ConvSpec& spec) {
    spec.validate();
    const std::uint64_t weights = static_cast<std::uint64_t>(spec.kh) * spec.kw *
                                  (spec.in_channels / spec.groups()) * spec.out_channels;
    return weights + (spec.has_bias ? static_cast<std::uint64_t>(spec.out_channels) : 0u);
}

std::uint64_t conv_flops(const ConvSpec& spec, int in_h, int in_w) {
    spec.validate();
    const std::uint64_t out_elems =
        static_cast<std::uint64_t>(spec.out_h(in_h)) * static_cast<std::uint64_t>(spec.out_w(in_w));
    const std::uint64_t macs = static_cast<std::uint64_t>(spec.kh) * spec.kw *
                               (spec.in_channels / spec.groups()) * spec.out_channels * out_elems;
    return 2 * macs + (spec.has_bias ? static_cast<std::uint64_t>(spec.out_channels) * out_elems
                                     : 0u);
}

namespace {

struct Accounting {
    CostReport report;
    std::uint64_t param_elements = 0;  // for the serialized-size estimate
    std::uint64_t name_bytes = 0;
    std::uint64_t tensor_count = 0;

    void row(const std::string& name, std::uint64_t params, std::uint64_t flops) {
        report.rows.push_back({name, params, flops});
        report.total_params += params;
        report.total_flops += flops;
    }

    void tensor(const std::string& param_name, std::uint64_t elements) {
        param_elements += elements;
        name_bytes += param_name.size();
        ++tensor_count;
    }

    void conv_layer(const std::string& name, const ConvSpec& spec, int in_h, int in_w) {
        row(name, conv_params(spec), conv_flops(spec, in_h, in_w));
        tensor(name + ".weight", static_cast<std::uint64_t>(spec.kh) * spec.kw *
                                     (spec.in_channels / spec.groups()) * spec.out_channels);
        if (spec.has_bias) {
            tensor(name + ".bias", static_cast<std::uint64_t>(spec.out_channels));
        }
    }

    void relu_layer(const std::string& name, int channels, int h, int w) {
        row(name, 0,
            static_cast<std::uint64_t>(channels) * static_cast<std::uint64_t>(h) *
                static_cast<std::uint64_t>(w));
    }
};

}  // namespace

CostReport count_cost(const NetworkConfig& config, int in_c, int in_h, int in_w) {
    config.validate();
    if (in_c != config.backbone.input_channels) {
        throw SpecError("count_cost: input channel count " + std::to_string(in_c) +
                        " does not match backbone input_channels " +
                        std::to_string(config.backbone.input_channels));
    }
    if (in_h < 1 || in_w < 1) {
        throw SpecError("count_cost: input resolution must be positive (FLOPs are "
                        "resolution-dependent)");
    }

    Accounting acc;

    // Backbone stages; track tap resolutions for the head.
    int h = in_h, w = in_w;
    std::array<std::array<int, 2>, 4> tap_size{};
    for (int k = 0; k < 4; ++k) {
        const std::string stage = "backbone.stage" + std::to_string(k + 1);
        const ConvSpec dw = backbone_dw_spec(config.backbone, k);
        const ConvSpec pw = backbone_pw_spec(config.backbone, k);
        const int oh = dw.out_h(h), ow = dw.out_w(w);
        acc.conv_layer(stage + ".dw", dw, h, w);
        acc.relu_layer(stage + ".dw.relu", dw.out_channels, oh, ow);
        acc.conv_layer(stage + ".pw", pw, oh, ow);
        acc.relu_layer(stage + ".pw.relu", pw.out_channels, oh, ow);
        h = oh;
        w = ow;
        tap_size[static_cast<std::size_t>(k)] = {oh, ow};
    }

    const int target_h = tap_size[0][0];
    const int target_w = tap_size[0][1];
    const int bc = config.fusion.branch_out_channels;

    for (int i = 0; i < 4; ++i) {
        const std::string name = "head.branch" + std::to_string(i + 1);
        const ConvSpec spec = head_branch_spec(config.backbone, config.fusion, i);
        const int th = tap_size[static_cast<std::size_t>(i)][0];
        const int tw = tap_size[static_cast<std::size_t>(i)][1];
        const int oh = spec.out_h(th), ow = spec.out_w(tw);
        acc.conv_layer(name, spec, th, tw);
        acc.relu_layer(name + ".relu", bc, oh, ow);
        // Lambda multiplier: one parameter, one multiply per element.
        acc.row(name + ".lambda", 1,
                static_cast<std::uint64_t>(bc) * static_cast<std::uint64_t>(oh) *
                    static_cast<std::uint64_t>(ow));
        acc.tensor("head.lambda" + std::to_string(i + 1), 1);
        if (oh != target_h || ow != target_w) {
            // 16 multiplies + 15 adds per output element per channel.
            acc.row(name + ".resize", 0,
                    31ull * static_cast<std::uint64_t>(bc) *
                        static_cast<std::uint64_t>(target_h) *
                        static_cast<std::uint64_t>(target_w));
        }
    }

    const auto fuse_layer = [&](const std::string& name, const ConvSpec& spec) {
        acc.conv_layer(name, spec, target_h, target_w);
        acc.relu_layer(name + ".relu", spec.out_channels, spec.out_h(target_h),
                       spec.out_w(target_w));
    };
    fuse_layer("head.fuse1", head_fuse_spec(config.fusion, config.fusion.fuse1_kernel));
    fuse_layer("head.fuse2", head_fuse_spec(config.fusion, config.fusion.fuse2_kernel));
    fuse_layer("head.fused", head_fused_spec(config.fusion));
    fuse_layer("head.net", head_net_spec(config.fusion));
    fuse_layer("head.out", head_out_spec(config.fusion));

    // Serialized checkpoint size: ASFC header + per-tensor framing.
    acc.report.model_file_bytes =
        12 + acc.tensor_count * 2 + acc.name_bytes + acc.tensor_count * asft_byte_size(0) +
        4 * acc.param_elements;
    return acc.report;
}

std::string render_cost_table(const CostReport& report) {
    std::size_t name_width = 5;
    for (const auto& r : report.rows) name_width = std::max(name_width, r.name.size());

    std::ostringstream out;
    char line[256];
    std::snprintf(line, sizeof(line), "%-*s  %12s  %16s\n", static_cast<int>(name_width), "layer",
                  "params", "flops");
    out << line;
    out << std::string(name_width + 32, '-') << "\n";
    for (const auto& r : report.rows) {
        std::snprintf(line, sizeof(line), "%-*s  %12llu  %16llu\n", static_cast<int>(name_width),
                      r.name.c_str(), static_cast<unsigned long long>(r.params),
                      static_cast<unsigned long long>(r.flops));
        out << line;
    }
    out << std::string(name_width + 32, '-') << "\n";
    std::snprintf(line, sizeof(line), "%-*s  %12llu  %16llu\n", static_cast<int>(name_width),
                  "total", static_cast<unsigned long long>(report.total_params),
                  static_cast<unsigned long long>(report.total_flops));
    out << line;
    out << "model file size: " << report.model_file_bytes << " bytes\n";
    out << "convention: " << report.flops_convention << "\n";
    return out.str();
}

std::string cost_report_json(const CostReport& report) {
    nlohmann::json j;
    j["total_params"] = report.total_params;
    j["total_flops"] = report.total_flops;
    j["model_file_bytes"] = report.model_file_bytes;
    j["flops_convention"] = report.flops_convention;
    auto layers = nlohmann::json::array();
    for (const auto& r : report.rows) {
        layers.push_back({{"name", r.name}, {"params", r.params}, {"flops", r.flops}});
    }
    j["layers"] = std::move(layers);
    return j.dump(2) + "\n";
}

}  // namespace asfnet
