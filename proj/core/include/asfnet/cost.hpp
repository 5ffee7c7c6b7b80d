#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "asfnet/model.hpp"
#include "asfnet/tensor.hpp"

namespace asfnet {

struct CostRow {
    std::string name;
    std::uint64_t params = 0;
    std::uint64_t flops = 0;
};

/// Analytic parameter and FLOP accounting. Conventions: one
/// multiply-accumulate counts as 2 FLOPs; bicubic resize costs 16 multiplies
/// + 15 adds per output element per channel; relu and lambda scaling cost 1
/// per element; channel concatenation is free. FLOPs are per single image
/// (batch 1) at the given input resolution.
struct CostReport {
    std::uint64_t total_params = 0;
    std::uint64_t total_flops = 0;
    std::uint64_t model_file_bytes = 0;  // serialized checkpoint size
    std::vector<CostRow> rows;
    std::string flops_convention = "1 multiply-accumulate = 2 FLOPs";
};

std::uint64_t conv_params(const ConvSpec& spec);
std::uint64_t conv_flops(const ConvSpec& spec, int in_h, int in_w);

CostReport count_cost(const NetworkConfig& config, int in_c, int in_h, int in_w);

std::string render_cost_table(const CostReport& report);
std::string cost_report_json(const CostReport& report);

}  // namespace asfnet
