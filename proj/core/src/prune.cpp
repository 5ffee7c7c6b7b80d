#include "asfnet/prune.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <nlohmann/json.hpp>

namespace asfnet {

PruneCriterion prune_criterion_from_string(const std::string& name) {
    if (name == "l1") return PruneCriterion::L1Unstructured;
    if (name == "l2") return PruneCriterion::L2StructuredChannel;
    throw SpecError("prune: unknown criterion '" + name + "' (expected l1 or l2)");
}

std::string prune_criterion_name(PruneCriterion criterion) {
    return criterion == PruneCriterion::L1Unstructured ? "l1" : "l2";
}

namespace {

bool is_prunable(const std::string& name) {
    // Conv weight tensors only; biases and lambdas keep their values.
    return name.size() > 7 && name.compare(name.size() - 7, 7, ".weight") == 0;
}

Tensor l1_mask(const Tensor& w, double fraction) {
    const std::size_t n = w.count();
    const std::size_t to_prune =
        static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const float ma = std::abs(w.data[a]);
        const float mb = std::abs(w.data[b]);
        return ma != mb ? ma < mb : a < b;
    });
    Tensor mask(w.dims[0], w.dims[1], w.dims[2], w.dims[3], 1.0f);
    for (std::size_t i = 0; i < to_prune && i < n; ++i) mask.data[order[i]] = 0.0f;
    return mask;
}

Tensor l2_channel_mask(const Tensor& w, double fraction) {
    const int channels = w.n();
    // Channel count whose realized fraction is nearest the target (half up),
    // with at least one survivor.
    int to_prune = static_cast<int>(std::floor(fraction * static_cast<double>(channels) + 0.5));
    to_prune = std::clamp(to_prune, 0, channels - 1);

    std::vector<double> norms(static_cast<std::size_t>(channels), 0.0);
    const std::size_t per_channel = w.count() / static_cast<std::size_t>(channels);
    for (int c = 0; c < channels; ++c) {
        double acc = 0.0;
        const float* base = w.data.data() + static_cast<std::size_t>(c) * per_channel;
        for (std::size_t i = 0; i < per_channel; ++i) {
            acc += static_cast<double>(base[i]) * static_cast<double>(base[i]);
        }
        norms[static_cast<std::size_t>(c)] = std::sqrt(acc);
    }
    std::vector<int> order(static_cast<std::size_t>(channels));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        const double na = norms[static_cast<std::size_t>(a)];
        const double nb = norms[static_cast<std::size_t>(b)];
        return na != nb ? na < nb : a < b;
    });

    Tensor mask(w.dims[0], w.dims[1], w.dims[2], w.dims[3], 1.0f);
    for (int i = 0; i < to_prune; ++i) {
        float* base = mask.data.data() +
                      static_cast<std::size_t>(order[static_cast<std::size_t>(i)]) * per_channel;
        std::fill_n(base, per_channel, 0.0f);
    }
    return mask;
}

}  // namespace

PruneMask prune(ParamStore& params, PruneCriterion criterion, double fraction) {
    if (!(fraction >= 0.0) || fraction >= 1.0) {
        throw SpecError("prune: fraction must lie in [0, 1), got " + std::to_string(fraction));
    }
    PruneMask result;
    result.criterion = prune_criterion_name(criterion);
    result.fraction = fraction;
    for (const auto& name : params.names()) {
        if (!is_prunable(name)) continue;
        auto& entry = params.at(name);
        Tensor mask = criterion == PruneCriterion::L1Unstructured
                          ? l1_mask(entry.value, fraction)
                          : l2_channel_mask(entry.value, fraction);
        for (std::size_t i = 0; i < mask.data.size(); ++i) {
            entry.value.data[i] *= mask.data[i];
        }
        result.masks.emplace(name, std::move(mask));
    }
    return result;
}

void apply_mask(ParamStore& params, const PruneMask& mask) {
    for (const auto& [name, m] : mask.masks) {
        auto& entry = params.at(name);
        if (!entry.value.same_dims(m)) {
            throw ShapeError("apply_mask: mask dims " + m.dims_str() + " do not match parameter '" +
                             name + "' dims " + entry.value.dims_str());
        }
        for (std::size_t i = 0; i < m.data.size(); ++i) {
            entry.value.data[i] *= m.data[i];
        }
    }
}

SparsityReport sparsity_report(const PruneMask& mask) {
    SparsityReport report;
    std::size_t zeros_total = 0, elems_total = 0;
    for (const auto& [name, m] : mask.masks) {
        std::size_t zeros = 0;
        for (float v : m.data) {
            if (v == 0.0f) ++zeros;
        }
        report.per_tensor[name] =
            m.data.empty() ? 0.0
                           : static_cast<double>(zeros) / static_cast<double>(m.data.size());
        zeros_total += zeros;
        elems_total += m.data.size();
    }
    report.global =
        elems_total == 0 ? 0.0 : static_cast<double>(zeros_total) / static_cast<double>(elems_total);
    return report;
}

std::string sparsity_report_json(const PruneMask& mask) {
    const SparsityReport report = sparsity_report(mask);
    nlohmann::json j;
    j["criterion"] = mask.criterion;
    j["fraction"] = mask.fraction;
    j["global_sparsity"] = report.global;
    nlohmann::json per = nlohmann::json::object();
    for (const auto& [name, frac] : report.per_tensor) per[name] = frac;
    j["per_tensor"] = std::move(per);
    return j.dump(2) + "\n";
}

}  // namespace asfnet
