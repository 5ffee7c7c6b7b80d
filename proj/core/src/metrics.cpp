#include "asfnet/metrics.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "asfnet/error.hpp"

namespace asfnet {

MetricReport count_metrics(const std::vector<std::array<double, 2>>& pairs) {
    if (pairs.empty()) throw SpecError("count_metrics: empty pair list");
    MetricReport r;
    r.pairs = pairs;
    r.n_images = static_cast<int>(pairs.size());
    double abs_acc = 0.0, sq_acc = 0.0;
    for (const auto& p : pairs) {
        const double err = p[0] - p[1];
        abs_acc += std::abs(err);
        sq_acc += err * err;
    }
    r.mae = abs_acc / static_cast<double>(pairs.size());
    r.mse = std::sqrt(sq_acc / static_cast<double>(pairs.size()));
    return r;
}

std::string metric_report_json(const MetricReport& report) {
    nlohmann::json j;
    j["mae"] = report.mae;
    j["mse"] = report.mse;
    j["n_images"] = report.n_images;
    auto pairs = nlohmann::json::array();
    for (const auto& p : report.pairs) {
        pairs.push_back({{"predicted", p[0]}, {"actual", p[1]}});
    }
    j["pairs"] = std::move(pairs);
    return j.dump(2) + "\n";
}

}  // namespace asfnet
