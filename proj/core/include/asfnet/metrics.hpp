#pragma once

#include <array>
#include <string>
#include <vector>

namespace asfnet {

/// Count metrics over a set of images. "mse" follows the crowd-counting
/// convention: the root of the mean squared count error, so mae <= mse
/// always holds.
struct MetricReport {
    double mae = 0.0;
    double mse = 0.0;
    int n_images = 0;
    std::vector<std::array<double, 2>> pairs;  // (predicted, actual)
};

MetricReport count_metrics(const std::vector<std::array<double, 2>>& pairs);

std::string metric_report_json(const MetricReport& report);

}  // namespace asfnet
