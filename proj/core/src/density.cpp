#include "asfnet/density.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

namespace asfnet {

void SceneAnnotation::validate() const {
    if (width < 1 || height < 1) {
        throw SpecError("annotation: image dimensions must be positive, got " +
                        std::to_string(width) + "x" + std::to_string(height));
    }
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto& p = points[i];
        if (!std::isfinite(p[0]) || !std::isfinite(p[1])) {
            throw FormatError("annotation: point " + std::to_string(i) + " is non-finite");
        }
        if (p[0] < 0.0 || p[0] >= static_cast<double>(width) || p[1] < 0.0 ||
            p[1] >= static_cast<double>(height)) {
            throw FormatError("annotation: point " + std::to_string(i) + " (" +
                              std::to_string(p[0]) + ", " + std::to_string(p[1]) +
                              ") lies outside the " + std::to_string(width) + "x" +
                              std::to_string(height) + " image");
        }
    }
}

void GtParams::validate() const {
    if (k < 1) throw SpecError("gt params: k must be at least 1");
    if (!(beta > 0.0)) throw SpecError("gt params: beta must be positive");
    if (!(sigma_floor > 0.0) || sigma_cap < sigma_floor) {
        throw SpecError("gt params: need 0 < sigma_floor <= sigma_cap");
    }
    if (!(truncation_radius > 0.0)) throw SpecError("gt params: truncation_radius must be positive");
    if (fixed_sigma && !(*fixed_sigma > 0.0)) {
        throw SpecError("gt params: fixed_sigma must be positive when set");
    }
    if (!(single_point_sigma > 0.0)) {
        throw SpecError("gt params: single_point_sigma must be positive");
    }
}

double knn_mean_distance(const std::vector<std::array<double, 2>>& points, std::size_t i, int k) {
    if (points.size() < 2) {
        throw SpecError("knn_mean_distance: needs at least 2 points (fall back to fixed sigma)");
    }
    if (i >= points.size()) throw Error("knn_mean_distance: index out of range");
    if (k < 1) throw SpecError("knn_mean_distance: k must be at least 1");

    std::vector<double> dists;
    dists.reserve(points.size() - 1);
    for (std::size_t j = 0; j < points.size(); ++j) {
        if (j == i) continue;
        const double dx = points[j][0] - points[i][0];
        const double dy = points[j][1] - points[i][1];
        dists.push_back(std::sqrt(dx * dx + dy * dy));
    }
    std::sort(dists.begin(), dists.end());
    const std::size_t m = std::min<std::size_t>(static_cast<std::size_t>(k), dists.size());
    double acc = 0.0;
    for (std::size_t j = 0; j < m; ++j) acc += dists[j];
    return acc / static_cast<double>(m);
}

double adaptive_sigma(double d_bar, const GtParams& params) {
    if (d_bar < 0.0) throw SpecError("adaptive_sigma: mean distance must be non-negative");
    return std::clamp(params.beta * d_bar, params.sigma_floor, params.sigma_cap);
}

void splat_gaussian(std::vector<double>& grid, int height, int width, double cx, double cy,
                    double sigma, const GtParams& params) {
    if (cx < 0.0 || cx >= static_cast<double>(width) || cy < 0.0 ||
        cy >= static_cast<double>(height)) {
        throw SpecError("splat_gaussian: center out of bounds");
    }
    if (!(sigma > 0.0)) throw SpecError("splat_gaussian: sigma must be positive");

    const double radius = std::ceil(params.truncation_radius * sigma);
    const int r0 = std::max(0, static_cast<int>(std::floor(cy - radius)));
    const int r1 = std::min(height - 1, static_cast<int>(std::ceil(cy + radius)));
    const int c0 = std::max(0, static_cast<int>(std::floor(cx - radius)));
    const int c1 = std::min(width - 1, static_cast<int>(std::ceil(cx + radius)));

    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    double total = 0.0;
    for (int r = r0; r <= r1; ++r) {
        const double dy = (static_cast<double>(r) + 0.5) - cy;
        for (int c = c0; c <= c1; ++c) {
            const double dx = (static_cast<double>(c) + 0.5) - cx;
            total += std::exp(-(dx * dx + dy * dy) * inv2s2);
        }
    }
    // The window always contains the pixel under the center, so total > 0.
    const double norm = 1.0 / total;
    for (int r = r0; r <= r1; ++r) {
        const double dy = (static_cast<double>(r) + 0.5) - cy;
        for (int c = c0; c <= c1; ++c) {
            const double dx = (static_cast<double>(c) + 0.5) - cx;
            grid[static_cast<std::size_t>(r) * static_cast<std::size_t>(width) +
                 static_cast<std::size_t>(c)] +=
                std::exp(-(dx * dx + dy * dy) * inv2s2) * norm;
        }
    }
}

Tensor generate_density_map(const SceneAnnotation& ann, const GtParams& params) {
    ann.validate();
    params.validate();

    // Canonical splat order: permuting the annotation's point list must not
    // change the accumulated map.
    std::vector<std::array<double, 2>> pts = ann.points;
    std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
        return a[1] != b[1] ? a[1] < b[1] : a[0] < b[0];
    });

    std::vector<double> grid(static_cast<std::size_t>(ann.width) *
                                 static_cast<std::size_t>(ann.height),
                             0.0);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        double sigma;
        if (params.fixed_sigma) {
            sigma = *params.fixed_sigma;
        } else if (pts.size() < 2) {
            sigma = params.single_point_sigma;
        } else {
            sigma = adaptive_sigma(knn_mean_distance(pts, i, params.k), params);
        }
        splat_gaussian(grid, ann.height, ann.width, pts[i][0], pts[i][1], sigma, params);
    }

    Tensor out(1, 1, ann.height, ann.width);
    for (std::size_t i = 0; i < grid.size(); ++i) out.data[i] = static_cast<float>(grid[i]);
    return out;
}

Tensor pool_to(const Tensor& map, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw SpecError("pool_to: target size must be positive");
    if (map.h() % out_h != 0 || map.w() % out_w != 0) {
        throw SpecError("pool_to: input " + std::to_string(map.h()) + "x" +
                        std::to_string(map.w()) + " is not divisible into " +
                        std::to_string(out_h) + "x" + std::to_string(out_w) + " blocks");
    }
    const int bh = map.h() / out_h;
    const int bw = map.w() / out_w;
    Tensor out(map.n(), map.c(), out_h, out_w);
    for (int in = 0; in < map.n(); ++in) {
        for (int ic = 0; ic < map.c(); ++ic) {
            for (int oy = 0; oy < out_h; ++oy) {
                for (int ox = 0; ox < out_w; ++ox) {
                    double acc = 0.0;
                    for (int by = 0; by < bh; ++by) {
                        for (int bx = 0; bx < bw; ++bx) {
                            acc += static_cast<double>(
                                map.at(in, ic, oy * bh + by, ox * bw + bx));
                        }
                    }
                    out.at(in, ic, oy, ox) = static_cast<float>(acc);
                }
            }
        }
    }
    return out;
}

SceneAnnotation load_annotation(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw FormatError("annotation: cannot open '" + path.string() + "'");
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("annotation: '" + path.string() + "' is not valid JSON: " + e.what());
    }
    SceneAnnotation ann;
    try {
        ann.width = j.at("width").get<int>();
        ann.height = j.at("height").get<int>();
        for (const auto& p : j.at("points")) {
            if (!p.is_array() || p.size() != 2) {
                throw FormatError("annotation: points must be [x, y] pairs");
            }
            ann.points.push_back({p[0].get<double>(), p[1].get<double>()});
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("annotation: '" + path.string() + "' has malformed fields: " + e.what());
    }
    ann.validate();
    return ann;
}

void save_annotation(const std::filesystem::path& path, const SceneAnnotation& ann) {
    ann.validate();
    nlohmann::json j;
    j["width"] = ann.width;
    j["height"] = ann.height;
    auto points = nlohmann::json::array();
    for (const auto& p : ann.points) points.push_back({p[0], p[1]});
    j["points"] = std::move(points);
    std::ofstream f(path);
    if (!f) throw FormatError("annotation: cannot open '" + path.string() + "' for writing");
    f << j.dump(2) << "\n";
}

}  // namespace asfnet
