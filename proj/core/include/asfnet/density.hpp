#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <vector>

#include "asfnet/tensor.hpp"

namespace asfnet {

/// Image dimensions plus head-point coordinates in pixel units,
/// 0 <= x < width and 0 <= y < height.
struct SceneAnnotation {
    int width = 0;
    int height = 0;
    std::vector<std::array<double, 2>> points;  // (x, y)

    void validate() const;
};

/// Geometry-adaptive kernel parameters: sigma_i = clamp(beta * dbar_i,
/// sigma_floor, sigma_cap) where dbar_i is the mean distance to the k
/// nearest annotated neighbours.
struct GtParams {
    int k = 10;
    double beta = 0.3;
    double sigma_floor = 0.5;
    double sigma_cap = 15.0;
    double truncation_radius = 4.0;  // window half-width, in multiples of sigma
    std::optional<double> fixed_sigma;  // disables adaptivity when set
    double single_point_sigma = 4.0;    // fallback when k-NN is undefined

    void validate() const;
};

/// Mean distance from points[i] to its min(k, n-1) nearest other points.
/// Brute force; throws SpecError on fewer than 2 points (the caller falls
/// back to a fixed sigma in that case).
double knn_mean_distance(const std::vector<std::array<double, 2>>& points, std::size_t i, int k);

double adaptive_sigma(double d_bar, const GtParams& params);

/// Adds one truncated, discretized Gaussian at a sub-pixel center to the
/// grid, renormalized after truncation and border clipping so its grid sum
/// is exactly 1. Pixel (r, c) samples the Gaussian at center (c+0.5, r+0.5).
void splat_gaussian(std::vector<double>& grid, int height, int width, double cx, double cy,
                    double sigma, const GtParams& params);

/// One unit-mass splat per annotated point; map sum equals the point count
/// up to rounding. Splats run in a canonical (y, x)-sorted order with 64-bit
/// accumulation so point-list permutations are bit-identical.
Tensor generate_density_map(const SceneAnnotation& ann, const GtParams& params);

/// Sum-pooling over equal blocks; requires divisible sizes and preserves
/// total mass.
Tensor pool_to(const Tensor& map, int out_h, int out_w);

// Annotation JSON: {"width": int, "height": int, "points": [[x, y], ...]}.
SceneAnnotation load_annotation(const std::filesystem::path& path);
void save_annotation(const std::filesystem::path& path, const SceneAnnotation& ann);

}  // namespace asfnet
