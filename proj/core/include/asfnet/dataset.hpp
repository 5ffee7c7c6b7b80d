#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "asfnet/density.hpp"
#include "asfnet/tensor.hpp"

namespace asfnet {

/// Reads a binary PGM (P5, 8-bit) as a (1, 3, H, W) tensor in [0, 1], the
/// single gray channel replicated. Format errors carry the byte offset.
Tensor load_pgm(const std::filesystem::path& path);

/// Writes channel 0 of a (1, 1|3, H, W) tensor as an 8-bit P5 file; values
/// are clamped to [0, 1] and scaled to 255.
void save_pgm(const std::filesystem::path& path, const Tensor& image);

/// Loads an image by content sniffing: 'P5' -> PGM, 'ASFT' -> tensor file
/// (which must already be (1, 3, H, W)).
Tensor load_image(const std::filesystem::path& path);

/// Synthetic scene generator: clustered head points rendered as dark radial
/// blobs on a noisy light background. Deterministic per (rng_seed, index).
struct SynthSpec {
    int image_size = 64;  // square, must be divisible by 16
    int num_scenes = 8;
    int count_min = 5;
    int count_max = 20;
    int cluster_count = 3;
    double cluster_spread = 10.0;  // stddev of point offsets, px
    double blob_radius_min = 1.5;
    double blob_radius_max = 3.0;
    double noise_level = 0.03;
    std::uint64_t rng_seed = 0;

    void validate() const;
};

struct Scene {
    Tensor image;  // (1, 3, H, W) in [0, 1]
    SceneAnnotation ann;
};

Scene synth_scene(const SynthSpec& spec, int index);

/// Writes scene_%04d.pgm / scene_%04d.json pairs plus manifest.json (the
/// ordered list that defines dataset order).
void write_synth_dataset(const SynthSpec& spec, const std::filesystem::path& dir);

struct LoadedScene {
    Tensor image;
    SceneAnnotation ann;
    std::string name;
};

/// Loads every manifest entry eagerly, verifying that files parse and that
/// image and annotation dimensions agree.
std::vector<LoadedScene> load_dataset(const std::filesystem::path& dir);

SynthSpec synth_spec_from_json_file(const std::filesystem::path& path);

}  // namespace asfnet
