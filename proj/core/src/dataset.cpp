#include "asfnet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "asfnet/rng.hpp"
#include "asfnet/tensor_io.hpp"

namespace asfnet {

namespace {

// PGM token scanner that tracks its byte offset for diagnostics.
struct PgmReader {
    std::istream& in;
    std::size_t offset = 0;

    int get() {
        const int ch = in.get();
        if (ch != EOF) ++offset;
        return ch;
    }

    void skip_space_and_comments() {
        for (;;) {
            int ch = get();
            if (ch == '#') {
                while (ch != EOF && ch != '\n') ch = get();
            } else if (ch == EOF) {
                throw FormatError("PGM: truncated header at byte offset " +
                                  std::to_string(offset));
            } else if (!std::isspace(ch)) {
                in.unget();
                --offset;
                return;
            }
        }
    }

    int read_int(const char* what) {
        skip_space_and_comments();
        int value = 0;
        bool any = false;
        for (;;) {
            const int ch = get();
            if (ch >= '0' && ch <= '9') {
                value = value * 10 + (ch - '0');
                any = true;
                if (value > 1 << 28) {
                    throw FormatError(std::string("PGM: implausible ") + what +
                                      " near byte offset " + std::to_string(offset));
                }
            } else {
                if (ch != EOF) {
                    in.unget();
                    --offset;
                }
                break;
            }
        }
        if (!any) {
            throw FormatError(std::string("PGM: expected ") + what + " at byte offset " +
                              std::to_string(offset));
        }
        return value;
    }
};

}  // namespace

Tensor load_pgm(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("PGM: cannot open '" + path.string() + "'");

    PgmReader r{f};
    const int m0 = r.get();
    const int m1 = r.get();
    if (m0 != 'P' || m1 != '5') {
        throw FormatError("PGM: bad magic at byte offset 0 (expected 'P5')");
    }
    const int width = r.read_int("width");
    const int height = r.read_int("height");
    const int maxval = r.read_int("maxval");
    if (width < 1 || height < 1) throw FormatError("PGM: non-positive image dimensions");
    if (maxval < 1 || maxval > 255) {
        throw FormatError("PGM: maxval " + std::to_string(maxval) + " unsupported (8-bit only)");
    }
    // Exactly one whitespace byte separates the header from the raster.
    const int sep = r.get();
    if (sep == EOF || !std::isspace(sep)) {
        throw FormatError("PGM: missing raster separator at byte offset " +
                          std::to_string(r.offset));
    }

    const std::size_t pixels = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    std::vector<unsigned char> raw(pixels);
    f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(pixels));
    if (static_cast<std::size_t>(f.gcount()) != pixels) {
        throw FormatError("PGM: truncated raster at byte offset " +
                          std::to_string(r.offset + static_cast<std::size_t>(f.gcount())));
    }

    Tensor out(1, 3, height, width);
    const float scale = 1.0f / static_cast<float>(maxval);
    for (std::size_t i = 0; i < pixels; ++i) {
        const float v = static_cast<float>(raw[i]) * scale;
        out.data[i] = v;
        out.data[pixels + i] = v;
        out.data[2 * pixels + i] = v;
    }
    return out;
}

void save_pgm(const std::filesystem::path& path, const Tensor& image) {
    if (image.n() != 1 || (image.c() != 1 && image.c() != 3)) {
        throw ShapeError("save_pgm: expected (1, 1|3, H, W), got " + image.dims_str());
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("PGM: cannot open '" + path.string() + "' for writing");
    f << "P5\n" << image.w() << " " << image.h() << "\n255\n";
    const std::size_t pixels =
        static_cast<std::size_t>(image.h()) * static_cast<std::size_t>(image.w());
    std::vector<unsigned char> raw(pixels);
    for (std::size_t i = 0; i < pixels; ++i) {
        const float v = std::clamp(image.data[i], 0.0f, 1.0f);
        raw[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
    }
    f.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(pixels));
    if (!f) throw FormatError("PGM: write failed for '" + path.string() + "'");
}

Tensor load_image(const std::filesystem::path& path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw FormatError("image: cannot open '" + path.string() + "'");
    char magic[4] = {0, 0, 0, 0};
    probe.read(magic, 4);
    probe.close();
    if (magic[0] == 'P' && magic[1] == '5') return load_pgm(path);
    if (std::string(magic, 4) == "ASFT") {
        Tensor t = load_asft(path);
        if (t.n() != 1 || t.c() != 3) {
            throw FormatError("image: ASFT tensor must be (1, 3, H, W), got " + t.dims_str());
        }
        return t;
    }
    throw FormatError("image: '" + path.string() +
                      "' is neither a P5 PGM nor an ASFT tensor (bad magic at byte offset 0)");
}

void SynthSpec::validate() const {
    if (image_size < 16 || image_size % 16 != 0) {
        throw SpecError("synth spec: image_size must be a positive multiple of 16");
    }
    if (num_scenes < 1) throw SpecError("synth spec: num_scenes must be positive");
    if (count_min < 0 || count_max < count_min) {
        throw SpecError("synth spec: need 0 <= count_min <= count_max");
    }
    if (cluster_count < 1) throw SpecError("synth spec: cluster_count must be positive");
    if (!(cluster_spread > 0.0)) throw SpecError("synth spec: cluster_spread must be positive");
    if (!(blob_radius_min > 0.0) || blob_radius_max < blob_radius_min) {
        throw SpecError("synth spec: need 0 < blob_radius_min <= blob_radius_max");
    }
    if (noise_level < 0.0 || noise_level > 0.5) {
        throw SpecError("synth spec: noise_level must lie in [0, 0.5]");
    }
}

Scene synth_scene(const SynthSpec& spec, int index) {
    spec.validate();
    Rng rng(Rng::derive_seed(spec.rng_seed, static_cast<std::uint64_t>(index)));
    const int size = spec.image_size;
    const double fsize = static_cast<double>(size);

    const int count =
        static_cast<int>(rng.uniform_int(spec.count_min, spec.count_max));

    std::vector<std::array<double, 2>> clusters(static_cast<std::size_t>(spec.cluster_count));
    for (auto& c : clusters) {
        c = {rng.uniform(0.15 * fsize, 0.85 * fsize), rng.uniform(0.15 * fsize, 0.85 * fsize)};
    }

    SceneAnnotation ann;
    ann.width = size;
    ann.height = size;
    std::vector<double> radii;
    for (int i = 0; i < count; ++i) {
        const auto& c = clusters[static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(clusters.size()) - 1))];
        double x = 0.0, y = 0.0;
        bool placed = false;
        for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
            x = rng.normal(c[0], spec.cluster_spread);
            y = rng.normal(c[1], spec.cluster_spread);
            placed = x >= 0.0 && x < fsize && y >= 0.0 && y < fsize;
        }
        if (!placed) {
            x = std::clamp(x, 0.0, fsize - 1e-3);
            y = std::clamp(y, 0.0, fsize - 1e-3);
        }
        ann.points.push_back({x, y});
        radii.push_back(rng.uniform(spec.blob_radius_min, spec.blob_radius_max));
    }

    // Light noisy background, then subtract a radial blob per person.
    std::vector<double> gray(static_cast<std::size_t>(size) * static_cast<std::size_t>(size));
    for (double& v : gray) v = 0.85 + rng.uniform(-spec.noise_level, spec.noise_level);
    for (std::size_t p = 0; p < ann.points.size(); ++p) {
        const double cx = ann.points[p][0];
        const double cy = ann.points[p][1];
        const double r = radii[p];
        const int y0 = std::max(0, static_cast<int>(std::floor(cy - 3.0 * r)));
        const int y1 = std::min(size - 1, static_cast<int>(std::ceil(cy + 3.0 * r)));
        const int x0 = std::max(0, static_cast<int>(std::floor(cx - 3.0 * r)));
        const int x1 = std::min(size - 1, static_cast<int>(std::ceil(cx + 3.0 * r)));
        const double inv2r2 = 1.0 / (2.0 * (r / 1.5) * (r / 1.5));
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const double dx = (static_cast<double>(x) + 0.5) - cx;
                const double dy = (static_cast<double>(y) + 0.5) - cy;
                gray[static_cast<std::size_t>(y) * static_cast<std::size_t>(size) +
                     static_cast<std::size_t>(x)] -=
                    0.7 * std::exp(-(dx * dx + dy * dy) * inv2r2);
            }
        }
    }

    Scene scene;
    scene.ann = std::move(ann);
    scene.image = Tensor(1, 3, size, size);
    const std::size_t pixels = gray.size();
    for (std::size_t i = 0; i < pixels; ++i) {
        const float v = static_cast<float>(std::clamp(gray[i], 0.0, 1.0));
        scene.image.data[i] = v;
        scene.image.data[pixels + i] = v;
        scene.image.data[2 * pixels + i] = v;
    }
    return scene;
}

void write_synth_dataset(const SynthSpec& spec, const std::filesystem::path& dir) {
    spec.validate();
    std::filesystem::create_directories(dir);

    nlohmann::json manifest;
    manifest["split"] = "synthetic";
    auto scenes = nlohmann::json::array();
    for (int i = 0; i < spec.num_scenes; ++i) {
        const Scene scene = synth_scene(spec, i);
        char image_name[32], ann_name[32];
        std::snprintf(image_name, sizeof(image_name), "scene_%04d.pgm", i);
        std::snprintf(ann_name, sizeof(ann_name), "scene_%04d.json", i);
        save_pgm(dir / image_name, scene.image);
        save_annotation(dir / ann_name, scene.ann);
        scenes.push_back({{"image", image_name}, {"annotation", ann_name}});
    }
    manifest["scenes"] = std::move(scenes);

    std::ofstream f(dir / "manifest.json");
    if (!f) throw FormatError("synth: cannot write manifest under '" + dir.string() + "'");
    f << manifest.dump(2) << "\n";
}

std::vector<LoadedScene> load_dataset(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    std::ifstream f(manifest_path);
    if (!f) throw FormatError("dataset: cannot open '" + manifest_path.string() + "'");
    nlohmann::json manifest;
    try {
        f >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("dataset: manifest is not valid JSON: " + std::string(e.what()));
    }

    std::vector<LoadedScene> out;
    try {
        for (const auto& entry : manifest.at("scenes")) {
            LoadedScene scene;
            scene.name = entry.at("image").get<std::string>();
            scene.image = load_image(dir / scene.name);
            scene.ann = load_annotation(dir / entry.at("annotation").get<std::string>());
            if (scene.image.h() != scene.ann.height || scene.image.w() != scene.ann.width) {
                throw FormatError("dataset: image '" + scene.name + "' is " +
                                  std::to_string(scene.image.w()) + "x" +
                                  std::to_string(scene.image.h()) +
                                  " but its annotation declares " +
                                  std::to_string(scene.ann.width) + "x" +
                                  std::to_string(scene.ann.height));
            }
            out.push_back(std::move(scene));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("dataset: malformed manifest entry: " + std::string(e.what()));
    }
    return out;
}

SynthSpec synth_spec_from_json_file(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw FormatError("synth spec: cannot open '" + path.string() + "'");
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("synth spec: not valid JSON: " + std::string(e.what()));
    }
    SynthSpec spec;
    try {
        if (j.contains("image_size")) spec.image_size = j["image_size"].get<int>();
        if (j.contains("num_scenes")) spec.num_scenes = j["num_scenes"].get<int>();
        if (j.contains("count_min")) spec.count_min = j["count_min"].get<int>();
        if (j.contains("count_max")) spec.count_max = j["count_max"].get<int>();
        if (j.contains("cluster_count")) spec.cluster_count = j["cluster_count"].get<int>();
        if (j.contains("cluster_spread")) spec.cluster_spread = j["cluster_spread"].get<double>();
        if (j.contains("blob_radius_min")) {
            spec.blob_radius_min = j["blob_radius_min"].get<double>();
        }
        if (j.contains("blob_radius_max")) {
            spec.blob_radius_max = j["blob_radius_max"].get<double>();
        }
        if (j.contains("noise_level")) spec.noise_level = j["noise_level"].get<double>();
        if (j.contains("rng_seed")) spec.rng_seed = j["rng_seed"].get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("synth spec: malformed field: " + std::string(e.what()));
    }
    spec.validate();
    return spec;
}

}  // namespace asfnet
