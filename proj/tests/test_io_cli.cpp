#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "asfnet/config.hpp"
#include "asfnet/cost.hpp"
#include "asfnet/dataset.hpp"
#include "asfnet/density.hpp"
#include "asfnet/tensor_io.hpp"
#include "cli.hpp"

using namespace asfnet;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
    const auto dir = fs::temp_directory_path() / ("asfnet_cli_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path);
    f << text;
}

std::string read_bytes(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

// Tiny model + short training so CLI round trips stay fast.
std::string tiny_config_text(int epochs, double lr = 1e-3) {
    PipelineConfig cfg;
    cfg.network.backbone.stage_channels = {4, 6, 8, 10};
    cfg.network.fusion.branch_out_channels = 8;
    cfg.network.fusion.net_out_channels = 4;
    cfg.train.epochs = epochs;
    cfg.train.learning_rate = lr;
    cfg.train.checkpoint_interval = 0;
    return config_to_json_text(cfg);
}

std::string tiny_synth_text(int scenes, int size = 32) {
    return "{\"image_size\": " + std::to_string(size) +
           ", \"num_scenes\": " + std::to_string(scenes) +
           ", \"count_min\": 3, \"count_max\": 8, \"rng_seed\": 5}";
}

}  // namespace

TEST(Pgm, WhiteImageLoadsAsOnes) {
    const auto dir = fresh_dir("pgm_white");
    const auto path = dir / "white.pgm";
    {
        std::ofstream f(path, std::ios::binary);
        f << "P5\n8 8\n255\n";
        for (int i = 0; i < 64; ++i) f.put(static_cast<char>(255));
    }
    const Tensor img = load_pgm(path);
    EXPECT_EQ(img.dims, (std::array<int, 4>{1, 3, 8, 8}));
    for (float v : img.data) ASSERT_EQ(v, 1.0f);
}

TEST(Pgm, RoundTripAndComments) {
    const auto dir = fresh_dir("pgm_round");
    Tensor gray(1, 1, 4, 6);
    for (std::size_t i = 0; i < gray.data.size(); ++i) {
        gray.data[i] = static_cast<float>(i) / 23.0f;
    }
    save_pgm(dir / "a.pgm", gray);
    const Tensor back = load_pgm(dir / "a.pgm");
    for (std::size_t i = 0; i < gray.data.size(); ++i) {
        ASSERT_NEAR(back.data[i], gray.data[i], 1.0 / 255.0 + 1e-6);
    }

    // Header comments are legal.
    const auto commented = dir / "c.pgm";
    {
        std::ofstream f(commented, std::ios::binary);
        f << "P5\n# a comment\n2 2\n# another\n255\n";
        f.put(static_cast<char>(0));
        f.put(static_cast<char>(85));
        f.put(static_cast<char>(170));
        f.put(static_cast<char>(255));
    }
    const Tensor c = load_pgm(commented);
    EXPECT_FLOAT_EQ(c.at(0, 0, 1, 1), 1.0f);
}

TEST(Pgm, TruncationReportsOffset) {
    const auto dir = fresh_dir("pgm_trunc");
    const auto path = dir / "t.pgm";
    {
        std::ofstream f(path, std::ios::binary);
        f << "P5\n4 4\n255\n";
        f.put(static_cast<char>(1));  // 1 of 16 raster bytes
    }
    try {
        load_pgm(path);
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("byte offset"), std::string::npos) << e.what();
    }
}

TEST(SynthScene, DeterministicAndInBounds) {
    SynthSpec spec;
    spec.image_size = 32;
    spec.count_min = 5;
    spec.count_max = 5;
    spec.rng_seed = 11;

    const Scene a = synth_scene(spec, 2);
    const Scene b = synth_scene(spec, 2);
    EXPECT_EQ(a.image.data, b.image.data);
    ASSERT_EQ(a.ann.points.size(), 5u);
    a.ann.validate();

    const Scene c = synth_scene(spec, 3);
    EXPECT_NE(a.image.data, c.image.data);
}

TEST(SynthScene, AnnotationFeedsDensityPipeline) {
    SynthSpec spec;
    spec.image_size = 64;
    spec.count_min = 10;
    spec.count_max = 30;
    spec.rng_seed = 13;
    const Scene scene = synth_scene(spec, 0);
    const Tensor map = generate_density_map(scene.ann, GtParams{});
    double total = 0.0;
    for (float v : map.data) total += v;
    const double n = static_cast<double>(scene.ann.points.size());
    EXPECT_NEAR(total, n, 1e-4 * n);
}

TEST(ConfigJson, RoundTripPreservesEverything) {
    PipelineConfig cfg;
    cfg.network.backbone.stage_channels = {8, 16, 24, 40};
    cfg.network.fusion.lambdas = {1.0, 1.0, 1.0, 1.0};
    cfg.network.fusion.pairing = {{{1, 4}, {2, 3}}};
    cfg.train.learning_rate = 2.5e-4;
    cfg.train.epochs = 42;
    cfg.gt.fixed_sigma = 3.5;

    const PipelineConfig back = config_from_json_text(config_to_json_text(cfg));
    EXPECT_EQ(back.network.backbone.stage_channels, cfg.network.backbone.stage_channels);
    EXPECT_EQ(back.network.fusion.pairing, cfg.network.fusion.pairing);
    EXPECT_EQ(back.network.fusion.lambdas, cfg.network.fusion.lambdas);
    EXPECT_DOUBLE_EQ(back.train.learning_rate, 2.5e-4);
    EXPECT_EQ(back.train.epochs, 42);
    ASSERT_TRUE(back.gt.fixed_sigma.has_value());
    EXPECT_DOUBLE_EQ(*back.gt.fixed_sigma, 3.5);
}

TEST(ConfigJson, DefaultsMatchPaperValues) {
    const PipelineConfig cfg = config_from_json_text("{}");
    EXPECT_EQ(cfg.network.fusion.lambdas, (std::array<double, 4>{0.1, 0.1, 0.5, 1.0}));
    EXPECT_DOUBLE_EQ(cfg.train.learning_rate, 5e-5);
    EXPECT_DOUBLE_EQ(cfg.train.weight_decay, 1e-4);
    EXPECT_EQ(cfg.train.epochs, 500);
    EXPECT_EQ(cfg.gt.k, 10);
    EXPECT_EQ(cfg.network.fusion.branch_kernels[0].size, 3);
    EXPECT_EQ(cfg.network.fusion.branch_kernels[0].dilation, 2);
    EXPECT_EQ(cfg.network.fusion.branch_kernels[1].size, 3);
    EXPECT_EQ(cfg.network.fusion.branch_kernels[2].size, 1);
    EXPECT_EQ(cfg.network.fusion.branch_kernels[3].size, 1);

    EXPECT_THROW(config_from_json_text("{nope"), FormatError);
    EXPECT_THROW(config_from_json_text(R"({"fusion": {"pairing": [[1,1],[3,4]]}})"), SpecError);
}

TEST(Cli, SynthGenGtTrainEvalInferPruneFlopsPipeline) {
    const auto dir = fresh_dir("pipeline");
    write_text(dir / "synth.json", tiny_synth_text(2));
    write_text(dir / "config.json", tiny_config_text(2));

    EXPECT_EQ(cli::run({"synth", "--spec", (dir / "synth.json").string(), "--out",
                        (dir / "data").string()}),
              0);
    EXPECT_TRUE(fs::exists(dir / "data" / "manifest.json"));
    EXPECT_TRUE(fs::exists(dir / "data" / "scene_0000.pgm"));

    EXPECT_EQ(cli::run({"gen-gt", "--ann", (dir / "data" / "scene_0000.json").string(), "--out",
                        (dir / "gt0.asft").string()}),
              0);
    const Tensor gt = load_asft(dir / "gt0.asft");
    EXPECT_EQ(gt.h(), 32);

    EXPECT_EQ(cli::run({"train", "--config", (dir / "config.json").string(), "--data",
                        (dir / "data").string(), "--out", (dir / "run").string()}),
              0);
    EXPECT_TRUE(fs::exists(dir / "run" / "model_final.asfc"));
    EXPECT_TRUE(fs::exists(dir / "run" / "loss.csv"));
    EXPECT_TRUE(fs::exists(dir / "run" / "config.json"));

    EXPECT_EQ(cli::run({"eval", "--ckpt", (dir / "run" / "model_final.asfc").string(), "--data",
                        (dir / "data").string(), "--report", (dir / "report.json").string()}),
              0);
    EXPECT_TRUE(fs::exists(dir / "report.json"));

    EXPECT_EQ(cli::run({"infer", "--ckpt", (dir / "run" / "model_final.asfc").string(),
                        "--image", (dir / "data" / "scene_0001.pgm").string(), "--out",
                        (dir / "density.asft").string(), "--pgm", (dir / "density.pgm").string()}),
              0);
    const Tensor density = load_asft(dir / "density.asft");
    EXPECT_EQ(density.dims, (std::array<int, 4>{1, 1, 16, 16}));
    EXPECT_TRUE(fs::exists(dir / "density.pgm"));

    EXPECT_EQ(cli::run({"prune", "--ckpt", (dir / "run" / "model_final.asfc").string(),
                        "--criterion", "l1", "--fraction", "0.25", "--out",
                        (dir / "pruned.asfc").string()}),
              0);
    EXPECT_TRUE(fs::exists(dir / "pruned.asfc"));
    EXPECT_TRUE(fs::exists(dir / "pruned.asfc.sparsity.json"));

    // The pruned checkpoint evaluates end to end.
    EXPECT_EQ(cli::run({"eval", "--ckpt", (dir / "pruned.asfc").string(), "--config",
                        (dir / "run" / "config.json").string(), "--data",
                        (dir / "data").string(), "--report", (dir / "report2.json").string()}),
              0);

    EXPECT_EQ(cli::run({"flops", "--config", (dir / "config.json").string(), "--input-size",
                        "3x32x32", "--report", (dir / "cost.json").string()}),
              0);
    EXPECT_TRUE(fs::exists(dir / "cost.json"));
}

TEST(Cli, ByteReproducibleOutputs) {
    const auto a = fresh_dir("repro_a");
    const auto b = fresh_dir("repro_b");
    for (const auto& dir : {a, b}) {
        write_text(dir / "synth.json", tiny_synth_text(2));
        write_text(dir / "config.json", tiny_config_text(2));
        ASSERT_EQ(cli::run({"synth", "--spec", (dir / "synth.json").string(), "--out",
                            (dir / "data").string()}),
                  0);
        ASSERT_EQ(cli::run({"train", "--config", (dir / "config.json").string(), "--data",
                            (dir / "data").string(), "--out", (dir / "run").string()}),
                  0);
        ASSERT_EQ(cli::run({"gen-gt", "--ann", (dir / "data" / "scene_0001.json").string(),
                            "--out", (dir / "gt.asft").string()}),
                  0);
    }
    EXPECT_EQ(read_bytes(a / "data" / "scene_0000.pgm"), read_bytes(b / "data" / "scene_0000.pgm"));
    EXPECT_EQ(read_bytes(a / "data" / "manifest.json"), read_bytes(b / "data" / "manifest.json"));
    EXPECT_EQ(read_bytes(a / "gt.asft"), read_bytes(b / "gt.asft"));
    EXPECT_EQ(read_bytes(a / "run" / "model_final.asfc"),
              read_bytes(b / "run" / "model_final.asfc"));
    EXPECT_EQ(read_bytes(a / "run" / "loss.csv"), read_bytes(b / "run" / "loss.csv"));
}

TEST(Cli, GenGtOnEmptyAnnotationWritesZeroMap) {
    const auto dir = fresh_dir("empty_ann");
    write_text(dir / "ann.json", R"({"width": 32, "height": 32, "points": []})");
    EXPECT_EQ(cli::run({"gen-gt", "--ann", (dir / "ann.json").string(), "--out",
                        (dir / "zero.asft").string()}),
              0);
    const Tensor map = load_asft(dir / "zero.asft");
    for (float v : map.data) ASSERT_EQ(v, 0.0f);
}

TEST(Cli, ExitCodes) {
    const auto dir = fresh_dir("exit_codes");

    // Unknown flag -> usage error 1.
    EXPECT_EQ(cli::run({"synth", "--nope", "x"}), 1);
    // Unknown subcommand -> 1.
    EXPECT_EQ(cli::run({"frobnicate"}), 1);
    // No subcommand -> 1.
    EXPECT_EQ(cli::run({}), 1);
    // Help -> 0.
    EXPECT_EQ(cli::run({"--help"}), 0);

    // Missing input file -> data error 2.
    EXPECT_EQ(cli::run({"gen-gt", "--ann", (dir / "missing.json").string(), "--out",
                        (dir / "out.asft").string()}),
              2);

    // Malformed annotation -> 2, not a crash.
    write_text(dir / "bad.json", "{broken");
    EXPECT_EQ(cli::run({"gen-gt", "--ann", (dir / "bad.json").string(), "--out",
                        (dir / "out.asft").string()}),
              2);

    // Out-of-range fraction -> usage error 1.
    write_text(dir / "config.json", tiny_config_text(1));
    EXPECT_EQ(cli::run({"prune", "--ckpt", (dir / "nothing.asfc").string(), "--criterion", "l1",
                        "--fraction", "1.5", "--out", (dir / "o.asfc").string()}),
              1);
    // Bad criterion -> 1 (flag validation).
    EXPECT_EQ(cli::run({"prune", "--ckpt", (dir / "nothing.asfc").string(), "--criterion", "l7",
                        "--fraction", "0.25", "--out", (dir / "o.asfc").string()}),
              1);

    // Truncated checkpoint -> 2.
    write_text(dir / "trunc.asfc", "ASFC");
    EXPECT_EQ(cli::run({"eval", "--ckpt", (dir / "trunc.asfc").string(), "--data", dir.string(),
                        "--report", (dir / "r.json").string()}),
              2);

    // Indivisible image size -> 2 with a padding hint.
    write_text(dir / "synth.json", tiny_synth_text(1));
    ASSERT_EQ(cli::run({"synth", "--spec", (dir / "synth.json").string(), "--out",
                        (dir / "data").string()}),
              0);
    ASSERT_EQ(cli::run({"train", "--config", (dir / "config.json").string(), "--data",
                        (dir / "data").string(), "--out", (dir / "run").string()}),
              0);
    {
        std::ofstream f(dir / "odd.pgm", std::ios::binary);
        f << "P5\n30 30\n255\n";
        for (int i = 0; i < 900; ++i) f.put(static_cast<char>(128));
    }
    EXPECT_EQ(cli::run({"infer", "--ckpt", (dir / "run" / "model_final.asfc").string(),
                        "--image", (dir / "odd.pgm").string(), "--out",
                        (dir / "d.asft").string()}),
              2);

    // Divergent training -> numeric failure 3.
    write_text(dir / "diverge.json", tiny_config_text(50, 1e18));
    EXPECT_EQ(cli::run({"train", "--config", (dir / "diverge.json").string(), "--data",
                        (dir / "data").string(), "--out", (dir / "run_div").string()}),
              3);
}

TEST(Cli, FlopsGoldenTotalsMatchAccounting) {
    const auto dir = fresh_dir("flops_golden");
    write_text(dir / "config.json", "{}");
    ASSERT_EQ(cli::run({"flops", "--config", (dir / "config.json").string(), "--input-size",
                        "3x64x64", "--report", (dir / "cost.json").string()}),
              0);
    const std::string json = read_bytes(dir / "cost.json");

    const CostReport expect = count_cost(NetworkConfig{}, 3, 64, 64);
    EXPECT_NE(json.find("\"total_params\": " + std::to_string(expect.total_params)),
              std::string::npos);
    EXPECT_NE(json.find("\"total_flops\": " + std::to_string(expect.total_flops)),
              std::string::npos);

    // Malformed --input-size is a usage error.
    EXPECT_EQ(cli::run({"flops", "--config", (dir / "config.json").string(), "--input-size",
                        "64x64"}),
              1);
}
