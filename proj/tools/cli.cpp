#include "cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "asfnet/checkpoint.hpp"
#include "asfnet/config.hpp"
#include "asfnet/cost.hpp"
#include "asfnet/dataset.hpp"
#include "asfnet/density.hpp"
#include "asfnet/metrics.hpp"
#include "asfnet/model.hpp"
#include "asfnet/prune.hpp"
#include "asfnet/tensor_io.hpp"
#include "asfnet/training.hpp"

namespace asfnet::cli {

namespace {

namespace fs = std::filesystem;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

GtParams gt_params_from_file(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw FormatError("gt params: cannot open '" + path.string() + "'");
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    // Accept either a bare parameter object or a full pipeline config.
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("gt params: not valid JSON: " + std::string(e.what()));
    }
    nlohmann::json wrapper;
    wrapper["gt"] = j.contains("gt") ? j["gt"] : j;
    return config_from_json_text(wrapper.dump()).gt;
}

/// --config flag wins; otherwise a config.json next to the checkpoint;
/// otherwise defaults.
PipelineConfig resolve_config(const std::optional<fs::path>& config_flag, const fs::path& ckpt) {
    if (config_flag) return load_config(*config_flag);
    const fs::path sibling = ckpt.parent_path() / "config.json";
    if (fs::exists(sibling)) return load_config(sibling);
    return default_config();
}

Sample make_sample(const LoadedScene& scene, const PipelineConfig& cfg) {
    const int stride = cfg.network.backbone.total_stride();
    if (scene.image.h() % stride != 0 || scene.image.w() % stride != 0) {
        throw SpecError("dataset: image '" + scene.name + "' (" +
                        std::to_string(scene.image.w()) + "x" + std::to_string(scene.image.h()) +
                        ") is not divisible by the backbone stride " + std::to_string(stride) +
                        "; pad the image to a multiple first");
    }
    const int s1 = cfg.network.backbone.stage_strides[0];
    Sample sample;
    sample.image = scene.image;
    sample.gt = pool_to(generate_density_map(scene.ann, cfg.gt), scene.image.h() / s1,
                        scene.image.w() / s1);
    return sample;
}

int cmd_synth(const fs::path& spec_path, const fs::path& out_dir) {
    const SynthSpec spec = synth_spec_from_json_file(spec_path);
    write_synth_dataset(spec, out_dir);
    std::cout << "wrote " << spec.num_scenes << " scenes to " << out_dir.string() << "\n";
    return 0;
}

int cmd_gen_gt(const fs::path& ann_path, const std::optional<fs::path>& params_path,
               const fs::path& out_path) {
    const SceneAnnotation ann = load_annotation(ann_path);
    const GtParams params = params_path ? gt_params_from_file(*params_path) : GtParams{};
    const Tensor map = generate_density_map(ann, params);
    save_asft(out_path, map);
    double total = 0.0;
    for (float v : map.data) total += v;
    std::cout << "density map " << map.w() << "x" << map.h() << ", " << ann.points.size()
              << " points, mass " << total << "\n";
    return 0;
}

int cmd_train(const fs::path& config_path, const fs::path& data_dir, const fs::path& out_dir) {
    const PipelineConfig cfg = load_config(config_path);
    const auto scenes = load_dataset(data_dir);
    std::vector<Sample> samples;
    samples.reserve(scenes.size());
    for (const auto& scene : scenes) samples.push_back(make_sample(scene, cfg));

    ParamStore params =
        init_model_params(cfg.network, cfg.train.rng_seed, cfg.train.lambda_trainable);
    fs::create_directories(out_dir);
    save_config(out_dir / "config.json", cfg);

    const TrainResult result = train(params, samples, cfg.network, cfg.train, out_dir);
    if (result.diverged) {
        std::cerr << "error: training diverged (non-finite loss); last good checkpoint: "
                  << (result.last_checkpoint.empty() ? std::string("<none>")
                                                     : result.last_checkpoint.string())
                  << "\n";
        return 3;
    }
    std::cout << "trained " << result.epoch_loss.size() << " epochs (" << result.steps
              << " steps)";
    if (!result.epoch_loss.empty()) std::cout << ", final loss " << result.epoch_loss.back();
    std::cout << ", checkpoint " << result.last_checkpoint.string() << "\n";
    return 0;
}

int cmd_eval(const fs::path& ckpt, const fs::path& data_dir, const fs::path& report_path,
             const std::optional<fs::path>& config_flag) {
    const PipelineConfig cfg = resolve_config(config_flag, ckpt);
    const LoadedCheckpoint loaded = load_checkpoint(ckpt);
    const auto scenes = load_dataset(data_dir);
    if (scenes.empty()) throw FormatError("eval: dataset has no scenes");

    std::vector<std::array<double, 2>> pairs;
    for (const auto& scene : scenes) {
        const Tensor density = model_infer(loaded.params, cfg.network, scene.image);
        pairs.push_back({predicted_count(density)[0], static_cast<double>(scene.ann.points.size())});
    }
    const MetricReport report = count_metrics(pairs);
    std::ofstream f(report_path);
    if (!f) throw FormatError("eval: cannot open '" + report_path.string() + "' for writing");
    f << metric_report_json(report);
    std::cout << "mae " << report.mae << ", mse " << report.mse << " over " << report.n_images
              << " images\n";
    return 0;
}

int cmd_infer(const fs::path& ckpt, const fs::path& image_path, const fs::path& out_path,
              const std::optional<fs::path>& pgm_path,
              const std::optional<fs::path>& config_flag) {
    const PipelineConfig cfg = resolve_config(config_flag, ckpt);
    const LoadedCheckpoint loaded = load_checkpoint(ckpt);
    const Tensor image = load_image(image_path);
    const int stride = cfg.network.backbone.total_stride();
    if (image.h() % stride != 0 || image.w() % stride != 0) {
        throw SpecError("infer: image " + std::to_string(image.w()) + "x" +
                        std::to_string(image.h()) + " is not divisible by the backbone stride " +
                        std::to_string(stride) + "; pad the image to a multiple first");
    }
    const Tensor density = model_infer(loaded.params, cfg.network, image);
    save_asft(out_path, density);
    if (pgm_path) {
        // Max-normalized 8-bit visualization.
        float peak = 0.0f;
        for (float v : density.data) peak = std::max(peak, v);
        Tensor vis(1, 1, density.h(), density.w());
        if (peak > 0.0f) {
            for (std::size_t i = 0; i < vis.data.size(); ++i) {
                vis.data[i] = density.data[i] / peak;
            }
        }
        save_pgm(*pgm_path, vis);
    }
    std::cout << "predicted count " << predicted_count(density)[0] << "\n";
    return 0;
}

int cmd_prune(const fs::path& ckpt_in, const std::string& criterion, double fraction,
              const fs::path& out_path, const std::optional<fs::path>& sparsity_path) {
    if (!(fraction >= 0.0) || fraction >= 1.0) {
        throw UsageError("--fraction must lie in [0, 1)");
    }
    LoadedCheckpoint loaded = load_checkpoint(ckpt_in);
    const PruneMask mask =
        prune(loaded.params, prune_criterion_from_string(criterion), fraction);
    save_checkpoint(out_path, loaded.params, &mask);

    const fs::path sp = sparsity_path ? *sparsity_path
                                      : fs::path(out_path.string() + ".sparsity.json");
    std::ofstream f(sp);
    if (!f) throw FormatError("prune: cannot open '" + sp.string() + "' for writing");
    f << sparsity_report_json(mask);
    std::cout << "global sparsity " << sparsity_report(mask).global << "\n";
    return 0;
}

int cmd_flops(const fs::path& config_path, const std::string& input_size,
              const std::optional<fs::path>& report_path) {
    const PipelineConfig cfg = load_config(config_path);
    int c = 0, h = 0, w = 0;
    {
        char sep1 = 0, sep2 = 0;
        std::istringstream ss(input_size);
        if (!(ss >> c >> sep1 >> h >> sep2 >> w) || sep1 != 'x' || sep2 != 'x' || !ss.eof()) {
            throw UsageError("--input-size must look like CxHxW, e.g. 3x64x64");
        }
    }
    const CostReport report = count_cost(cfg.network, c, h, w);
    std::cout << render_cost_table(report);
    if (report_path) {
        std::ofstream f(*report_path);
        if (!f) throw FormatError("flops: cannot open '" + report_path->string() + "' for writing");
        f << cost_report_json(report);
    }
    return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
    CLI::App app{"lightweight crowd-density pipeline: synthesis, ground truth, training, "
                 "evaluation, pruning and cost accounting"};
    app.require_subcommand(1);
    std::function<int()> action;

    // synth
    {
        auto* sub = app.add_subcommand("synth", "generate a synthetic scene dataset");
        auto spec = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        sub->add_option("--spec", *spec, "synthesis spec JSON")->required();
        sub->add_option("--out", *out, "output dataset directory")->required();
        sub->callback([&action, spec, out] {
            action = [spec, out] { return cmd_synth(*spec, *out); };
        });
    }
    // gen-gt
    {
        auto* sub = app.add_subcommand("gen-gt", "render a ground-truth density map");
        auto ann = std::make_shared<std::string>();
        auto params = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        sub->add_option("--ann", *ann, "annotation JSON")->required();
        auto* popt = sub->add_option("--params", *params, "kernel parameter JSON");
        sub->add_option("--out", *out, "output .asft path")->required();
        sub->callback([&action, ann, params, popt, out] {
            const bool has_params = popt->count() > 0;
            action = [ann, params, has_params, out] {
                return cmd_gen_gt(*ann,
                                  has_params ? std::optional<fs::path>(*params) : std::nullopt,
                                  *out);
            };
        });
    }
    // train
    {
        auto* sub = app.add_subcommand("train", "train the model on a dataset");
        auto config = std::make_shared<std::string>();
        auto data = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        sub->add_option("--config", *config, "pipeline config JSON")->required();
        sub->add_option("--data", *data, "dataset directory (manifest.json)")->required();
        sub->add_option("--out", *out, "checkpoint output directory")->required();
        sub->callback([&action, config, data, out] {
            action = [config, data, out] { return cmd_train(*config, *data, *out); };
        });
    }
    // eval
    {
        auto* sub = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
        auto ckpt = std::make_shared<std::string>();
        auto data = std::make_shared<std::string>();
        auto report = std::make_shared<std::string>();
        auto config = std::make_shared<std::string>();
        sub->add_option("--ckpt", *ckpt, "checkpoint .asfc")->required();
        sub->add_option("--data", *data, "dataset directory")->required();
        sub->add_option("--report", *report, "metric report JSON output")->required();
        auto* copt = sub->add_option("--config", *config, "pipeline config JSON");
        sub->callback([&action, ckpt, data, report, config, copt] {
            const bool has_config = copt->count() > 0;
            action = [ckpt, data, report, config, has_config] {
                return cmd_eval(*ckpt, *data, *report,
                                has_config ? std::optional<fs::path>(*config) : std::nullopt);
            };
        });
    }
    // infer
    {
        auto* sub = app.add_subcommand("infer", "run one image through a checkpoint");
        auto ckpt = std::make_shared<std::string>();
        auto image = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto pgm = std::make_shared<std::string>();
        auto config = std::make_shared<std::string>();
        sub->add_option("--ckpt", *ckpt, "checkpoint .asfc")->required();
        sub->add_option("--image", *image, "input image (PGM or ASFT)")->required();
        sub->add_option("--out", *out, "density map .asft output")->required();
        auto* gopt = sub->add_option("--pgm", *pgm, "optional max-normalized PGM visualization");
        auto* copt = sub->add_option("--config", *config, "pipeline config JSON");
        sub->callback([&action, ckpt, image, out, pgm, gopt, config, copt] {
            const bool has_pgm = gopt->count() > 0;
            const bool has_config = copt->count() > 0;
            action = [ckpt, image, out, pgm, has_pgm, config, has_config] {
                return cmd_infer(*ckpt, *image, *out,
                                 has_pgm ? std::optional<fs::path>(*pgm) : std::nullopt,
                                 has_config ? std::optional<fs::path>(*config) : std::nullopt);
            };
        });
    }
    // prune
    {
        auto* sub = app.add_subcommand("prune", "magnitude-prune a checkpoint");
        auto ckpt = std::make_shared<std::string>();
        auto criterion = std::make_shared<std::string>();
        auto fraction = std::make_shared<double>(0.0);
        auto out = std::make_shared<std::string>();
        auto sparsity = std::make_shared<std::string>();
        sub->add_option("--ckpt", *ckpt, "input checkpoint .asfc")->required();
        sub->add_option("--criterion", *criterion, "l1 (unstructured) or l2 (channel)")
            ->required()
            ->check(CLI::IsMember({"l1", "l2"}));
        sub->add_option("--fraction", *fraction, "target sparsity in [0, 1)")->required();
        sub->add_option("--out", *out, "masked checkpoint output")->required();
        auto* sopt = sub->add_option("--sparsity", *sparsity,
                                     "sparsity JSON output (default: <out>.sparsity.json)");
        sub->callback([&action, ckpt, criterion, fraction, out, sparsity, sopt] {
            const bool has_sparsity = sopt->count() > 0;
            action = [ckpt, criterion, fraction, out, sparsity, has_sparsity] {
                return cmd_prune(*ckpt, *criterion, *fraction, *out,
                                 has_sparsity ? std::optional<fs::path>(*sparsity)
                                              : std::nullopt);
            };
        });
    }
    // flops
    {
        auto* sub = app.add_subcommand("flops", "print parameter/FLOP accounting");
        auto config = std::make_shared<std::string>();
        auto input = std::make_shared<std::string>();
        auto report = std::make_shared<std::string>();
        sub->add_option("--config", *config, "pipeline config JSON")->required();
        sub->add_option("--input-size", *input, "input size as CxHxW")->required();
        auto* ropt = sub->add_option("--report", *report, "cost report JSON output");
        sub->callback([&action, config, input, report, ropt] {
            const bool has_report = ropt->count() > 0;
            action = [config, input, report, has_report] {
                return cmd_flops(*config, *input,
                                 has_report ? std::optional<fs::path>(*report) : std::nullopt);
            };
        });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp& e) {
        std::cout << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n" << app.help();
        return 1;
    }

    try {
        return action ? action() : 1;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

int run(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.push_back("asfnet");
    for (const auto& a : args) argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace asfnet::cli
