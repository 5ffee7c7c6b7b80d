#include "asfnet/config.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

namespace asfnet {

namespace {

using nlohmann::json;

json kernel_to_json(const KernelSpec& k) {
    return json{{"size", k.size}, {"dilation", k.dilation}};
}

KernelSpec kernel_from_json(const json& j, const std::string& what) {
    KernelSpec k;
    if (j.is_number_integer()) {
        k.size = j.get<int>();
        return k;
    }
    if (!j.is_object()) throw FormatError("config: " + what + " must be an object or integer");
    if (j.contains("size")) k.size = j["size"].get<int>();
    if (j.contains("dilation")) k.dilation = j["dilation"].get<int>();
    return k;
}

void backbone_from_json(const json& j, BackboneConfig& cfg) {
    if (j.contains("stage_channels")) {
        const auto& arr = j["stage_channels"];
        if (!arr.is_array() || arr.size() != 4) {
            throw FormatError("config: backbone.stage_channels must have 4 entries");
        }
        for (int i = 0; i < 4; ++i) cfg.stage_channels[static_cast<std::size_t>(i)] = arr[i];
    }
    if (j.contains("stage_strides")) {
        const auto& arr = j["stage_strides"];
        if (!arr.is_array() || arr.size() != 4) {
            throw FormatError("config: backbone.stage_strides must have 4 entries");
        }
        for (int i = 0; i < 4; ++i) cfg.stage_strides[static_cast<std::size_t>(i)] = arr[i];
    }
    if (j.contains("input_channels")) cfg.input_channels = j["input_channels"].get<int>();
}

void fusion_from_json(const json& j, FusionConfig& cfg) {
    if (j.contains("branch_kernels")) {
        const auto& arr = j["branch_kernels"];
        if (!arr.is_array() || arr.size() != 4) {
            throw FormatError("config: fusion.branch_kernels must have 4 entries");
        }
        for (int i = 0; i < 4; ++i) {
            cfg.branch_kernels[static_cast<std::size_t>(i)] =
                kernel_from_json(arr[i], "fusion.branch_kernels[" + std::to_string(i) + "]");
        }
    }
    if (j.contains("lambdas")) {
        const auto& arr = j["lambdas"];
        if (!arr.is_array() || arr.size() != 4) {
            throw FormatError("config: fusion.lambdas must have 4 entries");
        }
        for (int i = 0; i < 4; ++i) cfg.lambdas[static_cast<std::size_t>(i)] = arr[i];
    }
    if (j.contains("pairing")) {
        const auto& arr = j["pairing"];
        if (!arr.is_array() || arr.size() != 2 || !arr[0].is_array() || arr[0].size() != 2 ||
            !arr[1].is_array() || arr[1].size() != 2) {
            throw FormatError("config: fusion.pairing must be two pairs, e.g. [[1,2],[3,4]]");
        }
        for (int p = 0; p < 2; ++p) {
            for (int q = 0; q < 2; ++q) {
                cfg.pairing[static_cast<std::size_t>(p)][static_cast<std::size_t>(q)] = arr[p][q];
            }
        }
    }
    if (j.contains("branch_out_channels")) {
        cfg.branch_out_channels = j["branch_out_channels"].get<int>();
    }
    if (j.contains("fuse1_kernel")) cfg.fuse1_kernel = kernel_from_json(j["fuse1_kernel"], "fuse1");
    if (j.contains("fuse2_kernel")) cfg.fuse2_kernel = kernel_from_json(j["fuse2_kernel"], "fuse2");
    if (j.contains("fused_kernel")) cfg.fused_kernel = kernel_from_json(j["fused_kernel"], "fused");
    if (j.contains("net_kernel")) cfg.net_kernel = kernel_from_json(j["net_kernel"], "net");
    if (j.contains("net_out_channels")) cfg.net_out_channels = j["net_out_channels"].get<int>();
    if (j.contains("target_resolution")) {
        cfg.target_resolution = j["target_resolution"].get<std::string>();
    }
}

void train_from_json(const json& j, TrainConfig& cfg) {
    if (j.contains("learning_rate")) cfg.learning_rate = j["learning_rate"].get<double>();
    if (j.contains("weight_decay")) cfg.weight_decay = j["weight_decay"].get<double>();
    if (j.contains("beta1")) cfg.beta1 = j["beta1"].get<double>();
    if (j.contains("beta2")) cfg.beta2 = j["beta2"].get<double>();
    if (j.contains("epsilon")) cfg.epsilon = j["epsilon"].get<double>();
    if (j.contains("epochs")) cfg.epochs = j["epochs"].get<int>();
    if (j.contains("batch_size")) cfg.batch_size = j["batch_size"].get<int>();
    if (j.contains("rng_seed")) cfg.rng_seed = j["rng_seed"].get<std::uint64_t>();
    if (j.contains("lambda_trainable")) cfg.lambda_trainable = j["lambda_trainable"].get<bool>();
    if (j.contains("shuffle")) cfg.shuffle = j["shuffle"].get<bool>();
    if (j.contains("checkpoint_interval")) {
        cfg.checkpoint_interval = j["checkpoint_interval"].get<int>();
    }
}

void gt_from_json(const json& j, GtParams& cfg) {
    if (j.contains("k")) cfg.k = j["k"].get<int>();
    if (j.contains("beta")) cfg.beta = j["beta"].get<double>();
    if (j.contains("sigma_floor")) cfg.sigma_floor = j["sigma_floor"].get<double>();
    if (j.contains("sigma_cap")) cfg.sigma_cap = j["sigma_cap"].get<double>();
    if (j.contains("truncation_radius")) {
        cfg.truncation_radius = j["truncation_radius"].get<double>();
    }
    if (j.contains("fixed_sigma") && !j["fixed_sigma"].is_null()) {
        cfg.fixed_sigma = j["fixed_sigma"].get<double>();
    }
    if (j.contains("single_point_sigma")) {
        cfg.single_point_sigma = j["single_point_sigma"].get<double>();
    }
}

}  // namespace

PipelineConfig default_config() { return PipelineConfig{}; }

PipelineConfig config_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError("config: not valid JSON: " + std::string(e.what()));
    }
    PipelineConfig cfg;
    try {
        if (j.contains("backbone")) backbone_from_json(j["backbone"], cfg.network.backbone);
        if (j.contains("fusion")) fusion_from_json(j["fusion"], cfg.network.fusion);
        if (j.contains("train")) train_from_json(j["train"], cfg.train);
        if (j.contains("gt")) gt_from_json(j["gt"], cfg.gt);
    } catch (const json::exception& e) {
        throw FormatError("config: malformed field: " + std::string(e.what()));
    }
    cfg.validate();
    return cfg;
}

std::string config_to_json_text(const PipelineConfig& config) {
    json j;
    j["backbone"] = {{"stage_channels", config.network.backbone.stage_channels},
                     {"stage_strides", config.network.backbone.stage_strides},
                     {"input_channels", config.network.backbone.input_channels}};

    auto kernels = json::array();
    for (const auto& k : config.network.fusion.branch_kernels) kernels.push_back(kernel_to_json(k));
    json pairing = json::array();
    for (const auto& p : config.network.fusion.pairing) pairing.push_back({p[0], p[1]});
    j["fusion"] = {{"branch_kernels", std::move(kernels)},
                   {"lambdas", config.network.fusion.lambdas},
                   {"pairing", std::move(pairing)},
                   {"branch_out_channels", config.network.fusion.branch_out_channels},
                   {"fuse1_kernel", kernel_to_json(config.network.fusion.fuse1_kernel)},
                   {"fuse2_kernel", kernel_to_json(config.network.fusion.fuse2_kernel)},
                   {"fused_kernel", kernel_to_json(config.network.fusion.fused_kernel)},
                   {"net_kernel", kernel_to_json(config.network.fusion.net_kernel)},
                   {"net_out_channels", config.network.fusion.net_out_channels},
                   {"target_resolution", config.network.fusion.target_resolution}};

    j["train"] = {{"learning_rate", config.train.learning_rate},
                  {"weight_decay", config.train.weight_decay},
                  {"beta1", config.train.beta1},
                  {"beta2", config.train.beta2},
                  {"epsilon", config.train.epsilon},
                  {"epochs", config.train.epochs},
                  {"batch_size", config.train.batch_size},
                  {"rng_seed", config.train.rng_seed},
                  {"lambda_trainable", config.train.lambda_trainable},
                  {"shuffle", config.train.shuffle},
                  {"checkpoint_interval", config.train.checkpoint_interval}};

    j["gt"] = {{"k", config.gt.k},
               {"beta", config.gt.beta},
               {"sigma_floor", config.gt.sigma_floor},
               {"sigma_cap", config.gt.sigma_cap},
               {"truncation_radius", config.gt.truncation_radius},
               {"fixed_sigma", config.gt.fixed_sigma ? json(*config.gt.fixed_sigma) : json(nullptr)},
               {"single_point_sigma", config.gt.single_point_sigma}};

    return j.dump(2) + "\n";
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw FormatError("config: cannot open '" + path.string() + "'");
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return config_from_json_text(text);
}

void save_config(const std::filesystem::path& path, const PipelineConfig& config) {
    std::ofstream f(path);
    if (!f) throw FormatError("config: cannot open '" + path.string() + "' for writing");
    f << config_to_json_text(config);
}

}  // namespace asfnet
