#pragma once

#include <filesystem>
#include <string>

#include "asfnet/density.hpp"
#include "asfnet/model.hpp"
#include "asfnet/training.hpp"

namespace asfnet {

/// Whole-pipeline configuration file: top-level keys "backbone", "fusion",
/// "train" and "gt". Every key is optional and falls back to the defaults
/// baked into the structs; the fusion pairing is written as [[1,2],[3,4]].
struct PipelineConfig {
    NetworkConfig network;
    TrainConfig train;
    GtParams gt;

    void validate() const {
        network.validate();
        train.validate();
        gt.validate();
    }
};

PipelineConfig default_config();

PipelineConfig config_from_json_text(const std::string& text);
std::string config_to_json_text(const PipelineConfig& config);

PipelineConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const PipelineConfig& config);

}  // namespace asfnet
