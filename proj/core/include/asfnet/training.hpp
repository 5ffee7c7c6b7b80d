#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include "asfnet/autodiff.hpp"
#include "asfnet/model.hpp"
#include "asfnet/prune.hpp"
#include "asfnet/tensor.hpp"

namespace asfnet {

struct TrainConfig {
    double learning_rate = 5e-5;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int epochs = 500;
    int batch_size = 1;
    std::uint64_t rng_seed = 0;
    bool lambda_trainable = false;
    bool shuffle = false;          // deterministic per-epoch shuffle when on
    int checkpoint_interval = 100;  // epochs between checkpoints; 0 = final only

    void validate() const;
};

/// Per-parameter Adam moments plus the shared step counter (incremented once
/// per adam_step call).
struct OptimizerState {
    struct Moments {
        Tensor m;
        Tensor v;
    };
    std::map<std::string, Moments> moments;
    std::int64_t step = 0;
};

/// Pixel-wise L2 objective: (1/(2N)) * sum((pred - gt)^2); its gradient with
/// respect to pred is (pred - gt)/N. Eager value for evaluation; training
/// records the same op on the tape.
double l2_density_loss(const Tensor& pred, const Tensor& gt);

/// Adam with decoupled weight decay: p <- p*(1 - lr*wd) before the
/// bias-corrected moment update. Entries flagged no-decay (the lambdas) skip
/// the decay; frozen entries are untouched.
void adam_step(ParamStore& params, const std::map<std::string, Tensor>& grads,
               OptimizerState& state, const TrainConfig& config);

struct Sample {
    Tensor image;  // (1, C, H, W)
    Tensor gt;     // (1, 1, H_t, W_t), already pooled to the head resolution
};

struct TrainResult {
    std::vector<double> epoch_loss;  // mean loss per epoch
    std::filesystem::path last_checkpoint;
    bool diverged = false;
    std::int64_t steps = 0;
};

/// Epoch loop: forward -> loss -> backward -> adam_step, fixed data order
/// (optionally shuffled deterministically), optional prune-mask reapplication
/// after every step. When out_dir is non-empty, writes periodic checkpoints,
/// model_final.asfc and loss.csv there. On divergence (non-finite loss) the
/// loop stops and reports the last checkpoint written.
TrainResult train(ParamStore& params, const std::vector<Sample>& data, const NetworkConfig& net,
                  const TrainConfig& config, const std::filesystem::path& out_dir = {},
                  const PruneMask* mask = nullptr);

}  // namespace asfnet
