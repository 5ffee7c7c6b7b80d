#include "asfnet/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "asfnet/checkpoint.hpp"
#include "asfnet/rng.hpp"

namespace asfnet {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw SpecError("train config: learning_rate must be positive");
    if (weight_decay < 0.0) throw SpecError("train config: weight_decay must be non-negative");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
        throw SpecError("train config: beta1/beta2 must lie in [0, 1)");
    }
    if (!(epsilon > 0.0)) throw SpecError("train config: epsilon must be positive");
    if (epochs < 0) throw SpecError("train config: epochs must be non-negative");
    if (batch_size < 1) throw SpecError("train config: batch_size must be at least 1");
    if (checkpoint_interval < 0) {
        throw SpecError("train config: checkpoint_interval must be non-negative");
    }
}

double l2_density_loss(const Tensor& pred, const Tensor& gt) {
    if (!pred.same_dims(gt)) {
        throw ShapeError("l2_density_loss: prediction dims " + pred.dims_str() +
                         " do not match ground-truth dims " + gt.dims_str());
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const double d = static_cast<double>(pred.data[i]) - static_cast<double>(gt.data[i]);
        acc += d * d;
    }
    return acc / (2.0 * static_cast<double>(std::max(1, pred.n())));
}

void adam_step(ParamStore& params, const std::map<std::string, Tensor>& grads,
               OptimizerState& state, const TrainConfig& config) {
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(config.beta1, t);
    const double bc2 = 1.0 - std::pow(config.beta2, t);

    for (const auto& name : params.names()) {
        auto& entry = params.at(name);
        if (!entry.trainable) continue;
        auto git = grads.find(name);
        if (git == grads.end()) {
            throw Error("adam_step: no gradient supplied for parameter '" + name + "'");
        }
        const Tensor& g = git->second;
        if (!g.same_dims(entry.value)) {
            throw ShapeError("adam_step: gradient dims " + g.dims_str() +
                             " do not match parameter '" + name + "' dims " +
                             entry.value.dims_str());
        }
        for (float v : g.data) {
            if (!std::isfinite(v)) {
                throw NumericError("adam_step: non-finite gradient for parameter '" + name + "'");
            }
        }

        auto [mit, inserted] = state.moments.try_emplace(name);
        if (inserted) {
            mit->second.m = Tensor(g.dims[0], g.dims[1], g.dims[2], g.dims[3]);
            mit->second.v = Tensor(g.dims[0], g.dims[1], g.dims[2], g.dims[3]);
        }
        Tensor& m = mit->second.m;
        Tensor& v = mit->second.v;

        const double decay_factor =
            entry.decay ? 1.0 - config.learning_rate * config.weight_decay : 1.0;
        for (std::size_t i = 0; i < g.data.size(); ++i) {
            const double gi = static_cast<double>(g.data[i]);
            const double mi =
                config.beta1 * static_cast<double>(m.data[i]) + (1.0 - config.beta1) * gi;
            const double vi =
                config.beta2 * static_cast<double>(v.data[i]) + (1.0 - config.beta2) * gi * gi;
            m.data[i] = static_cast<float>(mi);
            v.data[i] = static_cast<float>(vi);
            double p = static_cast<double>(entry.value.data[i]) * decay_factor;
            p -= config.learning_rate * (mi / bc1) / (std::sqrt(vi / bc2) + config.epsilon);
            entry.value.data[i] = static_cast<float>(p);
        }
    }
}

namespace {

Tensor stack_batch(const std::vector<const Tensor*>& items, const char* what) {
    const Tensor& first = *items.front();
    for (const Tensor* t : items) {
        if (t->dims != first.dims) {
            throw ShapeError(std::string("train: ") + what + " dims " + t->dims_str() +
                             " disagree with " + first.dims_str() + " within one batch");
        }
    }
    Tensor out(static_cast<int>(items.size()) * first.n(), first.c(), first.h(), first.w());
    std::size_t off = 0;
    for (const Tensor* t : items) {
        std::copy(t->data.begin(), t->data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(off));
        off += t->data.size();
    }
    return out;
}

}  // namespace

TrainResult train(ParamStore& params, const std::vector<Sample>& data, const NetworkConfig& net,
                  const TrainConfig& config, const std::filesystem::path& out_dir,
                  const PruneMask* mask) {
    config.validate();
    net.validate();
    if (data.empty()) throw SpecError("train: dataset is empty");

    const bool persist = !out_dir.empty();
    if (persist) std::filesystem::create_directories(out_dir);

    TrainResult result;
    OptimizerState state;

    auto write_checkpoint = [&](const std::string& filename) {
        if (!persist) return;
        const auto path = out_dir / filename;
        save_checkpoint(path, params, mask);
        result.last_checkpoint = path;
    };

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (int epoch = 1; epoch <= config.epochs && !result.diverged; ++epoch) {
        if (config.shuffle) {
            Rng rng(Rng::derive_seed(config.rng_seed,
                                     "shuffle-epoch-" + std::to_string(epoch)));
            for (std::size_t i = order.size(); i > 1; --i) {
                const std::size_t j =
                    static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
                std::swap(order[i - 1], order[j]);
            }
        }

        double loss_acc = 0.0;
        std::size_t item_acc = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            std::vector<const Tensor*> images, gts;
            for (std::size_t i = start; i < end; ++i) {
                images.push_back(&data[order[i]].image);
                gts.push_back(&data[order[i]].gt);
            }

            double loss = 0.0;
            try {
                Tape tape;
                GraphBuilder<float> gb(tape, params);
                auto pred = model_forward(gb, tape.input(stack_batch(images, "image")), net);
                auto loss_node = tape.l2_loss(pred, tape.input(stack_batch(gts, "ground truth")));
                loss = static_cast<double>(tape.value(loss_node).data[0]);
                if (!std::isfinite(loss)) throw NumericError("train: loss is non-finite");
                tape.backward_scalar(loss_node);
                adam_step(params, tape.param_grads(params), state, config);
            } catch (const NumericError&) {
                result.diverged = true;
                break;
            }
            if (mask != nullptr) apply_mask(params, *mask);
            result.steps += 1;
            loss_acc += loss * static_cast<double>(end - start);
            item_acc += end - start;
        }
        if (result.diverged) break;

        result.epoch_loss.push_back(loss_acc / static_cast<double>(item_acc));
        if (config.checkpoint_interval > 0 && epoch % config.checkpoint_interval == 0) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "ckpt_epoch_%04d.asfc", epoch);
            write_checkpoint(buf);
        }
    }

    if (!result.diverged) write_checkpoint("model_final.asfc");

    if (persist) {
        std::ofstream csv(out_dir / "loss.csv");
        if (!csv) throw FormatError("train: cannot write loss.csv under '" + out_dir.string() + "'");
        csv << "epoch,mean_loss\n";
        char buf[64];
        for (std::size_t i = 0; i < result.epoch_loss.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%zu,%.9g\n", i + 1, result.epoch_loss[i]);
            csv << buf;
        }
    }
    return result;
}

}  // namespace asfnet
