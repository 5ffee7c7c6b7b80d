#include <gtest/gtest.h>

#include <cmath>

#include "asfnet/autodiff.hpp"
#include "asfnet/backbone.hpp"
#include "asfnet/cost.hpp"
#include "asfnet/fusion_head.hpp"
#include "asfnet/model.hpp"
#include "testutil.hpp"

using namespace asfnet;

namespace {

void zero_all_biases(ParamStore& store) {
    for (const auto& name : store.names()) {
        if (name.size() > 5 && name.compare(name.size() - 5, 5, ".bias") == 0) {
            for (auto& v : store.at(name).value.data) v = 0.0f;
        }
    }
}

NetworkConfig tiny_config() {
    NetworkConfig cfg;
    cfg.backbone.stage_channels = {4, 6, 8, 10};
    cfg.fusion.branch_out_channels = 8;
    cfg.fusion.net_out_channels = 4;
    return cfg;
}

}  // namespace

TEST(Backbone, DefaultTapShapes) {
    const NetworkConfig cfg;
    ParamStore store = init_model_params(cfg, 1);
    Tape tape;
    GraphBuilder<float> gb(tape, store);
    Rng rng(2);
    auto input = tape.input(testutil::random_tensor<float>(rng, 1, 3, 64, 64));
    const auto taps = backbone_extract(gb, input, cfg.backbone);

    const std::array<std::array<int, 4>, 4> expect{{{1, 16, 32, 32},
                                                    {1, 32, 16, 16},
                                                    {1, 64, 8, 8},
                                                    {1, 128, 4, 4}}};
    for (int k = 0; k < 4; ++k) {
        EXPECT_EQ(tape.value(taps[static_cast<std::size_t>(k)]).dims,
                  expect[static_cast<std::size_t>(k)]);
    }
}

TEST(Backbone, SpatialSizesHalvePerStage) {
    const NetworkConfig cfg;
    ParamStore store = init_model_params(cfg, 3);
    Tape tape;
    GraphBuilder<float> gb(tape, store);
    auto input = tape.input(Tensor::full(1, 3, 32, 32, 0.5f));
    const auto taps = backbone_extract(gb, input, cfg.backbone);
    int expect = 16;
    for (const auto& tap : taps) {
        EXPECT_EQ(tape.value(tap).h(), expect);
        EXPECT_EQ(tape.value(tap).w(), expect);
        expect /= 2;
    }
}

TEST(Backbone, ZeroInputZeroBiasesGivesZeroTaps) {
    const NetworkConfig cfg;
    ParamStore store = init_model_params(cfg, 4);
    zero_all_biases(store);
    Tape tape;
    GraphBuilder<float> gb(tape, store);
    auto input = tape.input(Tensor(1, 3, 32, 32));
    const auto taps = backbone_extract(gb, input, cfg.backbone);
    for (const auto& tap : taps) {
        for (float v : tape.value(tap).data) ASSERT_EQ(v, 0.0f);
    }
}

TEST(Backbone, IndivisibleInputInstructsPadding) {
    const NetworkConfig cfg;
    ParamStore store = init_model_params(cfg, 5);
    Tape tape;
    GraphBuilder<float> gb(tape, store);
    auto input = tape.input(Tensor::full(1, 3, 60, 64, 0.1f));
    try {
        backbone_extract(gb, input, cfg.backbone);
        FAIL() << "expected SpecError";
    } catch (const SpecError& e) {
        EXPECT_NE(std::string(e.what()).find("pad"), std::string::npos) << e.what();
    }
}

TEST(Backbone, ParamCountMatchesHandSum) {
    // Stage k: depthwise 3x3 (9*C_in, no bias) + pointwise (C_in*C_out + C_out).
    const BackboneConfig cfg;
    const std::array<int, 5> c{cfg.input_channels, 16, 32, 64, 128};
    std::uint64_t expect = 0;
    for (int k = 0; k < 4; ++k) {
        expect += 9ull * static_cast<std::uint64_t>(c[static_cast<std::size_t>(k)]);
        expect += static_cast<std::uint64_t>(c[static_cast<std::size_t>(k)]) *
                  static_cast<std::uint64_t>(c[static_cast<std::size_t>(k + 1)]);
        expect += static_cast<std::uint64_t>(c[static_cast<std::size_t>(k + 1)]);
    }
    EXPECT_EQ(expect, 12075u);  // (27+48+16) + (144+512+32) + (288+2048+64) + (576+8192+128)

    ParamStore store;
    init_backbone_params(store, cfg, 6);
    std::uint64_t total = 0;
    for (const auto& name : store.names()) total += store.at(name).value.count();
    EXPECT_EQ(total, expect);

    // Cross-check against the accounting module's per-layer counter.
    NetworkConfig net;
    const CostReport report = count_cost(net, 3, 64, 64);
    std::uint64_t backbone_params = 0;
    for (const auto& row : report.rows) {
        if (row.name.rfind("backbone.", 0) == 0) backbone_params += row.params;
    }
    EXPECT_EQ(backbone_params, expect);
}

TEST(Backbone, InitDeterminismAndSeedSensitivity) {
    const BackboneConfig cfg;
    ParamStore a, b, c;
    init_backbone_params(a, cfg, 42);
    init_backbone_params(b, cfg, 42);
    init_backbone_params(c, cfg, 43);

    bool any_diff = false;
    for (const auto& name : a.names()) {
        EXPECT_EQ(a.at(name).value.data, b.at(name).value.data) << name;
        if (a.at(name).value.data != c.at(name).value.data) any_diff = true;
    }
    EXPECT_TRUE(any_diff);
}

TEST(Backbone, HeInitStddevWithinTenPercent) {
    BackboneConfig cfg;
    cfg.stage_channels = {16, 32, 128, 1024};  // stage-4 pointwise: 128*1024 elements
    ParamStore store;
    init_backbone_params(store, cfg, 7);
    const Tensor& w = store.at("backbone.stage4.pw.weight").value;
    ASSERT_GE(w.count(), 100000u);

    double mean = 0.0;
    for (float v : w.data) mean += v;
    mean /= static_cast<double>(w.count());
    double var = 0.0;
    for (float v : w.data) var += (v - mean) * (v - mean);
    var /= static_cast<double>(w.count());
    const double expect = std::sqrt(2.0 / 128.0);
    EXPECT_NEAR(std::sqrt(var), expect, 0.1 * expect);
}

TEST(FusionHead, ZeroLambdaKillsBranch) {
    NetworkConfig cfg = tiny_config();
    cfg.fusion.lambdas = {0.0, 0.1, 0.5, 1.0};
    ParamStore store = init_model_params(cfg, 8);

    Tape tape;
    GraphBuilder<float> gb(tape, store);
    Rng rng(9);
    auto tap = tape.input(testutil::random_tensor<float>(rng, 1, 4, 8, 8));
    auto out = fusion_branch(gb, tap, 0, cfg.fusion, 8, 8);
    for (float v : tape.value(out).data) EXPECT_EQ(v, 0.0f);
}

TEST(FusionHead, IdentityConvBranchIsChannelMappedRelu) {
    // 1x1 identity conv, lambda 1, tap already at target size: branch output
    // must equal relu(F).
    FusionConfig fusion;
    fusion.branch_kernels = {{{1, 1}, {1, 1}, {1, 1}, {1, 1}}};
    fusion.lambdas = {1.0, 1.0, 1.0, 1.0};
    fusion.branch_out_channels = 3;

    ParamStore store;
    Tensor eye(3, 3, 1, 1);
    for (int i = 0; i < 3; ++i) eye.at(i, i, 0, 0) = 1.0f;
    store.add("head.branch1.weight", eye);
    store.add("head.branch1.bias", Tensor(3, 1, 1, 1));
    store.add("head.lambda1", Tensor(1, 1, 1, 1, 1.0f), false, false);

    Rng rng(10);
    const Tensor f = testutil::random_tensor<float>(rng, 1, 3, 6, 6);
    Tape tape;
    GraphBuilder<float> gb(tape, store);
    auto out = fusion_branch(gb, tape.input(f), 0, fusion, 6, 6);
    EXPECT_EQ(tape.value(out).data, relu(f).data);
}

TEST(FusionHead, DefaultBranchMatchesManualComposition) {
    const NetworkConfig cfg;  // defaults: F1 at 32x32, target 32x32, no resize
    ParamStore store = init_model_params(cfg, 11);
    Rng rng(12);
    const Tensor f1 = testutil::random_tensor<float>(rng, 1, 16, 32, 32);

    Tape tape;
    GraphBuilder<float> gb(tape, store);
    auto out = fusion_branch(gb, tape.input(f1), 0, cfg.fusion, 32, 32);

    const ConvSpec spec = head_branch_spec(cfg.backbone, cfg.fusion, 0);
    std::vector<float> bias(store.at("head.branch1.bias").value.data);
    const Tensor manual =
        scale(relu(conv2d(f1, store.at("head.branch1.weight").value, &bias, spec)), 0.1f);
    EXPECT_EQ(tape.value(out).data, manual.data);
}

TEST(FusionHead, FusePairZeroInputsZeroBias) {
    NetworkConfig cfg = tiny_config();
    ParamStore store = init_model_params(cfg, 13);
    zero_all_biases(store);
    Tape tape;
    GraphBuilder<float> gb(tape, store);
    auto a = tape.input(Tensor(1, 8, 8, 8));
    auto b = tape.input(Tensor(1, 8, 8, 8));
    auto out = fusion_pair(gb, a, b, "head.fuse1", cfg.fusion.fuse1_kernel, cfg.fusion);
    for (float v : tape.value(out).data) ASSERT_EQ(v, 0.0f);
    EXPECT_EQ(tape.value(out).c(), 8);
    EXPECT_EQ(tape.value(out).h(), 8);
}

TEST(FusionHead, ForwardHeadShapeAndZeroCase) {
    const NetworkConfig cfg;
    ParamStore store = init_model_params(cfg, 14);
    zero_all_biases(store);

    Tape tape;
    GraphBuilder<float> gb(tape, store);
    auto out = model_forward(gb, tape.input(Tensor(1, 3, 64, 64)), cfg);
    const Tensor& density = tape.value(out);
    EXPECT_EQ(density.dims, (std::array<int, 4>{1, 1, 32, 32}));
    for (float v : density.data) ASSERT_EQ(v, 0.0f);
    EXPECT_EQ(predicted_count(density)[0], 0.0);
}

TEST(FusionHead, OutputIsNonNegative) {
    const NetworkConfig cfg = tiny_config();
    ParamStore store = init_model_params(cfg, 15);
    Rng rng(16);
    const Tensor image = testutil::random_tensor<float>(rng, 2, 3, 32, 32);
    const Tensor density = model_infer(store, cfg, image);
    for (float v : density.data) ASSERT_GE(v, 0.0f);
}

TEST(FusionHead, PairingSwapKeepsShapesChangesValues) {
    NetworkConfig a = tiny_config();
    NetworkConfig b = tiny_config();
    b.fusion.pairing = {{{1, 3}, {2, 4}}};

    ParamStore store_a = init_model_params(a, 17);
    ParamStore store_b = init_model_params(b, 17);  // same seed => same parameters

    Rng rng(18);
    const Tensor image = testutil::random_tensor<float>(rng, 1, 3, 32, 32, 0.5);
    const Tensor da = model_infer(store_a, a, image);
    const Tensor db = model_infer(store_b, b, image);

    EXPECT_EQ(da.dims, db.dims);
    EXPECT_NE(da.data, db.data);
}

TEST(FusionHead, InvalidPairingRejected) {
    FusionConfig cfg;
    cfg.pairing = {{{1, 2}, {2, 4}}};  // tap 2 twice, tap 3 missing
    EXPECT_THROW(cfg.validate(), SpecError);
    cfg.pairing = {{{0, 2}, {3, 4}}};  // out of range
    EXPECT_THROW(cfg.validate(), SpecError);
}

TEST(FusionHead, BranchKillInvariance) {
    // lambda = (0,0,0,1): the head output must ignore arbitrary changes to
    // the first three taps.
    NetworkConfig cfg = tiny_config();
    cfg.fusion.lambdas = {0.0, 0.0, 0.0, 1.0};
    ParamStore store = init_model_params(cfg, 19);

    Rng rng(20);
    const Tensor f4 = testutil::random_tensor<float>(rng, 1, 10, 4, 4);
    auto run = [&](const Tensor& f1, const Tensor& f2, const Tensor& f3) {
        Tape tape;
        GraphBuilder<float> gb(tape, store);
        std::array<Tape::Value, 4> taps{tape.input(f1), tape.input(f2), tape.input(f3),
                                        tape.input(f4)};
        auto out = fusion_forward(gb, taps, cfg.fusion);
        return tape.value(out);
    };

    const Tensor base = run(testutil::random_tensor<float>(rng, 1, 4, 32, 32),
                            testutil::random_tensor<float>(rng, 1, 6, 16, 16),
                            testutil::random_tensor<float>(rng, 1, 8, 8, 8));
    for (int trial = 0; trial < 3; ++trial) {
        const Tensor other = run(testutil::random_tensor<float>(rng, 1, 4, 32, 32),
                                 testutil::random_tensor<float>(rng, 1, 6, 16, 16),
                                 testutil::random_tensor<float>(rng, 1, 8, 8, 8));
        ASSERT_EQ(base.data, other.data);
    }
}

TEST(FusionHead, ParamCountMatchesAccounting) {
    const NetworkConfig cfg;
    ParamStore store = init_model_params(cfg, 21);
    std::uint64_t store_total = 0;
    for (const auto& name : store.names()) store_total += store.at(name).value.count();

    const CostReport report = count_cost(cfg, 3, 64, 64);
    EXPECT_EQ(report.total_params, store_total);
}

TEST(FusionHead, PredictedCountExamples) {
    EXPECT_EQ(predicted_count(Tensor(1, 1, 4, 4))[0], 0.0);
    Tensor single(1, 1, 4, 4);
    single.at(0, 0, 2, 1) = 3.5f;
    EXPECT_NEAR(predicted_count(single)[0], 3.5, 1e-7);
}

TEST(Model, EndToEndGradCheckPasses) {
    NetworkConfig cfg = tiny_config();

    // A full model has thousands of relu inputs, so occasional probes cross
    // an activation boundary; those seeds are excluded by reseeding, and the
    // step is finer than the 1e-3 default to keep crossings rare (64-bit fd
    // stays accurate at 1e-5).
    GradCheckOptions opts;
    opts.samples_per_param = 3;
    opts.fd_step = 1e-5;

    GradCheckReport report;
    bool clean = false;
    for (std::uint64_t seed = 22; seed < 42 && !clean; ++seed) {
        ParamStore fstore = init_model_params(cfg, seed);
        auto params = convert_store<double>(fstore);
        Rng rng(seed + 1);
        TensorT<double> image = testutil::random_tensor<double>(rng, 1, 3, 16, 16, 0.5);
        for (auto& v : image.data) v = std::abs(v);  // image-like input

        report = grad_check(
            params,
            [&](TapeT<double>& tape, GraphBuilder<double>& gb) {
                return model_forward(gb, tape.input(image), cfg);
            },
            opts);
        clean = !report.kink_detected;
    }
    ASSERT_TRUE(clean) << "no kink-free seed found";
    EXPECT_TRUE(report.pass) << "worst " << report.worst_param << " rel err "
                             << report.worst_rel_err;
    EXPECT_LT(report.worst_rel_err, 1e-4);
}

TEST(Model, GradientsReachEveryBackboneParameter) {
    NetworkConfig cfg = tiny_config();
    ParamStore store = init_model_params(cfg, 24);
    Rng rng(25);
    const Tensor image = testutil::random_tensor<float>(rng, 1, 3, 16, 16, 0.5);

    Tape tape;
    GraphBuilder<float> gb(tape, store);
    auto out = model_forward(gb, tape.input(image), cfg);
    tape.backward_scalar(tape.sum(out));
    const auto grads = tape.param_grads(store);
    for (const auto& name : store.names()) {
        if (name.rfind("backbone.", 0) != 0) continue;
        double max_abs = 0.0;
        for (float v : grads.at(name).data) max_abs = std::max(max_abs, std::abs(double(v)));
        EXPECT_GT(max_abs, 0.0) << "dead parameter: " << name;
    }
}
