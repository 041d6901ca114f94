#include <gtest/gtest.h>

#include <cmath>

#include "daq/errors.hpp"
#include "daq/losses.hpp"
#include "daq/model.hpp"
#include "helpers.hpp"

using namespace daq;
using testing_support::max_abs_diff;
using testing_support::randn_gen;
using testing_support::rand_like_gen;
using testing_support::tiny_config;

namespace {

double gelu_ref(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

/// Per-position bottleneck, written out with scalar loops.
torch::Tensor adapter_oracle(const nn::Adapter& a, const torch::Tensor& x) {
    const auto wd = a->down->weight.detach(), bd = a->down->bias.detach();
    const auto wu = a->up->weight.detach(), bu = a->up->bias.detach();
    const int64_t B = x.size(0), C = x.size(1), H = x.size(2), W = x.size(3);
    const int64_t R = wd.size(0), O = wu.size(0);
    auto out = torch::zeros({B, O, H, W}, torch::kFloat64);
    for (int64_t b = 0; b < B; ++b)
        for (int64_t i = 0; i < H; ++i)
            for (int64_t j = 0; j < W; ++j) {
                std::vector<double> hidden(static_cast<size_t>(R));
                for (int64_t r = 0; r < R; ++r) {
                    double s = bd[r].item<double>();
                    for (int64_t c = 0; c < C; ++c) s += wd[r][c].item<double>() * x[b][c][i][j].item<double>();
                    hidden[static_cast<size_t>(r)] = gelu_ref(s);
                }
                for (int64_t o = 0; o < O; ++o) {
                    double s = bu[o].item<double>();
                    for (int64_t r = 0; r < R; ++r) s += wu[o][r].item<double>() * hidden[static_cast<size_t>(r)];
                    out[b][o][i][j] = s;
                }
            }
    return out;
}

/// 2x2 cell means.
torch::Tensor halve_oracle(const torch::Tensor& x) {
    const int64_t B = x.size(0), C = x.size(1), H = x.size(2) / 2, W = x.size(3) / 2;
    auto out = torch::zeros({B, C, H, W}, torch::kFloat64);
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t i = 0; i < H; ++i)
                for (int64_t j = 0; j < W; ++j) {
                    double s = 0;
                    for (int di = 0; di < 2; ++di)
                        for (int dj = 0; dj < 2; ++dj) s += x[b][c][2 * i + di][2 * j + dj].item<double>();
                    out[b][c][i][j] = s / 4.0;
                }
    return out;
}

nn::SamDaq tiny_model(Config cfg = tiny_config(), bool randomize = false) {
    auto m = build_model(cfg);
    if (randomize) testing_support::randomize_trainable(*m, 99);
    return m;
}

}  // namespace

TEST(StageSpecs, ChannelsGrowAndStrideDoubles) {
    const auto specs = stage_specs(Config{});
    EXPECT_EQ(specs[0].spatial_stride, 2);
    for (int i = 1; i < 4; ++i) {
        EXPECT_GT(specs[i].out_channels, specs[i - 1].out_channels);
        EXPECT_EQ(specs[i].spatial_stride, 2 * specs[i - 1].spatial_stride);
        EXPECT_EQ(specs[i].in_channels, specs[i - 1].out_channels);
    }
}

TEST(DepthProjector, IdentityInitAndZeroInput) {
    nn::DepthProjector p(4);
    auto x = randn_gen({2, 4, 3, 3}, 1);
    EXPECT_TRUE(torch::equal(p->forward(x), x));
    {
        torch::NoGradGuard ng;
        p->proj->weight.normal_();
    }
    EXPECT_TRUE(torch::equal(p->forward(torch::zeros({1, 4, 2, 2})), torch::zeros({1, 4, 2, 2})));
}

TEST(DepthProjector, MatchesPerPixelMatmul) {
    nn::DepthProjector p(4);
    p->to(torch::kFloat64);
    {
        torch::NoGradGuard ng;
        p->proj->weight.copy_(randn_gen({4, 4}, 3, torch::kFloat64));
        p->proj->bias.copy_(randn_gen({4}, 4, torch::kFloat64));
    }
    auto x = randn_gen({1, 4, 2, 2}, 5, torch::kFloat64);
    auto y = p->forward(x);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            for (int o = 0; o < 4; ++o) {
                double s = p->proj->bias[o].item<double>();
                for (int c = 0; c < 4; ++c) s += p->proj->weight[o][c].item<double>() * x[0][c][i][j].item<double>();
                EXPECT_NEAR(y[0][o][i][j].item<double>(), s, 1e-12);
            }
}

TEST(DepthProjector, ChannelMismatchIsConfigError) {
    nn::DepthProjector p(4);
    EXPECT_THROW(p->forward(torch::zeros({1, 3, 2, 2})), ConfigError);
}

TEST(Adapter, ZeroInitOutputsZero) {
    nn::Adapter a(6, 2, 5, nn::AdapterModality::Depth);
    auto gen = nn::make_generator(1);
    a->reset_parameters(gen);
    auto y = a->forward(randn_gen({2, 6, 3, 3}, 2));
    EXPECT_EQ(y.size(1), 5);
    EXPECT_EQ(y.abs().max().item<double>(), 0.0);
}

TEST(Adapter, IdentityBottleneckAppliesActivationElementwise) {
    nn::Adapter a(2, 2, 2, nn::AdapterModality::Depth);
    a->to(torch::kFloat64);
    {
        torch::NoGradGuard ng;
        a->down->weight.copy_(torch::eye(2, torch::kFloat64));
        a->down->bias.zero_();
        a->up->weight.copy_(torch::eye(2, torch::kFloat64));
        a->up->bias.zero_();
    }
    auto x = torch::tensor({1.0, -1.0}, torch::kFloat64).view({1, 2, 1, 1});
    auto y = a->forward(x);
    EXPECT_NEAR(y[0][0][0][0].item<double>(), gelu_ref(1.0), 1e-12);
    EXPECT_NEAR(y[0][1][0][0].item<double>(), gelu_ref(-1.0), 1e-12);
}

TEST(Adapter, OutputWidthIndependentOfRank) {
    nn::Adapter a(4, 1, 7, nn::AdapterModality::RgbDpa);
    EXPECT_EQ(a->forward(torch::zeros({1, 4, 2, 2})).size(1), 7);
    EXPECT_THROW(a->forward(torch::zeros({1, 3, 2, 2})), ConfigError);
}

TEST(Resize, FactorTwoDownsampleIsCellMean) {
    auto x = torch::tensor({1.0, 2.0, 3.0, 4.0}).view({1, 1, 2, 2});
    EXPECT_DOUBLE_EQ(nn::resize_bilinear(x, 1, 1).item<double>(), 2.5);
}

TEST(DepthStage, ZeroAdapterEqualsFrozenStage) {
    auto m = tiny_model();
    auto& enc = m->encoder;
    torch::NoGradGuard ng;
    auto f0 = enc->depth_embedding(rand_like_gen({1, 1, 16, 16}, 3));
    for (int i = 1; i <= 3; ++i) {
        auto expect = enc->backbone->stage(i, f0);
        auto got = enc->encode_depth_stage(i, f0);
        EXPECT_EQ(max_abs_diff(got, expect), 0.0) << "stage " << i;
        f0 = got;
    }
    EXPECT_THROW(enc->encode_depth_stage(4, f0), ConfigError);
}

TEST(DepthStage, RandomAdapterIsSumOfBranches) {
    auto cfg = tiny_config();
    cfg.precision = Precision::Float64;
    auto m = tiny_model(cfg, true);
    auto& enc = m->encoder;
    torch::NoGradGuard ng;
    auto f1 = enc->backbone->stage(1, enc->depth_embedding(rand_like_gen({1, 1, 16, 16}, 4, torch::kFloat64)));
    auto got = enc->encode_depth_stage(2, f1);
    auto expect = enc->backbone->stage(2, f1) + halve_oracle(adapter_oracle(enc->depth_adapters.at(2), f1));
    EXPECT_LT(max_abs_diff(got, expect), 1e-12);
}

TEST(RgbStage, ConcatenationPutsRgbFirst) {
    nn::Adapter a(4, 2, 1, nn::AdapterModality::RgbDpa);
    a->to(torch::kFloat64);
    {
        torch::NoGradGuard ng;
        // Picks channel 0 of the concatenation, which must be the RGB map.
        a->down->weight.zero_();
        a->down->weight[0][0] = 1.0;
        a->down->bias.fill_(10.0);  // keep GELU near identity
        a->up->weight.zero_();
        a->up->weight[0][0] = 1.0;
        a->up->bias.fill_(-10.0);
    }
    auto rgb = torch::full({1, 2, 1, 1}, 0.25, torch::kFloat64);
    auto depth = torch::full({1, 2, 1, 1}, 0.75, torch::kFloat64);
    auto cat = torch::cat({rgb, depth}, 1);
    ASSERT_EQ(cat.size(1), 4);
    EXPECT_NEAR(a->forward(cat).item<double>(), 0.25, 1e-9);
}

TEST(RgbStage, HandUnrolledStageTwo) {
    auto cfg = tiny_config();
    cfg.precision = Precision::Float64;
    auto m = tiny_model(cfg, true);
    auto& enc = m->encoder;
    torch::NoGradGuard ng;
    auto rgb1 = enc->backbone->stage(1, enc->backbone->embed(rand_like_gen({1, 3, 16, 16}, 8, torch::kFloat64)));
    auto d1 = enc->encode_depth_stage(1, enc->depth_embedding(rand_like_gen({1, 1, 16, 16}, 9, torch::kFloat64)));
    auto got = enc->encode_rgb_stage(2, rgb1, d1);
    auto side = adapter_oracle(enc->rgb_adapters.at(2), torch::cat({rgb1, d1}, 1));
    auto expect = enc->backbone->stage(2, rgb1) + halve_oracle(side);
    EXPECT_LT(max_abs_diff(got, expect), 1e-12);
}

TEST(RgbStage, MisalignedInputsAreShapeError) {
    auto m = tiny_model();
    torch::NoGradGuard ng;
    auto rgb = torch::zeros({1, 4, 8, 8});
    auto depth = torch::zeros({1, 4, 4, 4});
    EXPECT_THROW(m->encoder->encode_rgb_stage(2, rgb, depth), ShapeError);
}

TEST(Encoder, ZeroAdaptersGiveFrozenPyramidExactly) {
    auto m = tiny_model();
    auto rgb = rand_like_gen({1, 3, 16, 16}, 21);
    auto depth = rand_like_gen({1, 1, 16, 16}, 22);
    auto out = m->encoder->encode(rgb, depth);
    torch::NoGradGuard ng;
    auto frozen = m->encoder->backbone->forward(rgb);
    auto pyr = m->encoder->frozen_pyramid(rgb);
    for (int i = 0; i < 4; ++i) EXPECT_EQ(max_abs_diff(out.rgb_features[i], frozen[i]), 0.0) << "stage " << i + 1;
    for (int i = 0; i < 3; ++i) EXPECT_EQ(max_abs_diff(out.pyramid[i], pyr[i]), 0.0) << "level " << i + 2;
}

TEST(Encoder, PyramidShapesAndRanges) {
    auto cfg = tiny_config();
    cfg.supervised_levels = {2, 3, 4};
    auto m = tiny_model(cfg, true);
    torch::NoGradGuard ng;
    auto out = m->encoder->encode(rand_like_gen({2, 3, 16, 16}, 1), rand_like_gen({2, 1, 16, 16}, 2));
    EXPECT_EQ(out.level(4).size(2), 1);
    EXPECT_EQ(out.level(3).size(2), 2);
    EXPECT_EQ(out.level(2).size(2), 4);
    for (int l = 2; l <= 4; ++l) {
        EXPECT_EQ(out.level(l).size(1), cfg.fpn_width);
        const auto& p = out.intermediate_preds.at(l);
        EXPECT_EQ(p.size(2), 16);
        EXPECT_GE(p.min().item<double>(), 0.0);
        EXPECT_LE(p.max().item<double>(), 1.0);
    }
}

TEST(Encoder, ZeroHeadsGiveHalfEverywhere) {
    auto cfg = tiny_config();
    cfg.supervised_levels = {2, 3, 4};
    auto m = tiny_model(cfg);
    torch::NoGradGuard ng;
    auto out = m->encoder->encode(torch::zeros({1, 3, 16, 16}), torch::zeros({1, 1, 16, 16}));
    for (auto& [l, p] : out.intermediate_preds) EXPECT_EQ(max_abs_diff(p, torch::full_like(p, 0.5)), 0.0);
}

TEST(Encoder, HeadSigmoidSaturates) {
    nn::IntermediateHead h(1);
    h->to(torch::kFloat64);
    {
        torch::NoGradGuard ng;
        h->conv->weight.fill_(1.0);
    }
    auto x = torch::tensor({-50.0, 0.0, 50.0}, torch::kFloat64).view({1, 1, 1, 3});
    auto p = torch::sigmoid(h->forward(x));
    EXPECT_NEAR(p[0][0][0][0].item<double>(), 0.0, 1e-9);
    EXPECT_DOUBLE_EQ(p[0][0][0][1].item<double>(), 0.5);
    EXPECT_NEAR(p[0][0][0][2].item<double>(), 1.0, 1e-9);
}

TEST(Encoder, BitwiseDeterministic) {
    auto rgb = rand_like_gen({1, 3, 16, 16}, 1);
    auto depth = rand_like_gen({1, 1, 16, 16}, 2);
    auto a = tiny_model(tiny_config(), true);
    auto b = tiny_model(tiny_config(), true);
    auto oa = a->encoder->encode(rgb, depth);
    auto ob = b->encoder->encode(rgb, depth);
    for (int i = 0; i < 3; ++i) EXPECT_TRUE(testing_support::bitwise_equal(oa.pyramid[i], ob.pyramid[i]));
    EXPECT_TRUE(testing_support::bitwise_equal(oa.intermediate_preds.at(4), ob.intermediate_preds.at(4)));
}

TEST(Encoder, WrongInputShapeIsShapeError) {
    auto m = tiny_model();
    EXPECT_THROW(m->encoder->encode(torch::zeros({1, 3, 8, 8}), torch::zeros({1, 1, 8, 8})), ShapeError);
    EXPECT_THROW(m->encoder->encode(torch::zeros({1, 3, 16, 16}), torch::zeros({1, 1, 8, 8})), ShapeError);
}

TEST(Encoder, GradientReachesEveryTrainableParameter) {
    auto cfg = tiny_config();
    cfg.supervised_levels = {2, 3, 4};
    auto m = tiny_model(cfg, true);
    auto outs = m->forward_clip(rand_like_gen({2, 3, 16, 16}, 1), rand_like_gen({2, 1, 16, 16}, 2));
    auto gt = (rand_like_gen({1, 1, 16, 16}, 3) > 0.5).to(torch::kFloat32);
    torch::Tensor loss = torch::zeros({});
    for (auto& o : outs) loss = loss + total_loss(o.prediction, o.intermediate_preds, gt, 0.5).total;
    loss.backward();
    for (const auto& p : m->named_parameters()) {
        if (is_frozen_name(p.key())) {
            EXPECT_FALSE(p.value().requires_grad()) << p.key();
            EXPECT_FALSE(p.value().grad().defined()) << p.key();
        } else {
            ASSERT_TRUE(p.value().grad().defined()) << p.key();
            EXPECT_TRUE(torch::isfinite(p.value().grad()).all().item<bool>()) << p.key();
        }
    }
    for (const char* name : {"encoder.depth_adapter1.down.weight", "encoder.rgb_adapter3.up.weight",
                             "encoder.depth_projector.proj.weight", "encoder.fpn.lateral4.weight",
                             "encoder.head2.conv.weight"}) {
        EXPECT_GT(m->named_parameters()[name].grad().abs().sum().item<double>(), 0.0) << name;
    }
}

TEST(Encoder, AdapterGradientsMatchFiniteDifferences) {
    auto cfg = tiny_config();
    cfg.precision = Precision::Float64;
    cfg.grad_bypass = false;
    auto m = tiny_model(cfg, true);
    auto rgb = rand_like_gen({1, 3, 16, 16}, 11, torch::kFloat64);
    auto depth = rand_like_gen({1, 1, 16, 16}, 12, torch::kFloat64);
    auto target = randn_gen({1, 8, 1, 1}, 13, torch::kFloat64);
    auto loss_fn = [&] {
        auto out = m->encoder->encode(rgb, depth);
        return (out.level(4) * target).sum() + out.level(2).pow(2).mean();
    };
    auto params = m->named_parameters();
    for (const char* name : {"encoder.depth_adapter1.down.weight", "encoder.depth_adapter2.up.weight",
                             "encoder.rgb_adapter2.down.weight", "encoder.rgb_adapter4.up.weight",
                             "encoder.depth_projector.proj.weight"}) {
        auto p = params[name];
        EXPECT_LT(testing_support::fd_relative_error(loss_fn, p, testing_support::sample_indices(p.numel(), 6)), 1e-3)
            << name;
    }
}

TEST(Encoder, GradBypassKeepsTopLevelGradients) {
    // The bypass cuts the paths that run through frozen stages. Parameters
    // above the last frozen stage see no difference.
    auto cfg = tiny_config();
    cfg.precision = Precision::Float64;
    auto with = tiny_model(cfg, true);
    cfg.grad_bypass = false;
    auto without = tiny_model(cfg, true);
    auto rgb = rand_like_gen({1, 3, 16, 16}, 1, torch::kFloat64);
    auto depth = rand_like_gen({1, 1, 16, 16}, 2, torch::kFloat64);
    with->encoder->encode(rgb, depth).level(2).sum().backward();
    without->encoder->encode(rgb, depth).level(2).sum().backward();
    auto pa = with->named_parameters();
    auto pb = without->named_parameters();
    for (const char* name : {"encoder.rgb_adapter4.up.weight", "encoder.rgb_adapter4.down.weight",
                             "encoder.fpn.lateral2.weight", "encoder.fpn.lateral4.weight"}) {
        EXPECT_LT(max_abs_diff(pa[name].grad(), pb[name].grad()), 1e-12) << name;
    }
    EXPECT_TRUE(pa["encoder.depth_adapter1.down.weight"].grad().defined());
}
