#include <gtest/gtest.h>

#include "daq/errors.hpp"
#include "daq/losses.hpp"
#include "daq/model.hpp"
#include "helpers.hpp"

using namespace daq;
using testing_support::max_abs_diff;
using testing_support::randn_gen;

namespace {

struct Inputs {
    torch::Tensor image, e3, e2, el;
};

Inputs random_inputs(const Config& cfg, uint64_t seed) {
    const auto c = cfg.query_hidden_dim, w = cfg.fpn_width;
    return {randn_gen({1, c, 2, 2}, seed), randn_gen({1, w, 4, 4}, seed + 1), randn_gen({1, w, 8, 8}, seed + 2),
            randn_gen({1, cfg.num_video_queries, c}, seed + 3)};
}

nn::MaskDecoder make_decoder(const Config& cfg, bool randomize) {
    nn::MaskDecoder d(cfg);
    auto gen = nn::make_generator(cfg.seed);
    d->reset_parameters(gen);
    if (randomize) testing_support::randomize_trainable(*d, 17);
    return d;
}

}  // namespace

TEST(MaskDecoder, RangeAndSize) {
    auto cfg = testing_support::tiny_config();
    auto d = make_decoder(cfg, true);
    auto in = random_inputs(cfg, 1);
    auto out = d->forward(in.image, in.e3, in.e2, in.el);
    EXPECT_EQ(out.prediction.sizes(), (std::vector<int64_t>{1, 1, 16, 16}));
    EXPECT_GE(out.prediction.min().item<double>(), 0.0);
    EXPECT_LE(out.prediction.max().item<double>(), 1.0);
    EXPECT_GT(out.prediction.std().item<double>(), 0.0);
}

TEST(MaskDecoder, ZeroMaskTokenGivesHalf) {
    auto cfg = testing_support::tiny_config();
    auto d = make_decoder(cfg, true);
    {
        torch::NoGradGuard ng;
        d->hyper3->weight.zero_();
        d->hyper3->bias.zero_();
    }
    auto in = random_inputs(cfg, 2);
    auto out = d->forward(in.image, in.e3, in.e2, in.el);
    EXPECT_EQ(max_abs_diff(out.prediction, torch::full_like(out.prediction, 0.5)), 0.0);
}

TEST(MaskDecoder, FreshDecoderPredictsHalf) {
    auto cfg = testing_support::tiny_config();
    auto d = make_decoder(cfg, false);
    auto in = random_inputs(cfg, 3);
    auto out = d->forward(in.image, in.e3, in.e2, in.el);
    EXPECT_EQ(max_abs_diff(out.prediction, torch::full_like(out.prediction, 0.5)), 0.0);
}

TEST(MaskDecoder, DeterministicAndSensitiveToEmbeddings) {
    for (auto mode : {EmbeddingMode::Sparse, EmbeddingMode::Dense, EmbeddingMode::Both}) {
        auto cfg = testing_support::tiny_config();
        cfg.embedding_mode = mode;
        auto d = make_decoder(cfg, true);
        auto in = random_inputs(cfg, 4);
        auto a = d->forward(in.image, in.e3, in.e2, in.el).prediction;
        EXPECT_TRUE(torch::equal(a, d->forward(in.image, in.e3, in.e2, in.el).prediction));
        auto b = d->forward(in.image, in.e3, in.e2, in.el + 0.1 * randn_gen(in.el.sizes(), 9)).prediction;
        EXPECT_GT(max_abs_diff(a, b), 0.0) << to_string(mode);
    }
}

TEST(MaskDecoder, EveryParameterGetsAGradient) {
    auto cfg = testing_support::tiny_config();
    cfg.embedding_mode = EmbeddingMode::Both;
    auto d = make_decoder(cfg, true);
    auto in = random_inputs(cfg, 5);
    auto gt = (torch::rand({1, 1, 16, 16}) > 0.5).to(torch::kFloat32);
    bce(d->forward(in.image, in.e3, in.e2, in.el).prediction, gt).backward();
    for (const auto& p : d->named_parameters()) {
        ASSERT_TRUE(p.value().requires_grad()) << p.key();
        ASSERT_TRUE(p.value().grad().defined()) << p.key();
        EXPECT_GT(p.value().grad().abs().sum().item<double>(), 0.0) << p.key();
    }
}

TEST(MaskDecoder, ShapeErrors) {
    auto cfg = testing_support::tiny_config();
    auto d = make_decoder(cfg, false);
    auto in = random_inputs(cfg, 6);
    EXPECT_THROW(d->forward(in.image, in.e2, in.e2, in.el), ShapeError);
    EXPECT_THROW(d->forward(in.image, in.e3, in.e2, in.el.narrow(2, 0, 4)), ShapeError);
}
