#include <benchmark/benchmark.h>

#include "daq/model.hpp"
#include "daq/nn_common.hpp"
#include "daq/peft.hpp"
#include "daq/trainer.hpp"

namespace {

using namespace daq;

Config bench_config(int64_t size) {
    Config cfg;
    cfg.input_size = size;
    return cfg;
}

void BM_EncodeFrame(benchmark::State& state) {
    auto cfg = bench_config(state.range(0));
    auto model = build_model(cfg);
    torch::NoGradGuard ng;
    auto rgb = torch::rand({1, 3, cfg.input_size, cfg.input_size});
    auto depth = torch::rand({1, 1, cfg.input_size, cfg.input_size});
    for (auto _ : state) {
        auto out = model->encoder->encode(rgb, depth);
        benchmark::DoNotOptimize(out.pyramid[0].data_ptr());
    }
}
BENCHMARK(BM_EncodeFrame)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_InferenceStep(benchmark::State& state) {
    auto cfg = bench_config(64);
    auto model = build_model(cfg);
    torch::NoGradGuard ng;
    auto rgb = torch::rand({1, 3, 64, 64});
    auto depth = torch::rand({1, 1, 64, 64});
    auto st = model->initial_state();
    for (auto _ : state) {
        auto out = model->step(rgb, depth, st);
        benchmark::DoNotOptimize(out.prediction.data_ptr());
    }
}
BENCHMARK(BM_InferenceStep)->Unit(benchmark::kMillisecond);

// One optimizer step on a 3-frame clip, per adapter topology.
void BM_TrainStep(benchmark::State& state) {
    const auto variants = peft_variants(bench_config(64));
    const auto& v = variants.at(static_cast<size_t>(state.range(0)));
    state.SetLabel(v.name);
    auto model = build_model(v.config);
    torch::optim::AdamW opt(nn::trainable_parameters(*model), torch::optim::AdamWOptions(1e-4));
    VideoClip clip;
    clip.rgb = torch::rand({3, 3, 64, 64});
    clip.depth = torch::rand({3, 1, 64, 64});
    clip.gt = (torch::rand({3, 1, 64, 64}) > 0.5).to(torch::kFloat32);
    for (auto _ : state) {
        opt.zero_grad();
        auto loss = clip_loss(model, clip, v.config.loss_alpha);
        loss.terms.total.backward();
        opt.step();
    }
}
BENCHMARK(BM_TrainStep)->DenseRange(0, 2)->Unit(benchmark::kMillisecond);

}  // namespace
