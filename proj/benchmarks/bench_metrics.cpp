#include <benchmark/benchmark.h>

#include <random>

#include "daq/metrics.hpp"

namespace {

std::pair<daq::SaliencyMap, daq::SaliencyMap> random_pair(int side) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    daq::SaliencyMap p(side, side), g(side, side);
    for (auto& v : p.values) v = u(rng);
    // GT: a centred disc
    for (int r = 0; r < side; ++r)
        for (int c = 0; c < side; ++c) {
            const double dy = r - side / 2.0, dx = c - side / 2.0;
            g.at(r, c) = dx * dx + dy * dy < side * side / 9.0 ? 1.0 : 0.0;
        }
    return {p, g};
}

void BM_EvaluateFrame(benchmark::State& state) {
    auto [p, g] = random_pair(static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(daq::evaluate(p, g));
    state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}
BENCHMARK(BM_EvaluateFrame)->Arg(64)->Arg(256)->Arg(448);

}  // namespace

BENCHMARK_MAIN();
