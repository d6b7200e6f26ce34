#include <benchmark/benchmark.h>

#include "synthmarket/metrics.hpp"
#include "synthmarket/random.hpp"

namespace {

void BM_ClusteringScore(benchmark::State& state) {
    synthmarket::Rng rng(5);
    const Eigen::VectorXd x = synthmarket::standard_normal(rng, state.range(0), 1);
    for (auto _ : state) {
        benchmark::DoNotOptimize(synthmarket::clustering_score(x, synthmarket::ScoreKind::volatility_clustering));
    }
}
BENCHMARK(BM_ClusteringScore)->Arg(3020)->Arg(30240);

void BM_Wasserstein(benchmark::State& state) {
    synthmarket::Rng rng(6);
    const Eigen::VectorXd a = synthmarket::standard_normal(rng, state.range(0), 1);
    const Eigen::VectorXd b = synthmarket::standard_normal(rng, state.range(0), 1);
    for (auto _ : state) benchmark::DoNotOptimize(synthmarket::wasserstein1(a, b));
}
BENCHMARK(BM_Wasserstein)->Arg(3020);

void BM_LedoitWolf(benchmark::State& state) {
    synthmarket::Rng rng(7);
    const Eigen::MatrixXd x = synthmarket::standard_normal(rng, 3020, state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(synthmarket::ledoit_wolf(x));
}
BENCHMARK(BM_LedoitWolf)->Arg(20)->Arg(100);

}  // namespace
