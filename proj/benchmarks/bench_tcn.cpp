#include <benchmark/benchmark.h>

#include "synthmarket/gan.hpp"

namespace {

using synthmarket::GanModel;
using synthmarket::Tcn;

void BM_GeneratorForwardBackward(benchmark::State& state) {
    const int width = static_cast<int>(state.range(0));
    const Eigen::Index batch = state.range(1);
    GanModel model = synthmarket::make_gan(width, 1);
    synthmarket::Rng rng(2);
    const Eigen::MatrixXd z = synthmarket::standard_normal(rng, 3, 125 * batch);
    Eigen::VectorXd grad(model.generator.n_params());
    Tcn::Cache cache;
    for (auto _ : state) {
        const Eigen::MatrixXd out = model.generator.forward(z, batch, Tcn::Mode::train, &cache);
        grad.setZero();
        benchmark::DoNotOptimize(model.generator.backward(cache, out, grad));
    }
}
BENCHMARK(BM_GeneratorForwardBackward)->Args({32, 16})->Args({32, 32})->Args({32, 64})->Unit(benchmark::kMillisecond);

void BM_TrainIteration(benchmark::State& state) {
    auto config = synthmarket::TrainConfig::desk();
    config.batch = state.range(0);
    config.iterations = 50;
    synthmarket::Rng rng(3);
    const Eigen::MatrixXd data = synthmarket::standard_normal(rng, 512, 63);
    for (auto _ : state) benchmark::DoNotOptimize(synthmarket::train(data, config));
    state.SetItemsProcessed(state.iterations() * config.iterations);
}
BENCHMARK(BM_TrainIteration)->Arg(8)->Arg(16)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_Generate(benchmark::State& state) {
    const GanModel model = synthmarket::make_gan(32, 1);
    for (auto _ : state) benchmark::DoNotOptimize(synthmarket::generate(model, state.range(0), 1, 7));
}
BENCHMARK(BM_Generate)->Arg(3020)->Arg(30240)->Unit(benchmark::kMillisecond);

}  // namespace
