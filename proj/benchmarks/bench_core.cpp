// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <random>

#include "mekd/data.hpp"
#include "mekd/distill.hpp"
#include "mekd/gan.hpp"
#include "mekd/metrics.hpp"

using namespace mekd;

namespace {

Tensor uniform(Shape shape, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Tensor t(shape);
    for (double& v : t.values()) v = u(rng);
    return t;
}

void BM_ClassifierForwardBackward(benchmark::State& state) {
    const auto batch = static_cast<std::size_t>(state.range(0));
    nets::Network net(nets::classifier_spec(64, 4, {128, 64}), 1);
    const Tensor x = uniform(Shape{batch, 64}, 2);
    ad::Graph g;
    for (auto _ : state) {
        g.clear();
        net.zero_grad();
        g.backward(ad::sum(net.forward(g, g.constant(x))));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_ClassifierForwardBackward)->Arg(16)->Arg(64)->Arg(256);

void BM_StudentLossStep(benchmark::State& state) {
    nets::Network teacher(nets::classifier_spec(64, 4, {128, 64}), 1);
    nets::Network student(nets::classifier_spec(64, 4, {32}), 2);
    nets::Network gen(nets::generator_spec(4, 64, {64, 128}), 3);
    gen.freeze();
    const auto fn = distill::frozen_generator(gen);
    const Tensor x = uniform(Shape{64, 64}, 4);
    const Tensor pt = teacher.predict(x);
    distill::DistillConfig cfg;
    ad::Graph g;
    for (auto _ : state) {
        g.clear();
        student.zero_grad();
        g.backward(distill::student_loss(g, student, pt, &fn, x, cfg).total);
    }
}
BENCHMARK(BM_StudentLossStep);

void BM_GanEpoch(benchmark::State& state) {
    const auto real = data::synth_blobs(4, 64, 125, 0.05, 5);
    gan::GanConfig cfg;
    cfg.epochs = 1;
    for (auto _ : state) {
        nets::Network gen(nets::generator_spec(4, 64, {64, 128}), 6);
        nets::Network disc(nets::discriminator_spec(64, 4, {128, 64}), 7);
        benchmark::DoNotOptimize(gan::train_gan(gen, disc, real, cfg, {gan::PriorKind::gaussian, 4}, 8));
    }
}
BENCHMARK(BM_GanEpoch)->Unit(benchmark::kMillisecond);

void BM_FrechetDistance(benchmark::State& state) {
    const auto d = static_cast<std::size_t>(state.range(0));
    const Tensor a = uniform(Shape{2000, d}, 9), b = uniform(Shape{2000, d}, 10);
    for (auto _ : state) benchmark::DoNotOptimize(metrics::frechet_distance(a, b));
}
BENCHMARK(BM_FrechetDistance)->Arg(16)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
