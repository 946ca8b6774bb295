#include "kva/linear.hpp"
#include "kva/montecarlo.hpp"
#include "kva/shareholder.hpp"

#include <benchmark/benchmark.h>

using namespace kva;

namespace {

ValidatedModel canon() {
    MarketModel m;
    m.s0 = Vector(2);
    m.s0 << 100.0, 50.0;
    m.m1 = Vector(2);
    m.m1 << 106.0, 52.0;
    m.r = 0.01;
    m.lambda = 0.01;
    m.a = Matrix(2, 2);
    m.a << 16.0, 2.0, 2.0, 9.0;
    m.b = Vector(2);
    m.b << 0.8, 0.3;
    m.sigma_y2 = 4.0;
    m.m_y = -1.0;
    return validate_model(m);
}

const CapitalConstraint kCanonConstraint{10.0, 2.5};

void BM_Sample(benchmark::State& state) {
    const auto vm = canon();
    const auto n = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(mc::sample(vm, n, 42, true));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Sample)->Arg(1 << 16)->Arg(1 << 20)->Unit(benchmark::kMillisecond);

void BM_PositivePartValue(benchmark::State& state) {
    const auto vm = canon();
    const auto batch = mc::sample(vm, static_cast<std::size_t>(state.range(0)), 42, true);
    const EquityEvaluator ev(vm, 2.0, linear::optimal_theta(vm, {2.0, 2.5}, 0.0), 0.0, 0.0);
    for (auto _ : state) benchmark::DoNotOptimize(mc::positive_part_value(ev, batch));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PositivePartValue)->Arg(1 << 20)->Unit(benchmark::kMillisecond);

void BM_OptimizeTheta(benchmark::State& state) {
    const auto vm = canon();
    const auto batch = mc::sample(vm, static_cast<std::size_t>(state.range(0)), 42, true);
    const CapitalConstraint c{2.0, 2.5};
    for (auto _ : state)
        benchmark::DoNotOptimize(shareholder::optimize_theta(vm, c, 0.1, 0.12, batch));
}
BENCHMARK(BM_OptimizeTheta)->Arg(1 << 17)->Unit(benchmark::kMillisecond);

void BM_PriceExact(benchmark::State& state) {
    const auto vm = canon();
    for (auto _ : state)
        benchmark::DoNotOptimize(linear::price_exact(vm, kCanonConstraint, Deal{0.1}));
}
BENCHMARK(BM_PriceExact);

} // namespace

BENCHMARK_MAIN();
