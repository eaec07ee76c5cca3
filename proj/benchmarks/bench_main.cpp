#include <benchmark/benchmark.h>

#include <random>

#include "qlab/circuit.hpp"
#include "qlab/integrator.hpp"
#include "qlab/models.hpp"
#include "qlab/trilinear.hpp"

namespace {

qlab::CircuitSpec cascade_window(int scales) {
    qlab::CascadeParams p;
    p.Gamma = 30.0;
    p.n_lo = 0;
    p.n_hi = scales - 1;
    return qlab::cascade_spec(p);
}

void BM_CascadeRhs(benchmark::State& state) {
    const auto spec = cascade_window(static_cast<int>(state.range(0)));
    std::mt19937_64 rng(1);
    std::normal_distribution<double> d;
    std::vector<double> x(spec.size()), dx(spec.size());
    for (auto& v : x) v = d(rng);
    for (auto _ : state) {
        spec.evaluate(x, dx);
        benchmark::DoNotOptimize(dx.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(spec.compiled().size()));
}
BENCHMARK(BM_CascadeRhs)->Arg(4)->Arg(16)->Arg(64);

void BM_DyadicIntegrate(benchmark::State& state) {
    const auto spec = qlab::kp_spec({2.0, 0.25, 0, static_cast<int>(state.range(0)), false});
    qlab::StateVector x0{0.0, std::vector<double>(spec.size(), 0.0)};
    x0.x[0] = 1.0;
    qlab::IntegratorConfig cfg;
    for (auto _ : state) {
        auto tr = qlab::integrate(spec, x0, 5.0, cfg);
        benchmark::DoNotOptimize(tr.size());
    }
}
BENCHMARK(BM_DyadicIntegrate)->Arg(6)->Arg(12)->Unit(benchmark::kMillisecond);

void BM_DelayCircuit(benchmark::State& state) {
    qlab::IntegratorConfig cfg;
    for (auto _ : state) {
        auto r = qlab::run_delay_circuit({8.0, 1e-2, 30.0}, cfg, 5.0);
        benchmark::DoNotOptimize(r.t_c);
    }
}
BENCHMARK(BM_DelayCircuit)->Unit(benchmark::kMillisecond);

void BM_FourierCoefficients(benchmark::State& state) {
    const auto base = qlab::FreqTriple::base();
    for (auto _ : state) {
        auto fc = qlab::fourier_coefficients(base, static_cast<int>(state.range(0)));
        benchmark::DoNotOptimize(fc.c.data());
    }
}
BENCHMARK(BM_FourierCoefficients)->Arg(8)->Arg(16);

}  // namespace

BENCHMARK_MAIN();
