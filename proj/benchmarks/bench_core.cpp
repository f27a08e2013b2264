#include <benchmark/benchmark.h>

#include <random>

#include "optiguide/datagen.hpp"
#include "optiguide/eds_filter.hpp"
#include "optiguide/gpr.hpp"

using namespace optiguide;

namespace {

GenerationConfig bench_config() {
    GenerationConfig cfg;
    cfg.dt = 1e-3;
    return cfg;
}

void BM_parameterized_rhs(benchmark::State& state) {
    const Vec4 z{0.9, 0.4, -1.1, 2.3};
    for (auto _ : state) {
        benchmark::DoNotOptimize(parameterized_rhs(z, 5.0));
    }
}
BENCHMARK(BM_parameterized_rhs);

void BM_jacobian_FZ(benchmark::State& state) {
    const Vec4 z{0.9, 0.4, -1.1, 2.3};
    for (auto _ : state) {
        benchmark::DoNotOptimize(jacobian_FZ(z, 5.0));
    }
}
BENCHMARK(BM_jacobian_FZ);

void BM_integrate_backward(benchmark::State& state) {
    const GenerationConfig cfg = bench_config();
    const Costate p0{-1.0, -0.8};
    for (auto _ : state) {
        benchmark::DoNotOptimize(integrate_backward(p0, 1.2, cfg));
    }
}
BENCHMARK(BM_integrate_backward)->Unit(benchmark::kMillisecond);

void BM_analytical_command(benchmark::State& state) {
    const EngagementState s{0.8, 0.6};
    const ItcgParams params;
    for (auto _ : state) {
        benchmark::DoNotOptimize(analytical_command(s, 0.2, 1.5, params));
    }
}
BENCHMARK(BM_analytical_command);

TrainedGpModel bench_model(int n) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> unif(-1.5, 1.5);
    Dataset dataset;
    for (int i = 0; i < n; ++i) {
        Sample s;
        s.r = 1.0 + 0.3 * unif(rng);
        s.sigma = 0.5 * unif(rng);
        s.t_go = 1.0 + 0.4 * unif(rng);
        s.u = std::sin(3.0 * s.sigma) * s.r + 0.2 * s.t_go;
        dataset.samples.push_back(s);
    }
    FitOptions options;
    options.iters = 10;
    options.max_train_size = n;
    return fit(dataset, options).model;
}

void BM_gpr_predict(benchmark::State& state) {
    const TrainedGpModel model = bench_model(static_cast<int>(state.range(0)));
    const Eigen::Vector3d query{1.0, 0.3, 1.2};
    for (auto _ : state) {
        benchmark::DoNotOptimize(predict(model, query));
    }
}
BENCHMARK(BM_gpr_predict)->Arg(256)->Arg(1024);

void BM_local_hessian(benchmark::State& state) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    Dataset dataset;
    for (int i = 0; i < 4096; ++i) {
        Sample s;
        s.r = unif(rng);
        s.sigma = unif(rng);
        s.t_go = unif(rng);
        s.u = s.r * s.r + s.sigma;
        dataset.samples.push_back(s);
    }
    const PsiCloud cloud = PsiCloud::standardize(dataset);
    for (auto _ : state) {
        benchmark::DoNotOptimize(all_hessian_frobenius(cloud, 20, 1));
    }
}
BENCHMARK(BM_local_hessian)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
