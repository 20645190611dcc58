// Serial reference kernels against their OpenMP variants.

#include "vslam/checks.hpp"
#include "vslam/harness.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace vslam;

struct Fixture {
  TotalState truth;
  MeasurementFrame frame;
};

Fixture make_fixture(std::size_t n) {
  std::mt19937_64 rng(7);
  Fixture f;
  f.truth = random_total_state(n, rng);
  SystemParams params;
  params.landmark_count = n;
  Sensor sensor(params);
  f.frame = sensor.sense(f.truth, random_twist(rng), 0.0, nullptr);
  return f;
}

void observer_step(benchmark::State& state, Execution execution) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Fixture f = make_fixture(n);
  std::mt19937_64 rng(11);
  ObserverState obs = make_observer(random_total_state(n, rng), {}, {Integrator::geometric, execution});
  for (auto _ : state) {
    ObserverState next = step(obs, f.frame, 0.5);
    benchmark::DoNotOptimize(next.estimate.pose.translation.data());
  }
  state.SetComplexityN(state.range(0));
}

void ekf_update(benchmark::State& state, Execution execution) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Fixture f = make_fixture(n);
  const EkfNoise noise{0.2, 0.1, 0.01, 0.4};
  EkfState ekf = make_ekf(n, f.truth.pose, Mat6::Identity() * 1e-3, execution);
  for (std::size_t i = 0; i < n; ++i) ekf = ekf_init_landmark(std::move(ekf), i, f.frame, noise);
  for (auto _ : state) {
    EkfState next = ekf_update(ekf, f.frame, noise);
    benchmark::DoNotOptimize(next.covariance.data());
  }
  state.SetComplexityN(state.range(0));
}

void trial_sweep(benchmark::State& state, bool parallel) {
  Scenario sc = Scenario::comparison_preset();
  sc.duration = 20.0;
  for (auto _ : state) {
    const SweepResult r = run_sweep(sc, {50}, 8, {.parallel = parallel, .jobs = 0, .trial = {}});
    benchmark::DoNotOptimize(r.trials.data());
  }
}

BENCHMARK_CAPTURE(observer_step, serial, Execution::serial)->RangeMultiplier(4)->Range(16, 1024)->Complexity();
BENCHMARK_CAPTURE(observer_step, parallel, Execution::parallel)->RangeMultiplier(4)->Range(16, 1024)->Complexity();
BENCHMARK_CAPTURE(ekf_update, serial, Execution::serial)->RangeMultiplier(2)->Range(16, 128)->Complexity();
BENCHMARK_CAPTURE(ekf_update, parallel, Execution::parallel)->RangeMultiplier(2)->Range(16, 128)->Complexity();
BENCHMARK_CAPTURE(trial_sweep, serial, false)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(trial_sweep, parallel, true)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
