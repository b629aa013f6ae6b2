#include <benchmark/benchmark.h>

#include <cmath>

#include "kamtori/kamtori.hpp"

using namespace kamtori;

namespace {

TorusEmbedding integrable(const SymplecticMap& F, int n) {
  const RotationVector omega = RotationVector::golden();
  std::vector<double> base(F.phase_dim(), 0.0);
  base[F.d() + F.angle_slots()[0]] = omega.omega[0];
  return constant_embedding(F, omega, GridShape::uniform(1, n), base);
}

struct Whiskered {
  MapPtr F;
  SolveResult run;
  BundleResult bundle;
};

const Whiskered& whiskered() {
  static const Whiskered w = [] {
    Whiskered s;
    s.F = model_rotator_pendulum(1.0, 0.05);
    s.run = newton_solve(integrable(*s.F, 256), *s.F);
    s.bundle = solve_bundle_and_multiplier(s.run.torus, *s.F, *s.run.splitting, Side::stable);
    return s;
  }();
  return w;
}

void BM_Transform(benchmark::State& state) {
  const GridShape g = GridShape::uniform(1, static_cast<int>(state.range(0)));
  std::vector<double> v(g.total());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::sin(0.37 * i);
  const FourierSeries f = FourierSeries::from_grid(g, 1, 1, v);
  for (auto _ : state) benchmark::DoNotOptimize(to_grid(to_coeffs(f)));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Transform)->RangeMultiplier(4)->Range(1 << 10, 1 << 16)->Complexity(benchmark::oNLogN);

void BM_NewtonCenterStep(benchmark::State& state) {
  const MapPtr F = model_standard_map(0.3);
  const TorusEmbedding K = integrable(*F, static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(newton_center_step(K, *F));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_NewtonCenterStep)->RangeMultiplier(2)->Range(1 << 12, 1 << 15)->Complexity(benchmark::oNLogN)
    ->Unit(benchmark::kMillisecond);

void BM_OrderByOrder(benchmark::State& state) {
  const Whiskered& w = whiskered();
  for (auto _ : state) {
    benchmark::DoNotOptimize(order_by_order(w.run.torus, w.bundle, *w.F, static_cast<int>(state.range(0))));
  }
}
BENCHMARK(BM_OrderByOrder)->Arg(7)->Arg(15)->Unit(benchmark::kMillisecond);

void BM_OrderDoubling(benchmark::State& state) {
  const Whiskered& w = whiskered();
  OrderOptions o;
  o.rho = 1.0;
  Whisker start = order_by_order(w.run.torus, w.bundle, *w.F, 1, o);
  for (auto _ : state) {
    Whisker x = newton_whisker_step(start, *w.F, 2);
    x = newton_whisker_step(x, *w.F, 4);
    x = newton_whisker_step(x, *w.F, 8);
    benchmark::DoNotOptimize(x);
  }
}
BENCHMARK(BM_OrderDoubling)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
