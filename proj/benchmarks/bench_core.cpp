#include "pgcan/architectures.hpp"
#include "pgcan/evaluation.hpp"
#include "pgcan/grid_encoder.hpp"
#include "pgcan/problems.hpp"
#include "pgcan/training.hpp"

#include <benchmark/benchmark.h>

using namespace pgcan;

namespace {

std::unique_ptr<Model> make(const std::string& name, int dims = 2) {
  Rng rng(0);
  ArchitectureConfig c;
  c.name = name;
  return build_architecture(c, dims, 1, rng);
}

Matrix unit_points(int n, int dims) {
  Rng rng(1);
  Matrix p(n, dims);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = rng.uniform();
  return p;
}

void BM_Forward(benchmark::State& state, const std::string& name) {
  const auto m = make(name);
  const Matrix pts = unit_points(static_cast<int>(state.range(0)), 2);
  for (auto _ : state) benchmark::DoNotOptimize(forward(*m, pts));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_SecondOrderJet(benchmark::State& state, const std::string& name) {
  const auto m = make(name);
  const Matrix pts = unit_points(static_cast<int>(state.range(0)), 2);
  for (auto _ : state) benchmark::DoNotOptimize(derivatives(*m, pts, 2));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

// One full loss evaluation plus backward pass on a Helmholtz batch.
void BM_LossGradient(benchmark::State& state, const std::string& name) {
  const auto problem = make_problem("helmholtz");
  const auto m = make(name);
  Rng rng(2);
  const SampleBatch batch = problem->sample({static_cast<int>(state.range(0)), 128, 128}, rng);
  for (auto _ : state) {
    ad::Graph g;
    BoundModel bound(*m, g);
    const LossGraph lg = build_loss(bound, *problem, batch);
    g.backward(lg.pde);
    benchmark::DoNotOptimize(bound.flat_gradient());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_Convolve(benchmark::State& state) {
  const int v = static_cast<int>(state.range(0));
  const GridSpec spec = GridSpec::uniform(2, v, 128, 2);
  Rng rng(3);
  const ParametricGrid grid(spec, rng);
  for (auto _ : state) benchmark::DoNotOptimize(convolve(spec, grid.features(), grid.kernels()));
}

void BM_PowerSpectrumAndPsd(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(4);
  Eigen::MatrixXd f(n, n);
  for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = rng.normal();
  for (auto _ : state) {
    const Eigen::MatrixXd p = power_spectrum(f);
    benchmark::DoNotOptimize(directional_psd(p, 'x'));
    benchmark::DoNotOptimize(directional_psd(p, 'y'));
  }
}

}  // namespace

BENCHMARK_CAPTURE(BM_Forward, pgcan, std::string("pgcan"))->Arg(2000);
BENCHMARK_CAPTURE(BM_Forward, vpinn, std::string("vpinn"))->Arg(2000);
BENCHMARK_CAPTURE(BM_SecondOrderJet, pgcan, std::string("pgcan"))->Arg(2000);
BENCHMARK_CAPTURE(BM_SecondOrderJet, vpinn, std::string("vpinn"))->Arg(2000);
BENCHMARK_CAPTURE(BM_SecondOrderJet, m4, std::string("m4"))->Arg(2000);
BENCHMARK_CAPTURE(BM_SecondOrderJet, pixel, std::string("pixel"))->Arg(2000);
BENCHMARK_CAPTURE(BM_LossGradient, pgcan, std::string("pgcan"))->Arg(2000)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_LossGradient, vpinn, std::string("vpinn"))->Arg(2000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Convolve)->Arg(9)->Arg(33);
BENCHMARK(BM_PowerSpectrumAndPsd)->Arg(128)->Arg(256);

BENCHMARK_MAIN();
