#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "pirbn/model.hpp"
#include "pirbn/ntk.hpp"
#include "pirbn/problems.hpp"
#include "pirbn/rbf.hpp"
#include "pirbn/train.hpp"

namespace {

using namespace pirbn;

void BM_RbfDerivs(benchmark::State& state) {
  const auto kind = static_cast<RbfKind>(state.range(0));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> xs(2048), cs(2048);
  for (auto& v : xs) v = u(rng);
  for (auto& v : cs) v = u(rng);
  std::size_t i = 0;
  for (auto _ : state) {
    const std::span<const double> x(&xs[i % 2047], 2), c(&cs[i % 2047], 2);
    benchmark::DoNotOptimize(rbf_derivs(kind, 3.0, x, c));
    ++i;
  }
  state.SetLabel(std::string(to_string(kind)));
}
BENCHMARK(BM_RbfDerivs)->DenseRange(0, 3);

ProblemSpec problem_1d(int n) {
  ProblemSpec s;
  s.mu = 4.0;
  s.resolution = {n};
  return s;
}

void BM_Assemble1D(benchmark::State& state) {
  const int width = static_cast<int>(state.range(0));
  const Problem p = build_problem(problem_1d(201));
  std::vector<Network> nets{init_pirbn(RbfKind::Gaussian, {{-0.1}, {1.1}, {width}}, 10.0, 0)};
  for (auto _ : state) benchmark::DoNotOptimize(assemble(p, nets));
  state.counters["points"] = static_cast<double>(p.n_g() + p.n_b());
}
BENCHMARK(BM_Assemble1D)->RangeMultiplier(4)->Range(16, 1024)->Unit(benchmark::kMicrosecond);

void BM_Assemble2DCutoff(benchmark::State& state) {
  ProblemSpec s;
  s.kind = ProblemKind::Wave2D;
  const Problem p = build_problem(s);
  Pirbn net = init_pirbn(RbfKind::Gaussian, {{-0.1, -0.1}, {1.1, 1.1}, {31, 31}}, 20.0, 0);
  net.set_support_cutoff(static_cast<double>(state.range(0)));
  std::vector<Network> nets{std::move(net)};
  for (auto _ : state) benchmark::DoNotOptimize(assemble(p, nets));
}
BENCHMARK(BM_Assemble2DCutoff)->Arg(20)->Arg(40)->Unit(benchmark::kMillisecond);

void BM_AssembleFnn(benchmark::State& state) {
  const Problem p = build_problem(problem_1d(51));
  std::vector<Network> nets{init_fnn({1, static_cast<int>(state.range(0)), 1}, 0)};
  for (auto _ : state) benchmark::DoNotOptimize(assemble(p, nets));
}
BENCHMARK(BM_AssembleFnn)->Arg(61)->Arg(256)->Unit(benchmark::kMicrosecond);

void BM_NtkAnalyse(benchmark::State& state) {
  const Problem p = build_problem(problem_1d(static_cast<int>(state.range(0))));
  std::vector<Network> nets{init_pirbn(RbfKind::Gaussian, {{-0.1}, {1.1}, {121}}, 10.0, 0)};
  const ResidualSystem sys = assemble(p, nets);
  for (auto _ : state) {
    NtkSnapshot snap = compute_ntk(sys);
    analyse(snap, &snap);
    benchmark::DoNotOptimize(snap.diag_dominance);
  }
}
BENCHMARK(BM_NtkAnalyse)->Arg(51)->Arg(201)->Arg(801)->Unit(benchmark::kMillisecond);

void BM_SpectralNormPower(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  const Eigen::MatrixXd A = Eigen::MatrixXd::Random(n, n);
  const Eigen::MatrixXd S = A + A.transpose();
  for (auto _ : state) benchmark::DoNotOptimize(spectral_norm(S, 0));
}
BENCHMARK(BM_SpectralNormPower)->Arg(512)->Arg(2048)->Unit(benchmark::kMillisecond);

void BM_AdamStep(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  TrainConfig cfg;
  AdamState adam(n);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(n);
  const Eigen::VectorXd g = Eigen::VectorXd::Random(n);
  for (auto _ : state) adam_step(adam, theta, g, cfg);
  benchmark::DoNotOptimize(theta.data());
}
BENCHMARK(BM_AdamStep)->Arg(2042)->Arg(20000);

}  // namespace

BENCHMARK_MAIN();
