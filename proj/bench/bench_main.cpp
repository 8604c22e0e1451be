// Parallel kernels against their serial references, plus the delay simulator.

#include <random>

#include <benchmark/benchmark.h>

#include "poe/delay_sim.hpp"
#include "poe/em.hpp"
#include "poe/fusion.hpp"
#include "poe/rng.hpp"

using namespace poe;

namespace {

FusionProblem make_problem(std::size_t K, std::size_t P, std::size_t n_delta) {
  Rng rng = make_rng(1);
  std::gamma_distribution<double> g(1.5, 1.0);
  FusionProblem p;
  for (std::size_t k = 0; k < K; ++k) {
    FusionLink l;
    l.index = k;
    for (std::size_t j = 0; j < P; ++j) {
      l.u.push_back(100.0 + 0.5 + g(rng));
      l.v.push_back(100.0 - 0.5 + g(rng));
    }
    l.fwd = l.rev = GammaMixture{{0.7, 0.3}, {{1.5, 0.8}, {2.0, 1.5}}};
    p.links.push_back(l);
  }
  p.quadrature.n_delta = n_delta;
  p.quadrature.n_d = n_delta / 2 + 1;
  return p;
}

void BM_FusionLattice(benchmark::State& st) {
  const auto p = make_problem(3, static_cast<std::size_t>(st.range(0)), static_cast<std::size_t>(st.range(1)));
  for (auto _ : st) benchmark::DoNotOptimize(fuse_estimate(p).delta_hat);
}
BENCHMARK(BM_FusionLattice)->Args({50, 401})->Args({50, 1001})->Unit(benchmark::kMillisecond);

void BM_FusionReference(benchmark::State& st) {
  const auto p = make_problem(3, static_cast<std::size_t>(st.range(0)), static_cast<std::size_t>(st.range(1)));
  for (auto _ : st) benchmark::DoNotOptimize(reference::fuse_estimate(p).delta_hat);
}
BENCHMARK(BM_FusionReference)->Args({50, 401})->Args({50, 1001})->Unit(benchmark::kMillisecond);

struct EmCase {
  ThetaPi theta;
  ObservationSet obs;
};

EmCase make_em_case(std::size_t N, std::size_t P) {
  Rng rng = make_rng(2);
  std::gamma_distribution<double> g(2.0, 1.0);
  EmCase c;
  c.obs = {Eigen::MatrixXd(N, P), Eigen::MatrixXd(N, P)};
  for (Eigen::Index k = 0; k < c.obs.u.size(); ++k) {
    c.obs.u.data()[k] = 50.0 + g(rng);
    c.obs.v.data()[k] = 50.0 + g(rng);
  }
  auto& t = c.theta;
  t.psi.d = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(N), 49.0);
  t.psi.tau = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(N), -0.5);
  t.pi = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(N), 0.3);
  for (std::size_t i = 0; i < N; ++i) {
    t.psi.fwd.push_back({{1.5, 1.0}, {3.0, 0.7}});
    t.psi.rev.push_back({{1.5, 1.0}, {3.0, 0.7}});
    t.alpha.push_back({0.5, 0.5});
    t.beta.push_back({0.5, 0.5});
  }
  return c;
}

void BM_EStep(benchmark::State& st) {
  const auto c = make_em_case(5, static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(e_step(c.theta, c.obs).llf);
}
BENCHMARK(BM_EStep)->Arg(50)->Arg(1000)->Unit(benchmark::kMicrosecond);

void BM_EStepReference(benchmark::State& st) {
  const auto c = make_em_case(5, static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(reference::e_step(c.theta, c.obs).llf);
}
BENCHMARK(BM_EStepReference)->Arg(50)->Arg(1000)->Unit(benchmark::kMicrosecond);

void BM_Cascade(benchmark::State& st) {
  const auto sc = TrafficScenario::tm1(static_cast<double>(st.range(0)) / 100.0);
  for (auto _ : st) benchmark::DoNotOptimize(simulate_cascade(sc, 10000, 3).mean);
}
BENCHMARK(BM_Cascade)->Arg(20)->Arg(80)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
