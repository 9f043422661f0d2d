#include "stmrecon/calib.hpp"
#include "stmrecon/nullspace.hpp"
#include "stmrecon/phantom.hpp"
#include "stmrecon/recon.hpp"
#include "stmrecon/rng.hpp"
#include "stmrecon/stm_maps.hpp"

#include <benchmark/benchmark.h>

using namespace stmrecon;

namespace {

KtDataset random_acs(Index nx, Index ny, Index T)
{
  Grid g(nx, ny);
  KtDataset d(g, 1, T);
  d.mask = SamplingMask(g, T);
  d.mask.acs = Box::full(g);
  CounterRng rng(1, 0);
  for (std::size_t i = 0; i < d.samples.size(); ++i) d.samples[i] = rng.cnormal(i);
  for (auto &f : d.mask.flags) f = 1;
  return d;
}

Mat low_rank_gram(Index n, Index r)
{
  CounterRng rng(2, 0);
  Mat A(n, r);
  for (Index j = 0; j < r; ++j)
    for (Index i = 0; i < n; ++i) A(i, j) = rng.cnormal(static_cast<std::uint64_t>(j * n + i));
  return A * A.adjoint();
}

} // namespace

static void BM_GramDirect(benchmark::State &state)
{
  auto d = random_acs(32, 12, state.range(0));
  auto sup = build_support(KernelShape::Ellipsoid, 2, 2);
  for (auto _ : state) benchmark::DoNotOptimize(build_gram_direct(d, sup).matrix.data());
}
BENCHMARK(BM_GramDirect)->Arg(4)->Arg(16)->Unit(benchmark::kMillisecond);

static void BM_GramFft(benchmark::State &state)
{
  auto d = random_acs(32, 12, state.range(0));
  auto sup = build_support(KernelShape::Ellipsoid, 2, 2);
  for (auto _ : state) benchmark::DoNotOptimize(build_gram_fft(d, sup).matrix.data());
}
BENCHMARK(BM_GramFft)->Arg(4)->Arg(16)->Unit(benchmark::kMillisecond);

static void BM_ProjectorExact(benchmark::State &state)
{
  Mat G = low_rank_gram(state.range(0), 40);
  for (auto _ : state) benchmark::DoNotOptimize(exact_projector(G, 1e-3).W.data());
}
BENCHMARK(BM_ProjectorExact)->Arg(500)->Arg(1000)->Unit(benchmark::kMillisecond);

static void BM_ProjectorSketch(benchmark::State &state)
{
  Mat G = low_rank_gram(state.range(0), 40);
  SketchConfig cfg;
  cfg.rank = 40;
  for (auto _ : state) benchmark::DoNotOptimize(sketched_projector(G, cfg).W.data());
}
BENCHMARK(BM_ProjectorSketch)->Arg(500)->Arg(1000)->Unit(benchmark::kMillisecond);

static void BM_GramField(benchmark::State &state)
{
  const Index T = state.range(0);
  auto sup = build_support(KernelShape::Ellipsoid, 2, 2);
  NullspaceProjector p;
  p.W = Mat::Identity(sup.size() * T, sup.size() * T) - low_rank_gram(sup.size() * T, 8) / double(sup.size() * T);
  Grid g(32, 32);
  for (auto _ : state) benchmark::DoNotOptimize(compute_gram_field(p, sup, T, g).values.data());
  state.SetItemsProcessed(state.iterations() * g.size());
}
BENCHMARK(BM_GramField)->Arg(8)->Arg(24)->Unit(benchmark::kMillisecond);

static void BM_ExtractMaps(benchmark::State &state)
{
  const Index T = 24;
  auto sup = build_support(KernelShape::Ellipsoid, 2, 2);
  NullspaceProjector p;
  p.W = Mat::Identity(sup.size() * T, sup.size() * T) - low_rank_gram(sup.size() * T, 8) / double(sup.size() * T);
  auto field = compute_gram_field(p, sup, T, Grid(32, 32));
  ExtractOptions opt;
  opt.L = 4;
  opt.mode = state.range(0) ? IterationMode::Inverse : IterationMode::Shifted;
  for (auto _ : state) benchmark::DoNotOptimize(extract_maps(field, opt).maps.data());
}
BENCHMARK(BM_ExtractMaps)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

static void BM_Tikhonov(benchmark::State &state)
{
  MultibandSpec s;
  s.grid = Grid(48, 48);
  s.T = 24;
  Region r;
  r.whole_fov = true;
  r.bands = {Band{0.0}, Band{2.0 / 24, 0.5, 0.0}};
  s.regions = {r};
  Phantom ph = generate_phantom_full(s, 1);
  MaskSpec ms;
  SamplingMask mask = generate_mask(s.grid, s.T, ms);
  SensitivityMaps c = generate_sensitivities(s.grid, 4, 1);
  KtDataset d = simulate_acquisition(ph.clean, c, mask, 0.01, 2);
  TemporalModel m = TemporalModel::from_stm(true_maps(ph.clean, 2));
  ForwardOp op(c, mask);
  ReconConfig cfg;
  cfg.lambda = 1e-2;
  cfg.iters = static_cast<int>(state.range(0));
  cfg.tol = 0;
  for (auto _ : state) benchmark::DoNotOptimize(solve_tikhonov(op, m, d, cfg).image.values.data());
}
BENCHMARK(BM_Tikhonov)->Arg(10)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
