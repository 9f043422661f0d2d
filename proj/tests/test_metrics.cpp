#include "helpers.hpp"

#include "stmrecon/error.hpp"
#include "stmrecon/metrics.hpp"
#include "stmrecon/phantom.hpp"

#include <gtest/gtest.h>

using namespace stmrecon;
using namespace testing_support;

namespace {

StmSet random_maps(const Grid &g, Index T, Index L, std::uint64_t seed)
{
  StmSet s(g, T, L);
  for (Index v = 0; v < g.size(); ++v) {
    Mat q = orthonormalize(random_mat(T, L, seed + v));
    for (Index l = 0; l < L; ++l)
      for (Index t = 0; t < T; ++t) s.at(v, l, t) = q(t, l);
  }
  return s;
}

DynamicImage random_series(const Grid &g, Index T, std::uint64_t seed)
{
  DynamicImage d(g, T);
  d.values = random_vec(d.values.size(), seed);
  return d;
}

} // namespace

TEST(Npr, FullBasisGivesZero)
{
  Grid g(6, 6);
  auto ref = random_series(g, 5, 1);
  EXPECT_LT(npr(ref, TemporalModel::from_stm(random_maps(g, 5, 5, 2)), nullptr, 5), 1e-8);
}

TEST(Npr, NonIncreasingForNestedBases)
{
  Grid g(6, 6);
  auto ref = random_series(g, 8, 3);
  auto curve = npr_curve(ref, TemporalModel::from_stm(random_maps(g, 8, 8, 4)), nullptr, 8);
  ASSERT_EQ(curve.size(), 8u);
  for (std::size_t i = 1; i < curve.size(); ++i) EXPECT_LE(curve[i], curve[i - 1] + 1e-12);
  EXPECT_LT(curve.back(), 1e-8);
}

TEST(Npr, ExactPhantomAtJmaxIsZero)
{
  auto spec = exact_spec(Grid(16, 16), 12);
  Phantom ph = generate_phantom_full(spec, 3);
  auto m = TemporalModel::from_stm(true_maps(ph.clean, spec.j_max));
  EXPECT_LT(npr(ph.clean, m, &ph.roi, spec.j_max), 1e-6);
}

TEST(Npr, RoiRestriction)
{
  Grid g(4, 4);
  auto ref = random_series(g, 4, 5);
  StmSet s = random_maps(g, 4, 1, 6);
  // inside the roi the first map equals the voxel's own direction
  RoiMask roi(g, false);
  for (Index v = 0; v < 8; ++v) {
    roi.flags[v] = 1;
    Vec r(4);
    for (Index t = 0; t < 4; ++t) r(t) = ref.at(v, t);
    r.normalize();
    for (Index t = 0; t < 4; ++t) s.at(v, 0, t) = r(t);
  }
  auto m = TemporalModel::from_stm(s);
  EXPECT_LT(npr(ref, m, &roi, 1), 1e-12);
  EXPECT_GT(npr(ref, m, nullptr, 1), 0.1);
  for (auto &z : ref.values) z = 0.0;
  EXPECT_THROW(npr(ref, m, nullptr, 1), NumericError);
}

TEST(Nrmse, ScaleArithmetic)
{
  Grid g(5, 5);
  auto ref = random_series(g, 3, 7);
  EXPECT_EQ(nrmse(ref, ref), 0.0);
  DynamicImage zero(g, 3), twice = ref;
  for (auto &z : twice.values) z *= 2.0;
  EXPECT_NEAR(nrmse(zero, ref), 1.0, 1e-15);
  EXPECT_NEAR(nrmse(twice, ref), 1.0, 1e-15);
  auto pf = nrmse_per_frame(zero, ref);
  ASSERT_EQ(pf.size(), 3u);
  for (double e : pf) EXPECT_NEAR(e, 1.0, 1e-15);
}

TEST(Metrics, GlobalPhaseInvariance)
{
  Grid g(6, 6);
  auto ref = random_series(g, 6, 8), rec = random_series(g, 6, 9);
  auto m = TemporalModel::from_stm(random_maps(g, 6, 2, 10));
  double a = nrmse(rec, ref), b = npr(ref, m, nullptr, 2);
  cx ph = std::polar(1.0, 1.3);
  for (auto &z : ref.values) z *= ph;
  for (auto &z : rec.values) z *= ph;
  EXPECT_NEAR(nrmse(rec, ref), a, 1e-12);
  EXPECT_NEAR(npr(ref, m, nullptr, 2), b, 1e-12);
}

TEST(EigenvalueMaps, IdentityFieldAllOnes)
{
  GramField f(Grid(3, 3), 12);
  for (Index v = 0; v < 9; ++v) f.at(v) = Mat::Identity(12, 12);
  ImageStack e = eigenvalue_maps(f);
  EXPECT_EQ(e.K, 10);
  for (double x : e.values) EXPECT_NEAR(x, 1.0, 1e-12);
}

TEST(EigenvalueMaps, SortedDecreasingAndNormalized)
{
  GramField f(Grid(2, 2), 6);
  for (Index v = 0; v < 4; ++v) {
    Mat Q = orthonormalize(random_mat(6, 6, v));
    RVec d(6);
    d << 6, 5, 4, 3, 2, 0;
    f.at(v) = Q * d.asDiagonal() * Q.adjoint();
  }
  ImageStack e = eigenvalue_maps(f, 3);
  for (Index v = 0; v < 4; ++v) {
    EXPECT_NEAR(e.at(v, 0), 3.0 / 6.0, 1e-12);
    EXPECT_NEAR(e.at(v, 1), 2.0 / 6.0, 1e-12);
    EXPECT_NEAR(e.at(v, 2), 0.0, 1e-12);
  }
}

TEST(Paradigm, AlternatingTiles)
{
  auto p = TaskParadigm::alternating(200, 20);
  EXPECT_NO_THROW(p.validate());
  EXPECT_EQ(p.blocks.size(), 10u);
  EXPECT_EQ(p.at(0), Condition::Rest);
  EXPECT_EQ(p.at(20), Condition::Task);
  EXPECT_EQ(p.at(199), Condition::Task);
  p.blocks[1].start += 1;
  EXPECT_THROW(p.validate(), InvariantError);
}

TEST(Tscore, WhiteNoiseNearZero)
{
  // under identical distributions the Welch t is close to standard normal, so
  // a single voxel only gives |t| < 0.5 by chance; check the ensemble instead
  Grid g(20, 20);
  const Index T = 1000;
  DynamicImage d(g, T);
  CounterRng rng(42, 0);
  for (Index i = 0; i < g.size() * T; ++i) d.values[i] = 5.0 + rng.normal(static_cast<std::uint64_t>(i));
  auto t = tscore_map(d, TaskParadigm::alternating(T, 20), 2);
  double m = 0, q = 0;
  for (double x : t.values) {
    m += x;
    q += x * x;
  }
  m /= double(t.values.size());
  double sd = std::sqrt(q / double(t.values.size()) - m * m);
  EXPECT_LT(std::abs(m), 0.2);
  EXPECT_GT(sd, 0.8);
  EXPECT_LT(sd, 1.2);
}

TEST(Tscore, TenSigmaShiftIsLarge)
{
  Grid g(1, 2);
  const Index T = 200;
  auto par = TaskParadigm::alternating(T, 20);
  DynamicImage d(g, T);
  CounterRng rng(3, 0);
  for (Index v = 0; v < 2; ++v)
    for (Index t = 0; t < T; ++t) {
      double shift = v == 0 && par.at(t) == Condition::Task ? 10.0 : 0.0;
      d.at(v, t) = 20.0 + shift + rng.normal(static_cast<std::uint64_t>(v * T + t));
    }
  auto ts = tscore_map(d, par, 2);
  EXPECT_GT(ts.at(0, 0), 10.0);
  EXPECT_LT(std::abs(ts.at(1, 0)), 3.0);
}

TEST(Tscore, ZeroSeriesScoresZero)
{
  DynamicImage d(Grid(2, 2), 40);
  auto ts = tscore_map(d, TaskParadigm::alternating(40, 10), 2);
  for (double x : ts.values) EXPECT_EQ(x, 0.0);
  EXPECT_THROW(tscore_map(d, TaskParadigm::alternating(40, 2), 2), ConfigError);
}

TEST(MaskedMean, InsideAndOutside)
{
  ImageStack s(Grid(2, 2), 1);
  s.values = {1, 2, 3, 4};
  RoiMask m(Grid(2, 2), false);
  m.flags = {1, 1, 0, 0};
  EXPECT_DOUBLE_EQ(masked_mean(s, m, true), 1.5);
  EXPECT_DOUBLE_EQ(masked_mean(s, m, false), 3.5);
}
