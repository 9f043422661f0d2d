#include "helpers.hpp"

#include "stmrecon/calib.hpp"
#include "stmrecon/error.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace stmrecon;
using namespace testing_support;

namespace {

// Single-coil dataset with random samples inside an acs box of the given size.
KtDataset random_acs(const Grid &g, Index T, const Box &box, std::uint64_t seed)
{
  KtDataset d(g, 1, T);
  d.mask = SamplingMask(g, T);
  d.mask.acs = box;
  CounterRng rng(seed, 3);
  for (Index x = 0; x < g[0]; ++x)
    for (Index y = 0; y < g[1]; ++y)
      for (Index z = 0; z < g[2]; ++z) {
        if (!box.contains(x, y, z)) continue;
        Index v = g.linear(x, y, z);
        for (Index t = 0; t < T; ++t) {
          d.at(v, 0, t) = rng.cnormal(static_cast<std::uint64_t>(v * T + t));
          d.mask.at(v, t) = 1;
        }
      }
  return d;
}

double min_eig_ratio(const Mat &m)
{
  RVec ev = Eigen::SelfAdjointEigenSolver<Mat>(m, Eigen::EigenvaluesOnly).eigenvalues();
  return ev(0) / ev(ev.size() - 1);
}

} // namespace

TEST(Support, SmallEnumerations)
{
  auto e = build_support(KernelShape::Ellipsoid, 1, 2);
  ASSERT_EQ(e.size(), 5);
  std::set<Offset> want{{0, 0, 0}, {1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}};
  EXPECT_EQ(std::set<Offset>(e.offsets.begin(), e.offsets.end()), want);
  EXPECT_EQ(build_support(KernelShape::Rectangle, 1, 2).size(), 9);
}

TEST(Support, EllipsoidRadiusThreeMatchesLatticeCount)
{
  int n = 0;
  for (int x = -3; x <= 3; ++x)
    for (int y = -3; y <= 3; ++y) n += x * x + y * y <= 9;
  EXPECT_EQ(n, 29);
  EXPECT_EQ(build_support(KernelShape::Ellipsoid, 3, 2).size(), 29);
}

TEST(Support, InvariantsHold)
{
  for (auto shape : {KernelShape::Ellipsoid, KernelShape::Rectangle})
    for (int D : {2, 3})
      for (int R : {1, 2, 4}) {
        auto s = build_support(shape, R, D);
        EXPECT_TRUE(std::is_sorted(s.offsets.begin(), s.offsets.end()));
        EXPECT_EQ(std::set<Offset>(s.offsets.begin(), s.offsets.end()).size(), s.offsets.size());
        for (const auto &o : s.offsets) {
          if (D == 2) {
            EXPECT_EQ(o[2], 0);
          }
          if (shape == KernelShape::Ellipsoid) {
            EXPECT_LE(o[0] * o[0] + o[1] * o[1] + o[2] * o[2], R * R);
          } else {
            EXPECT_LE(std::max({std::abs(o[0]), std::abs(o[1]), std::abs(o[2])}), R);
          }
        }
      }
  EXPECT_THROW(build_support(KernelShape::Ellipsoid, 0, 2), ConfigError);
  EXPECT_THROW(parse_kernel_shape("hexagon"), ConfigError);
}

TEST(CalibMatrix, InteriorRowCount)
{
  Grid g(9, 9);
  Box box{{2, 2, 0}, {7, 7, 1}};
  auto d = random_acs(g, 1, box, 1);
  Mat C = build_C_direct(d, build_support(KernelShape::Ellipsoid, 1, 2));
  EXPECT_EQ(C.rows(), 9);
  EXPECT_EQ(C.cols(), 5);
}

TEST(CalibMatrix, ZeroAcsGivesZeroMatrixAndGram)
{
  Grid g(12, 12);
  auto d = random_acs(g, 3, Box{{0, 0, 0}, {12, 12, 1}}, 2);
  for (auto &s : d.samples) s = 0.0;
  auto sup = build_support(KernelShape::Ellipsoid, 2, 2);
  EXPECT_EQ(build_C_direct(d, sup).norm(), 0.0);
  EXPECT_EQ(build_gram_fft(d, sup).matrix.norm(), 0.0);
}

TEST(CalibMatrix, EntriesMatchHandGatheredNeighborhoods)
{
  Grid g(10, 11);
  Box box{{1, 2, 0}, {9, 10, 1}};
  const Index T = 3;
  auto d = random_acs(g, T, box, 3);
  auto sup = build_support(KernelShape::Rectangle, 1, 2);
  Mat C = build_C_direct(d, sup);
  // centers run over x in [2, 8), y in [3, 9), row-major
  ASSERT_EQ(C.rows(), 36);
  for (Index row = 0; row < C.rows(); ++row) {
    Index cx0 = 2 + row / 6, cy0 = 3 + row % 6;
    for (Index t = 0; t < T; ++t)
      for (Index l = 0; l < sup.size(); ++l) {
        const auto &o = sup.offsets[l];
        EXPECT_EQ(C(row, t * sup.size() + l), d.at(g.linear(cx0 - o[0], cy0 - o[1], 0), 0, t));
      }
  }
}

TEST(CalibMatrix, TooSmallAcsRejected)
{
  Grid g(8, 8);
  auto d = random_acs(g, 2, Box{{0, 3, 0}, {8, 5, 1}}, 4);
  EXPECT_THROW(build_gram_fft(d, build_support(KernelShape::Ellipsoid, 2, 2)), ConfigError);
  EXPECT_THROW(build_C_direct(d, build_support(KernelShape::Ellipsoid, 2, 2)), ConfigError);
}

TEST(CalibGram, FftMatchesDirect2D)
{
  Grid g(16, 16);
  auto d = random_acs(g, 5, Box{{2, 2, 0}, {14, 14, 1}}, 5);
  auto sup = build_support(KernelShape::Ellipsoid, 2, 2);
  auto a = build_gram_fft(d, sup), b = build_gram_direct(d, sup);
  EXPECT_LT(rel_diff(a.matrix, b.matrix), 1e-6);
  EXPECT_EQ(a.rows, b.rows);
}

TEST(CalibGram, FftMatchesDirectRectangular3D)
{
  Grid g(8, 10, 9);
  auto d = random_acs(g, 2, Box{{0, 2, 1}, {8, 8, 8}}, 6);
  for (auto shape : {KernelShape::Ellipsoid, KernelShape::Rectangle}) {
    auto sup = build_support(shape, 1, 3);
    EXPECT_LT(rel_diff(build_gram_fft(d, sup).matrix, build_gram_direct(d, sup).matrix), 1e-6);
  }
}

TEST(CalibGram, ScalesWithSquaredMagnitude)
{
  Grid g(12, 12);
  auto d = random_acs(g, 3, Box::full(g), 7);
  auto sup = build_support(KernelShape::Ellipsoid, 2, 2);
  Mat G = build_gram_fft(d, sup).matrix;
  cx f(1.5, -2.0);
  for (auto &s : d.samples) s *= f;
  EXPECT_LT(rel_diff(build_gram_fft(d, sup).matrix, std::norm(f) * G), 1e-12);
}

TEST(CalibGram, FramePermutationPermutesBlocks)
{
  Grid g(12, 12);
  const Index T = 4;
  auto d = random_acs(g, T, Box::full(g), 8);
  auto sup = build_support(KernelShape::Ellipsoid, 1, 2);
  const Index L = sup.size();
  Mat G = build_gram_fft(d, sup).matrix;
  std::vector<Index> perm{2, 0, 3, 1};
  KtDataset p = d;
  for (Index v = 0; v < g.size(); ++v)
    for (Index t = 0; t < T; ++t) p.at(v, 0, t) = d.at(v, 0, perm[t]);
  Mat Gp = build_gram_fft(p, sup).matrix;
  double err = 0;
  for (Index t = 0; t < T; ++t)
    for (Index u = 0; u < T; ++u)
      err = std::max(err, (Gp.block(t * L, u * L, L, L) - G.block(perm[t] * L, perm[u] * L, L, L)).norm());
  EXPECT_LT(err, 1e-9 * G.norm());
}

TEST(CalibGram, HermitianPsdAtDatasetAShape)
{
  Grid g(128, 84);
  const Index T = 100;
  Index lo = 84 / 2 - 6;
  auto d = random_acs(g, T, Box{{0, lo, 0}, {128, lo + 12, 1}}, 9);
  auto gram = build_gram_fft(d, build_support(KernelShape::Ellipsoid, 3, 2));
  EXPECT_EQ(gram.matrix.rows(), 29 * T);
  EXPECT_EQ(gram.rows, 122 * 6);
  EXPECT_LT(hermitian_error(gram.matrix), 1e-10);
  EXPECT_GE(min_eig_ratio(gram.matrix), -1e-8);
  EXPECT_NO_THROW(gram.validate());
}

TEST(CalibGram, RejectsMulticoil)
{
  KtDataset d(Grid(8, 8), 2, 2);
  d.mask = SamplingMask(d.grid, 2);
  d.mask.acs = Box::full(d.grid);
  EXPECT_THROW(build_gram_fft(d, build_support(KernelShape::Ellipsoid, 1, 2)), ConfigError);
}
