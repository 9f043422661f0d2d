#include "helpers.hpp"

#include "stmrecon/calib.hpp"
#include "stmrecon/error.hpp"
#include "stmrecon/nullspace.hpp"

#include <gtest/gtest.h>

using namespace stmrecon;
using namespace testing_support;

namespace {

// Hermitian PSD matrix with prescribed eigenvalues in a random basis.
Mat with_spectrum(const std::vector<double> &ev, std::uint64_t seed)
{
  Index n = static_cast<Index>(ev.size());
  Mat Q = orthonormalize(random_mat(n, n, seed));
  RVec d(n);
  for (Index i = 0; i < n; ++i) d(i) = ev[i];
  Mat G = Q * d.asDiagonal() * Q.adjoint();
  return 0.5 * (G + G.adjoint());
}

void expect_projector(const NullspaceProjector &p, double idem_tol)
{
  EXPECT_LT(hermitian_error(p.W), 1e-10);
  RVec ev = Eigen::SelfAdjointEigenSolver<Mat>(p.W, Eigen::EigenvaluesOnly).eigenvalues();
  EXPECT_GE(ev.minCoeff(), -1e-6);
  EXPECT_LE(ev.maxCoeff(), 1 + 1e-6);
  if (p.W.norm() > 0) {
    EXPECT_LT((p.W * p.W - p.W).norm() / p.W.norm(), idem_tol);
  }
}

} // namespace

TEST(RankEstimate, IdentityAndDiagonal)
{
  EXPECT_EQ(estimate_rank(Mat::Identity(10, 10), 0.5).rank, 10);
  Mat d = Mat::Zero(6, 6);
  d(0, 0) = 1.0;
  for (Index i = 1; i < 6; ++i) d(i, i) = 1e-9;
  auto r = estimate_rank(d, 1e-3);
  EXPECT_EQ(r.rank, 1);
  EXPECT_TRUE(std::is_sorted(r.spectrum.rbegin(), r.spectrum.rend()));
  EXPECT_EQ(estimate_rank(Mat::Zero(4, 4), 1e-3).rank, 0);
}

TEST(RankEstimate, ScaleInvariant)
{
  Mat G = with_spectrum({5, 4, 1, 0.1, 1e-4, 1e-6, 0, 0}, 3);
  for (double f : {1e-8, 1.0, 1e7}) {
    EXPECT_EQ(estimate_rank(G * f, 1e-3).rank, 4);
  }
}

TEST(RankEstimate, TauOutsideRangeRejected)
{
  EXPECT_THROW(estimate_rank(Mat::Identity(2, 2), 0.0), ConfigError);
  EXPECT_THROW(estimate_rank(Mat::Identity(2, 2), 1.0), ConfigError);
}

TEST(RankEstimate, PhantomGramMatchesDirectMatrixRank)
{
  auto spec = exact_spec(Grid(24, 24), 12);
  DynamicImage img = generate_phantom(spec, 1);
  auto acs = acs_of(img, 12);
  auto sup = build_support(KernelShape::Ellipsoid, 2, 2);
  Mat C = build_C_direct(acs, sup);
  Eigen::JacobiSVD<Mat> svd(C);
  auto sv = svd.singularValues();
  Index brute = 0;
  // squared singular values against the same relative threshold
  for (Index i = 0; i < sv.size(); ++i) brute += sv(i) * sv(i) >= 1e-3 * sv(0) * sv(0);
  EXPECT_EQ(estimate_rank(build_gram_fft(acs, sup), 1e-3).rank, brute);
}

TEST(ExactProjector, TrivialCases)
{
  auto p0 = exact_projector(Mat::Zero(5, 5), 1e-3);
  EXPECT_EQ((p0.W - Mat::Identity(5, 5)).norm(), 0.0);
  EXPECT_EQ(p0.rank, 0);
  auto p1 = exact_projector(Mat::Identity(5, 5), 1e-3);
  EXPECT_LT(p1.W.norm(), 1e-14);
  EXPECT_EQ(p1.rank, 5);
  EXPECT_EQ(p1.filters(), 0);
}

TEST(ExactProjector, AnnihilatesRowSpaceAndIsProjector)
{
  Mat G = with_spectrum({9, 7, 3, 2, 1e-7, 1e-8, 0, 0, 0, 0}, 4);
  auto p = exact_projector(G, 1e-3);
  EXPECT_EQ(p.rank, 4);
  auto eig = hermitian_eig(G);
  Mat V = eig.vectors.rightCols(4);
  EXPECT_LT((p.W * V).norm(), 1e-8);
  EXPECT_LT((p.W + V * V.adjoint() - Mat::Identity(10, 10)).norm(), 1e-8);
  expect_projector(p, 1e-6);
}

TEST(SketchedProjector, RankOneWithTwoColumns)
{
  Vec u = random_mat(12, 1, 5).col(0);
  Mat G = u * u.adjoint();
  SketchConfig cfg;
  cfg.s = 2;
  cfg.seed = 11;
  auto ps = sketched_projector(G, cfg);
  auto pe = exact_projector(G, 1e-3);
  EXPECT_EQ(ps.rank, 1);
  EXPECT_EQ(ps.sketch_dim, 2);
  EXPECT_LT((ps.W - pe.W).norm(), 1e-6);
}

TEST(SketchedProjector, ZeroGramGivesIdentity)
{
  SketchConfig cfg;
  cfg.s = 3;
  auto p = sketched_projector(Mat::Zero(7, 7), cfg);
  EXPECT_EQ((p.W - Mat::Identity(7, 7)).norm(), 0.0);
}

TEST(SketchedProjector, TwentySeedFidelityOnGappedSpectrum)
{
  const Index n = 60, r = 8;
  std::vector<double> ev(n, 0.0);
  for (Index i = 0; i < n; ++i) ev[i] = i < r ? 1.0 + 0.5 * double(i) : 1e-3 * double(n - i) / double(n);
  Mat G = with_spectrum(ev, 6);
  auto pe = exact_projector(G, 1e-2);
  ASSERT_EQ(pe.rank, r);
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SketchConfig cfg;
    cfg.rank = r;
    cfg.mu = 2.0;
    cfg.seed = seed;
    auto ps = sketched_projector(G, cfg);
    EXPECT_EQ(ps.sketch_dim, 2 * r);
    worst = std::max(worst, (ps.W - pe.W).norm() / pe.W.norm());
  }
  EXPECT_LT(worst, 0.05);
}

TEST(SketchedProjector, ConfigurationErrors)
{
  Mat G = Mat::Identity(6, 6);
  SketchConfig cfg;
  cfg.rank = 3;
  cfg.s = 3;
  EXPECT_THROW(sketched_projector(G, cfg), ConfigError);
  cfg.s = 0;
  cfg.mu = 1.5;
  EXPECT_THROW(sketched_projector(G, cfg), ConfigError);
  cfg.mu = 7.0;
  EXPECT_THROW(sketched_projector(G, cfg), ConfigError);
  cfg.allow_mu_override = true;
  EXPECT_NO_THROW(sketched_projector(G, cfg));
  SketchConfig bare;
  EXPECT_THROW(sketched_projector(G, bare), ConfigError);
  // fixed s below the refined rank
  SketchConfig fixed;
  fixed.s = 2;
  EXPECT_THROW(sketched_projector(G, fixed), ConfigError);
}

TEST(SketchedProjector, DeterministicInSeed)
{
  Mat G = with_spectrum({4, 3, 2, 0, 0, 0, 0, 0}, 7);
  SketchConfig cfg;
  cfg.rank = 3;
  cfg.seed = 5;
  auto a = sketched_projector(G, cfg), b = sketched_projector(G, cfg);
  EXPECT_EQ((a.W - b.W).norm(), 0.0);
}

TEST(Residual, ExactPhantomAnnihilates)
{
  auto spec = exact_spec(Grid(24, 24), 12);
  auto acs = acs_of(generate_phantom(spec, 2), 12);
  auto sup = build_support(KernelShape::Ellipsoid, 2, 2);
  auto gram = build_gram_fft(acs, sup);
  auto pe = exact_projector(gram, 1e-10);
  ASSERT_GT(pe.filters(), 0);
  double re = filter_annihilation_residual(pe, gram.matrix);
  EXPECT_LT(re, 1e-6);

  SketchConfig cfg;
  cfg.tau = 1e-10;
  cfg.seed = 3;
  auto ps = sketched_projector(gram, cfg);
  double rs = filter_annihilation_residual(ps, gram.matrix);
  EXPECT_LE(rs, std::max(2.0 * re, 1e-9));
  expect_projector(pe, 1e-6);
}

TEST(Residual, ExplicitFormulaThroughDirectMatrix)
{
  Grid g(10, 10);
  auto acs = full_acs(g, 3, 8);
  auto sup = build_support(KernelShape::Ellipsoid, 1, 2);
  Mat C = build_C_direct(acs, sup);
  auto gram = build_gram_direct(acs, sup);
  auto p = exact_projector(gram.matrix, 0.3);
  ASSERT_GT(p.filters(), 0);
  double want = std::sqrt((C * p.W * C.adjoint()).trace().real() / (C.squaredNorm() * double(p.filters())));
  EXPECT_NEAR(filter_annihilation_residual(p, gram.matrix), want, 1e-12);
}

TEST(Residual, WhiteNoiseWithoutNullspaceReportsZero)
{
  Grid g(10, 10);
  auto acs = full_acs(g, 2, 9);
  auto sup = build_support(KernelShape::Ellipsoid, 1, 2);
  auto gram = build_gram_fft(acs, sup);
  auto p = exact_projector(gram, 1e-6);
  EXPECT_EQ(p.filters(), 0);
  EXPECT_EQ(filter_annihilation_residual(p, gram.matrix), 0.0);
}

TEST(ProjectorIo, RoundTrip)
{
  auto dir = scratch("projector");
  Mat G = with_spectrum({3, 2, 1, 0, 0, 0, 0, 0, 0, 0}, 1);
  auto p = exact_projector(G, 1e-3);
  auto sup = build_support(KernelShape::Ellipsoid, 1, 2);
  write_projector(dir, p, sup, 2);
  auto back = read_projector(dir);
  EXPECT_EQ((back.projector.W - p.W).norm(), 0.0);
  EXPECT_EQ(back.projector.rank, 3);
  EXPECT_EQ(back.support.offsets, sup.offsets);
  EXPECT_EQ(back.T, 2);
  EXPECT_THROW(write_projector(dir, p, sup, 3), ShapeError);
}
