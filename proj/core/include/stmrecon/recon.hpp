#pragma once

#include "stmrecon/linalg.hpp"
#include "stmrecon/types.hpp"

#include <string>
#include <vector>

namespace stmrecon {

// d = M F C rho: coil weighting, unitary centered DFT, sampling.
struct ForwardOp {
  SensitivityMaps maps;
  SamplingMask mask;

  ForwardOp(SensitivityMaps c, SamplingMask m);

  const Grid &grid() const { return mask.grid; }
  Index coils() const { return maps.Q; }
  Index frames() const { return mask.T; }

  void apply(const Cvec &rho, Cvec &data) const;   // (v, t) -> (v, q, t)
  void adjoint(const Cvec &data, Cvec &rho) const; // (v, q, t) -> (v, t)
  // Upper bound on |A|^2.
  double norm_bound() const;
};

KtDataset apply_forward(const ForwardOp &op, const DynamicImage &rho);
DynamicImage apply_adjoint(const ForwardOp &op, const KtDataset &data);

// Component images indexed (x, y, z, l).
struct Components {
  Grid grid;
  Index L = 0;
  Cvec values;

  Components() = default;
  Components(const Grid &g, Index n);
};

enum class ModelKind { Stm, Psf };

struct TemporalModel {
  ModelKind kind = ModelKind::Stm;
  StmSet stm;
  Mat phi; // T x L, orthonormal columns

  static TemporalModel from_stm(StmSet s);
  static TemporalModel from_psf(Mat phi);

  Index L() const { return kind == ModelKind::Stm ? stm.L : phi.cols(); }
  Index T() const { return kind == ModelKind::Stm ? stm.T : phi.rows(); }
  // First n components of the model, n <= L.
  TemporalModel truncated(Index n) const;
};

void expand(const TemporalModel &m, const Grid &g, const Cvec &comps, Cvec &rho);
void expand_adjoint(const TemporalModel &m, const Grid &g, const Cvec &rho, Cvec &comps);
DynamicImage expand_model(const TemporalModel &m, const Components &c);
Components expand_model_adjoint(const TemporalModel &m, const DynamicImage &rho);

enum class Regularizer { None, Tikhonov, StructuredLowRank };

Regularizer parse_regularizer(const std::string &name);

struct ReconConfig {
  Regularizer regularizer = Regularizer::Tikhonov;
  double lambda = 0.0;
  int iters = 50;           // CG iterations (inner iterations for the low-rank solver)
  double tol = 1e-10;       // relative normal-equation residual
  int loraks_radius = 2;
  Index loraks_rank = 0;    // 0 = round(rank_fraction * columns)
  double rank_fraction = 0.3;
  int outer_iters = 8;
  double outer_tol = 1e-4;

  void validate() const;
};

struct ReconResult {
  Components components;
  DynamicImage image;
  // sqrt(|A E c - d|^2 + lambda |c|^2) after each CG iteration, starting at c = 0
  std::vector<double> residuals;
  std::vector<double> normal_residuals;
  int iterations = 0;
  int outer_iterations = 0;
};

ReconResult solve_tikhonov(const ForwardOp &op, const TemporalModel &model, const KtDataset &data,
                           const ReconConfig &cfg);
ReconResult solve_structured_lowrank(const ForwardOp &op, const TemporalModel &model, const KtDataset &data,
                                     const ReconConfig &cfg);

// Circular multi-channel Hankel matrix of component k-space, rows = k-space
// locations, columns = (offset, component). Exposed for tests.
Mat structured_matrix(const Components &c, int radius);

// Temporal basis from the Casorati matrix of low-resolution acs images.
TemporalModel psf_basis_from_acs(const KtDataset &acs, Index L);
// Same from a fully known series.
TemporalModel psf_basis_from_image(const DynamicImage &img, Index L);

// Coil combination: SENSE-weighted with maps, the sample itself for one
// coil, root-sum-of-squares otherwise.
DynamicImage coil_combine(const KtDataset &kspace_full, const SensitivityMaps *maps);

// Fills each missing (k, t) from the temporally nearest sampled frame; the
// earlier frame wins a tie.
KtDataset share_data(const KtDataset &data);
DynamicImage data_sharing(const KtDataset &data, const SensitivityMaps *maps = nullptr);
DynamicImage zero_filled(const KtDataset &data, const SensitivityMaps *maps = nullptr);

struct LpsConfig {
  double lambda_L = 0.01;
  double lambda_S = 0.01;
  int iters = 100;
  double tol = 1e-7;
};

struct LpsResult {
  DynamicImage low_rank;
  DynamicImage sparse;
  DynamicImage image;
  std::vector<double> objective; // per iteration, non-increasing
  int restarts = 0;
  int iterations = 0;
};

LpsResult solve_lps(const ForwardOp &op, const KtDataset &data, const LpsConfig &cfg);

} // namespace stmrecon
