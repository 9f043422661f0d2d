#pragma once

#include "stmrecon/calib.hpp"
#include "stmrecon/linalg.hpp"
#include "stmrecon/nullspace.hpp"
#include "stmrecon/types.hpp"

#include <cstdint>
#include <string>

namespace stmrecon {

// Per-voxel T x T Hermitian matrices, column-major per voxel.
struct GramField {
  Grid grid;
  Index T = 0;
  Cvec values;
  double bound = 0.0; // known eigenvalue upper bound, 0 if unknown

  GramField() = default;
  GramField(const Grid &g, Index frames);

  Eigen::Map<const Mat> at(Index v) const { return Eigen::Map<const Mat>(values.data() + v * T * T, T, T); }
  Eigen::Map<Mat> at(Index v) { return Eigen::Map<Mat>(values.data() + v * T * T, T, T); }
  void validate() const;
};

// SENSE combination of the acs region; returns a single-coil dataset whose
// mask is the acs box in every frame.
KtDataset combine_acs(const KtDataset &acs, const SensitivityMaps &maps, double eps_rel = 1e-6);

// G(x) from the projector, one zero-padded FFT per (t, t') block.
GramField compute_gram_field(const NullspaceProjector &p, const KernelSupport &support, Index T, const Grid &eval);

// Same matrices for voxels [v0, v1) by explicit evaluation on the
// difference lattice; used for large fields and as a cross-check.
GramField gram_field_voxels(const NullspaceProjector &p, const KernelSupport &support, Index T, const Grid &eval,
                            Index v0, Index v1);

// Oracle: materializes the filters h_r(x, t) and forms H(x)^H H(x).
Mat gram_field_oracle(const Mat &W, const KernelSupport &support, Index T, const Grid &eval, Index v);

enum class IterationMode { Inverse, Shifted };

struct ExtractOptions {
  Index L = 4;
  double threshold = -1.0; // per-voxel L(x) rule when >= 0, relative to the field bound
  int max_iter = 30;
  double tol = 1e-8;
  std::uint64_t seed = 0;
  Index guard = -1;        // extra iteration vectors, -1 = automatic
  IterationMode mode = IterationMode::Inverse;
  double shift = 0.0;      // shifted mode sigma, 0 = field bound
  bool align = false;      // rotate each voxel basis toward a global reference
  Index chunk = 512;       // voxels per block on the streaming path
};

struct ExtractStats {
  Index voxels = 0;
  Index fallbacks = 0;
  int max_iterations = 0;
  double mean_iterations = 0.0;
};

StmSet extract_maps(const GramField &field, const ExtractOptions &opt, ExtractStats *stats = nullptr);

// Per-voxel dense eigendecomposition, the reference for extract_maps.
StmSet dense_maps(const GramField &field, Index L);

// Builds the field block by block without storing it whole.
StmSet maps_from_projector(const NullspaceProjector &p, const KernelSupport &support, Index T, const Grid &eval,
                           const ExtractOptions &opt, ExtractStats *stats = nullptr);

// Rotates each voxel basis within its span toward the dominant global
// subspace, making the maps spatially coherent.
void align_maps(StmSet &maps);

// Spectral zero-padding of gauge-aligned coarse maps, then per-voxel re-orthonormalization.
StmSet interpolate_maps(const StmSet &coarse, const Grid &target);

// Half resolution by default; extents never drop below the kernel lattice.
Grid coarse_grid(const Grid &g, Index factor, const KernelSupport &support);

struct SensitivityOptions {
  KernelShape shape = KernelShape::Ellipsoid;
  int radius = 3;
  double tau = 1e-3;
};

// Channels play the role of frames, L = 1.
SensitivityMaps estimate_sensitivity_maps(const KtDataset &acs, const SensitivityOptions &opt = {});

} // namespace stmrecon
