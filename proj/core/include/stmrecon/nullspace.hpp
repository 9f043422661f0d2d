#pragma once

#include "stmrecon/calib.hpp"
#include "stmrecon/linalg.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace stmrecon {

enum class NullspaceMethod { Exact, Sketched };

NullspaceMethod parse_nullspace_method(const std::string &name);
std::string nullspace_method_name(NullspaceMethod m);

struct NullspaceProjector {
  Mat W;
  Index rank = 0; // r_C, dimension of the row space removed from I
  NullspaceMethod method = NullspaceMethod::Exact;
  double tau = 1e-3;
  Index sketch_dim = 0; // 0 when exact

  Index filters() const { return W.rows() - rank; }
  void validate() const;
};

struct RankEstimate {
  Index rank = 0;
  std::vector<double> spectrum; // descending
};

RankEstimate estimate_rank(const Mat &gram, double tau_rel);
inline RankEstimate estimate_rank(const CalibGram &g, double tau_rel) { return estimate_rank(g.matrix, tau_rel); }

NullspaceProjector exact_projector(const Mat &gram, double tau_rel);
inline NullspaceProjector exact_projector(const CalibGram &g, double tau_rel) { return exact_projector(g.matrix, tau_rel); }

struct SketchConfig {
  double mu = 2.0;          // s = mu * r_C
  std::uint64_t seed = 0;
  Index s = 0;              // explicit sketch dimension, 0 = from mu
  Index rank = 0;           // explicit r_C, 0 = estimated
  double tau = 1e-3;        // relative threshold for rank estimation
  Index pilot_frames = 0;   // frames used by the pilot rank estimate, 0 = automatic
  bool allow_mu_override = false;

  void validate() const;
};

// Rank estimate from the leading pilot frames, extrapolated to all frames.
// Requires the frame-blocked column layout of a CalibGram.
Index pilot_rank(const CalibGram &g, double tau_rel, Index pilot_frames);

// Sketched projector for a bare matrix; cfg.rank or cfg.s must be given.
NullspaceProjector sketched_projector(const Mat &gram, const SketchConfig &cfg);
// Sketched projector with the pilot rank heuristic when cfg.rank is 0.
NullspaceProjector sketched_projector(const CalibGram &g, const SketchConfig &cfg);

// sqrt(trace(C W C^H) / (|C|_F^2 R)) evaluated through the Gram.
double filter_annihilation_residual(const NullspaceProjector &p, const Mat &gram);
double filter_annihilation_residual(const NullspaceProjector &p, const KtDataset &acs, const KernelSupport &support);

// Projector files use the dataset directory format with kind "projector".
void write_projector(const std::filesystem::path &dir, const NullspaceProjector &p, const KernelSupport &support,
                     Index T);
struct LoadedProjector {
  NullspaceProjector projector;
  KernelSupport support;
  Index T = 0;
};
LoadedProjector read_projector(const std::filesystem::path &dir);

} // namespace stmrecon
