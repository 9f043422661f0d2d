#pragma once

#include "stmrecon/recon.hpp"
#include "stmrecon/stm_maps.hpp"
#include "stmrecon/types.hpp"

#include <string>
#include <vector>

namespace stmrecon {

enum class Condition { Rest, Task };

// Frames are 0-based and half-open here.
struct Block {
  Index start = 0;
  Index end = 0;
  Condition label = Condition::Rest;
};

struct TaskParadigm {
  Index T = 0;
  std::vector<Block> blocks;

  // Alternating blocks of `block` frames, rest first.
  static TaskParadigm alternating(Index T, Index block);
  // Throws unless the blocks tile [0, T) in order.
  void validate() const;
  Condition at(Index t) const;
};

// Relative projection error of the fully sampled series onto the first L
// components of the model, over ROI voxels and all frames.
double npr(const DynamicImage &reference, const TemporalModel &model, const RoiMask *roi, Index L);
std::vector<double> npr_curve(const DynamicImage &reference, const TemporalModel &model, const RoiMask *roi,
                              Index L_max);

double nrmse(const DynamicImage &recon, const DynamicImage &reference, const RoiMask *roi = nullptr);
std::vector<double> nrmse_per_frame(const DynamicImage &recon, const DynamicImage &reference,
                                    const RoiMask *roi = nullptr);

// Per voxel, the k smallest eigenvalues of G(x)/max eig, largest first.
ImageStack eigenvalue_maps(const GramField &field, Index k = 10);

// Welch t of task against rest magnitudes; positive means task > rest.
// The first `discard` frames after each block boundary are dropped, and a
// voxel with zero spread in both conditions and equal means scores 0.
ImageStack tscore_map(const DynamicImage &series, const TaskParadigm &paradigm, Index discard = 2);

// Mean of a single-image stack over the flagged voxels.
double masked_mean(const ImageStack &img, const RoiMask &mask, bool inside = true);

} // namespace stmrecon
