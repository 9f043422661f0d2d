#pragma once

#include "stmrecon/linalg.hpp"
#include "stmrecon/types.hpp"

#include <array>
#include <string>
#include <vector>

namespace stmrecon {

enum class KernelShape { Ellipsoid, Rectangle };

KernelShape parse_kernel_shape(const std::string &name);
std::string kernel_shape_name(KernelShape s);

using Offset = std::array<int, 3>;

struct KernelSupport {
  KernelShape shape = KernelShape::Ellipsoid;
  int radius = 1;
  int D = 2;
  std::vector<Offset> offsets; // lexicographic

  Index size() const { return static_cast<Index>(offsets.size()); }
  int reach(int axis) const { return axis < D ? radius : 0; }
};

KernelSupport build_support(KernelShape shape, int radius, int D);

// Column index of (frame t, offset l) in C and in the Gram: t * |Lambda| + l.
struct CalibGram {
  Mat matrix;
  KernelSupport support;
  Index T = 0;
  Box source; // acs box the rows were drawn from
  Index rows = 0;

  void validate() const;
};

// Number of neighborhood centers fully interior to the acs box.
Index interior_rows(const Box &acs, const KernelSupport &support);

// Explicit calibration matrix; guarded to small problems. The dataset must
// be single-coil (see combine_acs) with its acs box sampled in every frame.
Mat build_C_direct(const KtDataset &acs, const KernelSupport &support);
CalibGram build_gram_direct(const KtDataset &acs, const KernelSupport &support);

// Same Gram from zero-padded FFT cross-correlations of the frames, with an
// exact correction restricting the sums to interior neighborhoods.
CalibGram build_gram_fft(const KtDataset &acs, const KernelSupport &support);

} // namespace stmrecon
