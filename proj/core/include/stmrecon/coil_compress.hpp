#pragma once

#include "stmrecon/linalg.hpp"
#include "stmrecon/types.hpp"

namespace stmrecon {

struct CoilCompression {
  KtDataset data;
  Mat matrix;             // Q x Q_out, orthonormal columns; compressed = samples * matrix
  RVec singular_values;   // all Q, descending
  double energy_fraction; // retained squared singular energy
};

CoilCompression coil_compress(const KtDataset &ds, Index q_out);

// Applies a compression matrix to coil maps; useful when the maps are known.
SensitivityMaps compress_maps(const SensitivityMaps &maps, const Mat &matrix);

} // namespace stmrecon
