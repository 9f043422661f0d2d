#include "stmrecon/coil_compress.hpp"

#include "stmrecon/error.hpp"

#include <cmath>

namespace stmrecon {

CoilCompression coil_compress(const KtDataset &ds, Index q_out)
{
  if (q_out < 1) throw ConfigError("coil compression needs Q_out >= 1");
  if (q_out > ds.Q) throw ConfigError("coil compression Q_out exceeds coil count");
  Index m = ds.mask.total();
  if (m == 0) throw ConfigError("coil compression on an empty mask");

  // Gram of the stacked (samples x Q) matrix gives the right singular vectors.
  Mat gram = Mat::Zero(ds.Q, ds.Q);
  Mat rows(ds.Q, 1);
  for (Index v = 0; v < ds.grid.size(); ++v)
    for (Index t = 0; t < ds.T; ++t) {
      if (!ds.mask.at(v, t)) continue;
      for (Index q = 0; q < ds.Q; ++q) rows(q, 0) = ds.at(v, q, t);
      gram.noalias() += rows.conjugate() * rows.transpose();
    }
  auto eig = hermitian_eig(gram);
  Index Q = ds.Q;
  Mat V(Q, q_out);
  RVec sv(Q);
  for (Index i = 0; i < Q; ++i) sv(i) = std::sqrt(std::max(0.0, eig.values(Q - 1 - i)));
  for (Index j = 0; j < q_out; ++j) V.col(j) = eig.vectors.col(Q - 1 - j);

  double kept = 0.0, total = 0.0;
  for (Index i = 0; i < Q; ++i) {
    total += sv(i) * sv(i);
    if (i < q_out) kept += sv(i) * sv(i);
  }

  KtDataset out(ds.grid, q_out, ds.T);
  out.mask = ds.mask;
  for (Index v = 0; v < ds.grid.size(); ++v)
    for (Index t = 0; t < ds.T; ++t) {
      if (!ds.mask.at(v, t)) continue;
      for (Index j = 0; j < q_out; ++j) {
        cx acc{0.0, 0.0};
        for (Index q = 0; q < Q; ++q) acc += ds.at(v, q, t) * V(q, j);
        out.at(v, j, t) = acc;
      }
    }
  return {std::move(out), std::move(V), std::move(sv), total > 0 ? kept / total : 1.0};
}

SensitivityMaps compress_maps(const SensitivityMaps &maps, const Mat &matrix)
{
  if (matrix.rows() != maps.Q) throw ShapeError("compression matrix does not match coil count");
  SensitivityMaps out(maps.grid, matrix.cols());
  for (Index v = 0; v < maps.grid.size(); ++v)
    for (Index j = 0; j < matrix.cols(); ++j) {
      cx acc{0.0, 0.0};
      for (Index q = 0; q < maps.Q; ++q) acc += maps.at(v, q) * matrix(q, j);
      out.at(v, j) = acc;
    }
  return out;
}

} // namespace stmrecon
