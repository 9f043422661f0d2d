#include "stmrecon/metrics.hpp"

#include "stmrecon/error.hpp"

#include <cmath>
#include <limits>

namespace stmrecon {

TaskParadigm TaskParadigm::alternating(Index T, Index block)
{
  if (T < 1 || block < 1) throw ConfigError("paradigm needs positive frame and block counts");
  TaskParadigm p;
  p.T = T;
  for (Index s = 0, i = 0; s < T; s += block, ++i) {
    p.blocks.push_back({s, std::min(T, s + block), i % 2 ? Condition::Task : Condition::Rest});
  }
  return p;
}

void TaskParadigm::validate() const
{
  Index next = 0;
  for (const auto &b : blocks) {
    if (b.start != next || b.end <= b.start) throw InvariantError("paradigm blocks must tile the frames in order");
    next = b.end;
  }
  if (next != T) throw InvariantError("paradigm blocks must cover every frame");
}

Condition TaskParadigm::at(Index t) const
{
  for (const auto &b : blocks)
    if (t >= b.start && t < b.end) return b.label;
  throw ShapeError("frame outside paradigm");
}

namespace {

void check_roi(const RoiMask *roi, const Grid &g)
{
  if (roi && roi->grid != g) throw ShapeError("roi grid differs from image");
}

bool inside(const RoiMask *roi, Index v) { return !roi || roi->flags[v]; }

} // namespace

double npr(const DynamicImage &reference, const TemporalModel &model, const RoiMask *roi, Index L)
{
  const Grid &g = reference.grid;
  const Index T = reference.T;
  check_roi(roi, g);
  if (model.T() != T) throw ShapeError("model frame count differs from the series");
  if (L < 1 || L > model.L()) throw ConfigError("NPR component count outside the model range");
  if (model.kind == ModelKind::Stm && model.stm.grid != g) throw ShapeError("maps grid differs from the series");

  // Least squares with a full mask reduces to a per-voxel fit; the PSF basis
  // is shared, so factor it once.
  Eigen::ColPivHouseholderQR<Mat> psf_qr;
  if (model.kind == ModelKind::Psf) psf_qr.compute(model.phi.leftCols(L));

  double err = 0.0, ref = 0.0;
  Vec y(T);
  for (Index v = 0; v < g.size(); ++v) {
    if (!inside(roi, v)) continue;
    for (Index t = 0; t < T; ++t) y(t) = reference.at(v, t);
    Vec fit;
    if (model.kind == ModelKind::Psf) {
      fit = model.phi.leftCols(L) * psf_qr.solve(y);
    } else {
      Eigen::Map<const Mat> S(model.stm.voxel(v), T, model.stm.L);
      Mat B = S.leftCols(L);
      fit = B * B.colPivHouseholderQr().solve(y);
    }
    err += (y - fit).squaredNorm();
    ref += y.squaredNorm();
  }
  if (ref == 0.0) throw NumericError("reference series is zero over the roi");
  return std::sqrt(err / ref);
}

std::vector<double> npr_curve(const DynamicImage &reference, const TemporalModel &model, const RoiMask *roi,
                              Index L_max)
{
  std::vector<double> out;
  for (Index L = 1; L <= L_max; ++L) out.push_back(npr(reference, model, roi, L));
  return out;
}

double nrmse(const DynamicImage &recon, const DynamicImage &reference, const RoiMask *roi)
{
  if (recon.grid != reference.grid || recon.T != reference.T) throw ShapeError("nrmse arguments differ in shape");
  check_roi(roi, reference.grid);
  double err = 0.0, ref = 0.0;
  for (Index v = 0; v < reference.grid.size(); ++v) {
    if (!inside(roi, v)) continue;
    for (Index t = 0; t < reference.T; ++t) {
      err += std::norm(recon.at(v, t) - reference.at(v, t));
      ref += std::norm(reference.at(v, t));
    }
  }
  if (ref == 0.0) throw NumericError("reference is zero over the roi");
  return std::sqrt(err / ref);
}

std::vector<double> nrmse_per_frame(const DynamicImage &recon, const DynamicImage &reference, const RoiMask *roi)
{
  if (recon.grid != reference.grid || recon.T != reference.T) throw ShapeError("nrmse arguments differ in shape");
  check_roi(roi, reference.grid);
  std::vector<double> err(reference.T, 0.0), ref(reference.T, 0.0);
  for (Index v = 0; v < reference.grid.size(); ++v) {
    if (!inside(roi, v)) continue;
    for (Index t = 0; t < reference.T; ++t) {
      err[t] += std::norm(recon.at(v, t) - reference.at(v, t));
      ref[t] += std::norm(reference.at(v, t));
    }
  }
  for (Index t = 0; t < reference.T; ++t)
    err[t] = ref[t] > 0 ? std::sqrt(err[t] / ref[t]) : std::numeric_limits<double>::quiet_NaN();
  return err;
}

ImageStack eigenvalue_maps(const GramField &field, Index k)
{
  const Index T = field.T;
  if (k < 1 || k > T) throw ConfigError("eigenvalue map count must lie in [1, T]");
  ImageStack out(field.grid, k);
#pragma omp parallel for schedule(dynamic, 16)
  for (Index v = 0; v < field.grid.size(); ++v) {
    Mat G = field.at(v);
    RVec ev = Eigen::SelfAdjointEigenSolver<Mat>(0.5 * (G + G.adjoint()), Eigen::EigenvaluesOnly).eigenvalues();
    double top = ev(T - 1);
    // ascending ev; slot j holds the (k - j)th smallest so the stack decreases
    for (Index j = 0; j < k; ++j) out.at(v, j) = top > 0 ? std::max(0.0, ev(k - 1 - j)) / top : 0.0;
  }
  return out;
}

ImageStack tscore_map(const DynamicImage &series, const TaskParadigm &paradigm, Index discard)
{
  paradigm.validate();
  if (paradigm.T != series.T) throw ShapeError("paradigm frame count differs from the series");
  if (discard < 0) throw ConfigError("discard count must be nonnegative");
  std::vector<Condition> use(series.T);
  std::vector<bool> keep(series.T, true);
  for (const auto &b : paradigm.blocks) {
    for (Index t = b.start; t < b.end; ++t) use[t] = b.label;
    if (b.start > 0)
      for (Index t = b.start; t < std::min(b.end, b.start + discard); ++t) keep[t] = false;
  }
  Index nt = 0, nr = 0;
  for (Index t = 0; t < series.T; ++t) {
    if (!keep[t]) continue;
    (use[t] == Condition::Task ? nt : nr) += 1;
  }
  if (nt < 2 || nr < 2) throw ConfigError("t-score needs at least two retained frames per condition");

  ImageStack out(series.grid, 1);
  for (Index v = 0; v < series.grid.size(); ++v) {
    double st = 0, sr = 0, qt = 0, qr = 0;
    for (Index t = 0; t < series.T; ++t) {
      if (!keep[t]) continue;
      double m = std::abs(series.at(v, t));
      if (use[t] == Condition::Task) {
        st += m;
        qt += m * m;
      } else {
        sr += m;
        qr += m * m;
      }
    }
    double mt = st / nt, mr = sr / nr;
    double vt = std::max(0.0, (qt - nt * mt * mt) / (nt - 1));
    double vr = std::max(0.0, (qr - nr * mr * mr) / (nr - 1));
    double den = std::sqrt(vt / nt + vr / nr);
    double num = mt - mr;
    if (den > 0) out.at(v, 0) = num / den;
    else if (num == 0.0) out.at(v, 0) = 0.0;
    else out.at(v, 0) = num > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
  }
  return out;
}

double masked_mean(const ImageStack &img, const RoiMask &mask, bool in)
{
  if (img.grid != mask.grid || img.K != 1) throw ShapeError("masked mean expects one image on the mask grid");
  double s = 0;
  Index n = 0;
  for (Index v = 0; v < img.grid.size(); ++v) {
    if (bool(mask.flags[v]) != in) continue;
    s += img.at(v, 0);
    ++n;
  }
  if (n == 0) throw ConfigError("mask selects no voxels");
  return s / n;
}

} // namespace stmrecon
