#include "stmrecon/recon.hpp"

#include "stmrecon/calib.hpp"
#include "stmrecon/error.hpp"
#include "stmrecon/fft.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace stmrecon {

namespace {

using Op = std::function<void(const Cvec &, Cvec &)>;

cx cdot(const Cvec &a, const Cvec &b)
{
  cx s{0.0, 0.0};
  for (std::size_t i = 0; i < a.size(); ++i) s += std::conj(a[i]) * b[i];
  return s;
}

double norm2(const Cvec &a)
{
  double s = 0.0;
  for (const auto &z : a) s += std::norm(z);
  return s;
}

struct CgTrace {
  std::vector<double> objective; // sqrt of the quadratic objective, including the initial point
  std::vector<double> normal;
  int iterations = 0;
};

// CG on the Hermitian positive definite system M x = b, warm-started at x.
// With c0 = |d|^2 the tracked value is |A x - d|^2 + x^H R x for M = A^H A + R.
CgTrace conjugate_gradient(const Op &M, const Cvec &b, Cvec &x, double c0, int iters, double tol)
{
  CgTrace tr;
  const std::size_t n = b.size();
  Cvec r(n), p(n), Mp(n);
  M(x, Mp);
  for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - Mp[i];
  auto objective = [&]() {
    double f = c0 - cdot(b, x).real() - cdot(x, r).real();
    return std::sqrt(std::max(0.0, f));
  };
  double bn = std::sqrt(norm2(b));
  double rs = norm2(r);
  tr.objective.push_back(objective());
  tr.normal.push_back(std::sqrt(rs));
  if (bn == 0.0 || std::sqrt(rs) <= tol * bn) return tr;
  p = r;
  for (int it = 0; it < iters; ++it) {
    M(p, Mp);
    double pMp = cdot(p, Mp).real();
    if (!(pMp > 0.0)) {
      if (rs == 0.0) break;
      throw NumericError("conjugate gradient met a non-positive curvature; the operator pair is inconsistent");
    }
    double alpha = rs / pMp;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * Mp[i];
    }
    double rs_new = norm2(r);
    tr.iterations = it + 1;
    tr.objective.push_back(objective());
    tr.normal.push_back(std::sqrt(rs_new));
    if (!std::isfinite(rs_new)) throw NumericError("conjugate gradient diverged");
    if (std::sqrt(rs_new) <= tol * bn) break;
    double beta = rs_new / rs;
    for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
    rs = rs_new;
  }
  return tr;
}

void check_problem(const ForwardOp &op, const TemporalModel &model, const KtDataset &data)
{
  if (data.grid != op.grid() || data.T != op.frames() || data.Q != op.coils()) {
    throw ShapeError("data shape does not match the forward operator");
  }
  if (data.mask.flags != op.mask.flags) throw ShapeError("data mask differs from operator mask");
  if (model.T() != op.frames()) throw ShapeError("temporal model frame count differs from data");
  if (model.kind == ModelKind::Stm && model.stm.grid != op.grid()) throw ShapeError("maps grid differs from data");
}

// Normal operator and right-hand side of the component problem.
struct NormalSystem {
  const ForwardOp &op;
  const TemporalModel &model;
  Grid g;
  mutable Cvec rho, kd;

  NormalSystem(const ForwardOp &o, const TemporalModel &m)
    : op(o), model(m), g(o.grid())
  {
  }

  void apply(const Cvec &c, Cvec &out, double shift) const
  {
    expand(model, g, c, rho);
    op.apply(rho, kd);
    op.adjoint(kd, rho);
    expand_adjoint(model, g, rho, out);
    if (shift != 0.0) {
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += shift * c[i];
    }
  }

  Cvec rhs(const KtDataset &data) const
  {
    Cvec out;
    op.adjoint(data.samples, rho);
    expand_adjoint(model, g, rho, out);
    return out;
  }
};

std::array<Index, 3> coords(const Grid &g, Index v) { return {v / (g[1] * g[2]), (v / g[2]) % g[1], v % g[2]}; }

// Wrapped linear index of k + offset.
std::vector<Index> shifted_sites(const Grid &g, const Offset &o)
{
  std::vector<Index> s(static_cast<std::size_t>(g.size()));
  for (Index v = 0; v < g.size(); ++v) {
    auto c = coords(g, v);
    Index w[3];
    for (int a = 0; a < 3; ++a) w[a] = ((c[a] + o[a]) % g[a] + g[a]) % g[a];
    s[v] = g.linear(w[0], w[1], w[2]);
  }
  return s;
}

struct Hankel {
  Grid g;
  Index L;
  std::vector<std::vector<Index>> sites;

  Hankel(const Grid &grid, Index comps, int radius)
    : g(grid), L(comps)
  {
    auto sup = build_support(KernelShape::Ellipsoid, radius, grid.D());
    for (const auto &o : sup.offsets) sites.push_back(shifted_sites(g, o));
  }

  Index cols() const { return static_cast<Index>(sites.size()) * L; }

  Mat forward(const Cvec &K) const
  {
    Mat H(g.size(), cols());
    for (std::size_t j = 0; j < sites.size(); ++j)
      for (Index v = 0; v < g.size(); ++v)
        for (Index l = 0; l < L; ++l) H(v, static_cast<Index>(j) * L + l) = K[sites[j][v] * L + l];
    return H;
  }

  Cvec adjoint(const Mat &Z) const
  {
    Cvec K(static_cast<std::size_t>(g.size() * L), cx{0.0, 0.0});
    for (std::size_t j = 0; j < sites.size(); ++j)
      for (Index v = 0; v < g.size(); ++v)
        for (Index l = 0; l < L; ++l) K[sites[j][v] * L + l] += Z(v, static_cast<Index>(j) * L + l);
    return K;
  }
};

Index resolve_rank(const ReconConfig &cfg, Index rows, Index cols)
{
  Index r = cfg.loraks_rank > 0 ? cfg.loraks_rank
                                : std::max<Index>(1, static_cast<Index>(std::lround(cfg.rank_fraction * double(cols))));
  if (r >= std::min(rows, cols)) throw ConfigError("structured low-rank rank must be below the matrix dimensions");
  return r;
}

} // namespace

ForwardOp::ForwardOp(SensitivityMaps c, SamplingMask m)
  : maps(std::move(c)), mask(std::move(m))
{
  if (maps.grid != mask.grid) throw ShapeError("maps and mask grids differ");
  maps.validate();
  mask.validate();
}

void ForwardOp::apply(const Cvec &rho, Cvec &data) const
{
  const Index N = grid().size(), Q = coils(), T = frames();
  if (static_cast<Index>(rho.size()) != N * T) throw ShapeError("image size does not match operator");
  data.resize(static_cast<std::size_t>(N * Q * T));
#pragma omp parallel for schedule(static) if (N * T > 65536)
  for (Index v = 0; v < N; ++v)
    for (Index q = 0; q < Q; ++q) {
      cx c = maps.at(v, q);
      for (Index t = 0; t < T; ++t) data[(v * Q + q) * T + t] = c * rho[v * T + t];
    }
  fft_centered(data.data(), grid(), Q * T);
#pragma omp parallel for schedule(static) if (N * T > 65536)
  for (Index v = 0; v < N; ++v)
    for (Index t = 0; t < T; ++t) {
      if (mask.at(v, t)) continue;
      for (Index q = 0; q < Q; ++q) data[(v * Q + q) * T + t] = 0.0;
    }
}

void ForwardOp::adjoint(const Cvec &data, Cvec &rho) const
{
  const Index N = grid().size(), Q = coils(), T = frames();
  if (static_cast<Index>(data.size()) != N * Q * T) throw ShapeError("data size does not match operator");
  Cvec buf(data.size());
#pragma omp parallel for schedule(static) if (N * T > 65536)
  for (Index v = 0; v < N; ++v)
    for (Index q = 0; q < Q; ++q)
      for (Index t = 0; t < T; ++t) {
        Index i = (v * Q + q) * T + t;
        buf[i] = mask.at(v, t) ? data[i] : cx{0.0, 0.0};
      }
  ifft_centered(buf.data(), grid(), Q * T);
  rho.assign(static_cast<std::size_t>(N * T), cx{0.0, 0.0});
#pragma omp parallel for schedule(static) if (N * T > 65536)
  for (Index v = 0; v < N; ++v)
    for (Index q = 0; q < Q; ++q) {
      cx c = std::conj(maps.at(v, q));
      for (Index t = 0; t < T; ++t) rho[v * T + t] += c * buf[(v * Q + q) * T + t];
    }
}

double ForwardOp::norm_bound() const
{
  double m = 0.0;
  for (Index v = 0; v < grid().size(); ++v) {
    double s = 0.0;
    for (Index q = 0; q < coils(); ++q) s += std::norm(maps.at(v, q));
    m = std::max(m, s);
  }
  return m;
}

KtDataset apply_forward(const ForwardOp &op, const DynamicImage &rho)
{
  if (rho.grid != op.grid() || rho.T != op.frames()) throw ShapeError("image shape does not match operator");
  KtDataset out(op.grid(), op.coils(), op.frames());
  op.apply(rho.values, out.samples);
  out.mask = op.mask;
  return out;
}

DynamicImage apply_adjoint(const ForwardOp &op, const KtDataset &data)
{
  DynamicImage out(op.grid(), op.frames());
  op.adjoint(data.samples, out.values);
  return out;
}

Components::Components(const Grid &g, Index n)
  : grid(g), L(n), values(static_cast<std::size_t>(g.size() * n))
{
}

TemporalModel TemporalModel::from_stm(StmSet s)
{
  TemporalModel m;
  m.kind = ModelKind::Stm;
  m.stm = std::move(s);
  return m;
}

TemporalModel TemporalModel::from_psf(Mat phi)
{
  TemporalModel m;
  m.kind = ModelKind::Psf;
  m.phi = std::move(phi);
  return m;
}

TemporalModel TemporalModel::truncated(Index n) const
{
  if (n < 1 || n > L()) throw ConfigError("truncation outside the model's component range");
  if (kind == ModelKind::Psf) return from_psf(phi.leftCols(n));
  StmSet s(stm.grid, stm.T, n);
  for (Index v = 0; v < stm.grid.size(); ++v)
    for (Index l = 0; l < n; ++l) {
      s.eigvals[v * n + l] = stm.eigvals[v * stm.L + l];
      for (Index t = 0; t < stm.T; ++t) s.at(v, l, t) = stm.at(v, l, t);
    }
  return from_stm(std::move(s));
}

void expand(const TemporalModel &m, const Grid &g, const Cvec &comps, Cvec &rho)
{
  const Index N = g.size(), L = m.L(), T = m.T();
  if (static_cast<Index>(comps.size()) != N * L) throw ShapeError("component size does not match model");
  rho.assign(static_cast<std::size_t>(N * T), cx{0.0, 0.0});
  if (m.kind == ModelKind::Stm) {
#pragma omp parallel for schedule(static) if (N * T > 65536)
    for (Index v = 0; v < N; ++v) {
      const cx *s = m.stm.voxel(v);
      for (Index l = 0; l < L; ++l) {
        cx c = comps[v * L + l];
        for (Index t = 0; t < T; ++t) rho[v * T + t] += s[l * T + t] * c;
      }
    }
  } else {
#pragma omp parallel for schedule(static) if (N * T > 65536)
    for (Index v = 0; v < N; ++v)
      for (Index l = 0; l < L; ++l) {
        cx c = comps[v * L + l];
        for (Index t = 0; t < T; ++t) rho[v * T + t] += m.phi(t, l) * c;
      }
  }
}

void expand_adjoint(const TemporalModel &m, const Grid &g, const Cvec &rho, Cvec &comps)
{
  const Index N = g.size(), L = m.L(), T = m.T();
  if (static_cast<Index>(rho.size()) != N * T) throw ShapeError("image size does not match model");
  comps.assign(static_cast<std::size_t>(N * L), cx{0.0, 0.0});
#pragma omp parallel for schedule(static) if (N * T > 65536)
  for (Index v = 0; v < N; ++v)
    for (Index l = 0; l < L; ++l) {
      cx acc{0.0, 0.0};
      if (m.kind == ModelKind::Stm) {
        const cx *s = m.stm.voxel(v) + l * T;
        for (Index t = 0; t < T; ++t) acc += std::conj(s[t]) * rho[v * T + t];
      } else {
        for (Index t = 0; t < T; ++t) acc += std::conj(m.phi(t, l)) * rho[v * T + t];
      }
      comps[v * L + l] = acc;
    }
}

DynamicImage expand_model(const TemporalModel &m, const Components &c)
{
  if (c.L != m.L()) throw ShapeError("component count differs from model");
  DynamicImage out(c.grid, m.T());
  expand(m, c.grid, c.values, out.values);
  return out;
}

Components expand_model_adjoint(const TemporalModel &m, const DynamicImage &rho)
{
  Components c(rho.grid, m.L());
  expand_adjoint(m, rho.grid, rho.values, c.values);
  return c;
}

Regularizer parse_regularizer(const std::string &name)
{
  if (name == "none") return Regularizer::None;
  if (name == "tikhonov") return Regularizer::Tikhonov;
  if (name == "structured_lowrank" || name == "loraks") return Regularizer::StructuredLowRank;
  throw ConfigError("unknown regularizer " + name);
}

void ReconConfig::validate() const
{
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be nonnegative");
  if (iters < 1 || outer_iters < 1) throw ConfigError("iteration counts must be positive");
  if (tol < 0 || outer_tol < 0) throw ConfigError("tolerances must be nonnegative");
  if (loraks_radius < 1) throw ConfigError("structured low-rank radius must be >= 1");
  if (loraks_rank < 0) throw ConfigError("structured low-rank rank must be nonnegative");
  if (!(rank_fraction > 0.0 && rank_fraction < 1.0)) throw ConfigError("rank fraction must lie in (0, 1)");
}

ReconResult solve_tikhonov(const ForwardOp &op, const TemporalModel &model, const KtDataset &data,
                           const ReconConfig &cfg)
{
  cfg.validate();
  check_problem(op, model, data);
  NormalSystem sys(op, model);
  double lam = cfg.regularizer == Regularizer::None ? 0.0 : cfg.lambda;
  Cvec b = sys.rhs(data);
  Cvec x(b.size(), cx{0.0, 0.0});
  auto tr = conjugate_gradient([&](const Cvec &in, Cvec &out) { sys.apply(in, out, lam); }, b, x,
                               norm2(data.samples), cfg.iters, cfg.tol);
  ReconResult res;
  res.components = Components(op.grid(), model.L());
  res.components.values = std::move(x);
  res.image = expand_model(model, res.components);
  res.residuals = std::move(tr.objective);
  res.normal_residuals = std::move(tr.normal);
  res.iterations = tr.iterations;
  return res;
}

Mat structured_matrix(const Components &c, int radius)
{
  Hankel h(c.grid, c.L, radius);
  Cvec K = c.values;
  fft_centered(K.data(), c.grid, c.L);
  return h.forward(K);
}

ReconResult solve_structured_lowrank(const ForwardOp &op, const TemporalModel &model, const KtDataset &data,
                                     const ReconConfig &cfg)
{
  cfg.validate();
  check_problem(op, model, data);
  const Grid &g = op.grid();
  const Index L = model.L();
  Hankel hank(g, L, cfg.loraks_radius);
  const Index rank = resolve_rank(cfg, g.size(), hank.cols());
  if (cfg.lambda == 0.0) {
    ReconConfig plain = cfg;
    plain.regularizer = Regularizer::Tikhonov;
    return solve_tikhonov(op, model, data, plain);
  }

  NormalSystem sys(op, model);
  const Cvec b0 = sys.rhs(data);
  const double nl = double(hank.sites.size());
  const double shift = 2.0 * cfg.lambda * nl;
  Cvec x(b0.size(), cx{0.0, 0.0});
  Cvec target(b0.size(), cx{0.0, 0.0}); // F^H Hankel^H (Z)
  ReconResult res;
  for (int outer = 0; outer < cfg.outer_iters; ++outer) {
    Cvec b = b0;
    for (std::size_t i = 0; i < b.size(); ++i) b[i] += 2.0 * cfg.lambda * target[i];
    Cvec prev = x;
    auto tr = conjugate_gradient([&](const Cvec &in, Cvec &out) { sys.apply(in, out, shift); }, b, x,
                                 norm2(data.samples), cfg.iters, cfg.tol);
    res.iterations += tr.iterations;
    res.normal_residuals.insert(res.normal_residuals.end(), tr.normal.begin(), tr.normal.end());
    res.outer_iterations = outer + 1;

    // majorizer target: best rank-r approximation of the structured matrix
    Cvec K = x;
    fft_centered(K.data(), g, L);
    Mat H = hank.forward(K);
    Mat gram = H.adjoint() * H;
    auto eig = hermitian_eig(0.5 * (gram + gram.adjoint()));
    Mat V = eig.vectors.rightCols(rank);
    Mat Z = H * V * V.adjoint();
    target = hank.adjoint(Z);
    ifft_centered(target.data(), g, L);

    double dx = 0.0, nx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      dx += std::norm(x[i] - prev[i]);
      nx += std::norm(x[i]);
    }
    if (outer > 0 && nx > 0 && std::sqrt(dx / nx) < cfg.outer_tol) break;
  }
  res.components = Components(g, L);
  res.components.values = std::move(x);
  res.image = expand_model(model, res.components);
  // data-consistency residual of the final estimate
  Cvec kd;
  op.apply(res.image.values, kd);
  double r = 0.0;
  for (std::size_t i = 0; i < kd.size(); ++i) r += std::norm(kd[i] - data.samples[i]);
  res.residuals.push_back(std::sqrt(r));
  return res;
}

TemporalModel psf_basis_from_image(const DynamicImage &img, Index L)
{
  const Index N = img.grid.size(), T = img.T;
  if (L < 1 || L > T) throw ConfigError("PSF component count must lie in [1, T]");
  Eigen::Map<const Eigen::Matrix<cx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> M(img.values.data(), N, T);
  Mat gram = M.adjoint() * M;
  auto eig = hermitian_eig(0.5 * (gram + gram.adjoint()));
  Mat phi(T, L);
  // rows of the Casorati are expanded in the conjugated right singular vectors
  for (Index l = 0; l < L; ++l) phi.col(l) = eig.vectors.col(T - 1 - l).conjugate();
  return TemporalModel::from_psf(std::move(phi));
}

TemporalModel psf_basis_from_acs(const KtDataset &acs, Index L)
{
  if (acs.Q != 1) throw ConfigError("PSF basis expects a single-coil (combined) acs dataset");
  const Grid &g = acs.grid;
  const Box &box = acs.mask.acs;
  DynamicImage low(g, acs.T);
  for (Index v = 0; v < g.size(); ++v) {
    auto c = coords(g, v);
    if (!box.contains(c[0], c[1], c[2])) continue;
    for (Index t = 0; t < acs.T; ++t) low.at(v, t) = acs.at(v, 0, t);
  }
  ifft_centered(low.values.data(), g, acs.T);
  return psf_basis_from_image(low, L);
}

DynamicImage coil_combine(const KtDataset &k, const SensitivityMaps *maps)
{
  const Grid &g = k.grid;
  const Index N = g.size(), Q = k.Q, T = k.T;
  Cvec y = k.samples;
  ifft_centered(y.data(), g, Q * T);
  DynamicImage out(g, T);
  if (maps) {
    if (maps->grid != g || maps->Q != Q) throw ShapeError("maps do not match data");
    for (Index v = 0; v < N; ++v) {
      double w = 0.0;
      for (Index q = 0; q < Q; ++q) w += std::norm(maps->at(v, q));
      if (w <= 0.0) continue;
      for (Index t = 0; t < T; ++t) {
        cx acc{0.0, 0.0};
        for (Index q = 0; q < Q; ++q) acc += std::conj(maps->at(v, q)) * y[(v * Q + q) * T + t];
        out.at(v, t) = acc / w;
      }
    }
  } else if (Q == 1) {
    out.values = std::move(y);
  } else {
    for (Index v = 0; v < N; ++v)
      for (Index t = 0; t < T; ++t) {
        double s = 0.0;
        for (Index q = 0; q < Q; ++q) s += std::norm(y[(v * Q + q) * T + t]);
        out.at(v, t) = std::sqrt(s);
      }
  }
  return out;
}

KtDataset share_data(const KtDataset &data)
{
  const Index N = data.grid.size(), Q = data.Q, T = data.T;
  KtDataset out(data.grid, Q, T);
  out.mask = data.mask;
  for (Index v = 0; v < N; ++v) {
    bool any = false;
    for (Index t = 0; t < T && !any; ++t) any = data.mask.at(v, t);
    if (!any) throw ConfigError("data sharing needs every k-space location sampled in some frame");
    for (Index t = 0; t < T; ++t) {
      Index src = -1;
      if (data.mask.at(v, t)) {
        src = t;
      } else {
        for (Index d = 1; d < T && src < 0; ++d) {
          if (t - d >= 0 && data.mask.at(v, t - d)) src = t - d;
          else if (t + d < T && data.mask.at(v, t + d)) src = t + d;
        }
      }
      for (Index q = 0; q < Q; ++q) out.at(v, q, t) = data.at(v, q, src);
      out.mask.at(v, t) = 1;
    }
  }
  return out;
}

DynamicImage data_sharing(const KtDataset &data, const SensitivityMaps *maps)
{
  return coil_combine(share_data(data), maps);
}

DynamicImage zero_filled(const KtDataset &data, const SensitivityMaps *maps) { return coil_combine(data, maps); }

namespace {

// Singular-value soft threshold of the voxels x frames Casorati matrix;
// returns the nuclear norm of the result.
double svt(Cvec &x, Index N, Index T, double tau)
{
  Eigen::Map<Eigen::Matrix<cx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> M(x.data(), N, T);
  Mat gram = M.adjoint() * M;
  auto eig = hermitian_eig(0.5 * (gram + gram.adjoint()));
  RVec scale(T);
  double nuc = 0.0;
  for (Index i = 0; i < T; ++i) {
    double s = std::sqrt(std::max(0.0, eig.values(i)));
    double shrunk = std::max(0.0, s - tau);
    scale(i) = s > 0 ? shrunk / s : 0.0;
    nuc += shrunk;
  }
  Mat P = eig.vectors * scale.asDiagonal() * eig.vectors.adjoint();
  Mat out = M * P;
  M = out;
  return nuc;
}

// Soft threshold in the temporal DFT domain; returns the l1 norm there.
double soft_temporal(Cvec &x, Index N, Index T, double tau)
{
  fft_rows(x.data(), N, T, -1);
  double l1 = 0.0;
  for (auto &z : x) {
    double a = std::abs(z);
    double s = std::max(0.0, a - tau);
    z = a > 0 ? z * (s / a) : cx{0.0, 0.0};
    l1 += s;
  }
  fft_rows(x.data(), N, T, +1);
  return l1;
}

double nuclear_norm(const Cvec &x, Index N, Index T)
{
  Eigen::Map<const Eigen::Matrix<cx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> M(x.data(), N, T);
  Mat gram = M.adjoint() * M;
  RVec ev = Eigen::SelfAdjointEigenSolver<Mat>(0.5 * (gram + gram.adjoint()), Eigen::EigenvaluesOnly).eigenvalues();
  double s = 0.0;
  for (Index i = 0; i < ev.size(); ++i) s += std::sqrt(std::max(0.0, ev(i)));
  return s;
}

double temporal_l1(const Cvec &x, Index N, Index T)
{
  Cvec y = x;
  fft_rows(y.data(), N, T, -1);
  double s = 0.0;
  for (const auto &z : y) s += std::abs(z);
  return s;
}

} // namespace

LpsResult solve_lps(const ForwardOp &op, const KtDataset &data, const LpsConfig &cfg)
{
  if (cfg.lambda_L < 0 || cfg.lambda_S < 0) throw ConfigError("L+S weights must be nonnegative");
  if (cfg.iters < 1) throw ConfigError("L+S needs at least one iteration");
  if (data.grid != op.grid() || data.T != op.frames() || data.Q != op.coils()) {
    throw ShapeError("data shape does not match the forward operator");
  }
  const Index N = op.grid().size(), T = op.frames();
  const std::size_t n = static_cast<std::size_t>(N * T);
  const double lip = 2.0 * std::max(op.norm_bound(), 1e-300);
  const double step = 1.0 / lip;

  Cvec xl(n, cx{0.0, 0.0}), xs(n, cx{0.0, 0.0}), yl = xl, ys = xs, sum(n), kd, grad;
  auto smooth = [&](const Cvec &l, const Cvec &s) {
    for (std::size_t i = 0; i < n; ++i) sum[i] = l[i] + s[i];
    op.apply(sum, kd);
    double r = 0.0;
    for (std::size_t i = 0; i < kd.size(); ++i) r += std::norm(kd[i] - data.samples[i]);
    return 0.5 * r;
  };
  double fx = smooth(xl, xs) + cfg.lambda_L * nuclear_norm(xl, N, T) + cfg.lambda_S * temporal_l1(xs, N, T);
  double t = 1.0;
  LpsResult res;
  res.objective.push_back(fx);
  for (int it = 0; it < cfg.iters; ++it) {
    for (std::size_t i = 0; i < n; ++i) sum[i] = yl[i] + ys[i];
    op.apply(sum, kd);
    for (std::size_t i = 0; i < kd.size(); ++i) kd[i] -= data.samples[i];
    op.adjoint(kd, grad);

    Cvec zl(n), zs(n);
    for (std::size_t i = 0; i < n; ++i) {
      zl[i] = yl[i] - step * grad[i];
      zs[i] = ys[i] - step * grad[i];
    }
    double nuc = svt(zl, N, T, cfg.lambda_L * step);
    double l1 = soft_temporal(zs, N, T, cfg.lambda_S * step);
    double fz = smooth(zl, zs) + cfg.lambda_L * nuc + cfg.lambda_S * l1;

    // monotone variant: keep the better of the prox point and the previous iterate
    Cvec nl, ns;
    double fnew;
    if (fz <= fx) {
      nl = zl;
      ns = zs;
      fnew = fz;
    } else {
      nl = xl;
      ns = xs;
      fnew = fx;
      res.restarts += 1;
    }
    double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    double change = 0.0, norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      yl[i] = nl[i] + (t / tn) * (zl[i] - nl[i]) + ((t - 1.0) / tn) * (nl[i] - xl[i]);
      ys[i] = ns[i] + (t / tn) * (zs[i] - ns[i]) + ((t - 1.0) / tn) * (ns[i] - xs[i]);
      change += std::norm(nl[i] - xl[i]) + std::norm(ns[i] - xs[i]);
      norm += std::norm(nl[i]) + std::norm(ns[i]);
    }
    if (fz > fx) t = 1.0; else t = tn;
    xl = std::move(nl);
    xs = std::move(ns);
    fx = fnew;
    res.objective.push_back(fx);
    res.iterations = it + 1;
    if (norm > 0 && std::sqrt(change / norm) < cfg.tol && fz <= fx) break;
  }
  res.low_rank = DynamicImage(op.grid(), T);
  res.low_rank.values = xl;
  res.sparse = DynamicImage(op.grid(), T);
  res.sparse.values = xs;
  res.image = DynamicImage(op.grid(), T);
  for (std::size_t i = 0; i < n; ++i) res.image.values[i] = xl[i] + xs[i];
  return res;
}

} // namespace stmrecon
