#include "stmrecon/stm_maps.hpp"

#include "stmrecon/error.hpp"
#include "stmrecon/fft.hpp"
#include "stmrecon/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

namespace stmrecon {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// W summed onto the difference lattice: Wd(d, t + s T) = sum over
// offset pairs with l_i - l_j = delta_d of W(t L + i, s L + j).
struct Lattice {
  std::vector<Offset> deltas;
  Mat Wd;
};

Lattice build_lattice(const Mat &W, const KernelSupport &sup, Index T)
{
  const Index L = sup.size();
  if (W.rows() != L * T || W.cols() != L * T) throw ShapeError("projector size does not match support and frames");
  std::map<Offset, std::vector<std::pair<Index, Index>>> pairs;
  for (Index i = 0; i < L; ++i)
    for (Index j = 0; j < L; ++j) {
      const auto &a = sup.offsets[i], &b = sup.offsets[j];
      pairs[{a[0] - b[0], a[1] - b[1], a[2] - b[2]}].emplace_back(i, j);
    }
  Lattice lat;
  lat.Wd = Mat::Zero(static_cast<Index>(pairs.size()), T * T);
  Index d = 0;
  for (const auto &[delta, plist] : pairs) {
    lat.deltas.push_back(delta);
    for (Index s = 0; s < T; ++s)
      for (Index t = 0; t < T; ++t) {
        cx acc{0.0, 0.0};
        // G(x)_{t,s} collects W[(s, i), (t, j)] for filters applied as convolutions
        for (const auto &[i, j] : plist) acc += W(s * L + i, t * L + j);
        lat.Wd(d, t + s * T) = acc;
      }
    ++d;
  }
  return lat;
}

void check_eval_grid(const Grid &eval, const KernelSupport &sup)
{
  for (int a = 0; a < sup.D; ++a) {
    if (eval[a] < 2 * sup.radius + 1) throw ConfigError("evaluation grid smaller than the kernel lattice");
  }
}

std::array<Index, 3> voxel_coords(const Grid &g, Index v)
{
  return {v / (g[1] * g[2]), (v / g[2]) % g[1], v % g[2]};
}

void symmetrize(Eigen::Map<Mat> G)
{
  Mat h = 0.5 * (G + G.adjoint());
  G = h;
}

struct VoxelOutcome {
  int iterations = 0;
  bool fallback = false;
};

// Basis of the L smallest-eigenvalue subspace of one Hermitian matrix.
VoxelOutcome extract_voxel(const Eigen::Map<const Mat> &G, const ExtractOptions &opt, double bound, Index v,
                           Mat &basis, RVec &values)
{
  const Index T = G.rows(), L = opt.L;
  Index guard = opt.guard >= 0 ? opt.guard : std::max<Index>(L, 4);
  const Index p = std::min(T, L + guard);
  VoxelOutcome out;

  double scale = bound > 0 ? bound : G.diagonal().real().maxCoeff();
  CounterRng rng(opt.seed, static_cast<std::uint64_t>(v));
  Mat Q(T, p);
  for (Index j = 0; j < p; ++j)
    for (Index i = 0; i < T; ++i) Q(i, j) = rng.cnormal(static_cast<std::uint64_t>(j * T + i));
  Q = orthonormalize(Q);

  if (!(scale > 0.0)) {
    basis = Q.leftCols(L);
    values = RVec::Zero(L);
    return out;
  }

  auto dense = [&]() {
    auto eig = hermitian_eig(Mat(G));
    basis = eig.vectors.leftCols(L);
    values = eig.values.head(L);
  };

  Eigen::LLT<Mat> llt;
  double sigma = opt.shift > 0 ? opt.shift : scale;
  if (opt.mode == IterationMode::Inverse) {
    Mat A = G;
    A.diagonal().array() += 1e-10 * scale;
    llt.compute(A);
    if (llt.info() != Eigen::Success) {
      dense();
      out.fallback = true;
      return out;
    }
  }

  Mat prev;
  for (int it = 1; it <= opt.max_iter; ++it) {
    Mat Z;
    if (opt.mode == IterationMode::Inverse) {
      Z = llt.solve(Q);
    } else {
      Z = sigma * Q - G * Q;
    }
    Q = orthonormalize(Z);
    Mat GQ = G * Q;
    Mat H = Q.adjoint() * GQ;
    auto rr = hermitian_eig(0.5 * (H + H.adjoint()));
    Q = Q * rr.vectors;
    Mat GQL = GQ * rr.vectors.leftCols(L);
    Mat res = GQL - Q.leftCols(L) * rr.values.head(L).asDiagonal();
    bool done = res.norm() <= opt.tol * scale;
    if (!done && prev.size()) {
      Mat d = Q.leftCols(L) - prev * (prev.adjoint() * Q.leftCols(L));
      done = d.norm() < opt.tol;
    }
    prev = Q.leftCols(L);
    out.iterations = it;
    if (!done && it == 2 && p > L) {
      // Ritz estimate of the convergence factor; a clustered spectrum past L
      // would exhaust the budget, so go dense right away
      double rate = opt.mode == IterationMode::Inverse
                      ? (rr.values(L - 1) + 1e-10 * scale) / (rr.values(p - 1) + 1e-10 * scale)
                      : (sigma - rr.values(p - 1)) / (sigma - rr.values(L - 1));
      if (std::pow(std::abs(rate), opt.max_iter) > std::sqrt(opt.tol)) break;
    }
    if (done) {
      basis = Q.leftCols(L);
      values = rr.values.head(L);
      return out;
    }
  }
  dense();
  out.fallback = true;
  return out;
}

void extract_range(const Cvec &data, Index first_voxel, Index count, Index T, double bound, const ExtractOptions &opt,
                   StmSet &out, ExtractStats &stats)
{
  std::vector<VoxelOutcome> outcomes(static_cast<std::size_t>(count));
#pragma omp parallel for schedule(dynamic, 16)
  for (Index i = 0; i < count; ++i) {
    Index v = first_voxel + i;
    Eigen::Map<const Mat> G(data.data() + i * T * T, T, T);
    Mat basis;
    RVec values;
    outcomes[i] = extract_voxel(G, opt, bound, v, basis, values);
    for (Index l = 0; l < opt.L; ++l) {
      out.eigvals[v * opt.L + l] = values(l);
      for (Index t = 0; t < T; ++t) out.at(v, l, t) = basis(t, l);
    }
    if (opt.threshold >= 0) {
      double ref = bound > 0 ? bound : 1.0;
      int n = 0;
      for (Index l = 0; l < opt.L; ++l) n += values(l) < opt.threshold * ref ? 1 : 0;
      out.Lx[v] = std::max(n, 1);
    }
  }
  for (const auto &o : outcomes) {
    stats.voxels += 1;
    stats.fallbacks += o.fallback ? 1 : 0;
    stats.max_iterations = std::max(stats.max_iterations, o.iterations);
    stats.mean_iterations += o.iterations;
  }
}

void check_extract_options(const ExtractOptions &opt, Index T)
{
  if (opt.L < 1 || opt.L > T) throw ConfigError("component count must lie in [1, T]");
  if (opt.max_iter < 1) throw ConfigError("orthogonal iteration needs at least one iteration");
  if (opt.tol <= 0) throw ConfigError("iteration tolerance must be positive");
  if (opt.chunk < 1) throw ConfigError("chunk size must be positive");
}

void finish_stats(ExtractStats &st, ExtractStats *out)
{
  if (st.voxels > 0) st.mean_iterations /= double(st.voxels);
  if (st.fallbacks > 0) {
    warn("orthogonal iteration fell back to dense eigendecomposition on " + std::to_string(st.fallbacks) + " of " +
         std::to_string(st.voxels) + " voxels");
  }
  if (out) *out = st;
}

} // namespace

GramField::GramField(const Grid &g, Index frames)
  : grid(g), T(frames), values(static_cast<std::size_t>(g.size() * frames * frames))
{
}

void GramField::validate() const
{
  if (static_cast<Index>(values.size()) != grid.size() * T * T) throw ShapeError("gram field extent mismatch");
  for (Index v = 0; v < grid.size(); ++v) {
    auto G = at(v);
    double n = G.norm();
    if (n == 0.0) continue;
    if ((G - G.adjoint()).norm() > 1e-9 * n) throw InvariantError("gram field matrix is not Hermitian");
  }
}

KtDataset combine_acs(const KtDataset &acs, const SensitivityMaps &maps, double eps_rel)
{
  if (maps.grid != acs.grid || maps.Q != acs.Q) throw ShapeError("coil maps do not cover the dataset");
  const Grid &g = acs.grid;
  const Index N = g.size(), Q = acs.Q, T = acs.T;
  const Box &box = acs.mask.acs;
  double cmax = 0.0;
  for (const auto &c : maps.values) cmax = std::max(cmax, std::norm(c));
  if (cmax == 0.0) throw ConfigError("all-zero sensitivity maps");
  const double eps = eps_rel * cmax;

  Cvec y(static_cast<std::size_t>(N * Q * T), cx{0.0, 0.0});
  for (Index x = box.lo[0]; x < box.hi[0]; ++x)
    for (Index yy = box.lo[1]; yy < box.hi[1]; ++yy)
      for (Index z = box.lo[2]; z < box.hi[2]; ++z) {
        Index v = g.linear(x, yy, z);
        for (Index q = 0; q < Q; ++q)
          for (Index t = 0; t < T; ++t) y[acs.index(v, q, t)] = acs.at(v, q, t);
      }
  ifft_centered(y.data(), g, Q * T);

  KtDataset out(g, 1, T);
  for (Index v = 0; v < N; ++v) {
    double w = eps;
    for (Index q = 0; q < Q; ++q) w += std::norm(maps.at(v, q));
    for (Index t = 0; t < T; ++t) {
      cx acc{0.0, 0.0};
      for (Index q = 0; q < Q; ++q) acc += std::conj(maps.at(v, q)) * y[acs.index(v, q, t)];
      out.samples[v * T + t] = acc / w;
    }
  }
  fft_centered(out.samples.data(), g, T);
  out.mask = SamplingMask(g, T);
  out.mask.acs = box;
  for (Index v = 0; v < N; ++v) {
    auto c = voxel_coords(g, v);
    bool in = box.contains(c[0], c[1], c[2]);
    for (Index t = 0; t < T; ++t) {
      out.mask.at(v, t) = in ? 1 : 0;
      if (!in) out.samples[v * T + t] = 0.0;
    }
  }
  return out;
}

GramField compute_gram_field(const NullspaceProjector &p, const KernelSupport &support, Index T, const Grid &eval)
{
  check_eval_grid(eval, support);
  Lattice lat = build_lattice(p.W, support, T);
  const Index N = eval.size();
  GramField field(eval, T);
  field.bound = double(support.size());

  std::vector<Index> dims;
  if (eval[2] > 1) dims = {eval[0], eval[1], eval[2]};
  else dims = {eval[0], eval[1]};
  std::vector<Index> site(lat.deltas.size());
  for (std::size_t d = 0; d < lat.deltas.size(); ++d) {
    Index c[3];
    for (int a = 0; a < 3; ++a) c[a] = ((lat.deltas[d][a] % eval[a]) + eval[a]) % eval[a];
    site[d] = eval.linear(c[0], c[1], c[2]);
  }

  std::vector<std::pair<Index, Index>> cols;
  for (Index s = 0; s < T; ++s)
    for (Index t = 0; t <= s; ++t) cols.emplace_back(t, s);
  const Index B = std::min<Index>(static_cast<Index>(cols.size()), 64);
  Cvec buf(static_cast<std::size_t>(N * B));
  for (std::size_t c0 = 0; c0 < cols.size(); c0 += static_cast<std::size_t>(B)) {
    Index nb = std::min<Index>(B, static_cast<Index>(cols.size() - c0));
    std::fill(buf.begin(), buf.end(), cx{0.0, 0.0});
    for (Index b = 0; b < nb; ++b) {
      auto [t, s] = cols[c0 + b];
      for (std::size_t d = 0; d < site.size(); ++d) buf[site[d] * B + b] += lat.Wd(static_cast<Index>(d), t + s * T);
    }
    fft_nd(buf.data(), dims, B, +1);
    for (Index v = 0; v < N; ++v) {
      auto G = field.at(v);
      for (Index b = 0; b < nb; ++b) {
        auto [t, s] = cols[c0 + b];
        cx val = buf[v * B + b];
        if (t == s) {
          G(t, t) = val.real();
        } else {
          G(t, s) = val;
          G(s, t) = std::conj(val);
        }
      }
    }
  }
  return field;
}

GramField gram_field_voxels(const NullspaceProjector &p, const KernelSupport &support, Index T, const Grid &eval,
                            Index v0, Index v1)
{
  check_eval_grid(eval, support);
  if (v0 < 0 || v1 > eval.size() || v0 > v1) throw ShapeError("voxel range outside evaluation grid");
  Lattice lat = build_lattice(p.W, support, T);
  const Index n = v1 - v0, nd = static_cast<Index>(lat.deltas.size());
  Mat E(n, nd);
  for (Index i = 0; i < n; ++i) {
    auto c = voxel_coords(eval, v0 + i);
    for (Index d = 0; d < nd; ++d) {
      double ph = 0.0;
      for (int a = 0; a < 3; ++a) ph += double(lat.deltas[d][a]) * double(c[a]) / double(eval[a]);
      E(i, d) = std::polar(1.0, kTwoPi * ph);
    }
  }
  Mat G = E * lat.Wd;
  GramField field(Grid(n, 1, 1), T);
  field.bound = double(support.size());
  for (Index i = 0; i < n; ++i) {
    auto Gi = field.at(i);
    for (Index k = 0; k < T * T; ++k) Gi.data()[k] = G(i, k);
    symmetrize(Gi);
  }
  return field;
}

Mat gram_field_oracle(const Mat &W, const KernelSupport &support, Index T, const Grid &eval, Index v)
{
  const Index L = support.size();
  auto eig = hermitian_eig(0.5 * (W + W.adjoint()));
  auto c = voxel_coords(eval, v);
  std::vector<cx> e(static_cast<std::size_t>(L));
  for (Index l = 0; l < L; ++l) {
    double ph = 0.0;
    for (int a = 0; a < 3; ++a) ph += double(support.offsets[l][a]) * double(c[a]) / double(eval[a]);
    e[l] = std::polar(1.0, kTwoPi * ph);
  }
  Mat H = Mat::Zero(W.rows(), T);
  for (Index r = 0; r < W.rows(); ++r) {
    double lam = eig.values(r);
    if (lam <= 0) continue;
    Vec filt = eig.vectors.col(r) * std::sqrt(lam);
    for (Index t = 0; t < T; ++t) {
      cx a{0.0, 0.0};
      for (Index l = 0; l < L; ++l) a += filt(t * L + l) * e[l];
      H(r, t) = a;
    }
  }
  return H.adjoint() * H;
}

StmSet extract_maps(const GramField &field, const ExtractOptions &opt, ExtractStats *stats)
{
  check_extract_options(opt, field.T);
  StmSet out(field.grid, field.T, opt.L);
  if (opt.threshold >= 0) out.Lx.assign(static_cast<std::size_t>(field.grid.size()), 0);
  ExtractStats st;
  extract_range(field.values, 0, field.grid.size(), field.T, field.bound, opt, out, st);
  finish_stats(st, stats);
  if (opt.align) align_maps(out);
  return out;
}

StmSet dense_maps(const GramField &field, Index L)
{
  if (L < 1 || L > field.T) throw ConfigError("component count must lie in [1, T]");
  StmSet out(field.grid, field.T, L);
  for (Index v = 0; v < field.grid.size(); ++v) {
    auto eig = hermitian_eig(Mat(field.at(v)));
    for (Index l = 0; l < L; ++l) {
      out.eigvals[v * L + l] = eig.values(l);
      for (Index t = 0; t < field.T; ++t) out.at(v, l, t) = eig.vectors(t, l);
    }
  }
  return out;
}

StmSet maps_from_projector(const NullspaceProjector &p, const KernelSupport &support, Index T, const Grid &eval,
                           const ExtractOptions &opt, ExtractStats *stats)
{
  check_extract_options(opt, T);
  check_eval_grid(eval, support);
  StmSet out(eval, T, opt.L);
  if (opt.threshold >= 0) out.Lx.assign(static_cast<std::size_t>(eval.size()), 0);
  ExtractStats st;
  for (Index v0 = 0; v0 < eval.size(); v0 += opt.chunk) {
    Index v1 = std::min(eval.size(), v0 + opt.chunk);
    GramField part = gram_field_voxels(p, support, T, eval, v0, v1);
    extract_range(part.values, v0, v1 - v0, T, part.bound, opt, out, st);
  }
  finish_stats(st, stats);
  if (opt.align) align_maps(out);
  return out;
}

void align_maps(StmSet &maps)
{
  const Index T = maps.T, L = maps.L, N = maps.grid.size();
  Mat M = Mat::Zero(T, T), A = Mat::Zero(T, L);
  for (Index v = 0; v < N; ++v) {
    Eigen::Map<const Mat> Sv(maps.voxel(v), T, L);
    M.noalias() += Sv * Sv.adjoint();
    A += Sv;
  }
  auto eig = hermitian_eig(0.5 * (M + M.adjoint()));
  Mat ref = eig.vectors.rightCols(L).rowwise().reverse();
  // gauge of the reference itself: closest to the voxel sum, so coherent maps stay put
  {
    Eigen::JacobiSVD<Mat> svd(ref.adjoint() * A, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat r0 = ref * (svd.matrixU() * svd.matrixV().adjoint());
    ref = r0;
  }
#pragma omp parallel for schedule(static)
  for (Index v = 0; v < N; ++v) {
    Eigen::Map<Mat> Sv(maps.voxel(v), T, L);
    Mat C = Sv.adjoint() * ref;
    Eigen::JacobiSVD<Mat> svd(C, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat rot = svd.matrixU() * svd.matrixV().adjoint();
    Mat aligned = Sv * rot;
    Sv = aligned;
  }
}

StmSet interpolate_maps(const StmSet &coarse, const Grid &target)
{
  const Grid &gc = coarse.grid;
  const Index T = coarse.T, L = coarse.L, B = L * T;
  StmSet out(target, T, L);
  const bool same = gc == target;
  if (same) {
    out.maps = coarse.maps;
  } else {
    // eigenbases carry an arbitrary per-voxel unitary gauge; fix it first so the
    // coefficients vary as smoothly as the spans do
    StmSet aligned = coarse;
    align_maps(aligned);
    Cvec buf = std::move(aligned.maps);
    fft_centered(buf.data(), gc, B);
    std::fill(out.maps.begin(), out.maps.end(), cx{0.0, 0.0});
    for (Index x = 0; x < gc[0]; ++x)
      for (Index y = 0; y < gc[1]; ++y)
        for (Index z = 0; z < gc[2]; ++z) {
          Index k[3] = {centered_freq(x, gc[0]), centered_freq(y, gc[1]), centered_freq(z, gc[2])};
          Index ti[3];
          bool ok = true;
          for (int a = 0; a < 3; ++a) {
            ti[a] = k[a] + target[a] / 2;
            ok = ok && ti[a] >= 0 && ti[a] < target[a];
          }
          if (!ok) continue;
          const cx *src = buf.data() + gc.linear(x, y, z) * B;
          cx *dst = out.maps.data() + target.linear(ti[0], ti[1], ti[2]) * B;
          std::copy(src, src + B, dst);
        }
    ifft_centered(out.maps.data(), target, B);
    double s = std::sqrt(double(target.size()) / double(gc.size()));
    for (auto &z : out.maps) z *= s;
  }

  // nearest coarse voxel for the eigenvalue and L(x) fields
  if (!coarse.Lx.empty()) out.Lx.assign(static_cast<std::size_t>(target.size()), 0);
  for (Index v = 0; v < target.size(); ++v) {
    auto c = voxel_coords(target, v);
    Index cc[3];
    for (int a = 0; a < 3; ++a) cc[a] = std::min(gc[a] - 1, (c[a] * gc[a]) / target[a]);
    Index vc = gc.linear(cc[0], cc[1], cc[2]);
    for (Index l = 0; l < L; ++l) out.eigvals[v * L + l] = coarse.eigvals[vc * L + l];
    if (!coarse.Lx.empty()) out.Lx[v] = coarse.Lx[vc];
  }

  // Loewdin re-orthonormalization keeps each voxel basis closest to its input
#pragma omp parallel for schedule(static)
  for (Index v = 0; v < target.size(); ++v) {
    Eigen::Map<Mat> Sv(out.voxel(v), T, L);
    Mat S = Sv.adjoint() * Sv;
    auto eig = hermitian_eig(0.5 * (S + S.adjoint()));
    double lo = eig.values(0), hi = eig.values(L - 1);
    Mat fixed;
    if (hi > 0 && lo > 1e-12 * hi) {
      RVec inv = eig.values.array().rsqrt();
      fixed = Sv * (eig.vectors * inv.asDiagonal() * eig.vectors.adjoint());
    } else if (hi > 0) {
      Mat padded = Sv;
      fixed = orthonormalize(padded);
    } else {
      fixed = Mat::Identity(T, L);
    }
    Sv = fixed;
  }
  return out;
}

Grid coarse_grid(const Grid &g, Index factor, const KernelSupport &support)
{
  if (factor < 1) throw ConfigError("coarse factor must be >= 1");
  std::array<Index, 3> d = g.dims;
  for (int a = 0; a < 3; ++a) {
    if (g[a] == 1) continue;
    Index c = (g[a] + factor - 1) / factor;
    Index floor_ext = a < support.D ? 2 * support.radius + 1 : 1;
    d[a] = std::min(g[a], std::max(c, floor_ext));
  }
  return Grid(d[0], d[1], d[2]);
}

SensitivityMaps estimate_sensitivity_maps(const KtDataset &acs, const SensitivityOptions &opt)
{
  if (acs.Q < 2) throw ConfigError("sensitivity estimation needs at least two coils");
  const Grid &g = acs.grid;
  const Index N = g.size(), Q = acs.Q, T = acs.T;
  const Box &box = acs.mask.acs;
  if (box.size() == 0) throw ConfigError("degenerate acs region");

  // frame-averaged acs with coils as virtual frames
  KtDataset virt(g, 1, Q);
  virt.mask = SamplingMask(g, Q);
  virt.mask.acs = box;
  double energy = 0.0;
  for (Index v = 0; v < N; ++v) {
    auto c = voxel_coords(g, v);
    if (!box.contains(c[0], c[1], c[2])) continue;
    for (Index q = 0; q < Q; ++q) {
      cx acc{0.0, 0.0};
      for (Index t = 0; t < T; ++t) acc += acs.at(v, q, t);
      virt.samples[v * Q + q] = acc / double(T);
      virt.mask.at(v, q) = 1;
      energy += std::norm(acc);
    }
  }
  if (energy == 0.0) throw ConfigError("degenerate acs: no signal");

  KernelSupport sup = build_support(opt.shape, opt.radius, g.D());
  CalibGram gram = build_gram_fft(virt, sup);
  NullspaceProjector p = exact_projector(gram, opt.tau);
  GramField field = compute_gram_field(p, sup, Q, g);
  StmSet s = dense_maps(field, 1);

  SensitivityMaps out(g, Q);
  for (Index v = 0; v < N; ++v) {
    cx ref = s.at(v, 0, 0);
    cx rot = std::abs(ref) > 0 ? std::conj(ref) / std::abs(ref) : cx{1.0, 0.0};
    for (Index q = 0; q < Q; ++q) out.at(v, q) = s.at(v, 0, q) * rot;
  }
  return out;
}

} // namespace stmrecon
