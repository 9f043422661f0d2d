#include "stmrecon/calib.hpp"

#include "stmrecon/error.hpp"
#include "stmrecon/fft.hpp"

#include <algorithm>
#include <map>

namespace stmrecon {

namespace {

constexpr Index kDirectLimit = 50'000'000;

void check_acs(const KtDataset &acs, const KernelSupport &support)
{
  if (acs.Q != 1) throw ConfigError("calibration expects a single-coil (combined) dataset");
  if (support.offsets.empty()) throw ConfigError("empty kernel support");
  const Box &b = acs.mask.acs;
  if (b.size() == 0) throw ConfigError("empty acs box");
  if (interior_rows(b, support) == 0) throw ConfigError("acs region too small to hold a full kernel neighborhood");
}

// Frames of the acs box in local row-major coordinates: d[t * nbox + m].
Cvec gather_box(const KtDataset &acs)
{
  const Box &b = acs.mask.acs;
  Index nb = b.size();
  Cvec d(static_cast<std::size_t>(nb * acs.T));
  Index m = 0;
  for (Index x = b.lo[0]; x < b.hi[0]; ++x)
    for (Index y = b.lo[1]; y < b.hi[1]; ++y)
      for (Index z = b.lo[2]; z < b.hi[2]; ++z, ++m) {
        Index v = acs.grid.linear(x, y, z);
        for (Index t = 0; t < acs.T; ++t) d[t * nb + m] = acs.at(v, 0, t);
      }
  return d;
}

} // namespace

KernelShape parse_kernel_shape(const std::string &name)
{
  if (name == "ellipsoid" || name == "ellipse") return KernelShape::Ellipsoid;
  if (name == "rectangle" || name == "box") return KernelShape::Rectangle;
  throw ConfigError("unknown kernel shape " + name);
}

std::string kernel_shape_name(KernelShape s) { return s == KernelShape::Ellipsoid ? "ellipsoid" : "rectangle"; }

KernelSupport build_support(KernelShape shape, int radius, int D)
{
  if (radius < 1) throw ConfigError("kernel radius must be >= 1");
  if (D != 2 && D != 3) throw ConfigError("kernel dimension must be 2 or 3");
  KernelSupport s{shape, radius, D, {}};
  int rz = D == 3 ? radius : 0;
  for (int a = -radius; a <= radius; ++a)
    for (int b = -radius; b <= radius; ++b)
      for (int c = -rz; c <= rz; ++c) {
        if (shape == KernelShape::Ellipsoid && a * a + b * b + c * c > radius * radius) continue;
        s.offsets.push_back({a, b, c});
      }
  return s;
}

void CalibGram::validate() const
{
  if (matrix.rows() != matrix.cols() || matrix.rows() != support.size() * T) {
    throw InvariantError("gram extent does not match |Lambda| T");
  }
  if (hermitian_error(matrix) > 1e-10) throw InvariantError("gram is not Hermitian");
}

Index interior_rows(const Box &acs, const KernelSupport &support)
{
  Index n = 1;
  for (int a = 0; a < 3; ++a) n *= std::max<Index>(0, acs.extent(a) - 2 * support.reach(a));
  return n;
}

Mat build_C_direct(const KtDataset &acs, const KernelSupport &support)
{
  check_acs(acs, support);
  const Box &b = acs.mask.acs;
  const Index L = support.size(), T = acs.T;
  const Index I = interior_rows(b, support);
  if (I * L * T > kDirectLimit) throw ConfigError("direct calibration matrix too large; use the FFT path");
  Mat C(I, L * T);
  Index row = 0;
  const int r0 = support.reach(0), r1 = support.reach(1), r2 = support.reach(2);
  for (Index x = b.lo[0] + r0; x < b.hi[0] - r0; ++x)
    for (Index y = b.lo[1] + r1; y < b.hi[1] - r1; ++y)
      for (Index z = b.lo[2] + r2; z < b.hi[2] - r2; ++z, ++row)
        for (Index l = 0; l < L; ++l) {
          const auto &o = support.offsets[l];
          Index v = acs.grid.linear(x - o[0], y - o[1], z - o[2]);
          for (Index t = 0; t < T; ++t) C(row, t * L + l) = acs.at(v, 0, t);
        }
  return C;
}

CalibGram build_gram_direct(const KtDataset &acs, const KernelSupport &support)
{
  Mat C = build_C_direct(acs, support);
  CalibGram g{Mat(C.cols(), C.cols()), support, acs.T, acs.mask.acs, C.rows()};
  g.matrix.noalias() = C.adjoint() * C;
  g.matrix = 0.5 * (g.matrix + g.matrix.adjoint()).eval();
  return g;
}

CalibGram build_gram_fft(const KtDataset &acs, const KernelSupport &support)
{
  check_acs(acs, support);
  const Box &box = acs.mask.acs;
  const Index L = support.size(), T = acs.T;
  const Index nb = box.size();
  std::array<Index, 3> n{box.extent(0), box.extent(1), box.extent(2)};
  std::array<int, 3> R{support.reach(0), support.reach(1), support.reach(2)};

  // padded cross-correlation grid
  std::array<Index, 3> P;
  for (int a = 0; a < 3; ++a) P[a] = n[a] + 2 * R[a];
  const Index np = P[0] * P[1] * P[2];
  std::vector<Index> pdims;
  for (int a = 0; a < 3; ++a) {
    if (P[a] > 1 || a < support.D) pdims.push_back(P[a]);
  }
  auto plin = [&](Index x, Index y, Index z) { return (x * P[1] + y) * P[2] + z; };
  auto blin = [&](Index x, Index y, Index z) { return (x * n[1] + y) * n[2] + z; };

  Cvec d = gather_box(acs);

  // spectra of zero-padded frames, layout (p, t)
  Cvec F(static_cast<std::size_t>(np * T));
  for (Index x = 0; x < n[0]; ++x)
    for (Index y = 0; y < n[1]; ++y)
      for (Index z = 0; z < n[2]; ++z)
        for (Index t = 0; t < T; ++t) F[plin(x, y, z) * T + t] = d[t * nb + blin(x, y, z)];
  fft_nd(F.data(), pdims, T, -1);

  // difference offsets and the (l, l') pairs that produce each
  std::map<Offset, std::vector<std::pair<Index, Index>>> pairs;
  for (Index i = 0; i < L; ++i)
    for (Index j = 0; j < L; ++j) {
      const auto &a = support.offsets[i], &b = support.offsets[j];
      pairs[{a[0] - b[0], a[1] - b[1], a[2] - b[2]}].emplace_back(i, j);
    }

  // border region: all of the box outside [lo + 2R, hi - 2R)
  std::vector<std::uint8_t> border(static_cast<std::size_t>(nb), 0);
  for (Index x = 0; x < n[0]; ++x)
    for (Index y = 0; y < n[1]; ++y)
      for (Index z = 0; z < n[2]; ++z) {
        Index c[3] = {x, y, z};
        bool core = true;
        for (int a = 0; a < 3; ++a) core = core && c[a] >= 2 * R[a] && c[a] < n[a] - 2 * R[a];
        border[blin(x, y, z)] = core ? 0 : 1;
      }

  CalibGram g{Mat::Zero(L * T, L * T), support, T, box, interior_rows(box, support)};
  Cvec prod(static_cast<std::size_t>(np * T));
  // summed-area table with a zero guard row on every axis
  const std::array<Index, 3> S{n[0] + 1, n[1] + 1, n[2] + 1};
  auto slin = [&](Index x, Index y, Index z) { return (x * S[1] + y) * S[2] + z; };
  Cvec sat(static_cast<std::size_t>(S[0] * S[1] * S[2]));
  auto rect = [&](const std::array<Index, 3> &lo, const std::array<Index, 3> &hi) {
    for (int a = 0; a < 3; ++a) {
      if (hi[a] <= lo[a]) return cx{0.0, 0.0};
    }
    return sat[slin(hi[0], hi[1], hi[2])] - sat[slin(lo[0], hi[1], hi[2])] - sat[slin(hi[0], lo[1], hi[2])] -
           sat[slin(hi[0], hi[1], lo[2])] + sat[slin(lo[0], lo[1], hi[2])] + sat[slin(lo[0], hi[1], lo[2])] +
           sat[slin(hi[0], lo[1], lo[2])] - sat[slin(lo[0], lo[1], lo[2])];
  };

  for (Index t = 0; t < T; ++t) {
    // correlations of frame t against every t' >= t in one batched transform
    for (Index p = 0; p < np; ++p) {
      cx ft = std::conj(F[p * T + t]);
      for (Index u = 0; u < T; ++u) prod[p * T + u] = u >= t ? ft * F[p * T + u] : cx{0.0, 0.0};
    }
    fft_nd(prod.data(), pdims, T, +1);
    const double scale = 1.0 / double(np);

    for (Index u = t; u < T; ++u) {
      const cx *dt = d.data() + t * nb;
      const cx *du = d.data() + u * nb;
      for (const auto &[delta, plist] : pairs) {
        Index px = (delta[0] % P[0] + P[0]) % P[0], py = (delta[1] % P[1] + P[1]) % P[1],
              pz = (delta[2] % P[2] + P[2]) % P[2];
        cx full = prod[plin(px, py, pz) * T + u] * scale;

        // SAT of border lag products q(m) = conj(d_t(m)) d_u(m + delta)
        for (Index x = 0; x < n[0]; ++x)
          for (Index y = 0; y < n[1]; ++y)
            for (Index z = 0; z < n[2]; ++z) {
              Index m = blin(x, y, z);
              cx q{0.0, 0.0};
              Index xs = x + delta[0], ys = y + delta[1], zs = z + delta[2];
              if (border[m] && xs >= 0 && xs < n[0] && ys >= 0 && ys < n[1] && zs >= 0 && zs < n[2]) {
                q = std::conj(dt[m]) * du[blin(xs, ys, zs)];
              }
              sat[slin(x + 1, y + 1, z + 1)] = q + sat[slin(x, y + 1, z + 1)] + sat[slin(x + 1, y, z + 1)] +
                                               sat[slin(x + 1, y + 1, z)] - sat[slin(x, y, z + 1)] -
                                               sat[slin(x, y + 1, z)] - sat[slin(x + 1, y, z)] + sat[slin(x, y, z)];
            }
        std::array<Index, 3> olo, ohi;
        for (int a = 0; a < 3; ++a) {
          olo[a] = std::max<Index>(0, -delta[a]);
          ohi[a] = std::min<Index>(n[a], n[a] - delta[a]);
        }
        cx base = full - rect(olo, ohi);
        for (const auto &[i, j] : plist) {
          const auto &o = support.offsets[i];
          std::array<Index, 3> lo, hi;
          for (int a = 0; a < 3; ++a) {
            lo[a] = R[a] - o[a];
            hi[a] = n[a] - R[a] - o[a];
          }
          g.matrix(t * L + i, u * L + j) = base + rect(lo, hi);
        }
      }
    }
  }
  // lower blocks by Hermitian symmetry; diagonal blocks symmetrized
  for (Index t = 0; t < T; ++t)
    for (Index u = t; u < T; ++u) {
      if (u == t) {
        Mat blk = g.matrix.block(t * L, t * L, L, L);
        g.matrix.block(t * L, t * L, L, L) = 0.5 * (blk + blk.adjoint());
      } else {
        g.matrix.block(u * L, t * L, L, L) = g.matrix.block(t * L, u * L, L, L).adjoint();
      }
    }
  return g;
}

} // namespace stmrecon
