#include "stmrecon/types.hpp"

#include "stmrecon/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace stmrecon {

namespace {

bool finite(const cx &z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); }

void check_size(std::size_t have, Index want, const char *what)
{
  if (static_cast<Index>(have) != want) {
    throw ShapeError(std::string(what) + ": extent mismatch (" + std::to_string(have) + " vs " +
                     std::to_string(want) + ")");
  }
}

} // namespace

Grid::Grid(Index nx, Index ny, Index nz)
  : dims{nx, ny, nz}
{
  validate();
}

void Grid::validate() const
{
  for (auto d : dims) {
    if (d < 1) throw ShapeError("grid extents must be positive");
  }
}

SamplingMask::SamplingMask(const Grid &g, Index frames)
  : grid(g), T(frames), flags(static_cast<std::size_t>(g.size() * frames), 0), acs(Box{{0, 0, 0}, {0, 0, 0}})
{
}

Index SamplingMask::count(Index t) const
{
  Index n = 0;
  for (Index v = 0; v < grid.size(); ++v) n += at(v, t) ? 1 : 0;
  return n;
}

Index SamplingMask::total() const
{
  return static_cast<Index>(std::count(flags.begin(), flags.end(), std::uint8_t{1}));
}

double SamplingMask::acceleration() const
{
  Index m = total();
  if (m == 0) throw InvariantError("empty sampling mask");
  return static_cast<double>(grid.size() * T) / static_cast<double>(m);
}

void SamplingMask::validate() const
{
  grid.validate();
  if (T < 1) throw ShapeError("mask needs at least one frame");
  check_size(flags.size(), grid.size() * T, "mask");
  for (auto f : flags) {
    if (f > 1) throw InvariantError("mask flags must be 0 or 1");
  }
  for (int a = 0; a < 3; ++a) {
    if (acs.lo[a] < 0 || acs.hi[a] > grid[a] || acs.lo[a] > acs.hi[a]) {
      throw InvariantError("acs box outside grid");
    }
  }
  for (Index x = acs.lo[0]; x < acs.hi[0]; ++x)
    for (Index y = acs.lo[1]; y < acs.hi[1]; ++y)
      for (Index z = acs.lo[2]; z < acs.hi[2]; ++z) {
        Index v = grid.linear(x, y, z);
        for (Index t = 0; t < T; ++t) {
          if (!at(v, t)) throw InvariantError("acs box not sampled in frame " + std::to_string(t));
        }
      }
}

KtDataset::KtDataset(const Grid &g, Index coils, Index frames)
  : grid(g), Q(coils), T(frames), samples(static_cast<std::size_t>(g.size() * coils * frames)), mask(g, frames)
{
}

void KtDataset::validate() const
{
  grid.validate();
  if (Q < 1 || T < 1) throw ShapeError("dataset needs at least one coil and one frame");
  check_size(samples.size(), grid.size() * Q * T, "kt dataset");
  if (mask.grid != grid || mask.T != T) throw ShapeError("mask shape differs from dataset");
  mask.validate();
  for (Index v = 0; v < grid.size(); ++v)
    for (Index t = 0; t < T; ++t) {
      bool on = mask.at(v, t);
      for (Index q = 0; q < Q; ++q) {
        const cx &s = at(v, q, t);
        if (!finite(s)) throw InvariantError("non-finite k-space sample");
        if (!on && s != cx{0.0, 0.0}) throw InvariantError("nonzero sample off the mask");
      }
    }
}

DynamicImage::DynamicImage(const Grid &g, Index frames)
  : grid(g), T(frames), values(static_cast<std::size_t>(g.size() * frames))
{
}

void DynamicImage::validate() const
{
  grid.validate();
  if (T < 1) throw ShapeError("image needs at least one frame");
  check_size(values.size(), grid.size() * T, "dynamic image");
  for (const auto &z : values) {
    if (!finite(z)) throw InvariantError("non-finite image value");
  }
}

SensitivityMaps::SensitivityMaps(const Grid &g, Index coils)
  : grid(g), Q(coils), values(static_cast<std::size_t>(g.size() * coils))
{
}

void SensitivityMaps::validate() const
{
  grid.validate();
  if (Q < 1) throw ShapeError("maps need at least one coil");
  check_size(values.size(), grid.size() * Q, "sensitivity maps");
  for (const auto &z : values) {
    if (!finite(z)) throw InvariantError("non-finite sensitivity value");
  }
}

RoiMask::RoiMask(const Grid &g, bool value)
  : grid(g), flags(static_cast<std::size_t>(g.size()), value ? 1 : 0)
{
}

Index RoiMask::count() const
{
  return static_cast<Index>(std::count(flags.begin(), flags.end(), std::uint8_t{1}));
}

void RoiMask::validate() const
{
  grid.validate();
  check_size(flags.size(), grid.size(), "roi");
  for (auto f : flags) {
    if (f > 1) throw InvariantError("roi flags must be 0 or 1");
  }
}

StmSet::StmSet(const Grid &g, Index frames, Index components)
  : grid(g), T(frames), L(components), maps(static_cast<std::size_t>(g.size() * components * frames)),
    eigvals(static_cast<std::size_t>(g.size() * components))
{
}

double StmSet::orthonormality_error() const
{
  double worst = 0.0;
  for (Index v = 0; v < grid.size(); ++v) {
    const cx *s = voxel(v);
    for (Index a = 0; a < L; ++a)
      for (Index b = a; b < L; ++b) {
        cx ip{0.0, 0.0};
        for (Index t = 0; t < T; ++t) ip += std::conj(s[a * T + t]) * s[b * T + t];
        worst = std::max(worst, std::abs(ip - cx(a == b ? 1.0 : 0.0, 0.0)));
      }
  }
  return worst;
}

void StmSet::validate() const
{
  grid.validate();
  if (L < 1 || L > T) throw ShapeError("stm component count must lie in [1, T]");
  check_size(maps.size(), grid.size() * L * T, "stm maps");
  check_size(eigvals.size(), grid.size() * L, "stm eigvals");
  if (!Lx.empty()) check_size(Lx.size(), grid.size(), "stm L(x)");
  for (const auto &z : maps) {
    if (!finite(z)) throw InvariantError("non-finite map value");
  }
  if (orthonormality_error() > 1e-6) throw InvariantError("stm maps are not orthonormal per voxel");
}

ImageStack::ImageStack(const Grid &g, Index count)
  : grid(g), K(count), values(static_cast<std::size_t>(g.size() * count))
{
}

void ImageStack::validate() const
{
  grid.validate();
  check_size(values.size(), grid.size() * K, "image stack");
}

} // namespace stmrecon
