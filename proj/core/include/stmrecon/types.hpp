#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace stmrecon {

using Index = std::ptrdiff_t;
using cx = std::complex<double>;
using Cvec = std::vector<cx>;

struct Grid {
  std::array<Index, 3> dims{1, 1, 1};

  Grid() = default;
  Grid(Index nx, Index ny, Index nz = 1);

  int D() const { return dims[2] > 1 ? 3 : 2; }
  Index size() const { return dims[0] * dims[1] * dims[2]; }
  Index operator[](int a) const { return dims[a]; }
  Index linear(Index x, Index y, Index z) const { return (x * dims[1] + y) * dims[2] + z; }
  bool operator==(const Grid &o) const { return dims == o.dims; }
  bool operator!=(const Grid &o) const { return dims != o.dims; }
  void validate() const;
};

// Per-axis half-open index ranges.
struct Box {
  std::array<Index, 3> lo{0, 0, 0};
  std::array<Index, 3> hi{1, 1, 1};

  Index extent(int a) const { return hi[a] - lo[a]; }
  Index size() const { return extent(0) * extent(1) * extent(2); }
  bool contains(Index x, Index y, Index z) const
  {
    return x >= lo[0] && x < hi[0] && y >= lo[1] && y < hi[1] && z >= lo[2] && z < hi[2];
  }
  bool operator==(const Box &o) const { return lo == o.lo && hi == o.hi; }
  static Box full(const Grid &g) { return Box{{0, 0, 0}, g.dims}; }
};

// Flags are indexed (kx, ky, kz, t), frame fastest.
struct SamplingMask {
  Grid grid;
  Index T = 0;
  std::vector<std::uint8_t> flags;
  Box acs;

  SamplingMask() = default;
  SamplingMask(const Grid &g, Index frames);

  std::uint8_t &at(Index v, Index t) { return flags[v * T + t]; }
  std::uint8_t at(Index v, Index t) const { return flags[v * T + t]; }
  Index count(Index t) const;
  Index total() const;
  double acceleration() const;
  void validate() const;
};

// Samples are indexed (kx, ky, kz, coil, frame), frame fastest; k-space is stored centered.
struct KtDataset {
  Grid grid;
  Index Q = 0;
  Index T = 0;
  Cvec samples;
  SamplingMask mask;

  KtDataset() = default;
  KtDataset(const Grid &g, Index coils, Index frames);

  Index index(Index v, Index q, Index t) const { return (v * Q + q) * T + t; }
  cx &at(Index v, Index q, Index t) { return samples[index(v, q, t)]; }
  cx at(Index v, Index q, Index t) const { return samples[index(v, q, t)]; }
  void validate() const;
};

// Values are indexed (x, y, z, t).
struct DynamicImage {
  Grid grid;
  Index T = 0;
  Cvec values;

  DynamicImage() = default;
  DynamicImage(const Grid &g, Index frames);

  cx &at(Index v, Index t) { return values[v * T + t]; }
  cx at(Index v, Index t) const { return values[v * T + t]; }
  void validate() const;
};

// Values are indexed (x, y, z, coil).
struct SensitivityMaps {
  Grid grid;
  Index Q = 0;
  Cvec values;

  SensitivityMaps() = default;
  SensitivityMaps(const Grid &g, Index coils);

  cx &at(Index v, Index q) { return values[v * Q + q]; }
  cx at(Index v, Index q) const { return values[v * Q + q]; }
  void validate() const;
};

struct RoiMask {
  Grid grid;
  std::vector<std::uint8_t> flags;

  RoiMask() = default;
  explicit RoiMask(const Grid &g, bool value = true);

  Index count() const;
  void validate() const;
};

// Maps are indexed (x, y, z, l, t); eigvals (x, y, z, l) hold the smallest
// eigenvalues of the Gram field in ascending order. Lx is empty unless a
// per-voxel threshold rule was used.
struct StmSet {
  Grid grid;
  Index T = 0;
  Index L = 0;
  Cvec maps;
  std::vector<double> eigvals;
  std::vector<int> Lx;

  StmSet() = default;
  StmSet(const Grid &g, Index frames, Index components);

  cx &at(Index v, Index l, Index t) { return maps[(v * L + l) * T + t]; }
  cx at(Index v, Index l, Index t) const { return maps[(v * L + l) * T + t]; }
  const cx *voxel(Index v) const { return maps.data() + v * L * T; }
  cx *voxel(Index v) { return maps.data() + v * L * T; }
  double orthonormality_error() const;
  void validate() const;
};

// Real-valued image stack indexed (x, y, z, k).
struct ImageStack {
  Grid grid;
  Index K = 0;
  std::vector<double> values;

  ImageStack() = default;
  ImageStack(const Grid &g, Index count);

  double &at(Index v, Index k) { return values[v * K + k]; }
  double at(Index v, Index k) const { return values[v * K + k]; }
  void validate() const;
};

} // namespace stmrecon
