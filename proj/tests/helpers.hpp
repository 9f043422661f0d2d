#pragma once

#include "stmrecon/linalg.hpp"
#include "stmrecon/phantom.hpp"
#include "stmrecon/rng.hpp"
#include "stmrecon/types.hpp"

#include <cmath>
#include <filesystem>
#include <string>

namespace testing_support {

using namespace stmrecon;

inline Cvec random_vec(std::size_t n, std::uint64_t seed, std::uint64_t stream = 0)
{
  CounterRng rng(seed, stream);
  Cvec v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = rng.cnormal(i);
  return v;
}

inline Mat random_mat(Index r, Index c, std::uint64_t seed)
{
  CounterRng rng(seed, 1);
  Mat m(r, c);
  for (Index j = 0; j < c; ++j)
    for (Index i = 0; i < r; ++i) m(i, j) = rng.cnormal(static_cast<std::uint64_t>(j * r + i));
  return m;
}

inline cx dot(const Cvec &a, const Cvec &b)
{
  cx s{0.0, 0.0};
  for (std::size_t i = 0; i < a.size(); ++i) s += std::conj(a[i]) * b[i];
  return s;
}

inline double norm(const Cvec &a) { return std::sqrt(std::real(dot(a, a))); }

inline double rel_diff(const Mat &a, const Mat &b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

inline SensitivityMaps unit_maps(const Grid &g)
{
  SensitivityMaps m(g, 1);
  for (auto &c : m.values) c = 1.0;
  return m;
}

// Fully sampled single-coil dataset whose acs box is the whole grid.
inline KtDataset full_acs(const Grid &g, Index T, std::uint64_t seed)
{
  KtDataset d(g, 1, T);
  d.samples = random_vec(d.samples.size(), seed);
  d.mask = SamplingMask(g, T);
  d.mask.acs = Box::full(g);
  for (auto &f : d.mask.flags) f = 1;
  return d;
}

inline std::filesystem::path scratch(const std::string &name)
{
  auto p = std::filesystem::temp_directory_path() / ("stmrecon_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

// Band-limited exact-mode phantom: parameter fields truncated to |k| <= kmax,
// uniform anatomy, two overlapping regions with J <= 4.
inline MultibandSpec exact_spec(const Grid &g, Index T, double kmax = 2.0)
{
  MultibandSpec s;
  s.grid = g;
  s.T = T;
  s.smoothness = 0.0;
  s.field_kmax = kmax;
  Region a, b;
  a.whole_fov = true;
  a.bands = {Band{0.0, 1.0, 0.0}, Band{1.0 / double(T), 0.5, 0.4}};
  b.shape = Ellipsoid{{0.5, 0.5, 0.5}, {0.3, 0.25, 0.3}, 1.0};
  b.bands = {Band{-2.0 / double(T), 0.6, 1.0}, Band{3.0 / double(T), 0.3, 2.0}};
  s.regions = {a, b};
  return s;
}

// Single-coil fully sampled acs of an image, acs box ky rows centered.
inline KtDataset acs_of(const DynamicImage &img, Index acs_ky, Index acs_kz = 1)
{
  MaskSpec ms;
  ms.acs = {acs_ky, acs_kz};
  ms.lines = {0, 0};
  SamplingMask m = generate_mask(img.grid, img.T, ms);
  return simulate_acquisition(img, unit_maps(img.grid), m, 0.0, 0);
}

} // namespace testing_support
