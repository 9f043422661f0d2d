#include "stmrecon/phantom.hpp"

#include "stmrecon/error.hpp"
#include "stmrecon/fft.hpp"
#include "stmrecon/linalg.hpp"
#include "stmrecon/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>

namespace stmrecon {

namespace {

constexpr double kPi = std::numbers::pi;

std::array<double, 3> coord(const Grid &g, Index v)
{
  Index z = v % g[2];
  Index y = (v / g[2]) % g[1];
  Index x = v / (g[2] * g[1]);
  return {double(x) / double(g[0]), double(y) / double(g[1]), double(z) / double(g[2])};
}

bool inside(const Ellipsoid &e, const std::array<double, 3> &p, int D)
{
  double r = 0.0;
  for (int a = 0; a < D; ++a) {
    double d = (p[a] - e.center[a]) / e.radii[a];
    r += d * d;
  }
  return r <= 1.0;
}

// Real white noise low-passed and scaled to unit peak magnitude.
std::vector<double> smooth_field(const Grid &g, double sigma, double kmax, std::uint64_t seed, std::uint64_t stream)
{
  CounterRng rng(seed, stream);
  Cvec f(static_cast<std::size_t>(g.size()));
  for (Index v = 0; v < g.size(); ++v) f[v] = rng.normal(static_cast<std::uint64_t>(v));
  lowpass(f, g, sigma, kmax);
  std::vector<double> out(f.size());
  double peak = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    out[i] = f[i].real();
    peak = std::max(peak, std::abs(out[i]));
  }
  if (peak > 0) {
    for (auto &x : out) x /= peak;
  }
  return out;
}

Index wrap_bin(Index n, Index T)
{
  Index m = ((n % T) + T) % T;
  if (m >= T - T / 2) m -= T; // map to [-floor(T/2), ceil(T/2))
  return m;
}

void validate_spec(const MultibandSpec &s)
{
  s.grid.validate();
  if (s.T < 1) throw ConfigError("phantom needs at least one frame");
  if (s.j_max < 1) throw ConfigError("j_max must be positive");
  if (s.T < 2 * s.j_max) throw ConfigError("phantom needs T >= 2 j_max");
  if (s.smoothness < 0) throw ConfigError("smoothness must be nonnegative");
  if (s.noise_sigma < 0) throw ConfigError("noise sigma must be nonnegative");
  if (s.exact_mode && s.frequency_spread != 0.0) throw ConfigError("frequency spread requires off-grid mode");
  if (s.regions.empty()) throw ConfigError("phantom needs at least one region");
  for (const auto &r : s.regions) {
    if (r.bands.empty()) throw ConfigError("region without bands");
    for (const auto &b : r.bands) {
      if (b.waveform != "tone" && b.waveform != "boxcar") throw ConfigError("unknown waveform " + b.waveform);
      if (b.waveform == "tone" && (b.freq < -0.5 || b.freq >= 0.5)) {
        throw ConfigError("band frequency outside [-1/2, 1/2)");
      }
      if (b.waveform == "boxcar" && b.block < 1) throw ConfigError("boxcar block must be positive");
    }
  }
  for (const auto &e : s.anatomy)
    for (int a = 0; a < s.grid.D(); ++a) {
      if (e.radii[a] <= 0) throw ConfigError("ellipsoid radii must be positive");
    }
}

} // namespace

void lowpass(Cvec &field, const Grid &g, double sigma, double kmax)
{
  if (sigma <= 0 && kmax < 0) return;
  fft_centered(field.data(), g, 1);
  for (Index x = 0; x < g[0]; ++x)
    for (Index y = 0; y < g[1]; ++y)
      for (Index z = 0; z < g[2]; ++z) {
        double k[3] = {double(centered_freq(x, g[0])), double(centered_freq(y, g[1])), double(centered_freq(z, g[2]))};
        double r2 = 0.0, w2 = 0.0;
        for (int a = 0; a < 3; ++a) {
          r2 += k[a] * k[a];
          double kn = k[a] / double(g[a]);
          w2 += kn * kn;
        }
        double h = sigma > 0 ? std::exp(-2.0 * kPi * kPi * sigma * sigma * w2) : 1.0;
        if (kmax >= 0 && r2 > kmax * kmax) h = 0.0;
        field[g.linear(x, y, z)] *= h;
      }
  ifft_centered(field.data(), g, 1);
}

std::vector<Ellipsoid> default_anatomy()
{
  std::vector<Ellipsoid> a{
    {{0.5, 0.5, 0.5}, {0.42, 0.40, 0.42}, 1.0},
    {{0.40, 0.45, 0.5}, {0.10, 0.12, 0.20}, 0.5},
    {{0.62, 0.55, 0.5}, {0.08, 0.10, 0.20}, -0.4},
    {{0.50, 0.30, 0.5}, {0.15, 0.05, 0.20}, 0.7},
  };
  return a;
}

Phantom generate_phantom_full(const MultibandSpec &spec, std::uint64_t seed)
{
  validate_spec(spec);
  const Grid &g = spec.grid;
  const Index N = g.size(), T = spec.T;
  const int D = g.D();

  Phantom ph;
  ph.J.assign(static_cast<std::size_t>(N), 0);

  std::vector<double> anatomy(static_cast<std::size_t>(N), spec.anatomy.empty() ? 1.0 : 0.0);
  std::vector<std::vector<double>> chi(spec.regions.size(), std::vector<double>(static_cast<std::size_t>(N), 0.0));
  for (Index v = 0; v < N; ++v) {
    auto p = coord(g, v);
    for (const auto &e : spec.anatomy) {
      if (inside(e, p, D)) anatomy[v] += e.value;
    }
    for (std::size_t r = 0; r < spec.regions.size(); ++r) {
      const auto &reg = spec.regions[r];
      if (reg.whole_fov || inside(reg.shape, p, D)) {
        chi[r][v] = 1.0;
        ph.J[v] += static_cast<int>(reg.bands.size());
      }
    }
  }
  for (Index v = 0; v < N; ++v) {
    if (ph.J[v] > spec.j_max) {
      throw ConfigError("band count " + std::to_string(ph.J[v]) + " exceeds j_max at voxel " + std::to_string(v));
    }
  }

  std::set<Index> used;
  ph.image = DynamicImage(g, T);
  ph.clean = DynamicImage(g, T);
  std::uint64_t band_id = 0;
  for (std::size_t r = 0; r < spec.regions.size(); ++r) {
    for (const auto &b : spec.regions[r].bands) {
      double f = b.freq;
      if (b.waveform == "tone" && spec.exact_mode) {
        Index n = wrap_bin(static_cast<Index>(std::llround(f * double(T))), T);
        if (used.count(n)) {
          Index pick = n;
          for (Index d = 1; d < T; ++d) {
            Index up = wrap_bin(n + d, T), dn = wrap_bin(n - d, T);
            if (!used.count(up)) { pick = up; break; }
            if (!used.count(dn)) { pick = dn; break; }
          }
          if (pick == n) throw ConfigError("no free frequency bin for band jitter");
          ph.notes.push_back("band " + std::to_string(band_id) + " frequency bin " + std::to_string(n) +
                             " collided; jittered to bin " + std::to_string(pick));
          n = pick;
        }
        used.insert(n);
        f = double(n) / double(T);
      }
      ph.frequencies.push_back(f);

      auto mod = smooth_field(g, spec.smoothness, spec.field_kmax, seed, 100 + band_id);
      Cvec amp(static_cast<std::size_t>(N));
      for (Index v = 0; v < N; ++v) amp[v] = chi[r][v] * (1.0 + spec.amplitude_variation * mod[v]);
      lowpass(amp, g, spec.smoothness, spec.field_kmax);
      std::vector<double> spread;
      if (spec.frequency_spread != 0.0) spread = smooth_field(g, spec.smoothness, spec.field_kmax, seed, 200 + band_id);

      cx ph0 = std::polar(b.amp, b.phase);
      for (Index v = 0; v < N; ++v) {
        cx a = amp[v] * ph0 * anatomy[v];
        if (a == cx{0.0, 0.0}) continue;
        double fv = f + (spread.empty() ? 0.0 : spec.frequency_spread * spread[v]);
        for (Index t = 0; t < T; ++t) {
          cx w;
          if (b.waveform == "boxcar") {
            w = ((t / b.block) % 2 == 1) ? 1.0 : 0.0;
          } else {
            double ang = 2.0 * kPi * fv * double(t);
            if (spec.exact_mode) {
              // exact phase of an on-grid tone, free of accumulated rounding
              Index n = static_cast<Index>(std::llround(fv * double(T)));
              ang = 2.0 * kPi * double(((n * t) % T + T) % T) / double(T);
            }
            w = cx(std::cos(ang), std::sin(ang));
          }
          ph.clean.at(v, t) += a * w;
        }
      }
      ++band_id;
    }
  }

  ph.image = ph.clean;
  if (spec.noise_sigma > 0) {
    CounterRng rng(seed, 9);
    for (Index i = 0; i < N * T; ++i) ph.image.values[i] += spec.noise_sigma * rng.cnormal(static_cast<std::uint64_t>(i));
  }
  ph.roi = RoiMask(g, false);
  for (Index v = 0; v < N; ++v) ph.roi.flags[v] = std::abs(anatomy[v]) > 1e-12 ? 1 : 0;
  return ph;
}

DynamicImage generate_phantom(const MultibandSpec &spec, std::uint64_t seed)
{
  return generate_phantom_full(spec, seed).image;
}

StmSet true_maps(const DynamicImage &clean, Index L)
{
  const Index T = clean.T;
  if (L < 1 || L > T) throw ConfigError("component count must lie in [1, T]");
  StmSet s(clean.grid, T, L);
  Mat basis(T, T);
  for (Index v = 0; v < clean.grid.size(); ++v) {
    Vec r(T);
    for (Index t = 0; t < T; ++t) r(t) = clean.at(v, t);
    double n = r.norm();
    basis.setIdentity();
    if (n > 0) {
      basis.col(0) = r / n;
      // keep the identity columns least aligned with r
      Index skip = 0;
      r.cwiseAbs().maxCoeff(&skip);
      Index c = 1;
      for (Index t = 0; t < T && c < T; ++t) {
        if (t == skip) continue;
        basis.col(c++) = Vec::Unit(T, t);
      }
    }
    Mat q = orthonormalize(basis.leftCols(L));
    // fix the phase so the first vector equals r / |r|
    if (n > 0) {
      cx ip = q.col(0).dot(r / n);
      q.col(0) *= ip / std::abs(ip);
    }
    for (Index l = 0; l < L; ++l)
      for (Index t = 0; t < T; ++t) s.at(v, l, t) = q(t, l);
  }
  return s;
}

Index mask_period(const Grid &g, const MaskSpec &spec, int axis)
{
  Index n = g[axis], acs = spec.acs[axis - 1], lines = spec.lines[axis - 1];
  Index out = n - acs;
  if (lines <= 0 || out <= 0) return 1;
  Index stride = std::max<Index>(1, spec.stride[axis - 1]);
  Index base = (out + lines - 1) / lines;
  return base / std::gcd(base, stride);
}

SamplingMask generate_mask(const Grid &g, Index T, const MaskSpec &spec)
{
  g.validate();
  if (T < 1) throw ConfigError("mask needs at least one frame");
  int D = g.D();
  std::array<Index, 3> acs{g[0], spec.acs[0], D == 3 ? spec.acs[1] : 1};
  for (int a = 1; a < 3; ++a) {
    if (acs[a] < 1 || acs[a] > g[a]) throw ConfigError("acs extent larger than grid or empty");
  }
  for (int a = 0; a < 2; ++a) {
    if (spec.lines[a] < 0) throw ConfigError("negative line count");
  }
  if (D == 2 && spec.lines[1] > 0) throw ConfigError("kz lines on a 2-D grid");

  SamplingMask m(g, T);
  for (int a = 0; a < 3; ++a) {
    m.acs.lo[a] = g[a] / 2 - acs[a] / 2;
    m.acs.hi[a] = m.acs.lo[a] + acs[a];
  }

  auto lines_for = [&](int axis, Index t) {
    std::vector<Index> outside;
    for (Index i = 0; i < g[axis]; ++i) {
      if (i < m.acs.lo[axis] || i >= m.acs.hi[axis]) outside.push_back(i);
    }
    std::vector<Index> sel;
    Index n_out = static_cast<Index>(outside.size()), n = spec.lines[axis - 1];
    if (n_out == 0 || n == 0) return sel;
    if (n > n_out) throw ConfigError("more extra lines than non-acs locations");
    Index offset = (t * std::max<Index>(1, spec.stride[axis - 1])) % n_out;
    for (Index j = 0; j < n; ++j) sel.push_back(outside[(offset + (j * n_out) / n) % n_out]);
    return sel;
  };

  for (Index t = 0; t < T; ++t) {
    auto ys = lines_for(1, t);
    std::vector<Index> zs = D == 3 ? lines_for(2, t) : std::vector<Index>{};
    for (Index x = 0; x < g[0]; ++x)
      for (Index y = 0; y < g[1]; ++y)
        for (Index z = 0; z < g[2]; ++z) {
          bool on = m.acs.contains(x, y, z) || std::find(ys.begin(), ys.end(), y) != ys.end() ||
                    std::find(zs.begin(), zs.end(), z) != zs.end();
          if (on) m.at(g.linear(x, y, z), t) = 1;
        }
  }
  m.validate();
  return m;
}

SensitivityMaps generate_sensitivities(const Grid &g, Index Q, std::uint64_t seed)
{
  if (Q < 1) throw ConfigError("need at least one coil");
  const int D = g.D();
  CounterRng rng(seed, 31);
  SensitivityMaps c(g, Q);
  double rot = 2.0 * kPi * rng.uniform(0);
  const double kappa = 0.8;
  for (Index q = 0; q < Q; ++q) {
    double th = rot + 2.0 * kPi * double(q) / double(Q);
    std::array<double, 3> ctr{0.5 + 0.35 * std::cos(th), 0.5 + 0.35 * std::sin(th), 0.5};
    if (D == 3) ctr[2] = 0.5 + 0.25 * std::cos(3.0 * th);
    double phi0 = 2.0 * kPi * rng.uniform(1 + static_cast<std::uint64_t>(q));
    for (Index v = 0; v < g.size(); ++v) {
      auto p = coord(g, v);
      double e = 0.0;
      for (int a = 0; a < D; ++a) e += std::cos(2.0 * kPi * (p[a] - ctr[a])) - 1.0;
      double phase = phi0 + 0.5 * std::cos(2.0 * kPi * (p[0] - ctr[0])) + 0.5 * std::sin(2.0 * kPi * (p[1] - ctr[1]));
      c.at(v, q) = std::polar(std::exp(kappa * e), phase);
    }
  }
  for (Index v = 0; v < g.size(); ++v) {
    double s = 0.0;
    for (Index q = 0; q < Q; ++q) s += std::norm(c.at(v, q));
    s = std::sqrt(s);
    for (Index q = 0; q < Q; ++q) c.at(v, q) /= s;
  }
  return c;
}

KtDataset simulate_acquisition(const DynamicImage &img, const SensitivityMaps &maps, const SamplingMask &mask,
                               double sigma, std::uint64_t seed)
{
  if (img.grid != maps.grid || img.grid != mask.grid || img.T != mask.T) {
    throw ShapeError("acquisition inputs disagree in shape");
  }
  if (sigma < 0) throw ConfigError("noise sigma must be nonnegative");
  const Index N = img.grid.size(), Q = maps.Q, T = img.T;
  KtDataset ds(img.grid, Q, T);
  for (Index v = 0; v < N; ++v)
    for (Index q = 0; q < Q; ++q) {
      cx c = maps.at(v, q);
      for (Index t = 0; t < T; ++t) ds.at(v, q, t) = c * img.at(v, t);
    }
  fft_centered(ds.samples.data(), img.grid, Q * T);
  CounterRng rng(seed, 0x51);
  for (Index v = 0; v < N; ++v)
    for (Index t = 0; t < T; ++t) {
      bool on = mask.at(v, t);
      for (Index q = 0; q < Q; ++q) {
        cx &s = ds.at(v, q, t);
        if (!on) {
          s = 0.0;
        } else if (sigma > 0) {
          s += sigma * rng.cnormal(static_cast<std::uint64_t>(ds.index(v, q, t)));
        }
      }
    }
  ds.mask = mask;
  return ds;
}

double sigma_for_snr(const DynamicImage &img, const SensitivityMaps &maps, double snr_db)
{
  if (img.grid != maps.grid) throw ShapeError("image and maps disagree in grid");
  double e = 0.0;
  for (Index v = 0; v < img.grid.size(); ++v) {
    double c2 = 0.0;
    for (Index q = 0; q < maps.Q; ++q) c2 += std::norm(maps.at(v, q));
    for (Index t = 0; t < img.T; ++t) e += c2 * std::norm(img.at(v, t));
  }
  double rms = std::sqrt(e / double(img.grid.size() * maps.Q * img.T));
  return rms / std::pow(10.0, snr_db / 20.0);
}

RoiMask ellipsoid_mask(const Grid &grid, const Ellipsoid &e)
{
  RoiMask m(grid, false);
  for (Index v = 0; v < grid.size(); ++v) m.flags[v] = inside(e, coord(grid, v), grid.D()) ? 1 : 0;
  return m;
}

} // namespace stmrecon
