#pragma once

#include "stmrecon/types.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace stmrecon {

struct Band {
  double freq = 0.0;  // cycles per frame, in [-1/2, 1/2)
  double amp = 1.0;
  double phase = 0.0; // radians
  // "tone" is a complex exponential; "boxcar" switches on during odd blocks
  // of `block` frames (rest first), for task paradigms.
  std::string waveform = "tone";
  Index block = 20;
};

// Ellipsoid in normalized coordinates (the FOV is the unit cube).
struct Ellipsoid {
  std::array<double, 3> center{0.5, 0.5, 0.5};
  std::array<double, 3> radii{0.4, 0.4, 0.4};
  double value = 1.0;
};

struct Region {
  bool whole_fov = false;
  Ellipsoid shape;
  std::vector<Band> bands;
};

struct MultibandSpec {
  Grid grid{32, 32, 1};
  Index T = 24;
  int j_max = 4;
  bool exact_mode = true;
  double smoothness = 4.0;          // Gaussian low-pass std in voxels
  double field_kmax = -1.0;         // optional disc truncation of parameter fields, cycles per FOV
  double amplitude_variation = 0.5; // relative spatial modulation of each band amplitude
  double frequency_spread = 0.0;    // off-grid mode: spatial frequency variation, cycles per frame
  double noise_sigma = 0.0;
  std::vector<Ellipsoid> anatomy;   // additive piecewise-constant object; empty means uniform FOV
  std::vector<Region> regions;
};

struct Phantom {
  DynamicImage image; // includes noise
  DynamicImage clean;
  RoiMask roi;        // anatomy support
  std::vector<int> J; // nominal band count per voxel from region membership
  std::vector<double> frequencies; // per band after snapping and jitter, in region order
  std::vector<std::string> notes;  // collision reports
};

Phantom generate_phantom_full(const MultibandSpec &spec, std::uint64_t seed);
DynamicImage generate_phantom(const MultibandSpec &spec, std::uint64_t seed);

// Voxels inside an ellipsoid, same membership rule as the generator.
RoiMask ellipsoid_mask(const Grid &grid, const Ellipsoid &e);

// Body-like anatomy: an outer ellipsoid with inner structure.
std::vector<Ellipsoid> default_anatomy();

// Orthonormal temporal basis whose first vector is the voxel's own signal.
StmSet true_maps(const DynamicImage &clean, Index L);

struct MaskSpec {
  std::array<Index, 2> acs{12, 1};   // PE extents (ky, kz); readout is always full
  std::array<Index, 2> lines{4, 0};  // extra lines per PE axis per frame
  std::array<Index, 2> stride{1, 1}; // per-frame shift of the line pattern
};

SamplingMask generate_mask(const Grid &grid, Index T, const MaskSpec &spec);
// Frames after which every PE location on `axis` (1 or 2) has been sampled.
Index mask_period(const Grid &grid, const MaskSpec &spec, int axis);

SensitivityMaps generate_sensitivities(const Grid &grid, Index Q, std::uint64_t seed);

KtDataset simulate_acquisition(const DynamicImage &img, const SensitivityMaps &maps, const SamplingMask &mask,
                               double sigma, std::uint64_t seed);

// Complex noise std giving the requested SNR relative to the rms of all
// (fully sampled, multicoil) k-space samples.
double sigma_for_snr(const DynamicImage &img, const SensitivityMaps &maps, double snr_db);

// Gaussian low-pass in voxels, optionally truncated to |k| <= kmax.
void lowpass(Cvec &field, const Grid &grid, double sigma_vox, double kmax);

} // namespace stmrecon
