#pragma once

#include "stmrecon/calib.hpp"
#include "stmrecon/nullspace.hpp"
#include "stmrecon/phantom.hpp"
#include "stmrecon/recon.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace stmrecon {

using Json = nlohmann::json;

MultibandSpec phantom_spec_from_json(const Json &j);
Json phantom_spec_to_json(const MultibandSpec &s);
MaskSpec mask_spec_from_json(const Json &j);

struct LambdaSweep {
  double min = 1e-4;
  double max = 1.0;
  int count = 0; // 0 disables the sweep

  std::vector<double> grid() const; // geometric
};

// One declared NRMSE ordering: nrmse(worse) > nrmse(better), or >= when not strict.
struct OrderingRule {
  std::string worse;
  std::string better;
  bool strict = true;
};

struct RunConfig {
  std::string name = "run";
  std::uint64_t seed = 1;
  MultibandSpec phantom;

  Index coils = 1;
  std::optional<double> snr_db;
  bool estimate_sensitivities = true; // only used when coils > 1
  MaskSpec mask;

  KernelShape kernel_shape = KernelShape::Ellipsoid;
  int kernel_radius = 3;

  NullspaceMethod nullspace_method = NullspaceMethod::Exact;
  double tau = 1e-3;
  double mu = 2.0;
  std::uint64_t sketch_seed = 7;
  bool timing_compare = false; // time both projector paths

  Index L = 4;
  Index coarse_factor = 1;
  bool align = false;
  double memory_budget_mb = 1024.0;

  std::vector<std::string> methods{"zerofill", "datashare", "stm-tikhonov"};
  ReconConfig recon;
  LambdaSweep sweep;
  Index psf_L = 0; // 0 = L
  LpsConfig lps;

  std::vector<std::string> metrics{"npr", "nrmse"};
  Index npr_L_max = 8;
  Index eig_k = 10;
  Index paradigm_block = 0; // 0 = no t-scores
  Index paradigm_discard = 2;
  int active_region = -1;   // region whose shape is the active area

  std::vector<OrderingRule> ordering;
  std::filesystem::path output;

  Json echo; // the parsed input, for the report

  // Throws ConfigError on out-of-range parameters.
  void validate() const;
};

RunConfig parse_config(const Json &j, const std::filesystem::path &base_dir = {});
RunConfig load_config(const std::filesystem::path &file);

// Executes phantom, acquisition, calibration, nullspace, maps,
// reconstruction and metrics. Timings live under "timings" only, so the rest
// of the report is reproducible for fixed seeds. Errors are rethrown with
// the stage name prefixed, keeping their type.
Json run(const RunConfig &cfg);

Json strip_timings(const Json &report);

struct CompareResult {
  Json summary;
  bool ordering_holds = true;
};

// Refuses (ConfigError) reports from different phantoms or masks.
CompareResult compare(const Json &a, const Json &b);

void write_json(const std::filesystem::path &file, const Json &j);
Json read_json(const std::filesystem::path &file);

} // namespace stmrecon
