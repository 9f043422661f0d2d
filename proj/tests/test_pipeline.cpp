#include "helpers.hpp"

#include "stmrecon/error.hpp"
#include "stmrecon/pipeline.hpp"

#include <gtest/gtest.h>

using namespace stmrecon;
using namespace testing_support;

namespace {

Json tiny_config()
{
  return Json::parse(R"({
    "name": "tiny",
    "seed": 3,
    "phantom": {
      "grid": [16, 16], "T": 8, "smoothness": 2.0, "anatomy": "default",
      "regions": [
        {"whole_fov": true, "bands": [{"freq": 0.0}, {"freq": 0.125, "amp": 0.5}]},
        {"shape": {"center": [0.5, 0.5, 0.5], "radii": [0.25, 0.25, 0.5]}, "bands": [{"freq": -0.25, "amp": 0.4}]}
      ]
    },
    "acquisition": {"coils": 1, "snr_db": 30, "mask": {"acs": [6, 1], "lines": [2, 0]}},
    "kernel": {"shape": "ellipsoid", "radius": 1},
    "nullspace": {"method": "exact", "tau": 0.001},
    "maps": {"L": 2},
    "recon": {"methods": ["zerofill", "datashare", "stm-tikhonov"], "lambda": 0.01, "iters": 20},
    "metrics": {"list": ["npr", "nrmse"], "npr_L_max": 3}
  })");
}

} // namespace

TEST(Config, NegativeTauRejectedBeforeCompute)
{
  Json j = tiny_config();
  j["nullspace"]["tau"] = -1;
  EXPECT_THROW(parse_config(j), ConfigError);
}

TEST(Config, UnknownKeysAndRangesRejected)
{
  Json j = tiny_config();
  j["kernel"]["radiu"] = 2;
  EXPECT_THROW(parse_config(j), ConfigError);
  j = tiny_config();
  j["nullspace"]["mu"] = 8;
  EXPECT_THROW(parse_config(j), ConfigError);
  j = tiny_config();
  j["recon"]["methods"] = {"magic"};
  EXPECT_THROW(parse_config(j), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(Config, BundledConfigsParse)
{
  for (const char *name : {"phantom2d-A-like.json", "phantom2d-A-smoke.json", "phantom3d-B-like.json",
                           "phantom3d-B-smoke.json", "task2d-smoke.json"}) {
    RunConfig cfg = load_config(std::filesystem::path(STMRECON_CONFIG_DIR) / name);
    EXPECT_NO_THROW(cfg.validate()) << name;
  }
  RunConfig a = load_config(std::filesystem::path(STMRECON_CONFIG_DIR) / "phantom2d-A-like.json");
  EXPECT_EQ(a.phantom.grid, Grid(128, 84));
  EXPECT_EQ(a.phantom.T, 100);
  EXPECT_EQ(a.kernel_radius, 3);
  EXPECT_EQ(a.L, 4);
  EXPECT_DOUBLE_EQ(a.mu, 2.0);
}

TEST(PhantomJson, RoundTrip)
{
  RunConfig cfg = parse_config(tiny_config());
  MultibandSpec back = phantom_spec_from_json(phantom_spec_to_json(cfg.phantom));
  EXPECT_EQ(phantom_spec_to_json(back), phantom_spec_to_json(cfg.phantom));
}

TEST(Run, DeterministicModuloTimings)
{
  set_warnings_enabled(false);
  RunConfig cfg = parse_config(tiny_config());
  Json a = run(cfg), b = run(cfg);
  EXPECT_TRUE(a.contains("timings"));
  for (const char *stage : {"phantom", "acquire", "calibrate", "nullspace", "maps", "recon", "metrics"})
    EXPECT_TRUE(a["timings"].contains(stage)) << stage;
  EXPECT_EQ(strip_timings(a).dump(), strip_timings(b).dump());
  EXPECT_EQ(a["metrics"]["npr_stm"].size(), 3u);
  double zf = a["metrics"]["nrmse"]["zerofill"], stm = a["metrics"]["nrmse"]["stm-tikhonov"];
  EXPECT_GT(zf, stm);
}

TEST(Run, WritesReportAndStageTaggedErrors)
{
  set_warnings_enabled(false);
  RunConfig cfg = parse_config(tiny_config());
  cfg.output = scratch("pipeline_out");
  Json r = run(cfg);
  EXPECT_TRUE(std::filesystem::exists(cfg.output / "report.json"));
  EXPECT_EQ(strip_timings(read_json(cfg.output / "report.json")).dump(), strip_timings(r).dump());

  cfg.output.clear();
  cfg.mask.acs = {20, 1}; // larger than the 16-line grid
  try {
    run(cfg);
    FAIL() << "expected a stage error";
  } catch (const ConfigError &e) {
    EXPECT_EQ(std::string(e.what()).rfind("acquire: ", 0), 0u) << e.what();
  }
}

TEST(Compare, IdenticalOrderedAndMismatched)
{
  set_warnings_enabled(false);
  RunConfig cfg = parse_config(tiny_config());
  Json a = run(cfg);
  auto same = compare(a, a);
  EXPECT_TRUE(same.summary["diff"].empty());
  EXPECT_TRUE(same.ordering_holds);

  Json zf = a, stm = a;
  zf["metrics"]["nrmse"] = {{"zerofill", a["metrics"]["nrmse"]["zerofill"]}};
  stm["metrics"]["nrmse"] = {{"stm-tikhonov", a["metrics"]["nrmse"]["stm-tikhonov"]}};
  auto c = compare(zf, stm);
  EXPECT_TRUE(c.ordering_holds);
  bool found = false;
  for (const auto &chk : c.summary["ordering"])
    if (chk["worse"] == "zerofill" && chk["better"] == "stm-tikhonov") {
      found = true;
      EXPECT_EQ(chk["status"], "ordering holds");
    }
  EXPECT_TRUE(found);

  Json other = a;
  other["config"]["seed"] = 99;
  EXPECT_THROW(compare(a, other), ConfigError);
  other = a;
  other["config"]["phantom"]["T"] = 10;
  EXPECT_THROW(compare(a, other), ConfigError);
}
