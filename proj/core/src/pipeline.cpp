#include "stmrecon/pipeline.hpp"

#include "stmrecon/error.hpp"
#include "stmrecon/io.hpp"
#include "stmrecon/metrics.hpp"
#include "stmrecon/stm_maps.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

namespace stmrecon {

namespace fs = std::filesystem;

namespace {

template <class T> T get_or(const Json &j, const char *key, T def)
{
  if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return def;
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception &e) {
    throw ConfigError(std::string("field '") + key + "': " + e.what());
  }
}

void check_keys(const Json &j, const std::set<std::string> &allowed, const std::string &where)
{
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) throw ConfigError("unknown field '" + it.key() + "' in " + where);
}

Ellipsoid ellipsoid_from_json(const Json &j)
{
  check_keys(j, {"center", "radii", "value"}, "ellipsoid");
  Ellipsoid e;
  e.center = get_or(j, "center", e.center);
  e.radii = get_or(j, "radii", e.radii);
  e.value = get_or(j, "value", e.value);
  return e;
}

Json ellipsoid_to_json(const Ellipsoid &e) { return {{"center", e.center}, {"radii", e.radii}, {"value", e.value}}; }

const std::set<std::string> kMethods{"zerofill", "datashare", "stm-tikhonov", "stm-loraks", "psf", "lps"};
const std::set<std::string> kMetrics{"npr", "nrmse", "eig", "tscore"};

double seconds_since(std::chrono::steady_clock::time_point t0)
{
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Runs f, records its wall time and prefixes any error with the stage name.
template <class F> void stage(const char *name, Json &timings, F &&f)
{
  auto t0 = std::chrono::steady_clock::now();
  auto tag = [&](const std::exception &e) { return std::string(name) + ": " + e.what(); };
  try {
    f();
  } catch (const ConfigError &e) {
    throw ConfigError(tag(e));
  } catch (const ShapeError &e) {
    throw ShapeError(tag(e));
  } catch (const FormatError &e) {
    throw FormatError(tag(e));
  } catch (const InvariantError &e) {
    throw InvariantError(tag(e));
  } catch (const IoError &e) {
    throw IoError(tag(e));
  } catch (const NumericError &e) {
    throw NumericError(tag(e));
  }
  timings[name] = timings.value(name, 0.0) + seconds_since(t0);
}

DynamicImage best_of(const std::map<double, std::pair<double, DynamicImage>> &runs, double &lambda, double &err)
{
  const DynamicImage *img = nullptr;
  err = INFINITY;
  for (const auto &[lam, r] : runs) {
    if (r.first < err) {
      err = r.first;
      lambda = lam;
      img = &r.second;
    }
  }
  return *img;
}

Json vec_json(const std::vector<double> &v) { return Json(v); }

} // namespace

MultibandSpec phantom_spec_from_json(const Json &j)
{
  check_keys(j, {"grid", "T", "j_max", "exact_mode", "smoothness", "field_kmax", "amplitude_variation",
                 "frequency_spread", "noise_sigma", "anatomy", "regions"},
             "phantom");
  MultibandSpec s;
  auto dims = get_or(j, "grid", std::vector<Index>{32, 32, 1});
  if (dims.size() < 2 || dims.size() > 3) throw ConfigError("phantom grid needs two or three extents");
  s.grid = Grid(dims[0], dims[1], dims.size() == 3 ? dims[2] : 1);
  s.T = get_or(j, "T", s.T);
  s.j_max = get_or(j, "j_max", s.j_max);
  s.exact_mode = get_or(j, "exact_mode", s.exact_mode);
  s.smoothness = get_or(j, "smoothness", s.smoothness);
  s.field_kmax = get_or(j, "field_kmax", s.field_kmax);
  s.amplitude_variation = get_or(j, "amplitude_variation", s.amplitude_variation);
  s.frequency_spread = get_or(j, "frequency_spread", s.frequency_spread);
  s.noise_sigma = get_or(j, "noise_sigma", s.noise_sigma);
  if (j.contains("anatomy")) {
    const Json &a = j.at("anatomy");
    if (a.is_string()) {
      if (a == "default") s.anatomy = default_anatomy();
      else if (a != "none") throw ConfigError("anatomy must be \"default\", \"none\" or a list of ellipsoids");
    } else if (a.is_array()) {
      for (const auto &e : a) s.anatomy.push_back(ellipsoid_from_json(e));
    } else {
      throw ConfigError("anatomy must be \"default\", \"none\" or a list of ellipsoids");
    }
  }
  for (const auto &rj : j.value("regions", Json::array())) {
    check_keys(rj, {"whole_fov", "shape", "bands"}, "region");
    Region r;
    r.whole_fov = get_or(rj, "whole_fov", false);
    if (rj.contains("shape")) r.shape = ellipsoid_from_json(rj.at("shape"));
    for (const auto &bj : rj.value("bands", Json::array())) {
      check_keys(bj, {"freq", "amp", "phase", "waveform", "block"}, "band");
      Band b;
      b.freq = get_or(bj, "freq", b.freq);
      b.amp = get_or(bj, "amp", b.amp);
      b.phase = get_or(bj, "phase", b.phase);
      b.waveform = get_or(bj, "waveform", b.waveform);
      b.block = get_or(bj, "block", b.block);
      r.bands.push_back(b);
    }
    s.regions.push_back(r);
  }
  return s;
}

Json phantom_spec_to_json(const MultibandSpec &s)
{
  Json j{{"grid", s.grid.dims},
         {"T", s.T},
         {"j_max", s.j_max},
         {"exact_mode", s.exact_mode},
         {"smoothness", s.smoothness},
         {"field_kmax", s.field_kmax},
         {"amplitude_variation", s.amplitude_variation},
         {"frequency_spread", s.frequency_spread},
         {"noise_sigma", s.noise_sigma}};
  j["anatomy"] = Json::array();
  for (const auto &e : s.anatomy) j["anatomy"].push_back(ellipsoid_to_json(e));
  j["regions"] = Json::array();
  for (const auto &r : s.regions) {
    Json rj{{"whole_fov", r.whole_fov}, {"shape", ellipsoid_to_json(r.shape)}, {"bands", Json::array()}};
    for (const auto &b : r.bands)
      rj["bands"].push_back(
        {{"freq", b.freq}, {"amp", b.amp}, {"phase", b.phase}, {"waveform", b.waveform}, {"block", b.block}});
    j["regions"].push_back(rj);
  }
  return j;
}

MaskSpec mask_spec_from_json(const Json &j)
{
  check_keys(j, {"acs", "lines", "stride"}, "mask");
  MaskSpec m;
  m.acs = get_or(j, "acs", m.acs);
  m.lines = get_or(j, "lines", m.lines);
  m.stride = get_or(j, "stride", m.stride);
  return m;
}

std::vector<double> LambdaSweep::grid() const
{
  std::vector<double> out;
  if (count <= 0) return out;
  if (count == 1) return {min};
  for (int i = 0; i < count; ++i) out.push_back(min * std::pow(max / min, double(i) / double(count - 1)));
  return out;
}

void RunConfig::validate() const
{
  phantom.grid.validate();
  if (phantom.T < 2) throw ConfigError("phantom needs at least two frames");
  if (coils < 1) throw ConfigError("coil count must be positive");
  if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("tau must lie in (0, 1)");
  if (!(mu >= 2.0 && mu <= 6.0)) throw ConfigError("mu must lie in [2, 6]");
  if (kernel_radius < 1) throw ConfigError("kernel radius must be >= 1");
  if (L < 1 || L > phantom.T) throw ConfigError("L must lie in [1, T]");
  if (psf_L < 0 || psf_L > phantom.T) throw ConfigError("psf_L must lie in [0, T]");
  if (coarse_factor < 1) throw ConfigError("coarse factor must be >= 1");
  if (!(memory_budget_mb > 0)) throw ConfigError("memory budget must be positive");
  if (npr_L_max < 1 || npr_L_max > phantom.T) throw ConfigError("npr_L_max must lie in [1, T]");
  if (eig_k < 1 || eig_k > phantom.T) throw ConfigError("eig_k must lie in [1, T]");
  if (sweep.count < 0 || (sweep.count > 0 && !(sweep.min > 0 && sweep.max >= sweep.min)))
    throw ConfigError("lambda sweep needs 0 < min <= max");
  for (const auto &m : methods)
    if (!kMethods.count(m)) throw ConfigError("unknown recon method " + m);
  for (const auto &m : metrics)
    if (!kMetrics.count(m)) throw ConfigError("unknown metric " + m);
  bool want_t = std::find(metrics.begin(), metrics.end(), "tscore") != metrics.end();
  if (want_t) {
    if (paradigm_block < 1) throw ConfigError("tscore needs paradigm.block");
    if (active_region < 0 || active_region >= static_cast<int>(phantom.regions.size()))
      throw ConfigError("tscore needs paradigm.region naming a phantom region");
  }
  for (const auto &r : ordering)
    if (!kMethods.count(r.worse) || !kMethods.count(r.better)) throw ConfigError("ordering names an unknown method");
  recon.validate();
  if (lps.lambda_L < 0 || lps.lambda_S < 0 || lps.iters < 1) throw ConfigError("invalid L+S settings");
}

RunConfig parse_config(const Json &j, const fs::path &base_dir)
{
  check_keys(j, {"name", "seed", "phantom", "acquisition", "kernel", "nullspace", "maps", "recon", "metrics",
                 "paradigm", "ordering", "output"},
             "config");
  RunConfig c;
  c.echo = j;
  c.name = get_or(j, "name", c.name);
  c.seed = get_or(j, "seed", c.seed);

  if (!j.contains("phantom")) throw ConfigError("config needs a phantom");
  const Json &pj = j.at("phantom");
  if (pj.is_string()) {
    fs::path p = pj.get<std::string>();
    if (p.is_relative()) p = base_dir / p;
    if (!fs::exists(p)) throw ConfigError("phantom spec " + p.string() + " does not exist");
    c.phantom = phantom_spec_from_json(read_json(p));
    c.echo["phantom"] = phantom_spec_to_json(c.phantom);
  } else {
    c.phantom = phantom_spec_from_json(pj);
  }

  Json aj = j.value("acquisition", Json::object());
  check_keys(aj, {"coils", "snr_db", "sensitivities", "mask"}, "acquisition");
  c.coils = get_or(aj, "coils", c.coils);
  if (aj.contains("snr_db") && !aj["snr_db"].is_null()) c.snr_db = aj["snr_db"].get<double>();
  std::string sens = get_or<std::string>(aj, "sensitivities", "estimate");
  if (sens != "estimate" && sens != "true") throw ConfigError("sensitivities must be \"estimate\" or \"true\"");
  c.estimate_sensitivities = sens == "estimate";
  if (aj.contains("mask")) c.mask = mask_spec_from_json(aj["mask"]);

  Json kj = j.value("kernel", Json::object());
  check_keys(kj, {"shape", "radius"}, "kernel");
  c.kernel_shape = parse_kernel_shape(get_or<std::string>(kj, "shape", "ellipsoid"));
  c.kernel_radius = get_or(kj, "radius", c.kernel_radius);

  Json nj = j.value("nullspace", Json::object());
  check_keys(nj, {"method", "tau", "mu", "seed", "timing_compare"}, "nullspace");
  c.nullspace_method = parse_nullspace_method(get_or<std::string>(nj, "method", "exact"));
  c.tau = get_or(nj, "tau", c.tau);
  c.mu = get_or(nj, "mu", c.mu);
  c.sketch_seed = get_or(nj, "seed", c.sketch_seed);
  c.timing_compare = get_or(nj, "timing_compare", c.timing_compare);

  Json mj = j.value("maps", Json::object());
  check_keys(mj, {"L", "coarse_factor", "align", "memory_budget_mb"}, "maps");
  c.L = get_or(mj, "L", c.L);
  c.coarse_factor = get_or(mj, "coarse_factor", c.coarse_factor);
  c.align = get_or(mj, "align", c.align);
  c.memory_budget_mb = get_or(mj, "memory_budget_mb", c.memory_budget_mb);

  Json rj = j.value("recon", Json::object());
  check_keys(rj, {"methods", "lambda", "lambda_sweep", "iters", "tol", "loraks", "psf_L", "lps"}, "recon");
  c.methods = get_or(rj, "methods", c.methods);
  c.recon.lambda = get_or(rj, "lambda", 0.01);
  c.recon.iters = get_or(rj, "iters", c.recon.iters);
  c.recon.tol = get_or(rj, "tol", c.recon.tol);
  if (rj.contains("lambda_sweep")) {
    const Json &sj = rj["lambda_sweep"];
    check_keys(sj, {"min", "max", "count"}, "lambda_sweep");
    c.sweep.min = get_or(sj, "min", c.sweep.min);
    c.sweep.max = get_or(sj, "max", c.sweep.max);
    c.sweep.count = get_or(sj, "count", 5);
  }
  Json lj = rj.value("loraks", Json::object());
  check_keys(lj, {"radius", "rank", "rank_fraction", "outer_iters", "outer_tol"}, "loraks");
  c.recon.loraks_radius = get_or(lj, "radius", c.recon.loraks_radius);
  c.recon.loraks_rank = get_or(lj, "rank", c.recon.loraks_rank);
  c.recon.rank_fraction = get_or(lj, "rank_fraction", c.recon.rank_fraction);
  c.recon.outer_iters = get_or(lj, "outer_iters", c.recon.outer_iters);
  c.recon.outer_tol = get_or(lj, "outer_tol", c.recon.outer_tol);
  c.psf_L = get_or(rj, "psf_L", c.psf_L);
  Json sj = rj.value("lps", Json::object());
  check_keys(sj, {"lambda_L", "lambda_S", "iters", "tol"}, "lps");
  c.lps.lambda_L = get_or(sj, "lambda_L", c.lps.lambda_L);
  c.lps.lambda_S = get_or(sj, "lambda_S", c.lps.lambda_S);
  c.lps.iters = get_or(sj, "iters", c.lps.iters);
  c.lps.tol = get_or(sj, "tol", c.lps.tol);

  if (j.contains("metrics")) {
    const Json &xj = j["metrics"];
    if (xj.is_array()) {
      c.metrics = xj.get<std::vector<std::string>>();
    } else {
      check_keys(xj, {"list", "npr_L_max", "eig_k"}, "metrics");
      c.metrics = get_or(xj, "list", c.metrics);
      c.npr_L_max = get_or(xj, "npr_L_max", c.npr_L_max);
      c.eig_k = get_or(xj, "eig_k", c.eig_k);
    }
  }
  c.npr_L_max = std::min(c.npr_L_max, c.phantom.T);
  c.eig_k = std::min(c.eig_k, c.phantom.T);

  Json tj = j.value("paradigm", Json::object());
  check_keys(tj, {"block", "discard", "region"}, "paradigm");
  c.paradigm_block = get_or(tj, "block", c.paradigm_block);
  c.paradigm_discard = get_or(tj, "discard", c.paradigm_discard);
  c.active_region = get_or(tj, "region", c.active_region);

  if (j.contains("ordering")) {
    for (const auto &oj : j["ordering"]) {
      check_keys(oj, {"worse", "better", "strict"}, "ordering rule");
      c.ordering.push_back({oj.at("worse").get<std::string>(), oj.at("better").get<std::string>(),
                            get_or(oj, "strict", true)});
    }
  } else {
    c.ordering = {{"zerofill", "datashare", true},
                  {"datashare", "stm-tikhonov", true},
                  {"stm-tikhonov", "stm-loraks", false}};
  }
  if (j.contains("output")) {
    fs::path o = j["output"].get<std::string>();
    c.output = o.is_relative() && !base_dir.empty() ? base_dir / o : o;
  }
  c.validate();
  return c;
}

RunConfig load_config(const fs::path &file)
{
  if (!fs::exists(file)) throw ConfigError("config " + file.string() + " does not exist");
  return parse_config(read_json(file), file.parent_path());
}

void write_json(const fs::path &file, const Json &j)
{
  std::ofstream f(file);
  if (!f) throw IoError("cannot write " + file.string());
  f << j.dump(2) << "\n";
}

Json read_json(const fs::path &file)
{
  std::ifstream f(file);
  if (!f) throw IoError("cannot read " + file.string());
  try {
    return Json::parse(f);
  } catch (const Json::exception &e) {
    throw FormatError(file.string() + ": " + e.what());
  }
}

Json run(const RunConfig &cfg)
{
  cfg.validate();
  Json report;
  Json timings = Json::object();
  report["name"] = cfg.name;
  report["config"] = cfg.echo;
  report["seeds"] = {{"phantom", cfg.seed},
                     {"sensitivities", cfg.seed + 1},
                     {"noise", cfg.seed + 2},
                     {"sketch", cfg.sketch_seed},
                     {"maps", cfg.seed + 3}};
  const bool write = !cfg.output.empty();
  if (write) fs::create_directories(cfg.output);
  auto want = [&](const std::vector<std::string> &list, const char *name) {
    return std::find(list.begin(), list.end(), name) != list.end();
  };

  Phantom ph;
  stage("phantom", timings, [&] {
    ph = generate_phantom_full(cfg.phantom, cfg.seed);
    report["phantom"] = {{"frequencies", ph.frequencies}, {"notes", ph.notes}, {"roi_voxels", ph.roi.count()}};
  });
  const Grid g = cfg.phantom.grid;
  const Index T = cfg.phantom.T;

  SensitivityMaps truth_maps;
  SamplingMask mask;
  KtDataset data;
  double sigma = 0.0;
  stage("acquire", timings, [&] {
    if (cfg.coils == 1) {
      truth_maps = SensitivityMaps(g, 1);
      for (auto &c : truth_maps.values) c = 1.0;
    } else {
      truth_maps = generate_sensitivities(g, cfg.coils, cfg.seed + 1);
    }
    mask = generate_mask(g, T, cfg.mask);
    if (cfg.snr_db) sigma = sigma_for_snr(ph.clean, truth_maps, *cfg.snr_db);
    data = simulate_acquisition(ph.image, truth_maps, mask, sigma, cfg.seed + 2);
    report["acquisition"] = {{"acceleration", mask.acceleration()}, {"samples", mask.total()}, {"sigma", sigma}};
  });

  SensitivityMaps maps;
  KtDataset acs;
  KernelSupport support;
  CalibGram gram;
  stage("calibrate", timings, [&] {
    if (cfg.coils == 1) {
      maps = truth_maps;
      acs = data;
    } else {
      maps = cfg.estimate_sensitivities ? estimate_sensitivity_maps(data) : truth_maps;
      acs = combine_acs(data, maps);
    }
    support = build_support(cfg.kernel_shape, cfg.kernel_radius, g.D());
    gram = build_gram_fft(acs, support);
    report["calibration"] = {{"kernel_size", support.size()}, {"columns", gram.matrix.cols()}, {"rows", gram.rows}};
  });

  NullspaceProjector proj;
  stage("nullspace", timings, [&] {
    SketchConfig sk;
    sk.mu = cfg.mu;
    sk.seed = cfg.sketch_seed;
    sk.tau = cfg.tau;
    double t_exact = -1, t_sketch = -1;
    if (cfg.nullspace_method == NullspaceMethod::Exact || cfg.timing_compare) {
      auto t0 = std::chrono::steady_clock::now();
      proj = exact_projector(gram, cfg.tau);
      t_exact = seconds_since(t0);
    }
    if (cfg.nullspace_method == NullspaceMethod::Sketched || cfg.timing_compare) {
      auto t0 = std::chrono::steady_clock::now();
      NullspaceProjector s = sketched_projector(gram, sk);
      t_sketch = seconds_since(t0);
      if (cfg.nullspace_method == NullspaceMethod::Sketched) proj = std::move(s);
    }
    report["nullspace"] = {{"method", nullspace_method_name(proj.method)},
                           {"rank", proj.rank},
                           {"sketch_dim", proj.sketch_dim},
                           {"residual", filter_annihilation_residual(proj, gram.matrix)}};
    if (cfg.timing_compare) {
      timings["projector_exact"] = t_exact;
      timings["projector_sketch"] = t_sketch;
      timings["projector_speedup"] = t_sketch > 0 ? t_exact / t_sketch : 0.0;
    }
  });

  const Index L_ext = want(cfg.metrics, "npr") ? std::max(cfg.L, cfg.npr_L_max) : cfg.L;
  StmSet stm_all;
  Grid eval;
  bool streaming = false;
  stage("maps", timings, [&] {
    eval = cfg.coarse_factor > 1 ? coarse_grid(g, cfg.coarse_factor, support) : g;
    ExtractOptions opt;
    opt.L = L_ext;
    opt.seed = cfg.seed + 3;
    double bytes = double(eval.size()) * double(T * T) * 16.0;
    streaming = bytes > cfg.memory_budget_mb * 1048576.0;
    ExtractStats st;
    StmSet coarse;
    if (streaming) {
      coarse = maps_from_projector(proj, support, T, eval, opt, &st);
    } else {
      GramField field = compute_gram_field(proj, support, T, eval);
      coarse = extract_maps(field, opt, &st);
    }
    if (cfg.align) align_maps(coarse);
    stm_all = eval == g ? std::move(coarse) : interpolate_maps(coarse, g);
    report["maps"] = {{"L", cfg.L},
                      {"extracted", L_ext},
                      {"eval_grid", eval.dims},
                      {"streaming", streaming},
                      {"fallbacks", st.fallbacks},
                      {"max_iterations", st.max_iterations},
                      {"mean_iterations", st.mean_iterations}};
  });
  TemporalModel stm_model = TemporalModel::from_stm(stm_all).truncated(cfg.L);

  ForwardOp op(maps, mask);
  const RoiMask *roi = &ph.roi;
  std::map<std::string, DynamicImage> images;
  Json nrmse_j = Json::object(), per_frame = Json::object(), lambdas = Json::object(), solver = Json::object();
  std::vector<double> sweep = cfg.sweep.grid();
  if (sweep.empty()) sweep = {cfg.recon.lambda};

  stage("recon", timings, [&] {
    for (const auto &m : cfg.methods) {
      if (m == "zerofill") {
        images[m] = zero_filled(data, cfg.coils > 1 ? &maps : nullptr);
      } else if (m == "datashare") {
        images[m] = data_sharing(data, cfg.coils > 1 ? &maps : nullptr);
      } else if (m == "lps") {
        LpsResult r = solve_lps(op, data, cfg.lps);
        images[m] = r.image;
        solver[m] = {{"iterations", r.iterations}, {"restarts", r.restarts}};
      } else {
        TemporalModel model = stm_model;
        ReconConfig rc = cfg.recon;
        rc.regularizer = m == "stm-loraks" ? Regularizer::StructuredLowRank : Regularizer::Tikhonov;
        if (m == "psf") model = psf_basis_from_acs(acs, cfg.psf_L > 0 ? cfg.psf_L : cfg.L);
        std::map<double, std::pair<double, DynamicImage>> runs;
        Json sweep_j = Json::array();
        int iters = 0;
        for (double lam : sweep) {
          rc.lambda = lam;
          ReconResult r = rc.regularizer == Regularizer::StructuredLowRank ? solve_structured_lowrank(op, model, data, rc)
                                                                           : solve_tikhonov(op, model, data, rc);
          double e = nrmse(r.image, ph.clean, roi);
          sweep_j.push_back({{"lambda", lam}, {"nrmse", e}});
          runs[lam] = {e, std::move(r.image)};
          iters = r.iterations;
        }
        double lam = 0, err = 0;
        images[m] = best_of(runs, lam, err);
        lambdas[m] = {{"best", lam}, {"sweep", sweep_j}};
        solver[m] = {{"iterations", iters}};
      }
    }
  });

  Json metrics = Json::object();
  stage("metrics", timings, [&] {
    if (want(cfg.metrics, "nrmse")) {
      for (const auto &[m, img] : images) {
        nrmse_j[m] = nrmse(img, ph.clean, roi);
        per_frame[m] = vec_json(nrmse_per_frame(img, ph.clean, roi));
      }
      metrics["nrmse"] = nrmse_j;
      metrics["nrmse_per_frame"] = per_frame;
      metrics["lambda"] = lambdas;
      metrics["solver"] = solver;
    }
    if (want(cfg.metrics, "npr")) {
      TemporalModel full = TemporalModel::from_stm(stm_all);
      TemporalModel psf = psf_basis_from_image(ph.clean, cfg.npr_L_max);
      metrics["npr_stm"] = vec_json(npr_curve(ph.clean, full, roi, cfg.npr_L_max));
      metrics["npr_psf"] = vec_json(npr_curve(ph.clean, psf, roi, cfg.npr_L_max));
    }
    if (want(cfg.metrics, "eig")) {
      ImageStack eig(eval, cfg.eig_k);
      const Index chunk = 512;
      for (Index v0 = 0; v0 < eval.size(); v0 += chunk) {
        Index v1 = std::min(eval.size(), v0 + chunk);
        ImageStack part = eigenvalue_maps(gram_field_voxels(proj, support, T, eval, v0, v1), cfg.eig_k);
        std::copy(part.values.begin(), part.values.end(), eig.values.begin() + v0 * cfg.eig_k);
      }
      if (write) write_dataset(cfg.output / "eigenvalue_maps", eig);
      double smallest = 0;
      for (Index v = 0; v < eval.size(); ++v) smallest += eig.at(v, cfg.eig_k - 1);
      metrics["eig"] = {{"k", cfg.eig_k}, {"mean_smallest", smallest / double(eval.size())}};
    }
    if (want(cfg.metrics, "tscore")) {
      TaskParadigm par = TaskParadigm::alternating(T, cfg.paradigm_block);
      RoiMask active = ellipsoid_mask(g, cfg.phantom.regions[cfg.active_region].shape);
      RoiMask rest(g, false);
      for (Index v = 0; v < g.size(); ++v) rest.flags[v] = ph.roi.flags[v] && !active.flags[v];
      Json tj = Json::object();
      auto add = [&](const std::string &name, const DynamicImage &img) {
        ImageStack t = tscore_map(img, par, cfg.paradigm_discard);
        double in = masked_mean(t, active, true), out = masked_mean(t, rest, true);
        tj[name] = {{"inside", in}, {"outside", out}, {"ratio", out != 0 ? in / std::abs(out) : INFINITY}};
        if (write) write_dataset(cfg.output / ("tscore_" + name), t);
      };
      // t is unbounded on the noiseless phantom, so the reference is a fully
      // sampled scan at the same noise level
      SamplingMask all(g, T);
      all.acs = Box::full(g);
      std::fill(all.flags.begin(), all.flags.end(), std::uint8_t{1});
      KtDataset fd = simulate_acquisition(ph.image, truth_maps, all, sigma, cfg.seed + 2);
      add("fully-sampled", zero_filled(fd, cfg.coils > 1 ? &truth_maps : nullptr));
      for (const auto &[m, img] : images) add(m, img);
      metrics["tscore"] = tj;
    }
  });
  report["metrics"] = metrics;

  Json checks = Json::array();
  bool holds = true;
  for (const auto &r : cfg.ordering) {
    if (!nrmse_j.contains(r.worse) || !nrmse_j.contains(r.better)) continue;
    double a = nrmse_j[r.worse], b = nrmse_j[r.better];
    bool ok = r.strict ? a > b : a >= b;
    holds = holds && ok;
    checks.push_back({{"worse", r.worse}, {"better", r.better}, {"strict", r.strict}, {"holds", ok}});
  }
  report["ordering"] = {{"holds", holds}, {"checks", checks}};

  if (write) {
    stage("write", timings, [&] {
      write_dataset(cfg.output / "phantom", ph.clean);
      write_dataset(cfg.output / "roi", ph.roi);
      write_dataset(cfg.output / "data", data);
      write_dataset(cfg.output / "stm", stm_model.stm);
      write_projector(cfg.output / "projector", proj, support, T);
      for (const auto &[m, img] : images) write_dataset(cfg.output / ("recon_" + m), img);
    });
  }
  report["timings"] = timings;
  if (write) write_json(cfg.output / "report.json", report);
  return report;
}

Json strip_timings(const Json &report)
{
  Json r = report;
  r.erase("timings");
  return r;
}

CompareResult compare(const Json &a, const Json &b)
{
  auto section = [](const Json &r, const char *k) { return r.contains("config") ? r["config"].value(k, Json()) : Json(); };
  if (!a.contains("metrics") || !b.contains("metrics")) throw ConfigError("compare expects two run reports");
  if (section(a, "phantom") != section(b, "phantom") || section(a, "seed") != section(b, "seed"))
    throw ConfigError("reports come from different phantoms");
  if (section(a, "acquisition") != section(b, "acquisition")) throw ConfigError("reports use different acquisitions");

  CompareResult res;
  Json diffs = Json::array();
  auto delta = [&](const std::string &what, double x, double y) {
    if (x != y) diffs.push_back({{"metric", what}, {"a", x}, {"b", y}, {"delta", y - x}});
  };
  const Json &ma = a["metrics"], &mb = b["metrics"];
  Json combined = Json::object();
  for (const Json *m : {&ma, &mb})
    if (m->contains("nrmse"))
      for (auto it = (*m)["nrmse"].begin(); it != (*m)["nrmse"].end(); ++it) combined[it.key()] = it.value();
  if (ma.contains("nrmse") && mb.contains("nrmse"))
    for (auto it = ma["nrmse"].begin(); it != ma["nrmse"].end(); ++it)
      if (mb["nrmse"].contains(it.key())) delta("nrmse." + it.key(), it.value(), mb["nrmse"][it.key()]);
  for (const char *k : {"npr_stm", "npr_psf"}) {
    if (!ma.contains(k) || !mb.contains(k)) continue;
    for (std::size_t i = 0; i < std::min(ma[k].size(), mb[k].size()); ++i)
      delta(std::string(k) + "[L=" + std::to_string(i + 1) + "]", ma[k][i], mb[k][i]);
  }
  if (a.contains("timings") && b.contains("timings"))
    for (auto it = a["timings"].begin(); it != a["timings"].end(); ++it)
      if (b["timings"].contains(it.key())) delta("timing." + it.key(), it.value(), b["timings"][it.key()]);

  // declared orderings from either report, checked on the union of methods
  std::vector<OrderingRule> rules;
  for (const Json *r : {&a, &b}) {
    const Json &oj = (*r)["config"].value("ordering", Json());
    if (oj.is_array())
      for (const auto &o : oj) rules.push_back({o.at("worse"), o.at("better"), o.value("strict", true)});
  }
  if (rules.empty())
    rules = {{"zerofill", "datashare", true}, {"datashare", "stm-tikhonov", true}, {"stm-tikhonov", "stm-loraks", false},
             {"zerofill", "stm-tikhonov", true}, {"zerofill", "stm-loraks", true}};
  Json checks = Json::array();
  for (const auto &r : rules) {
    if (!combined.contains(r.worse) || !combined.contains(r.better)) continue;
    double x = combined[r.worse], y = combined[r.better];
    bool ok = r.strict ? x > y : x >= y;
    res.ordering_holds = res.ordering_holds && ok;
    checks.push_back({{"worse", r.worse},
                      {"better", r.better},
                      {"nrmse_worse", x},
                      {"nrmse_better", y},
                      {"status", ok ? "ordering holds" : "ordering violated"}});
  }
  res.summary = {{"diff", diffs}, {"ordering", checks}, {"ordering_holds", res.ordering_holds}};
  return res;
}

} // namespace stmrecon
