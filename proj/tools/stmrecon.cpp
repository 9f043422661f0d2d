// stmrecon command line: one subcommand per module plus run/compare.
#include "stmrecon/calib.hpp"
#include "stmrecon/error.hpp"
#include "stmrecon/io.hpp"
#include "stmrecon/metrics.hpp"
#include "stmrecon/nullspace.hpp"
#include "stmrecon/phantom.hpp"
#include "stmrecon/pipeline.hpp"
#include "stmrecon/recon.hpp"
#include "stmrecon/stm_maps.hpp"

#include <CLI11.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <cstdlib>
#include <iostream>

using namespace stmrecon;
namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kOrdering = 1;
constexpr int kValidation = 2;
constexpr int kNumeric = 3;

void set_workers(int n)
{
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

void print(const Json &j) { std::cout << j.dump(2) << "\n"; }

SensitivityMaps unit_maps(const Grid &g)
{
  SensitivityMaps m(g, 1);
  for (auto &c : m.values) c = 1.0;
  return m;
}

// Coil maps from a file, estimated from the data, or unity for one coil.
SensitivityMaps coil_maps_for(const KtDataset &data, const std::string &path)
{
  if (!path.empty()) return read_as<SensitivityMaps>(path);
  if (data.Q == 1) return unit_maps(data.grid);
  return estimate_sensitivity_maps(data);
}

KtDataset single_coil_acs(const KtDataset &data, const SensitivityMaps &maps)
{
  return data.Q == 1 ? data : combine_acs(data, maps);
}

} // namespace

int main(int argc, char **argv)
{
  CLI::App app{"Spatiotemporal-map dynamic MRI reconstruction"};
  app.require_subcommand(1);
  int workers = 0;
  if (const char *env = std::getenv("STMRECON_WORKERS")) workers = std::atoi(env);
  app.add_option("--workers", workers, "worker threads (default: STMRECON_WORKERS or all cores)");

  // phantom gen
  auto *phantom = app.add_subcommand("phantom", "phantom generation");
  phantom->require_subcommand(1);
  auto *pgen = phantom->add_subcommand("gen", "generate a multiband phantom and optionally acquire it");
  std::string spec_path, out_dir, mask_path;
  std::uint64_t seed = 1;
  Index coils = 1;
  double snr = -1;
  pgen->add_option("--spec", spec_path, "phantom spec JSON")->required()->check(CLI::ExistingFile);
  pgen->add_option("--seed", seed);
  pgen->add_option("--out", out_dir)->required();
  pgen->add_option("--mask", mask_path, "mask spec JSON; enables acquisition")->check(CLI::ExistingFile);
  pgen->add_option("--coils", coils);
  pgen->add_option("--snr", snr, "SNR in dB, negative = noiseless");

  // stm nullspace / maps / sensitivities
  auto *stm = app.add_subcommand("stm", "calibration, nullspace and map extraction");
  stm->require_subcommand(1);
  auto *snull = stm->add_subcommand("nullspace", "nullspace projector from acs data");
  std::string data_path, coil_path, shape = "ellipsoid", method = "exact";
  int radius = 3;
  double tau = 1e-3, mu = 2.0;
  std::uint64_t sketch_seed = 7;
  snull->add_option("--data", data_path)->required();
  snull->add_option("--coil-maps", coil_path);
  snull->add_option("--kernel", shape)->check(CLI::IsMember({"ellipsoid", "rectangle"}));
  snull->add_option("--radius", radius);
  snull->add_option("--method", method)->check(CLI::IsMember({"exact", "sketch"}));
  snull->add_option("--tau", tau);
  snull->add_option("--mu", mu);
  snull->add_option("--seed", sketch_seed);
  snull->add_option("--out", out_dir)->required();

  auto *smaps = stm->add_subcommand("maps", "spatiotemporal maps from a projector");
  std::string proj_path;
  Index L = 4, coarse = 1;
  bool align = false;
  smaps->add_option("--projector", proj_path)->required();
  smaps->add_option("--data", data_path, "dataset fixing the target grid")->required();
  smaps->add_option("--L", L);
  smaps->add_option("--coarse", coarse, "evaluation grid reduction factor");
  smaps->add_flag("--align", align);
  smaps->add_option("--seed", seed);
  smaps->add_option("--out", out_dir)->required();

  auto *ssens = stm->add_subcommand("sensitivities", "coil maps, channels as frames with L = 1");
  ssens->add_option("--data", data_path)->required();
  ssens->add_option("--radius", radius);
  ssens->add_option("--tau", tau);
  ssens->add_option("--out", out_dir)->required();

  // recon
  auto *rec = app.add_subcommand("recon", "reconstruction");
  std::string recon_method, stm_path;
  double lambda = 0.01, lam_l = 0.01, lam_s = 0.01;
  int iters = 50;
  Index psf_L = 4;
  rec->add_option("method", recon_method)
    ->required()
    ->check(CLI::IsMember({"stm-tikhonov", "stm-loraks", "psf", "lps", "datashare", "zerofill"}));
  rec->add_option("--data", data_path)->required();
  rec->add_option("--maps", stm_path, "spatiotemporal maps (stm methods)");
  rec->add_option("--coil-maps", coil_path);
  rec->add_option("--lambda", lambda);
  rec->add_option("--iters", iters);
  rec->add_option("--L", psf_L, "PSF components");
  rec->add_option("--lambda-l", lam_l);
  rec->add_option("--lambda-s", lam_s);
  rec->add_option("--out", out_dir)->required();

  // metrics
  auto *met = app.add_subcommand("metrics", "evaluation");
  met->require_subcommand(1);
  std::string ref_path, roi_path, recon_path, series_path;
  auto *mnpr = met->add_subcommand("npr", "projection residual curve of a map set");
  mnpr->add_option("--reference", ref_path)->required();
  mnpr->add_option("--maps", stm_path)->required();
  mnpr->add_option("--roi", roi_path);
  mnpr->add_option("--L", L, "largest component count");
  auto *mnrmse = met->add_subcommand("nrmse", "relative error against a reference");
  mnrmse->add_option("--recon", recon_path)->required();
  mnrmse->add_option("--reference", ref_path)->required();
  mnrmse->add_option("--roi", roi_path);
  auto *meig = met->add_subcommand("eig", "normalized smallest eigenvalue maps");
  Index k = 10;
  meig->add_option("--projector", proj_path)->required();
  meig->add_option("--data", data_path, "dataset fixing the grid")->required();
  meig->add_option("--k", k);
  meig->add_option("--out", out_dir)->required();
  auto *mt = met->add_subcommand("tscore", "Welch t-score map of a block paradigm");
  Index block = 20, discard = 2;
  mt->add_option("--series", series_path)->required();
  mt->add_option("--block", block);
  mt->add_option("--discard", discard);
  mt->add_option("--out", out_dir)->required();

  // run / compare
  auto *runc = app.add_subcommand("run", "end-to-end run from a config");
  std::string config_path;
  runc->add_option("--config", config_path)->required();
  std::string run_out;
  runc->add_option("--out", run_out, "output directory, overrides the config");
  auto *cmp = app.add_subcommand("compare", "metric deltas between two reports");
  std::string rep_a, rep_b;
  cmp->add_option("a", rep_a)->required()->check(CLI::ExistingFile);
  cmp->add_option("b", rep_b)->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }
  set_workers(workers);

  try {
    if (pgen->parsed()) {
      auto spec = phantom_spec_from_json(read_json(spec_path));
      Phantom ph = generate_phantom_full(spec, seed);
      fs::create_directories(out_dir);
      write_dataset(fs::path(out_dir) / "image", ph.image);
      write_dataset(fs::path(out_dir) / "clean", ph.clean);
      write_dataset(fs::path(out_dir) / "roi", ph.roi);
      Json info{{"frequencies", ph.frequencies}, {"notes", ph.notes}};
      if (!mask_path.empty()) {
        SamplingMask mask = generate_mask(spec.grid, spec.T, mask_spec_from_json(read_json(mask_path)));
        SensitivityMaps maps = coils == 1 ? unit_maps(spec.grid) : generate_sensitivities(spec.grid, coils, seed + 1);
        double sigma = snr >= 0 ? sigma_for_snr(ph.clean, maps, snr) : 0.0;
        write_dataset(fs::path(out_dir) / "data", simulate_acquisition(ph.image, maps, mask, sigma, seed + 2));
        write_dataset(fs::path(out_dir) / "coil_maps", maps);
        info["acceleration"] = mask.acceleration();
        info["sigma"] = sigma;
      }
      print(info);
    } else if (snull->parsed()) {
      auto data = read_as<KtDataset>(data_path);
      auto acs = single_coil_acs(data, coil_maps_for(data, coil_path));
      auto sup = build_support(parse_kernel_shape(shape), radius, data.grid.D());
      CalibGram gram = build_gram_fft(acs, sup);
      NullspaceProjector p;
      if (method == "exact") {
        p = exact_projector(gram, tau);
      } else {
        SketchConfig sk;
        sk.mu = mu;
        sk.seed = sketch_seed;
        sk.tau = tau;
        p = sketched_projector(gram, sk);
      }
      write_projector(out_dir, p, sup, data.T);
      print({{"rank", p.rank},
             {"filters", p.filters()},
             {"sketch_dim", p.sketch_dim},
             {"residual", filter_annihilation_residual(p, gram.matrix)}});
    } else if (smaps->parsed()) {
      auto lp = read_projector(proj_path);
      auto data = read_as<KtDataset>(data_path);
      Grid eval = coarse > 1 ? coarse_grid(data.grid, coarse, lp.support) : data.grid;
      ExtractOptions opt;
      opt.L = L;
      opt.seed = seed;
      opt.align = align;
      ExtractStats st;
      StmSet s = maps_from_projector(lp.projector, lp.support, lp.T, eval, opt, &st);
      if (eval != data.grid) s = interpolate_maps(s, data.grid);
      write_dataset(out_dir, s);
      print({{"voxels", st.voxels}, {"fallbacks", st.fallbacks}, {"mean_iterations", st.mean_iterations}});
    } else if (ssens->parsed()) {
      auto data = read_as<KtDataset>(data_path);
      SensitivityOptions so;
      so.radius = radius;
      so.tau = tau;
      write_dataset(out_dir, estimate_sensitivity_maps(data, so));
    } else if (rec->parsed()) {
      auto data = read_as<KtDataset>(data_path);
      SensitivityMaps cmaps = coil_maps_for(data, coil_path);
      const SensitivityMaps *cm = data.Q > 1 ? &cmaps : nullptr;
      DynamicImage img;
      Json info = Json::object();
      if (recon_method == "zerofill") {
        img = zero_filled(data, cm);
      } else if (recon_method == "datashare") {
        img = data_sharing(data, cm);
      } else {
        ForwardOp op(cmaps, data.mask);
        if (recon_method == "lps") {
          LpsConfig lc;
          lc.lambda_L = lam_l;
          lc.lambda_S = lam_s;
          lc.iters = iters;
          LpsResult r = solve_lps(op, data, lc);
          img = r.image;
          info = {{"iterations", r.iterations}, {"restarts", r.restarts}};
        } else {
          TemporalModel model;
          if (recon_method == "psf") {
            model = psf_basis_from_acs(single_coil_acs(data, cmaps), psf_L);
          } else {
            if (stm_path.empty()) throw ConfigError("--maps is required for stm methods");
            model = TemporalModel::from_stm(read_as<StmSet>(stm_path));
          }
          ReconConfig rc;
          rc.lambda = lambda;
          rc.iters = iters;
          rc.regularizer = recon_method == "stm-loraks" ? Regularizer::StructuredLowRank : Regularizer::Tikhonov;
          ReconResult r = rc.regularizer == Regularizer::StructuredLowRank ? solve_structured_lowrank(op, model, data, rc)
                                                                           : solve_tikhonov(op, model, data, rc);
          img = r.image;
          info = {{"iterations", r.iterations}, {"outer_iterations", r.outer_iterations}};
        }
      }
      write_dataset(out_dir, img);
      print(info);
    } else if (mnpr->parsed()) {
      auto ref = read_as<DynamicImage>(ref_path);
      auto model = TemporalModel::from_stm(read_as<StmSet>(stm_path));
      RoiMask roi;
      if (!roi_path.empty()) roi = read_as<RoiMask>(roi_path);
      print({{"npr", npr_curve(ref, model, roi_path.empty() ? nullptr : &roi, std::min(L, model.L()))}});
    } else if (mnrmse->parsed()) {
      auto a = read_as<DynamicImage>(recon_path);
      auto b = read_as<DynamicImage>(ref_path);
      RoiMask roi;
      if (!roi_path.empty()) roi = read_as<RoiMask>(roi_path);
      const RoiMask *r = roi_path.empty() ? nullptr : &roi;
      print({{"nrmse", nrmse(a, b, r)}, {"per_frame", nrmse_per_frame(a, b, r)}});
    } else if (meig->parsed()) {
      auto lp = read_projector(proj_path);
      auto data = read_as<KtDataset>(data_path);
      GramField f = compute_gram_field(lp.projector, lp.support, lp.T, data.grid);
      write_dataset(out_dir, eigenvalue_maps(f, k));
    } else if (mt->parsed()) {
      auto s = read_as<DynamicImage>(series_path);
      write_dataset(out_dir, tscore_map(s, TaskParadigm::alternating(s.T, block), discard));
    } else if (runc->parsed()) {
      RunConfig rc = load_config(config_path);
      if (!run_out.empty()) rc.output = run_out;
      Json report = run(rc);
      print(report);
      if (!report["ordering"]["holds"].get<bool>()) std::cerr << "warning: declared ordering violated\n";
    } else if (cmp->parsed()) {
      CompareResult c = compare(read_json(rep_a), read_json(rep_b));
      print(c.summary);
      return c.ordering_holds ? kOk : kOrdering;
    }
  } catch (const NumericError &e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const Error &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const Json::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  }
  return kOk;
}
