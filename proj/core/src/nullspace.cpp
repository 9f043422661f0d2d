#include "stmrecon/nullspace.hpp"

#include "io_detail.hpp"
#include "stmrecon/error.hpp"
#include "stmrecon/rng.hpp"

#include <algorithm>
#include <cmath>

namespace stmrecon {

NullspaceMethod parse_nullspace_method(const std::string &name)
{
  if (name == "exact") return NullspaceMethod::Exact;
  if (name == "sketch" || name == "sketched") return NullspaceMethod::Sketched;
  throw ConfigError("unknown nullspace method " + name);
}

std::string nullspace_method_name(NullspaceMethod m) { return m == NullspaceMethod::Exact ? "exact" : "sketch"; }

void NullspaceProjector::validate() const
{
  if (W.rows() != W.cols()) throw InvariantError("projector is not square");
  if (hermitian_error(W) > 1e-10) throw InvariantError("projector is not Hermitian");
}

void SketchConfig::validate() const
{
  if (!allow_mu_override && (mu < 2.0 || mu > 6.0)) throw ConfigError("sketch multiplier must lie in [2, 6]");
  if (tau <= 0.0 || tau >= 1.0) throw ConfigError("tau must lie in (0, 1)");
  if (s < 0 || rank < 0 || pilot_frames < 0) throw ConfigError("negative sketch parameter");
}

RankEstimate estimate_rank(const Mat &gram, double tau_rel)
{
  if (tau_rel <= 0.0 || tau_rel >= 1.0) throw ConfigError("tau must lie in (0, 1)");
  RankEstimate r;
  if (gram.size() == 0) return r;
  RVec ev = Eigen::SelfAdjointEigenSolver<Mat>(gram, Eigen::EigenvaluesOnly).eigenvalues();
  r.spectrum.resize(static_cast<std::size_t>(ev.size()));
  for (Index i = 0; i < ev.size(); ++i) r.spectrum[i] = ev(ev.size() - 1 - i);
  double top = r.spectrum.front();
  if (top <= 0.0) return r;
  for (double v : r.spectrum) r.rank += v >= tau_rel * top ? 1 : 0;
  return r;
}

NullspaceProjector exact_projector(const Mat &gram, double tau_rel)
{
  if (tau_rel <= 0.0 || tau_rel >= 1.0) throw ConfigError("tau must lie in (0, 1)");
  const Index n = gram.rows();
  NullspaceProjector p;
  p.method = NullspaceMethod::Exact;
  p.tau = tau_rel;
  p.W = Mat::Identity(n, n);
  if (n == 0) return p;
  auto eig = hermitian_eig(gram);
  double top = eig.values(n - 1);
  if (top <= 0.0) return p;
  Index r = 0;
  for (Index i = 0; i < n; ++i) r += eig.values(i) >= tau_rel * top ? 1 : 0;
  p.rank = r;
  const Mat V = eig.vectors.rightCols(r);
  p.W.noalias() -= V * V.adjoint();
  p.W = 0.5 * (p.W + p.W.adjoint()).eval();
  return p;
}

Index pilot_rank(const CalibGram &g, double tau_rel, Index pilot_frames)
{
  const Index T = g.T, L = g.support.size();
  Index tp = pilot_frames > 0 ? std::min(pilot_frames, T) : std::min(T, std::max<Index>(2, T / 5));
  Mat sub = g.matrix.topLeftCorner(tp * L, tp * L);
  Index rp = estimate_rank(sub, tau_rel).rank;
  Index r = (rp * T + tp - 1) / tp;
  Index cap = std::min(g.rows, L * T);
  return std::max<Index>(std::min(r, cap), rp > 0 ? 1 : 0);
}

namespace {

NullspaceProjector sketch_with(const Mat &gram, Index s, const SketchConfig &cfg, bool fixed_s)
{
  const Index n = gram.rows();
  CounterRng rng(cfg.seed, 0x5e7c);
  while (true) {
    s = std::min(s, n);
    // complex Gaussian sketch with variance 1/s per entry
    Mat phi(s, n);
    double scale = 1.0 / std::sqrt(double(s));
    for (Index j = 0; j < n; ++j)
      for (Index i = 0; i < s; ++i) phi(i, j) = scale * rng.cnormal(static_cast<std::uint64_t>(j * n + i));
    Mat Y = phi * gram;

    auto eig = hermitian_eig(Y * Y.adjoint());
    RVec sig(s);
    for (Index i = 0; i < s; ++i) sig(i) = std::sqrt(std::max(0.0, eig.values(s - 1 - i)));

    NullspaceProjector p;
    p.method = NullspaceMethod::Sketched;
    p.tau = cfg.tau;
    p.sketch_dim = s;
    p.W = Mat::Identity(n, n);
    if (sig(0) <= 0.0) return p;

    Index refined = 0;
    for (Index i = 0; i < s; ++i) refined += sig(i) >= cfg.tau * sig(0) ? 1 : 0;
    Index r = cfg.rank > 0 ? cfg.rank : refined;
    if (r >= s && s < n) {
      if (fixed_s || cfg.rank > 0) throw ConfigError("sketch dimension must exceed the rank estimate");
      s *= 2;
      continue;
    }
    r = std::min(r, s);
    // right singular vectors of Y: Y^H U_r Sigma_r^{-1}
    Mat Ur(s, r);
    for (Index i = 0; i < r; ++i) Ur.col(i) = eig.vectors.col(s - 1 - i) / sig(i);
    Mat Vt = orthonormalize(Y.adjoint() * Ur);
    p.rank = r;
    p.W.noalias() -= Vt * Vt.adjoint();
    p.W = 0.5 * (p.W + p.W.adjoint()).eval();
    return p;
  }
}

} // namespace

NullspaceProjector sketched_projector(const Mat &gram, const SketchConfig &cfg)
{
  cfg.validate();
  if (cfg.rank == 0 && cfg.s == 0) throw ConfigError("sketch of a bare matrix needs a rank or sketch dimension");
  if (cfg.s > 0 && cfg.rank > 0 && cfg.s <= cfg.rank) throw ConfigError("sketch dimension must exceed the rank");
  Index s = cfg.s > 0 ? cfg.s : static_cast<Index>(std::ceil(cfg.mu * double(cfg.rank)));
  if (gram.rows() == 0) return {};
  return sketch_with(gram, std::max<Index>(s, 1), cfg, cfg.s > 0);
}

NullspaceProjector sketched_projector(const CalibGram &g, const SketchConfig &cfg)
{
  cfg.validate();
  if (cfg.rank > 0 || cfg.s > 0) return sketched_projector(g.matrix, cfg);
  Index r = pilot_rank(g, cfg.tau, cfg.pilot_frames);
  Index s = std::max<Index>(static_cast<Index>(std::ceil(cfg.mu * double(std::max<Index>(r, 1)))), 2);
  return sketch_with(g.matrix, s, cfg, false);
}

double filter_annihilation_residual(const NullspaceProjector &p, const Mat &gram)
{
  if (p.W.rows() != gram.rows()) throw ShapeError("projector and gram differ in size");
  double R = double(p.filters());
  double tg = gram.trace().real();
  if (R <= 0.0 || tg <= 0.0) return 0.0;
  double tgw = (gram.cwiseProduct(p.W.transpose())).sum().real();
  return std::sqrt(std::max(0.0, tgw) / (tg * R));
}

double filter_annihilation_residual(const NullspaceProjector &p, const KtDataset &acs, const KernelSupport &support)
{
  return filter_annihilation_residual(p, build_gram_fft(acs, support).matrix);
}

void write_projector(const std::filesystem::path &dir, const NullspaceProjector &p, const KernelSupport &support,
                     Index T)
{
  using namespace detail;
  p.validate();
  if (p.W.rows() != support.size() * T) throw ShapeError("projector size does not match support and frames");
  auto d = prepare_dir(dir);
  ArrayDesc a{"W", "complex128", {p.W.rows(), p.W.cols()}, {"row", "col"}};
  const Mat rowmajor = p.W.transpose();
  write_complex(d, a, rowmajor.data());
  json offsets = json::array();
  for (const auto &o : support.offsets) offsets.push_back(o);
  json m{{"version", 1},
         {"kind", "projector"},
         {"dtype", a.dtype},
         {"dims", a.dims},
         {"axes", a.axes},
         {"arrays", json::array({array_entry(a)})},
         {"rank", p.rank},
         {"method", nullspace_method_name(p.method)},
         {"tau", p.tau},
         {"sketch_dim", p.sketch_dim},
         {"frames", T},
         {"kernel", {{"shape", kernel_shape_name(support.shape)}, {"radius", support.radius}, {"D", support.D},
                     {"offsets", offsets}}}};
  write_manifest(d, m);
}

LoadedProjector read_projector(const std::filesystem::path &dir)
{
  using namespace detail;
  json m = read_manifest(dir);
  if (m["kind"] != "projector") throw FormatError("kind mismatch: expected projector");
  LoadedProjector out;
  try {
    const auto &k = m.at("kernel");
    out.support = build_support(parse_kernel_shape(k.at("shape").get<std::string>()), k.at("radius").get<int>(),
                                k.at("D").get<int>());
    out.T = m.at("frames").get<Index>();
    auto dims = m.at("dims").get<std::vector<Index>>();
    if (dims.size() != 2 || dims[0] != dims[1] || dims[0] != out.support.size() * out.T) {
      throw FormatError("projector extents disagree with kernel and frames");
    }
    Mat buf(dims[1], dims[0]);
    read_complex(dir, m, "W", dims, buf.data());
    out.projector.W = buf.transpose();
    out.projector.rank = m.at("rank").get<Index>();
    out.projector.method = parse_nullspace_method(m.at("method").get<std::string>());
    out.projector.tau = m.at("tau").get<double>();
    out.projector.sketch_dim = m.at("sketch_dim").get<Index>();
  } catch (const json::exception &e) {
    throw FormatError(std::string("malformed projector manifest: ") + e.what());
  }
  out.projector.validate();
  return out;
}

} // namespace stmrecon
