#include "stmrecon/fft.hpp"

#include "stmrecon/error.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <tuple>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace stmrecon {

namespace {

// (dims, batch, sign, contiguous-rows flag, element stride of the batch axis)
using PlanKey = std::tuple<std::vector<Index>, Index, int, bool, Index>;

struct PlanCache {
  std::mutex mutex;
  std::map<PlanKey, fftw_plan> plans;
  ~PlanCache()
  {
    for (auto &kv : plans) fftw_destroy_plan(kv.second);
  }
};

PlanCache &cache()
{
  static PlanCache c;
  return c;
}

// stride 0 means the batch is the whole trailing axis
fftw_plan get_plan(const std::vector<Index> &dims, Index batch, int sign, bool rows = false, Index stride = 0)
{
  auto &c = cache();
  std::lock_guard<std::mutex> lock(c.mutex);
  if (stride == 0) stride = batch;
  PlanKey key{dims, batch, sign, rows, stride};
  auto it = c.plans.find(key);
  if (it != c.plans.end()) return it->second;

  std::vector<int> n(dims.begin(), dims.end());
  Index total = stride;
  for (auto d : dims) total *= d;
  auto *buf = fftw_alloc_complex(static_cast<std::size_t>(total));
  int dir = sign < 0 ? FFTW_FORWARD : FFTW_BACKWARD;
  unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  int howmany = static_cast<int>(batch), st = static_cast<int>(stride);
  fftw_plan p = rows ? fftw_plan_many_dft(1, n.data(), howmany, buf, nullptr, 1, n[0], buf, nullptr, 1, n[0], dir, flags)
                     : fftw_plan_many_dft(static_cast<int>(n.size()), n.data(), howmany, buf, nullptr, st, 1, buf,
                                          nullptr, st, 1, dir, flags);
  fftw_free(buf);
  if (!p) throw NumericError("fftw planning failed");
  c.plans.emplace(key, p);
  return p;
}

// Multiplies by scale * exp(sign * i 2 pi h x / N) per axis with h = floor(N/2),
// which maps between standard and centered frequency ordering.
void modulate(cx *data, const Grid &g, Index batch, double sign, double scale)
{
  std::array<std::vector<cx>, 3> ph;
  for (int a = 0; a < 3; ++a) {
    Index n = g[a], h = n / 2;
    ph[a].resize(static_cast<std::size_t>(n));
    for (Index x = 0; x < n; ++x) {
      Index m = (h * x) % n;
      double ang = sign * 2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(n);
      ph[a][x] = cx(std::cos(ang), std::sin(ang));
    }
  }
#pragma omp parallel for schedule(static) if (g.size() * batch > 65536)
  for (Index x = 0; x < g[0]; ++x)
    for (Index y = 0; y < g[1]; ++y) {
      cx pxy = scale * ph[0][x] * ph[1][y];
      for (Index z = 0; z < g[2]; ++z) {
        cx p = pxy * ph[2][z];
        cx *row = data + g.linear(x, y, z) * batch;
        for (Index b = 0; b < batch; ++b) row[b] *= p;
      }
    }
}

std::vector<Index> spatial_dims(const Grid &g)
{
  if (g[2] > 1) return {g[0], g[1], g[2]};
  return {g[0], g[1]};
}

} // namespace

void fft_nd(cx *data, const std::vector<Index> &dims, Index batch, int sign)
{
  if (batch < 1 || dims.empty()) return;
  int threads = 1;
#ifdef _OPENMP
  if (!omp_in_parallel()) threads = omp_get_max_threads();
#endif
  Index total = batch;
  for (auto d : dims) total *= d;
  if (threads < 2 || batch < 2 || total < 65536) {
    fftw_plan p = get_plan(dims, batch, sign);
    auto *ptr = reinterpret_cast<fftw_complex *>(data);
    fftw_execute_dft(p, ptr, ptr);
    return;
  }
  // split the interleaved batch into strided sub-batches, one per thread
  const Index parts = std::min<Index>(threads, batch);
#pragma omp parallel for schedule(static, 1) num_threads(parts)
  for (Index i = 0; i < parts; ++i) {
    Index b0 = i * batch / parts, b1 = (i + 1) * batch / parts;
    fftw_plan p = get_plan(dims, b1 - b0, sign, false, batch);
    auto *ptr = reinterpret_cast<fftw_complex *>(data + b0);
    fftw_execute_dft(p, ptr, ptr);
  }
}

void fft_rows(cx *data, Index rows, Index len, int sign)
{
  if (rows < 1 || len < 1) return;
  fftw_plan p = get_plan({len}, rows, sign, true);
  auto *ptr = reinterpret_cast<fftw_complex *>(data);
  fftw_execute_dft(p, ptr, ptr);
  double s = 1.0 / std::sqrt(static_cast<double>(len));
  for (Index i = 0; i < rows * len; ++i) data[i] *= s;
}

void fft_centered(cx *data, const Grid &g, Index batch)
{
  modulate(data, g, batch, 1.0, 1.0 / std::sqrt(static_cast<double>(g.size())));
  fft_nd(data, spatial_dims(g), batch, -1);
}

void ifft_centered(cx *data, const Grid &g, Index batch)
{
  fft_nd(data, spatial_dims(g), batch, +1);
  modulate(data, g, batch, -1.0, 1.0 / std::sqrt(static_cast<double>(g.size())));
}

} // namespace stmrecon
