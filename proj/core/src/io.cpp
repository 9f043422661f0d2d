#include "stmrecon/io.hpp"

#include "io_detail.hpp"
#include "stmrecon/error.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

namespace stmrecon {

namespace fs = std::filesystem;

namespace detail {

static_assert(std::endian::native == std::endian::little, "blob I/O assumes a little-endian host");

Index element_count(const std::vector<Index> &dims)
{
  Index n = 1;
  for (auto d : dims) {
    if (d < 0) throw FormatError("negative extent");
    n *= d;
  }
  return n;
}

std::size_t dtype_size(const std::string &dtype)
{
  if (dtype == "complex64") return 8;
  if (dtype == "complex128") return 16;
  if (dtype == "float64") return 8;
  if (dtype == "int32") return 4;
  if (dtype == "uint8") return 1;
  throw FormatError("unknown dtype " + dtype);
}

fs::path prepare_dir(const fs::path &dir)
{
  fs::path abs = fs::absolute(dir);
  fs::path parent = abs.parent_path();
  if (!parent.empty() && !fs::is_directory(parent)) throw IoError("parent directory does not exist: " + parent.string());
  std::error_code ec;
  fs::create_directory(abs, ec);
  if (ec || !fs::is_directory(abs)) throw IoError("cannot create directory " + abs.string());
  return abs;
}

json array_entry(const ArrayDesc &d)
{
  return json{{"name", d.name}, {"file", d.name + ".bin"}, {"dtype", d.dtype}, {"dims", d.dims}, {"axes", d.axes}};
}

void write_manifest(const fs::path &dir, const json &manifest)
{
  std::ofstream f(dir / "manifest.json", std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write manifest in " + dir.string());
  f << manifest.dump(2) << "\n";
  if (!f) throw IoError("write failed for manifest in " + dir.string());
}

json read_manifest(const fs::path &dir)
{
  std::ifstream f(dir / "manifest.json", std::ios::binary);
  if (!f) throw FormatError("missing manifest in " + dir.string());
  json m;
  try {
    f >> m;
  } catch (const json::exception &e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  }
  if (!m.contains("version") || m["version"] != 1) throw FormatError("unsupported manifest version");
  if (!m.contains("kind") || !m.contains("arrays")) throw FormatError("manifest lacks kind or arrays");
  return m;
}

namespace {

void check_limit(const ArrayDesc &d)
{
  Index n = element_count(d.dims);
  if (n > (Index{1} << 31)) throw FormatError("array " + d.name + " exceeds 2^31 elements");
}

void write_blob(const fs::path &dir, const ArrayDesc &d, const void *bytes, std::size_t nbytes)
{
  check_limit(d);
  std::ofstream f(dir / (d.name + ".bin"), std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write blob " + d.name);
  f.write(static_cast<const char *>(bytes), static_cast<std::streamsize>(nbytes));
  if (!f) throw IoError("write failed for blob " + d.name);
}

const json &find_array(const json &m, const std::string &name)
{
  for (const auto &a : m["arrays"]) {
    if (a.value("name", "") == name) return a;
  }
  throw FormatError("manifest has no array " + name);
}

std::vector<char> read_blob(const fs::path &dir, const json &entry, const std::vector<Index> &dims,
                            std::string &dtype)
{
  dtype = entry.at("dtype").get<std::string>();
  auto declared = entry.at("dims").get<std::vector<Index>>();
  if (declared != dims) throw FormatError("array " + entry.value("name", "") + " extents disagree with manifest");
  fs::path file = dir / entry.at("file").get<std::string>();
  if (!fs::exists(file)) throw FormatError("missing blob " + file.string());
  std::size_t want = static_cast<std::size_t>(element_count(dims)) * dtype_size(dtype);
  auto have = fs::file_size(file);
  if (have != want) {
    throw FormatError("blob size mismatch for " + file.string() + " (" + std::to_string(have) + " bytes, expected " +
                      std::to_string(want) + ")");
  }
  std::vector<char> buf(want);
  std::ifstream f(file, std::ios::binary);
  f.read(buf.data(), static_cast<std::streamsize>(want));
  if (!f) throw FormatError("short read on " + file.string());
  return buf;
}

} // namespace

void write_complex(const fs::path &dir, const ArrayDesc &d, const cx *data)
{
  std::size_t n = static_cast<std::size_t>(element_count(d.dims));
  if (d.dtype == "complex64") {
    std::vector<float> buf(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
      buf[2 * i] = static_cast<float>(data[i].real());
      buf[2 * i + 1] = static_cast<float>(data[i].imag());
    }
    write_blob(dir, d, buf.data(), buf.size() * sizeof(float));
  } else if (d.dtype == "complex128") {
    write_blob(dir, d, data, n * sizeof(cx));
  } else {
    throw FormatError("not a complex dtype: " + d.dtype);
  }
}

void write_real(const fs::path &dir, const ArrayDesc &d, const double *data)
{
  write_blob(dir, d, data, static_cast<std::size_t>(element_count(d.dims)) * sizeof(double));
}

void write_bytes(const fs::path &dir, const ArrayDesc &d, const std::uint8_t *data)
{
  write_blob(dir, d, data, static_cast<std::size_t>(element_count(d.dims)));
}

void write_int32(const fs::path &dir, const ArrayDesc &d, const int *data)
{
  std::size_t n = static_cast<std::size_t>(element_count(d.dims));
  std::vector<std::int32_t> buf(data, data + n);
  write_blob(dir, d, buf.data(), n * sizeof(std::int32_t));
}

void read_complex(const fs::path &dir, const json &m, const std::string &name, const std::vector<Index> &dims, cx *out)
{
  std::string dtype;
  auto buf = read_blob(dir, find_array(m, name), dims, dtype);
  std::size_t n = static_cast<std::size_t>(element_count(dims));
  if (dtype == "complex64") {
    const auto *f = reinterpret_cast<const float *>(buf.data());
    for (std::size_t i = 0; i < n; ++i) out[i] = cx(f[2 * i], f[2 * i + 1]);
  } else if (dtype == "complex128") {
    std::memcpy(out, buf.data(), n * sizeof(cx));
  } else {
    throw FormatError("array " + name + " is not complex");
  }
}

void read_real(const fs::path &dir, const json &m, const std::string &name, const std::vector<Index> &dims,
               double *out)
{
  std::string dtype;
  auto buf = read_blob(dir, find_array(m, name), dims, dtype);
  if (dtype != "float64") throw FormatError("array " + name + " is not float64");
  std::memcpy(out, buf.data(), buf.size());
}

void read_bytes(const fs::path &dir, const json &m, const std::string &name, const std::vector<Index> &dims,
                std::uint8_t *out)
{
  std::string dtype;
  auto buf = read_blob(dir, find_array(m, name), dims, dtype);
  if (dtype != "uint8") throw FormatError("array " + name + " is not uint8");
  for (std::size_t i = 0; i < buf.size(); ++i) {
    auto b = static_cast<std::uint8_t>(buf[i]);
    if (b > 1) throw FormatError("mask array " + name + " holds a value other than 0 or 1");
    out[i] = b;
  }
}

void read_int32(const fs::path &dir, const json &m, const std::string &name, const std::vector<Index> &dims, int *out)
{
  std::string dtype;
  auto buf = read_blob(dir, find_array(m, name), dims, dtype);
  if (dtype != "int32") throw FormatError("array " + name + " is not int32");
  std::memcpy(out, buf.data(), buf.size());
}

bool has_array(const json &m, const std::string &name)
{
  for (const auto &a : m["arrays"]) {
    if (a.value("name", "") == name) return true;
  }
  return false;
}

std::vector<Index> array_dims(const json &m, const std::string &name)
{
  return find_array(m, name).at("dims").get<std::vector<Index>>();
}

} // namespace detail

namespace {

using detail::ArrayDesc;
using detail::json;

std::vector<Index> gdims(const Grid &g, std::initializer_list<Index> extra)
{
  std::vector<Index> d{g[0], g[1], g[2]};
  d.insert(d.end(), extra);
  return d;
}

json box_json(const Box &b) { return json{{"lo", b.lo}, {"hi", b.hi}}; }

Box box_from(const json &j)
{
  Box b;
  try {
    b.lo = j.at("lo").get<std::array<Index, 3>>();
    b.hi = j.at("hi").get<std::array<Index, 3>>();
  } catch (const json::exception &e) {
    throw FormatError(std::string("malformed acs_box: ") + e.what());
  }
  return b;
}

Grid grid_from(const json &m)
{
  auto d = m.at("dims").get<std::vector<Index>>();
  if (d.size() < 3) throw FormatError("manifest dims too short");
  for (int a = 0; a < 3; ++a) {
    if (d[a] < 1) throw FormatError("non-positive grid extent in manifest");
  }
  return Grid(d[0], d[1], d[2]);
}

json base_manifest(const std::string &kind, const ArrayDesc &primary)
{
  return json{{"version", 1}, {"kind", kind}, {"dtype", primary.dtype}, {"dims", primary.dims}, {"axes", primary.axes}};
}

const std::vector<std::string> kAxesK{"kx", "ky", "kz", "coil", "frame"};
const std::vector<std::string> kAxesMask{"kx", "ky", "kz", "frame"};

void write_one(const fs::path &dir, const KtDataset &ds)
{
  ds.validate();
  ArrayDesc s{"samples", "complex64", gdims(ds.grid, {ds.Q, ds.T}), kAxesK};
  ArrayDesc k{"mask", "uint8", gdims(ds.grid, {ds.T}), kAxesMask};
  detail::write_complex(dir, s, ds.samples.data());
  detail::write_bytes(dir, k, ds.mask.flags.data());
  json m = base_manifest("kt_dataset", s);
  m["arrays"] = json::array({detail::array_entry(s), detail::array_entry(k)});
  m["acs_box"] = box_json(ds.mask.acs);
  detail::write_manifest(dir, m);
}

void write_one(const fs::path &dir, const SamplingMask &mk)
{
  mk.validate();
  ArrayDesc k{"mask", "uint8", gdims(mk.grid, {mk.T}), kAxesMask};
  detail::write_bytes(dir, k, mk.flags.data());
  json m = base_manifest("sampling_mask", k);
  m["arrays"] = json::array({detail::array_entry(k)});
  m["acs_box"] = box_json(mk.acs);
  detail::write_manifest(dir, m);
}

void write_one(const fs::path &dir, const DynamicImage &im)
{
  im.validate();
  ArrayDesc a{"values", "complex64", gdims(im.grid, {im.T}), {"x", "y", "z", "frame"}};
  detail::write_complex(dir, a, im.values.data());
  json m = base_manifest("dynamic_image", a);
  m["arrays"] = json::array({detail::array_entry(a)});
  detail::write_manifest(dir, m);
}

void write_one(const fs::path &dir, const SensitivityMaps &c)
{
  c.validate();
  ArrayDesc a{"values", "complex64", gdims(c.grid, {c.Q}), {"x", "y", "z", "coil"}};
  detail::write_complex(dir, a, c.values.data());
  json m = base_manifest("sensitivity_maps", a);
  m["arrays"] = json::array({detail::array_entry(a)});
  detail::write_manifest(dir, m);
}

void write_one(const fs::path &dir, const StmSet &s)
{
  s.validate();
  ArrayDesc a{"maps", "complex128", gdims(s.grid, {s.L, s.T}), {"x", "y", "z", "component", "frame"}};
  ArrayDesc e{"eigvals", "float64", gdims(s.grid, {s.L}), {"x", "y", "z", "component"}};
  detail::write_complex(dir, a, s.maps.data());
  detail::write_real(dir, e, s.eigvals.data());
  json m = base_manifest("stm", a);
  m["arrays"] = json::array({detail::array_entry(a), detail::array_entry(e)});
  if (!s.Lx.empty()) {
    ArrayDesc l{"components_per_voxel", "int32", gdims(s.grid, {}), {"x", "y", "z"}};
    detail::write_int32(dir, l, s.Lx.data());
    m["arrays"].push_back(detail::array_entry(l));
  }
  detail::write_manifest(dir, m);
}

void write_one(const fs::path &dir, const RoiMask &r)
{
  r.validate();
  ArrayDesc a{"flags", "uint8", gdims(r.grid, {}), {"x", "y", "z"}};
  detail::write_bytes(dir, a, r.flags.data());
  json m = base_manifest("roi_mask", a);
  m["arrays"] = json::array({detail::array_entry(a)});
  detail::write_manifest(dir, m);
}

void write_one(const fs::path &dir, const ImageStack &s)
{
  s.validate();
  ArrayDesc a{"values", "float64", gdims(s.grid, {s.K}), {"x", "y", "z", "image"}};
  detail::write_real(dir, a, s.values.data());
  json m = base_manifest("image_stack", a);
  m["arrays"] = json::array({detail::array_entry(a)});
  detail::write_manifest(dir, m);
}

Index dim_at(const json &m, std::size_t i)
{
  auto d = m.at("dims").get<std::vector<Index>>();
  if (d.size() <= i) throw FormatError("manifest dims too short");
  if (d[i] < 1) throw FormatError("non-positive extent in manifest");
  return d[i];
}

KtDataset read_kt(const fs::path &dir, const json &m)
{
  Grid g = grid_from(m);
  KtDataset ds(g, dim_at(m, 3), dim_at(m, 4));
  detail::read_complex(dir, m, "samples", gdims(g, {ds.Q, ds.T}), ds.samples.data());
  detail::read_bytes(dir, m, "mask", gdims(g, {ds.T}), ds.mask.flags.data());
  if (!m.contains("acs_box")) throw FormatError("kt_dataset manifest lacks acs_box");
  ds.mask.acs = box_from(m["acs_box"]);
  ds.validate();
  return ds;
}

SamplingMask read_mask(const fs::path &dir, const json &m)
{
  Grid g = grid_from(m);
  SamplingMask mk(g, dim_at(m, 3));
  detail::read_bytes(dir, m, "mask", gdims(g, {mk.T}), mk.flags.data());
  if (!m.contains("acs_box")) throw FormatError("sampling_mask manifest lacks acs_box");
  mk.acs = box_from(m["acs_box"]);
  mk.validate();
  return mk;
}

DynamicImage read_image(const fs::path &dir, const json &m)
{
  Grid g = grid_from(m);
  DynamicImage im(g, dim_at(m, 3));
  detail::read_complex(dir, m, "values", gdims(g, {im.T}), im.values.data());
  im.validate();
  return im;
}

SensitivityMaps read_maps(const fs::path &dir, const json &m)
{
  Grid g = grid_from(m);
  SensitivityMaps c(g, dim_at(m, 3));
  detail::read_complex(dir, m, "values", gdims(g, {c.Q}), c.values.data());
  c.validate();
  return c;
}

StmSet read_stm(const fs::path &dir, const json &m)
{
  Grid g = grid_from(m);
  StmSet s(g, dim_at(m, 4), dim_at(m, 3));
  detail::read_complex(dir, m, "maps", gdims(g, {s.L, s.T}), s.maps.data());
  detail::read_real(dir, m, "eigvals", gdims(g, {s.L}), s.eigvals.data());
  if (detail::has_array(m, "components_per_voxel")) {
    s.Lx.resize(static_cast<std::size_t>(g.size()));
    detail::read_int32(dir, m, "components_per_voxel", gdims(g, {}), s.Lx.data());
  }
  s.validate();
  return s;
}

RoiMask read_roi(const fs::path &dir, const json &m)
{
  Grid g = grid_from(m);
  RoiMask r(g, false);
  detail::read_bytes(dir, m, "flags", gdims(g, {}), r.flags.data());
  r.validate();
  return r;
}

ImageStack read_stack(const fs::path &dir, const json &m)
{
  Grid g = grid_from(m);
  ImageStack s(g, dim_at(m, 3));
  detail::read_real(dir, m, "values", gdims(g, {s.K}), s.values.data());
  s.validate();
  return s;
}

} // namespace

std::string kind_name(const AnyData &value)
{
  static const char *names[] = {"kt_dataset", "dynamic_image", "sensitivity_maps", "sampling_mask",
                                "stm",        "roi_mask",      "image_stack"};
  return names[value.index()];
}

void write_dataset(const fs::path &dir, const AnyData &value)
{
  fs::path d = detail::prepare_dir(dir);
  std::visit([&](const auto &v) { write_one(d, v); }, value);
}

std::string read_kind(const fs::path &dir)
{
  return detail::read_manifest(dir)["kind"].get<std::string>();
}

AnyData read_dataset(const fs::path &dir)
{
  json m = detail::read_manifest(dir);
  std::string kind = m["kind"].get<std::string>();
  try {
    if (kind == "kt_dataset") return read_kt(dir, m);
    if (kind == "sampling_mask") return read_mask(dir, m);
    if (kind == "dynamic_image") return read_image(dir, m);
    if (kind == "sensitivity_maps") return read_maps(dir, m);
    if (kind == "stm") return read_stm(dir, m);
    if (kind == "roi_mask") return read_roi(dir, m);
    if (kind == "image_stack") return read_stack(dir, m);
  } catch (const json::exception &e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  }
  throw FormatError("unknown dataset kind " + kind);
}

template <class T> T read_as(const fs::path &dir)
{
  AnyData v = read_dataset(dir);
  if (!std::holds_alternative<T>(v)) {
    throw FormatError("kind mismatch: " + dir.string() + " holds " + kind_name(v) + ", expected " +
                      kind_name(AnyData(T{})));
  }
  return std::get<T>(std::move(v));
}

template KtDataset read_as<KtDataset>(const fs::path &);
template DynamicImage read_as<DynamicImage>(const fs::path &);
template SensitivityMaps read_as<SensitivityMaps>(const fs::path &);
template SamplingMask read_as<SamplingMask>(const fs::path &);
template StmSet read_as<StmSet>(const fs::path &);
template RoiMask read_as<RoiMask>(const fs::path &);
template ImageStack read_as<ImageStack>(const fs::path &);

} // namespace stmrecon
