#pragma once

#include "stmrecon/types.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace stmrecon::detail {

using json = nlohmann::json;

struct ArrayDesc {
  std::string name;
  std::string dtype; // complex64 | complex128 | float64 | uint8 | int32
  std::vector<Index> dims;
  std::vector<std::string> axes;
};

Index element_count(const std::vector<Index> &dims);
std::size_t dtype_size(const std::string &dtype);

std::filesystem::path prepare_dir(const std::filesystem::path &dir);
json array_entry(const ArrayDesc &d);
void write_manifest(const std::filesystem::path &dir, const json &manifest);
json read_manifest(const std::filesystem::path &dir);

void write_complex(const std::filesystem::path &dir, const ArrayDesc &d, const cx *data);
void write_real(const std::filesystem::path &dir, const ArrayDesc &d, const double *data);
void write_bytes(const std::filesystem::path &dir, const ArrayDesc &d, const std::uint8_t *data);
void write_int32(const std::filesystem::path &dir, const ArrayDesc &d, const int *data);

// Looks up the named array in the manifest, checks dtype family and that
// the declared dims match `dims`, then reads the blob.
void read_complex(const std::filesystem::path &dir, const json &m, const std::string &name,
                  const std::vector<Index> &dims, cx *out);
void read_real(const std::filesystem::path &dir, const json &m, const std::string &name,
               const std::vector<Index> &dims, double *out);
void read_bytes(const std::filesystem::path &dir, const json &m, const std::string &name,
                const std::vector<Index> &dims, std::uint8_t *out);
void read_int32(const std::filesystem::path &dir, const json &m, const std::string &name,
                const std::vector<Index> &dims, int *out);
bool has_array(const json &m, const std::string &name);
std::vector<Index> array_dims(const json &m, const std::string &name);

} // namespace stmrecon::detail
