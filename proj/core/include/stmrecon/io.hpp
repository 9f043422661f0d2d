#pragma once

#include "stmrecon/types.hpp"

#include <filesystem>
#include <string>
#include <variant>

namespace stmrecon {

using AnyData = std::variant<KtDataset, DynamicImage, SensitivityMaps, SamplingMask, StmSet, RoiMask, ImageStack>;

// A dataset directory holds manifest.json plus one little-endian blob per
// array. Complex data is interleaved re/im; datasets, images and coil maps
// use complex64, maps use complex128.
void write_dataset(const std::filesystem::path &dir, const AnyData &value);
AnyData read_dataset(const std::filesystem::path &dir);

std::string kind_name(const AnyData &value);
std::string read_kind(const std::filesystem::path &dir);

template <class T> T read_as(const std::filesystem::path &dir);

extern template KtDataset read_as<KtDataset>(const std::filesystem::path &);
extern template DynamicImage read_as<DynamicImage>(const std::filesystem::path &);
extern template SensitivityMaps read_as<SensitivityMaps>(const std::filesystem::path &);
extern template SamplingMask read_as<SamplingMask>(const std::filesystem::path &);
extern template StmSet read_as<StmSet>(const std::filesystem::path &);
extern template RoiMask read_as<RoiMask>(const std::filesystem::path &);
extern template ImageStack read_as<ImageStack>(const std::filesystem::path &);

} // namespace stmrecon
