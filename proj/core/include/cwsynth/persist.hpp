#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>

#include "cwsynth/autodiff.hpp"

namespace cwsynth {

/// Binary weight container shared by models, priors and classifier banks.
/// Layout (little-endian): "CWGW", u32 version, u64 schema hash, u32 slice count,
/// per slice {u32 name length, name bytes, u64 rows, u64 cols, u64 offset},
/// u64 value count, f64 values.
inline constexpr std::uint32_t kWeightFormatVersion = 1;

struct WeightFile {
  std::uint64_t schema_hash = 0;
  ParamStore params;
};

void write_weights(std::ostream& out, const ParamStore& params, std::uint64_t schema_hash);
void save_weights(const std::filesystem::path& path, const ParamStore& params,
                  std::uint64_t schema_hash);

/// Throws DataError on malformed input or when expected_hash is given and differs.
WeightFile read_weights(std::istream& in, std::optional<std::uint64_t> expected_hash = {});
WeightFile load_weights(const std::filesystem::path& path,
                        std::optional<std::uint64_t> expected_hash = {});

}  // namespace cwsynth
