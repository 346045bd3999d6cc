#include "cwsynth/persist.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "cwsynth/error.hpp"

namespace cwsynth {

namespace {

constexpr std::array<char, 4> kMagic{'C', 'W', 'G', 'W'};

template <typename T>
void put(std::ostream& out, T v) {
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(bytes.data(), sizeof(T));
}

template <typename T>
T get(std::istream& in, const char* what) {
  std::array<char, sizeof(T)> bytes;
  if (!in.read(bytes.data(), sizeof(T)))
    throw DataError(std::string("weight file truncated while reading ") + what);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T v;
  std::memcpy(&v, bytes.data(), sizeof(T));
  return v;
}

}  // namespace

void write_weights(std::ostream& out, const ParamStore& params, std::uint64_t schema_hash) {
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kWeightFormatVersion);
  put<std::uint64_t>(out, schema_hash);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.slices().size()));
  for (const Slice& s : params.slices()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.name.size()));
    out.write(s.name.data(), static_cast<std::streamsize>(s.name.size()));
    put<std::uint64_t>(out, s.rows);
    put<std::uint64_t>(out, s.cols);
    put<std::uint64_t>(out, s.offset);
  }
  put<std::uint64_t>(out, params.size());
  for (double v : params.values()) put<double>(out, v);
  if (!out) throw DataError("failed to write weight file");
}

void save_weights(const std::filesystem::path& path, const ParamStore& params,
                  std::uint64_t schema_hash) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  write_weights(out, params, schema_hash);
}

WeightFile read_weights(std::istream& in, std::optional<std::uint64_t> expected_hash) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic)
    throw DataError("not a cwsynth weight file (bad magic)");
  const auto version = get<std::uint32_t>(in, "version");
  if (version != kWeightFormatVersion)
    throw DataError("unsupported weight file version " + std::to_string(version));
  WeightFile wf;
  wf.schema_hash = get<std::uint64_t>(in, "schema hash");
  if (expected_hash && *expected_hash != wf.schema_hash)
    throw DataError("weight file was written for a different dataset schema");
  const auto count = get<std::uint32_t>(in, "slice count");
  std::uint64_t expected_offset = 0;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto len = get<std::uint32_t>(in, "slice name length");
    if (len > 4096) throw DataError("weight file slice name too long");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw DataError("weight file truncated in slice name");
    const auto rows = get<std::uint64_t>(in, "slice rows");
    const auto cols = get<std::uint64_t>(in, "slice cols");
    const auto offset = get<std::uint64_t>(in, "slice offset");
    if (offset != expected_offset) throw DataError("weight file slice '" + name + "' is misaligned");
    if (rows == 0 || cols == 0 || rows > (1ULL << 32) / cols)
      throw DataError("weight file slice '" + name + "' has an invalid shape");
    if (wf.params.find(name)) throw DataError("weight file repeats slice '" + name + "'");
    wf.params.add(name, rows, cols, Init::zeros);
    expected_offset += rows * cols;
  }
  const auto n = get<std::uint64_t>(in, "value count");
  if (n != wf.params.size()) throw DataError("weight file value count does not match its slices");
  for (double& v : wf.params.values()) v = get<double>(in, "values");
  return wf;
}

WeightFile load_weights(const std::filesystem::path& path,
                        std::optional<std::uint64_t> expected_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open weight file " + path.string());
  return read_weights(in, expected_hash);
}

}  // namespace cwsynth
