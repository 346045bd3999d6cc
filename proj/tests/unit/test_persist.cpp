#include <filesystem>
#include <sstream>

#include <gtest/gtest.h>

#include "cwsynth/error.hpp"
#include "cwsynth/persist.hpp"

using namespace cwsynth;

namespace {

ParamStore sample_store() {
  ParamStore ps;
  ps.add("a.weight", 3, 2);
  ps.add("a.bias", 1, 2, Init::zeros);
  ps.add("b", 4, 1);
  ps.initialize(7);
  ps.values()[3] = -0.0;
  ps.values()[4] = 1e-300;
  return ps;
}

std::string serialize(const ParamStore& ps, std::uint64_t hash) {
  std::ostringstream out;
  write_weights(out, ps, hash);
  return out.str();
}

WeightFile parse(const std::string& bytes, std::optional<std::uint64_t> hash = {}) {
  std::istringstream in(bytes);
  return read_weights(in, hash);
}

}  // namespace

TEST(Weights, StreamRoundTripIsExact) {
  const ParamStore ps = sample_store();
  const WeightFile wf = parse(serialize(ps, 0xDEADBEEFCAFEULL), 0xDEADBEEFCAFEULL);
  EXPECT_EQ(wf.schema_hash, 0xDEADBEEFCAFEULL);
  EXPECT_EQ(wf.params, ps);
}

TEST(Weights, HeaderLayout) {
  const std::string bytes = serialize(sample_store(), 1);
  ASSERT_GE(bytes.size(), 8u);
  EXPECT_EQ(bytes.substr(0, 4), "CWGW");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), kWeightFormatVersion);
  EXPECT_EQ(bytes[5], 0);
}

TEST(Weights, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "cwsynth_persist_test.cwgw";
  const ParamStore ps = sample_store();
  save_weights(path, ps, 42);
  EXPECT_EQ(load_weights(path, 42).params, ps);
  std::filesystem::remove(path);
  EXPECT_THROW(load_weights(path), DataError);
}

TEST(Weights, RejectsCorruption) {
  const std::string good = serialize(sample_store(), 5);
  EXPECT_THROW(parse(good, 6), DataError);
  std::string bad = good;
  bad[0] = 'X';
  EXPECT_THROW(parse(bad), DataError);
  bad = good;
  bad[4] = 9;
  EXPECT_THROW(parse(bad), DataError);
  for (std::size_t cut : {std::size_t{3}, std::size_t{20}, good.size() - 1})
    EXPECT_THROW(parse(good.substr(0, cut)), DataError) << cut;
}
