#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>

#include "cwsynth/classifier.hpp"
#include "cwsynth/data.hpp"
#include "cwsynth/metrics.hpp"
#include "cwsynth/prior.hpp"
#include "cwsynth/trainer.hpp"

namespace cwsynth {

struct PriorConfig {
  PriorKind kind = PriorKind::gmm;
  GmmOptions gmm;
  std::optional<double> kde_bandwidth;  // nullopt: per-dimension rule of thumb
  double kde_bandwidth_floor = 1e-3;
  std::size_t draws_per_row = 1;
};

struct SampleConfig {
  std::optional<std::size_t> count;  // nullopt: as many rows as the training data
  DecodeMode mode = DecodeMode::sample;
};

/// Settings for every pipeline stage. One base seed feeds all stages through set_seed().
struct PipelineConfig {
  std::uint64_t seed = 0;
  Step1Config train;
  ClassifierConfig classifier;
  PriorConfig prior;
  SampleConfig sample;
  MetricsConfig metrics;

  /// Sets the base seed and derives the per-stage seeds from it.
  void set_seed(std::uint64_t s);
  void validate() const;
};

/// INI text with sections [run] [model] [train] [cw] [classifier] [prior] [sample] [metrics].
/// Unknown sections or keys are rejected. Comments start with ';'.
PipelineConfig parse_config(std::istream& in);
PipelineConfig load_config(const std::filesystem::path& path);

/// Writes every setting in the format parse_config reads.
void write_config(std::ostream& out, const PipelineConfig& cfg);

}  // namespace cwsynth
