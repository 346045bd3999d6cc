#pragma once

#include <cstdint>

#include "cwsynth/data.hpp"
#include "cwsynth/model.hpp"
#include "cwsynth/prior.hpp"

namespace cwsynth {

/// z ~ prior, decode to per-column PMFs, then draw (or argmax) one level per column.
CategoricalDataset generate(const EncoderDecoder& model, const PriorModel& prior,
                            std::size_t count, std::uint64_t seed,
                            DecodeMode mode = DecodeMode::sample);

/// Same as generate() but from given latent rows.
CategoricalDataset generate_from_latent(const EncoderDecoder& model, const Matrix& z,
                                        std::uint64_t seed, DecodeMode mode = DecodeMode::sample);

}  // namespace cwsynth
