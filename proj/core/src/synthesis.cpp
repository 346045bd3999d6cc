#include "cwsynth/synthesis.hpp"

#include "cwsynth/error.hpp"
#include "cwsynth/random.hpp"

namespace cwsynth {

CategoricalDataset generate_from_latent(const EncoderDecoder& model, const Matrix& z,
                                        std::uint64_t seed, DecodeMode mode) {
  if (z.cols() != model.latent_dim())
    throw ShapeError("latent rows have " + std::to_string(z.cols()) + " columns; model expects " +
                     std::to_string(model.latent_dim()));
  return from_onehot(model.decode(z), model.schema_ptr(), mode, derive_seed(seed, 0xDEC));
}

CategoricalDataset generate(const EncoderDecoder& model, const PriorModel& prior,
                            std::size_t count, std::uint64_t seed, DecodeMode mode) {
  if (!prior.fitted()) throw ConfigError("prior model has not been fitted");
  if (prior.latent_dim() != model.latent_dim())
    throw ShapeError("prior latent dimension " + std::to_string(prior.latent_dim()) +
                     " does not match model latent dimension " +
                     std::to_string(model.latent_dim()));
  return generate_from_latent(model, prior.sample(count, seed), seed, mode);
}

}  // namespace cwsynth
