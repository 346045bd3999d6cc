#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "cwsynth/autodiff.hpp"
#include "cwsynth/classifier.hpp"
#include "cwsynth/cramer_wold.hpp"
#include "cwsynth/data.hpp"
#include "cwsynth/model.hpp"

namespace cwsynth {

struct Step1Config {
  ModelConfig model;
  std::size_t epochs = 200;
  std::size_t batch_size = 256;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double lambda = 0.0;
  double gamma = 0.0;
  bool entropy_reg = true;
  CwConfig cw;
  std::uint64_t seed = 0;

  void validate() const;
  /// Smallest usable minibatch: 2 when a set-level term is active, else 1.
  std::size_t min_batch() const noexcept { return entropy_reg || lambda > 0.0 ? 2 : 1; }
};

/// Per-epoch loss terms; cw and classifier are already multiplied by lambda and gamma.
/// Disabled terms are absent.
struct LossTerms {
  double recon = 0.0;
  std::optional<double> entropy;
  std::optional<double> cw;
  std::optional<double> classifier;
  double total = 0.0;
};

struct TrainReport {
  std::vector<LossTerms> epochs;
  /// Mean posterior variance per latent dimension on the held-out rows (training rows if none).
  std::vector<double> avg_variance;
  double wall_seconds = 0.0;
  std::size_t steps = 0;
  std::uint64_t seed = 0;
  double lambda = 0.0;
  double gamma = 0.0;
  bool entropy_reg = true;

  nlohmann::json to_json() const;
  void write_csv(std::ostream& out) const;
};

struct Step1Loss {
  Var total;
  Var recon;
  std::optional<Var> entropy;
  std::optional<Var> cw;          // lambda-weighted
  std::optional<Var> classifier;  // gamma-weighted
};

/// Records the step-1 objective for one minibatch:
///   recon + [entropy] + lambda * CW(X, X_hat) + gamma * classifier regularizer,
/// where X is the hard one-hot batch and X_hat the decoder probabilities.
Step1Loss build_step1_loss(Tape& tape, const EncoderDecoder& model, const ParamStore& params,
                           const Matrix& onehot, const Matrix& noise, const ClassifierBank* bank,
                           const Step1Config& cfg);

struct TrainResult {
  EncoderDecoder model;
  TrainReport report;
};

/// Minibatch Adam over the step-1 objective. A bank is required (and must be frozen) when
/// gamma > 0; it is ignored otherwise. Throws NumericError naming the first non-finite term.
TrainResult train_step1(const CategoricalDataset& train, const ClassifierBank* bank,
                        const Step1Config& cfg, const CategoricalDataset* heldout = nullptr);

/// draws_per_row reparameterized samples per row, row-major by source row.
LatentBatch aggregate_posterior_sample(const EncoderDecoder& model, const CategoricalDataset& ds,
                                       std::size_t draws_per_row, std::uint64_t seed);

}  // namespace cwsynth
