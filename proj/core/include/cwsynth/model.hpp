#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "cwsynth/autodiff.hpp"
#include "cwsynth/data.hpp"
#include "cwsynth/matrix.hpp"

namespace cwsynth {

enum class Activation { tanh, relu };

const char* to_string(Activation a) noexcept;
Activation parse_activation(std::string_view name);

struct ModelConfig {
  std::size_t latent_dim = 2;
  std::vector<std::size_t> hidden{64, 64};
  Activation activation = Activation::tanh;
};

/// Lower bound applied to posterior variances.
inline constexpr double kVarianceFloor = 1e-8;

/// Reparameterized draws z = mean + sqrt(variance) * noise, with the inputs kept.
struct LatentBatch {
  Matrix z;
  Matrix mean;
  Matrix variance;
  Matrix noise;
};

/// Gaussian encoder q(z|x) and per-column softmax decoder p(x|z).
///
/// Encoder: one-hot (width W) -> hidden layers -> [mean (d) | variance pre-activation (d)],
/// variance = max(softplus(pre), kVarianceFloor).
/// Decoder: z (d) -> hidden layers -> W logits -> block log-softmax over the schema's columns.
class EncoderDecoder {
 public:
  EncoderDecoder(SchemaPtr schema, ModelConfig config, std::uint64_t seed);
  /// Adopts trained parameters; slice names and shapes must match `config`.
  EncoderDecoder(SchemaPtr schema, ModelConfig config, ParamStore params);

  /// Recovers latent and hidden sizes from parameter shapes.
  static ModelConfig infer_config(const ParamStore& params, Activation activation);

  const DatasetSchema& schema() const noexcept { return *schema_; }
  const SchemaPtr& schema_ptr() const noexcept { return schema_; }
  const ModelConfig& config() const noexcept { return config_; }
  std::size_t latent_dim() const noexcept { return config_.latent_dim; }
  std::size_t input_width() const noexcept { return schema_->onehot_width(); }

  ParamStore& params() noexcept { return params_; }
  const ParamStore& params() const noexcept { return params_; }

  struct Posterior {
    Var mean;
    Var variance;
  };
  Posterior encode(Tape& tape, Var onehot) const;
  Posterior encode(Tape& tape, Var onehot, const ParamStore& params) const;
  /// Block log-probabilities, n x W.
  Var decode_log_probs(Tape& tape, Var z) const;
  Var decode_log_probs(Tape& tape, Var z, const ParamStore& params) const;

  std::pair<Matrix, Matrix> encode(const Matrix& onehot) const;
  /// Per-block PMFs, n x W.
  Matrix decode(const Matrix& z) const;

 private:
  Var mlp(Tape& tape, Var x, const ParamStore& params, const char* prefix) const;

  SchemaPtr schema_;
  ModelConfig config_;
  ParamStore params_;
  std::vector<std::size_t> blocks_;
};

LatentBatch reparameterize(const Matrix& mean, const Matrix& variance, std::uint64_t seed);
/// Graph form with fixed noise; gradients flow into mean and variance.
Var reparameterize(Tape& tape, Var mean, Var variance, const Matrix& noise);

/// -(1/n) sum_i sum_l target_il * log(max(prob_il, 1e-12)).
double recon_loss(const Matrix& targets, const Matrix& probs);
/// Same loss from block log-probabilities.
Var recon_loss(Tape& tape, Var targets, Var log_probs);

/// log N(z | mean, diag(variance)); variances floored at kVarianceFloor.
double posterior_logpdf(std::span<const double> z, std::span<const double> mean,
                        std::span<const double> variance);

/// Minibatch estimate of the entropy regularization upper bound:
///   (1/n) sum_i log q(z_i|x_i) - (1/n^2) sum_i sum_j log q(z_j|x_i).
double entropy_reg_estimate(const Matrix& mean, const Matrix& variance, const Matrix& z);
Var entropy_reg(Tape& tape, Var mean, Var variance, Var z);

/// The same bound in expectation over z_i ~ q(.|x_i), in closed form for the empirical p(x):
///   (1/n) sum_i E_{q_i}[log q_i] - (1/n^2) sum_i sum_j E_{q_j}[log q_i].
double entropy_reg_exact(const Matrix& mean, const Matrix& variance);

/// (1/n) sum_i KL(q_i || q_bar), q_bar the equal-weight mixture of the q_i.
/// One latent dimension only; composite Simpson quadrature on `panels` intervals.
double expected_kl_to_aggregate(const Matrix& mean, const Matrix& variance,
                                std::size_t panels = 20000);

/// Mean posterior variance per latent dimension over the rows of `onehot`.
std::vector<double> average_posterior_variance(const EncoderDecoder& model, const Matrix& onehot);

}  // namespace cwsynth
