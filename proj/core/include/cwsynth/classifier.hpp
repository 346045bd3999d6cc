#pragma once

#include <cstdint>
#include <vector>

#include "cwsynth/autodiff.hpp"
#include "cwsynth/data.hpp"
#include "cwsynth/matrix.hpp"

namespace cwsynth {

struct ClassifierConfig {
  std::size_t epochs = 20;
  double learning_rate = 1e-2;
  std::size_t batch_size = 256;

  void validate() const;
};

/// One linear softmax model per column, predicting x_j from the one-hot encoding of x_{-j}.
///
/// All models share one width x width weight matrix whose column block j holds model j;
/// the rows of block j inside it are held at zero so x_j never feeds its own prediction.
class ClassifierBank {
 public:
  explicit ClassifierBank(SchemaPtr schema);

  /// Trains every column model by minibatch cross-entropy, then freezes the bank.
  void pretrain(const CategoricalDataset& ds, const ClassifierConfig& cfg, std::uint64_t seed);

  bool frozen() const noexcept { return frozen_; }
  void freeze() noexcept { frozen_ = true; }

  const DatasetSchema& schema() const noexcept { return *schema_; }
  const SchemaPtr& schema_ptr() const noexcept { return schema_; }
  const Matrix& weights() const noexcept { return weights_; }
  const Matrix& bias() const noexcept { return bias_; }

  /// Block log-probabilities log p(x_j = l | x_{-j}) for soft or hard inputs, n x width.
  Matrix log_probs(const Matrix& inputs) const;
  Matrix log_probs(const CategoricalDataset& ds) const;

  /// Per-column accuracy of the argmax prediction (ties resolve to the lowest level).
  std::vector<double> accuracy(const CategoricalDataset& ds) const;
  /// Per-column mean log-likelihood of the observed level.
  std::vector<double> log_likelihood(const CategoricalDataset& ds) const;

  /// Per-column slices "classifier.<j>.weight" ((width - T_j) x T_j) and "classifier.<j>.bias".
  ParamStore to_params() const;
  /// Rebuilds a frozen bank from persisted slices.
  static ClassifierBank from_params(SchemaPtr schema, const ParamStore& params);

  friend bool operator==(const ClassifierBank& a, const ClassifierBank& b) {
    return a.weights_ == b.weights_ && a.bias_ == b.bias_ && a.frozen_ == b.frozen_;
  }

 private:
  void logits_for_row(std::span<const std::uint32_t> codes, double* out) const;

  SchemaPtr schema_;
  Matrix weights_;
  Matrix bias_;
  std::vector<std::size_t> blocks_;
  std::vector<std::size_t> block_of_;  // one-hot index -> column
  bool frozen_ = false;
};

/// -(1/n) sum_i sum_j sum_l probs_ijl * log p_l(probs_{i,-j}); soft targets and soft inputs.
double classification_regularizer(const ClassifierBank& bank, const Matrix& probs);
/// Differentiable in `probs`; the bank enters as constants.
Var classification_regularizer(Tape& tape, const ClassifierBank& bank, Var probs);

}  // namespace cwsynth
