#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cwsynth/autodiff.hpp"
#include "cwsynth/matrix.hpp"

namespace cwsynth {

enum class PriorKind { gmm, kde };

const char* to_string(PriorKind k) noexcept;
PriorKind parse_prior_kind(std::string_view name);

/// Latent prior p(z): a diagonal Gaussian mixture. A KDE is stored as the mixture
/// with one equally weighted component per support point and variance bandwidth^2.
class PriorModel {
 public:
  PriorModel() = default;

  static PriorModel gmm(std::vector<double> weights, Matrix means, Matrix variances);
  static PriorModel kde(Matrix points, std::vector<double> bandwidth);
  static PriorModel standard_normal(std::size_t latent_dim);

  bool fitted() const noexcept { return !weights_.empty(); }
  PriorKind kind() const noexcept { return kind_; }
  std::size_t latent_dim() const noexcept { return means_.cols(); }
  std::size_t components() const noexcept { return weights_.size(); }

  const std::vector<double>& weights() const noexcept { return weights_; }
  const Matrix& means() const noexcept { return means_; }
  const Matrix& variances() const noexcept { return variances_; }
  /// KDE only: per-dimension kernel standard deviation.
  const std::vector<double>& bandwidth() const noexcept { return bandwidth_; }

  double log_pdf(std::span<const double> z) const;
  Matrix sample(std::size_t count, std::uint64_t seed) const;

  std::vector<double> moment_mean() const;
  Matrix moment_covariance() const;

  ParamStore to_params() const;
  static PriorModel from_params(const ParamStore& params);

  friend bool operator==(const PriorModel&, const PriorModel&) = default;

 private:
  void require_fitted() const;

  PriorKind kind_ = PriorKind::gmm;
  std::vector<double> weights_;
  std::vector<double> log_weights_;
  Matrix means_;
  Matrix variances_;
  std::vector<double> bandwidth_;
};

struct GmmOptions {
  std::size_t components = 10;
  std::size_t max_iters = 200;
  double tol = 1e-6;
  double variance_floor = 1e-6;
  std::uint64_t seed = 0;
};

struct GmmFit {
  PriorModel model;
  /// Mean per-point log-likelihood evaluated at the start of every EM iteration.
  std::vector<double> log_likelihood;
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<std::string> warnings;
};

/// EM for a diagonal-covariance mixture, seeded k-means++ initialization.
GmmFit fit_gmm(const Matrix& z, const GmmOptions& options);

/// Gaussian product-kernel density; auto bandwidth is 1.06 * sd_k * n^(-1/5) per dimension.
PriorModel fit_kde(const Matrix& z, std::optional<double> bandwidth = std::nullopt,
                   double bandwidth_floor = 1e-3);

double prior_logpdf(const PriorModel& model, std::span<const double> z);
Matrix sample_prior(const PriorModel& model, std::size_t count, std::uint64_t seed);

/// Monte-Carlo estimate of KL(q_agg || prior), where q_agg is the equal-weight mixture of
/// N(mean_i, diag(variance_i)). Draws come from q_agg itself.
double aggregate_kl(const Matrix& mean, const Matrix& variance, const PriorModel& prior,
                    std::size_t draws, std::uint64_t seed);

}  // namespace cwsynth
