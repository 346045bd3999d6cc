#include "cwsynth/prior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cwsynth/error.hpp"
#include "cwsynth/random.hpp"
#include "kmeans.hpp"

namespace cwsynth {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double log_sum_exp(std::span<const double> v) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : v) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

double diag_gauss_logpdf(const double* z, const double* mean, const double* var, std::size_t d) {
  double s = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    const double diff = z[k] - mean[k];
    s += kLog2Pi + std::log(var[k]) + diff * diff / var[k];
  }
  return -0.5 * s;
}

}  // namespace

const char* to_string(PriorKind k) noexcept { return k == PriorKind::kde ? "kde" : "gmm"; }

PriorKind parse_prior_kind(std::string_view name) {
  if (name == "gmm") return PriorKind::gmm;
  if (name == "kde") return PriorKind::kde;
  throw ConfigError("unknown prior kind '" + std::string(name) + "'");
}

PriorModel PriorModel::gmm(std::vector<double> weights, Matrix means, Matrix variances) {
  if (weights.empty() || weights.size() != means.rows() || !means.same_shape(variances))
    throw ShapeError("gmm prior: inconsistent component shapes");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw NumericError("gmm prior: negative weight");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) throw NumericError("gmm prior: weights do not sum to 1");
  for (double v : variances.values())
    if (!(v > 0.0)) throw NumericError("gmm prior: variances must be positive");
  PriorModel m;
  m.kind_ = PriorKind::gmm;
  m.weights_ = std::move(weights);
  m.means_ = std::move(means);
  m.variances_ = std::move(variances);
  for (double w : m.weights_)
    m.log_weights_.push_back(w > 0.0 ? std::log(w) : -std::numeric_limits<double>::infinity());
  return m;
}

PriorModel PriorModel::kde(Matrix points, std::vector<double> bandwidth) {
  if (points.rows() == 0 || bandwidth.size() != points.cols())
    throw ShapeError("kde prior: inconsistent shapes");
  for (double h : bandwidth)
    if (!(h > 0.0)) throw NumericError("kde prior: bandwidth must be positive");
  const std::size_t n = points.rows(), d = points.cols();
  Matrix var(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) var(i, k) = bandwidth[k] * bandwidth[k];
  PriorModel m;
  m.kind_ = PriorKind::kde;
  m.weights_.assign(n, 1.0 / static_cast<double>(n));
  m.log_weights_.assign(n, -std::log(static_cast<double>(n)));
  m.means_ = std::move(points);
  m.variances_ = std::move(var);
  m.bandwidth_ = std::move(bandwidth);
  return m;
}

PriorModel PriorModel::standard_normal(std::size_t latent_dim) {
  return gmm({1.0}, Matrix(1, latent_dim, 0.0), Matrix(1, latent_dim, 1.0));
}

void PriorModel::require_fitted() const {
  if (!fitted()) throw ConfigError("prior model has not been fitted");
}

double PriorModel::log_pdf(std::span<const double> z) const {
  require_fitted();
  if (z.size() != latent_dim()) throw ShapeError("prior log_pdf: dimension mismatch");
  std::vector<double> terms(components());
  for (std::size_t k = 0; k < components(); ++k)
    terms[k] = log_weights_[k] + diag_gauss_logpdf(z.data(), means_.row(k).data(),
                                                   variances_.row(k).data(), latent_dim());
  return log_sum_exp(terms);
}

Matrix PriorModel::sample(std::size_t count, std::uint64_t seed) const {
  require_fitted();
  const std::size_t d = latent_dim();
  std::vector<double> cdf(weights_.size());
  std::partial_sum(weights_.begin(), weights_.end(), cdf.begin());
  Rng rng = make_rng(seed, 0x5A4);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix out(count, d);
  for (std::size_t i = 0; i < count; ++i) {
    const double u = unif(rng) * cdf.back();
    std::size_t k = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    k = std::min(k, weights_.size() - 1);
    for (std::size_t c = 0; c < d; ++c)
      out(i, c) = means_(k, c) + std::sqrt(variances_(k, c)) * normal(rng);
  }
  return out;
}

std::vector<double> PriorModel::moment_mean() const {
  require_fitted();
  std::vector<double> m(latent_dim(), 0.0);
  for (std::size_t k = 0; k < components(); ++k)
    for (std::size_t c = 0; c < latent_dim(); ++c) m[c] += weights_[k] * means_(k, c);
  return m;
}

Matrix PriorModel::moment_covariance() const {
  const std::vector<double> mu = moment_mean();
  const std::size_t d = latent_dim();
  Matrix cov(d, d);
  for (std::size_t k = 0; k < components(); ++k)
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b)
        cov(a, b) += weights_[k] * ((a == b ? variances_(k, a) : 0.0) + means_(k, a) * means_(k, b));
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < d; ++b) cov(a, b) -= mu[a] * mu[b];
  return cov;
}

ParamStore PriorModel::to_params() const {
  require_fitted();
  ParamStore ps;
  if (kind_ == PriorKind::kde) {
    ps.add("prior.kde.points", means_.rows(), means_.cols(), Init::zeros);
    ps.assign("prior.kde.points", means_);
    ps.add("prior.kde.bandwidth", 1, bandwidth_.size(), Init::zeros);
    ps.assign("prior.kde.bandwidth", Matrix(1, bandwidth_.size(), bandwidth_));
  } else {
    ps.add("prior.gmm.weights", 1, weights_.size(), Init::zeros);
    ps.assign("prior.gmm.weights", Matrix(1, weights_.size(), weights_));
    ps.add("prior.gmm.means", means_.rows(), means_.cols(), Init::zeros);
    ps.assign("prior.gmm.means", means_);
    ps.add("prior.gmm.variances", variances_.rows(), variances_.cols(), Init::zeros);
    ps.assign("prior.gmm.variances", variances_);
  }
  return ps;
}

PriorModel PriorModel::from_params(const ParamStore& params) {
  if (params.find("prior.kde.points")) {
    const Matrix bw = params.matrix("prior.kde.bandwidth");
    return kde(params.matrix("prior.kde.points"), {bw.values().begin(), bw.values().end()});
  }
  if (params.find("prior.gmm.weights")) {
    const Matrix w = params.matrix("prior.gmm.weights");
    return gmm({w.values().begin(), w.values().end()}, params.matrix("prior.gmm.means"),
               params.matrix("prior.gmm.variances"));
  }
  throw DataError("weight file holds no prior model");
}

// ---------------------------------------------------------------------------
// Fitting

namespace {

// M-step from responsibilities (n x K). Returns the collapsed component indices.
std::vector<std::size_t> m_step(const Matrix& z, const Matrix& resp, double floor,
                                std::vector<double>& weights, Matrix& means, Matrix& vars) {
  const std::size_t n = z.rows(), d = z.cols(), K = resp.cols();
  std::vector<std::size_t> collapsed;
  for (std::size_t k = 0; k < K; ++k) {
    double nk = 0.0;
    std::vector<double> mu(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double r = resp(i, k);
      nk += r;
      for (std::size_t c = 0; c < d; ++c) mu[c] += r * z(i, c);
    }
    weights[k] = nk / static_cast<double>(n);
    if (nk <= 1e-12) {
      collapsed.push_back(k);
      for (std::size_t c = 0; c < d; ++c) vars(k, c) = std::max(vars(k, c), floor);
      continue;
    }
    for (std::size_t c = 0; c < d; ++c) means(k, c) = mu[c] / nk;
    for (std::size_t c = 0; c < d; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double diff = z(i, c) - means(k, c);
        s += resp(i, k) * diff * diff;
      }
      const double v = s / nk;
      if (v < floor) {
        if (collapsed.empty() || collapsed.back() != k) collapsed.push_back(k);
      }
      vars(k, c) = std::max(v, floor);
    }
  }
  return collapsed;
}

}  // namespace

GmmFit fit_gmm(const Matrix& z, const GmmOptions& options) {
  const std::size_t n = z.rows(), d = z.cols(), K = options.components;
  if (K == 0) throw ConfigError("gmm needs at least one component");
  if (n < K) throw DataError("gmm: fewer samples (" + std::to_string(n) + ") than components (" +
                             std::to_string(K) + ")");
  if (d == 0) throw ShapeError("gmm: zero-dimensional samples");
  if (!(options.variance_floor > 0.0)) throw ConfigError("gmm variance floor must be positive");

  Rng rng = make_rng(options.seed, 0x6E3);
  const auto centers = detail::kmeanspp_centers(z, K, rng);
  Matrix resp(n, K);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < K; ++k) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = z(i, c) - z(centers[k], c);
        s += diff * diff;
      }
      if (s < best_d) {
        best_d = s;
        best = k;
      }
    }
    resp(i, best) = 1.0;
  }
  std::vector<double> weights(K, 0.0);
  Matrix means(K, d), vars(K, d, options.variance_floor);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t c = 0; c < d; ++c) means(k, c) = z(centers[k], c);

  GmmFit fit;
  auto note_collapse = [&](const std::vector<std::size_t>& collapsed) {
    for (std::size_t k : collapsed) {
      const std::string msg = "gmm component " + std::to_string(k) +
                              " collapsed; variance floor applied";
      if (std::find(fit.warnings.begin(), fit.warnings.end(), msg) == fit.warnings.end())
        fit.warnings.push_back(msg);
    }
  };
  note_collapse(m_step(z, resp, options.variance_floor, weights, means, vars));

  std::vector<double> terms(K);
  for (std::size_t it = 0; it < options.max_iters; ++it) {
    std::vector<double> logw(K);
    for (std::size_t k = 0; k < K; ++k)
      logw[k] = weights[k] > 0.0 ? std::log(weights[k]) : -std::numeric_limits<double>::infinity();
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < K; ++k)
        terms[k] = logw[k] + diag_gauss_logpdf(z.row(i).data(), means.row(k).data(), vars.row(k).data(), d);
      const double lse = log_sum_exp(terms);
      ll += lse;
      for (std::size_t k = 0; k < K; ++k) resp(i, k) = std::exp(terms[k] - lse);
    }
    ll /= static_cast<double>(n);
    if (!std::isfinite(ll)) throw NumericError("gmm: non-finite log-likelihood");
    fit.log_likelihood.push_back(ll);
    fit.iterations = it + 1;
    if (it > 0 && ll - fit.log_likelihood[it - 1] < options.tol) {
      fit.converged = true;
      break;
    }
    note_collapse(m_step(z, resp, options.variance_floor, weights, means, vars));
  }
  // Renormalize against rounding before the simplex check in PriorModel::gmm.
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  for (double& w : weights) w /= total;
  fit.model = PriorModel::gmm(std::move(weights), std::move(means), std::move(vars));
  return fit;
}

PriorModel fit_kde(const Matrix& z, std::optional<double> bandwidth, double bandwidth_floor) {
  const std::size_t n = z.rows(), d = z.cols();
  if (n == 0) throw DataError("kde: no samples");
  std::vector<double> h(d);
  if (bandwidth) {
    if (!(*bandwidth > 0.0)) throw ConfigError("kde bandwidth must be positive");
    std::fill(h.begin(), h.end(), *bandwidth);
  } else {
    const std::vector<double> mu = column_means(z);
    const double factor = 1.06 * std::pow(static_cast<double>(n), -0.2);
    for (std::size_t c = 0; c < d; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += (z(i, c) - mu[c]) * (z(i, c) - mu[c]);
      const double sd = n > 1 ? std::sqrt(s / static_cast<double>(n - 1)) : 0.0;
      h[c] = std::max(factor * sd, bandwidth_floor);
    }
  }
  return PriorModel::kde(z, std::move(h));
}

double prior_logpdf(const PriorModel& model, std::span<const double> z) { return model.log_pdf(z); }

Matrix sample_prior(const PriorModel& model, std::size_t count, std::uint64_t seed) {
  return model.sample(count, seed);
}

double aggregate_kl(const Matrix& mean, const Matrix& variance, const PriorModel& prior,
                    std::size_t draws, std::uint64_t seed) {
  if (!mean.same_shape(variance)) throw ShapeError("aggregate_kl: shape mismatch");
  if (mean.rows() == 0 || draws == 0) throw ConfigError("aggregate_kl: nothing to average");
  if (mean.cols() != prior.latent_dim()) throw ShapeError("aggregate_kl: latent dimension mismatch");
  const std::size_t n = mean.rows(), d = mean.cols();
  Rng rng = make_rng(seed, 0xA66);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> z(d), terms(n);
  const double log_n = std::log(static_cast<double>(n));
  double total = 0.0;
  for (std::size_t s = 0; s < draws; ++s) {
    const std::size_t i = std::min(n - 1, static_cast<std::size_t>(unif(rng) * static_cast<double>(n)));
    for (std::size_t c = 0; c < d; ++c) z[c] = mean(i, c) + std::sqrt(variance(i, c)) * normal(rng);
    for (std::size_t j = 0; j < n; ++j)
      terms[j] = diag_gauss_logpdf(z.data(), mean.row(j).data(), variance.row(j).data(), d);
    total += log_sum_exp(terms) - log_n - prior.log_pdf(z);
  }
  return total / static_cast<double>(draws);
}

}  // namespace cwsynth
