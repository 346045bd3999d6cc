#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cwsynth/classifier.hpp"
#include "cwsynth/data.hpp"

namespace cwsynth {

struct MetricsConfig {
  double kl_smoothing = 1e-6;
  std::size_t clusters = 20;
  std::size_t kmeans_iters = 50;
  double cluster_target = 0.5;
  double cluster_floor = 1e-8;
  /// Hyperparameters of the per-column linear softmax models behind VarPred.
  ClassifierConfig var_pred;
  std::uint64_t seed = 0;

  void validate() const;
};

// Marginal metrics. All require a shared schema.

/// Mean over columns of KL(p_real || q_synth); q gets additive smoothing and is renormalized.
/// Columns whose PMFs agree exactly contribute 0.
double kl_marginal(const CategoricalDataset& real, const CategoricalDataset& synth,
                   double smoothing = 1e-6);
std::vector<double> kl_per_column(const CategoricalDataset& real, const CategoricalDataset& synth,
                                  double smoothing = 1e-6);
/// Mean over columns of the sup distance between CDFs in canonical level order.
double ks_marginal(const CategoricalDataset& real, const CategoricalDataset& synth);
std::vector<double> ks_per_column(const CategoricalDataset& real, const CategoricalDataset& synth);
/// Mean over columns of |levels seen in both| / |levels seen in real|.
double support_coverage(const CategoricalDataset& real, const CategoricalDataset& synth);
std::vector<double> coverage_per_column(const CategoricalDataset& real,
                                        const CategoricalDataset& synth);
/// Sum over one-hot dimensions of the squared difference of level frequencies.
double dim_prob_mse(const CategoricalDataset& real, const CategoricalDataset& synth);

// Joint metrics.

enum class CorrelationKind { pearson, kendall };

struct Correlation {
  std::optional<Matrix> matrix;
  std::string missing_reason;
};

/// Pearson correlation of integer level codes.
std::optional<double> pearson(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b);
/// Kendall tau-b with tie correction, from the contingency table of the two code columns.
std::optional<double> kendall_tau_b(std::span<const std::uint32_t> a,
                                    std::span<const std::uint32_t> b);
/// p x p correlation matrix; missing when a column is constant.
Correlation correlation_matrix(const CategoricalDataset& ds, CorrelationKind kind);

struct MetricValue {
  std::optional<double> value;
  std::string missing_reason;
};

/// Frobenius norm of the correlation difference; missing if either matrix is undefined.
MetricValue pcd(const CategoricalDataset& real, const CategoricalDataset& synth,
                CorrelationKind kind);

/// log(max(mean over clusters of (n_real_i / n_i - c)^2, floor)) after k-means on the pooled
/// one-hot rows. Requires equally sized inputs. Clusters left empty are not averaged.
double log_cluster(const CategoricalDataset& real, const CategoricalDataset& synth,
                   std::size_t clusters, std::uint64_t seed, std::size_t max_iters = 50,
                   double c = 0.5, double floor = 1e-8);

struct VarPredResult {
  double mse = 0.0;
  std::vector<double> real_accuracy;
  std::vector<double> synth_accuracy;
};

/// Per-column predictors trained on real_train and on synth with the same seed, scored on real_test.
VarPredResult var_pred(const CategoricalDataset& real_train, const CategoricalDataset& synth,
                       const CategoricalDataset& real_test, const ClassifierConfig& cfg,
                       std::uint64_t seed);

/// Mean squared difference of two accuracy vectors.
double var_pred_mse(std::span<const double> real_accuracy, std::span<const double> synth_accuracy);

/// For every row of `query`, the minimum Hamming distance to a row of `reference`;
/// with exclude_self, reference row i is skipped for query row i.
std::vector<std::uint32_t> nearest_hamming(const CategoricalDataset& query,
                                           const CategoricalDataset& reference,
                                           bool exclude_self);

/// AA between two equally sized datasets with strict inequalities:
/// 1/2 [ mean 1(D_AB > D_AA) + mean 1(D_BA > D_BB) ].
double adversarial_accuracy_pair(const CategoricalDataset& a, const CategoricalDataset& b);

struct AdversarialAccuracy {
  std::size_t rows = 0;
  double aa_train = 0.0;  // AA_TrS
  double aa_test = 0.0;   // AA_TeS
  double train_dev = 0.0;  // |AA_TrS - 0.5|
  double test_dev = 0.0;   // |AA_TeS - 0.5|
  double privacy = 0.0;    // |AA_TrS - AA_TeS|
};

/// Subsamples every input to the smallest of the three sizes. Selection depends only on
/// (seed, original size), so equally sized inputs keep corresponding rows.
AdversarialAccuracy adversarial_accuracy(const CategoricalDataset& train,
                                         const CategoricalDataset& test,
                                         const CategoricalDataset& synth, std::uint64_t seed);

// Reports.

enum class Metric { kl, ks, coverage, dim_prob, pcd_pearson, pcd_kendall, log_cluster, var_pred };
inline constexpr std::size_t kNumRankedMetrics = 8;
inline constexpr std::array<Metric, kNumRankedMetrics> kRankedMetrics{
    Metric::kl,          Metric::ks,          Metric::coverage,    Metric::dim_prob,
    Metric::pcd_pearson, Metric::pcd_kendall, Metric::log_cluster, Metric::var_pred};

const char* metric_name(Metric m) noexcept;
bool higher_is_better(Metric m) noexcept;

struct SystemMetrics {
  std::string name;
  std::array<MetricValue, kNumRankedMetrics> values;
  std::vector<double> kl_columns;
  std::vector<double> ks_columns;
  std::vector<double> coverage_columns;
  VarPredResult var_pred;
  AdversarialAccuracy aa;

  const MetricValue& operator[](Metric m) const { return values[static_cast<std::size_t>(m)]; }
  MetricValue& operator[](Metric m) { return values[static_cast<std::size_t>(m)]; }
};

/// Full suite for one synthetic dataset against the real train/test split.
SystemMetrics evaluate(const CategoricalDataset& real_train, const CategoricalDataset& real_test,
                       const CategoricalDataset& synth, const MetricsConfig& cfg,
                       std::string name = "synthetic");

struct MetricsReport {
  std::vector<SystemMetrics> systems;
  /// ranks[s][m]: rank of system s on ranked metric m (1 = best, ties share the mean rank).
  std::vector<std::array<double, kNumRankedMetrics>> ranks;
  std::vector<double> average_rank;

  nlohmann::json to_json() const;
  void write_csv(std::ostream& out) const;
};

/// Ranks systems per metric by its preferred direction; missing values rank last.
MetricsReport build_report(std::vector<SystemMetrics> systems);

/// Mean ranks of `values` (lower is better after orientation), missing entries last.
std::vector<double> rank_values(std::span<const std::optional<double>> values,
                                bool higher_better);

}  // namespace cwsynth
