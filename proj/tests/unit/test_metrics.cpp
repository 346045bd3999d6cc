#include <cmath>
#include <algorithm>
#include <limits>
#include <numeric>
#include <sstream>

#include <gtest/gtest.h>

#include "cwsynth/error.hpp"
#include "cwsynth/metrics.hpp"
#include "oracles.hpp"

using namespace cwsynth;

namespace {

// One column whose codes repeat each level counts[l] times.
CategoricalDataset column_with_counts(const SchemaPtr& schema, const std::vector<std::size_t>& counts) {
  std::vector<std::uint32_t> codes;
  for (std::size_t l = 0; l < counts.size(); ++l) codes.insert(codes.end(), counts[l], static_cast<std::uint32_t>(l));
  return CategoricalDataset(schema, codes);
}

CategoricalDataset shuffled(const CategoricalDataset& ds, std::uint64_t seed) {
  std::vector<std::size_t> idx(ds.rows());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  return ds.subset(idx);
}

MetricsConfig fast_metrics() {
  MetricsConfig cfg;
  cfg.var_pred.epochs = 3;
  cfg.seed = 17;
  return cfg;
}

}  // namespace

TEST(KlMarginal, Examples) {
  const auto schema = oracle::make_schema({2});
  const auto p = column_with_counts(schema, {2, 2});
  const auto q = column_with_counts(schema, {1, 3});
  EXPECT_NEAR(kl_marginal(p, q), 0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0), 1e-5);
  EXPECT_NEAR(kl_marginal(p, q), 0.1438, 5e-5);
  EXPECT_EQ(kl_marginal(p, p), 0.0);
  const auto missing = column_with_counts(schema, {0, 4});
  const double big = kl_marginal(p, missing);
  EXPECT_TRUE(std::isfinite(big));
  EXPECT_GT(big, 5.0);
}

TEST(KlMarginal, NonnegativeOnRandomPairs) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto schema = oracle::make_schema({2 + seed % 4, 3});
    const auto a = oracle::random_dataset(schema, 30, seed), b = oracle::random_dataset(schema, 25, seed + 99);
    EXPECT_GE(kl_marginal(a, b), 0.0);
    const double ks = ks_marginal(a, b);
    EXPECT_GE(ks, 0.0);
    EXPECT_LE(ks, 1.0);
    const double cov = support_coverage(a, b);
    EXPECT_GE(cov, 0.0);
    EXPECT_LE(cov, 1.0);
  }
}

TEST(KsMarginal, Examples) {
  const auto s2 = oracle::make_schema({2});
  EXPECT_EQ(ks_marginal(column_with_counts(s2, {3, 0}), column_with_counts(s2, {0, 5})), 1.0);
  const auto s3 = oracle::make_schema({3});
  EXPECT_NEAR(ks_marginal(column_with_counts(s3, {2, 3, 5}), column_with_counts(s3, {4, 3, 3})), 0.2, 1e-12);
  const auto a = oracle::random_dataset(oracle::make_schema({3, 4}), 40, 1);
  EXPECT_EQ(ks_marginal(a, a), 0.0);
}

TEST(SupportCoverage, Examples) {
  const auto s = oracle::make_schema({5});
  EXPECT_DOUBLE_EQ(support_coverage(column_with_counts(s, {1, 1, 1, 1, 0}), column_with_counts(s, {2, 1, 0, 1, 0})),
                   0.75);
  EXPECT_DOUBLE_EQ(support_coverage(column_with_counts(s, {1, 1, 0, 0, 0}), column_with_counts(s, {1, 1, 0, 0, 3})),
                   1.0);
}

TEST(DimProb, Examples) {
  const auto s = oracle::make_schema({2});
  EXPECT_NEAR(dim_prob_mse(column_with_counts(s, {2, 2}), column_with_counts(s, {1, 3})), 0.125, 1e-15);
  const auto a = oracle::random_dataset(oracle::make_schema({3, 4}), 40, 1);
  EXPECT_EQ(dim_prob_mse(a, a), 0.0);
}

TEST(Correlation, KendallMatchesBruteForce) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t n = 2 + rng() % 199;
    const std::uint32_t la = 2 + rng() % 5, lb = 2 + rng() % 5;
    std::vector<std::uint32_t> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = rng() % la;
      b[i] = (rng() % 3 == 0) ? a[i] % lb : rng() % lb;
    }
    a[0] = 0;
    a[1] = 1;
    b[0] = 0;
    b[1] = 1;
    const auto tau = kendall_tau_b(a, b);
    ASSERT_TRUE(tau);
    EXPECT_NEAR(*tau, oracle::kendall_brute(a, b), 1e-12) << seed;
  }
}

TEST(Correlation, UndefinedForConstantColumns) {
  const std::vector<std::uint32_t> c{1, 1, 1}, v{0, 1, 2};
  EXPECT_FALSE(pearson(c, v));
  EXPECT_FALSE(kendall_tau_b(c, v));
  EXPECT_NEAR(*pearson(v, v), 1.0, 1e-15);
  const std::vector<std::uint32_t> r{2, 1, 0};
  EXPECT_NEAR(*kendall_tau_b(v, r), -1.0, 1e-15);
}

TEST(Pcd, Examples) {
  const auto s = oracle::make_schema({2, 2});
  const auto real = oracle::from_codes(s, {0, 0, 1, 1, 0, 0, 1, 1});
  const auto anti = oracle::from_codes(s, {0, 1, 1, 0, 0, 1, 1, 0});
  for (auto kind : {CorrelationKind::pearson, CorrelationKind::kendall}) {
    EXPECT_NEAR(*pcd(real, anti, kind).value, 2.0 * std::sqrt(2.0), 1e-12);
    EXPECT_EQ(*pcd(real, real, kind).value, 0.0);
    const auto constant = oracle::from_codes(s, {0, 0, 0, 1, 0, 0, 0, 1});
    const auto m = pcd(real, constant, kind);
    EXPECT_FALSE(m.value);
    EXPECT_FALSE(m.missing_reason.empty());
  }
}

TEST(LogCluster, ShuffledCopyHitsFloor) {
  const auto real = oracle::random_dataset(oracle::make_schema({3, 3, 4}), 200, 2);
  EXPECT_DOUBLE_EQ(log_cluster(real, shuffled(real, 5), 20, 1), std::log(1e-8));
}

TEST(LogCluster, DisjointSetsArePure) {
  const auto s = oracle::make_schema({3, 3, 3});
  const auto real = oracle::from_codes(s, std::vector<std::uint32_t>(60 * 3, 0));
  const auto synth = oracle::from_codes(s, std::vector<std::uint32_t>(60 * 3, 2));
  EXPECT_NEAR(log_cluster(real, synth, 20, 3), std::log(0.25), 1e-12);
  EXPECT_THROW(log_cluster(real, synth.subset(std::vector<std::size_t>{0, 1}), 20, 3), DataError);
}

TEST(VarPred, Examples) {
  const std::vector<double> a{0.9, 0.8}, b{0.7, 0.8};
  EXPECT_NEAR(var_pred_mse(a, b), 0.02, 1e-15);
  const auto train = make_toy_bayes_net(400, 1), test = make_toy_bayes_net(200, 2);
  ClassifierConfig cc;
  cc.epochs = 3;
  EXPECT_LE(var_pred(train, train, test, cc, 9).mse, 1e-4);
}

TEST(Hamming, NearestNeighbourWithDuplicates) {
  const auto s = oracle::make_schema({3, 3});
  const auto a = oracle::from_codes(s, {0, 0, 0, 0, 2, 2});
  const auto d = nearest_hamming(a, a, true);
  EXPECT_EQ(d, (std::vector<std::uint32_t>{0, 0, 2}));
  const auto b = oracle::from_codes(s, {0, 1, 2, 1});
  EXPECT_EQ(nearest_hamming(a, b, false), (std::vector<std::uint32_t>{1, 1, 1}));
}

TEST(AdversarialAccuracy, ExactCopyScoresHalfDeviation) {
  const auto s = oracle::make_schema({3, 4, 2, 5});
  const auto train = oracle::random_dataset(s, 120, 1), test = oracle::random_dataset(s, 150, 2);
  const auto aa = adversarial_accuracy(train, test, train, 4);
  EXPECT_EQ(aa.rows, 120u);
  EXPECT_EQ(aa.aa_train, 0.0);
  EXPECT_EQ(aa.train_dev, 0.5);
  EXPECT_DOUBLE_EQ(aa.privacy, std::abs(aa.aa_train - aa.aa_test));
}

TEST(AdversarialAccuracy, IidHalvesAreExchangeable) {
  // Ties count as failures under the strict inequality, so iid halves sit at (1 - tie rate) / 2.
  const auto all = make_toy_bayes_net(4000, 3);
  const auto [a, b] = split(all, 0.5, 7);
  double ties = 0.0;
  for (const auto& [q, r] : {std::pair{&a, &b}, std::pair{&b, &a}}) {
    const auto cross = nearest_hamming(*q, *r, false), self = nearest_hamming(*q, *q, true);
    for (std::size_t i = 0; i < cross.size(); ++i) ties += cross[i] == self[i];
  }
  ties /= 2.0 * static_cast<double>(a.rows());
  EXPECT_NEAR(adversarial_accuracy_pair(a, b), 0.5 * (1.0 - ties), 0.03);
}

TEST(Ranks, Conventions) {
  const std::vector<std::optional<double>> v{0.3, 0.1, 0.3, std::nullopt};
  EXPECT_EQ(rank_values(v, false), (std::vector<double>{2.5, 1.0, 2.5, 4.0}));
  EXPECT_EQ(rank_values(v, true), (std::vector<double>{1.5, 3.0, 1.5, 4.0}));
}

TEST(Report, IdentitySuiteAndRanking) {
  const auto train = make_toy_bayes_net(400, 11), test = make_toy_bayes_net(200, 12);
  const auto cfg = fast_metrics();
  const SystemMetrics copy = evaluate(train, test, train, cfg, "copy");
  EXPECT_NEAR(*copy[Metric::kl].value, 0.0, 1e-9);
  EXPECT_EQ(*copy[Metric::ks].value, 0.0);
  EXPECT_EQ(*copy[Metric::coverage].value, 1.0);
  EXPECT_EQ(*copy[Metric::dim_prob].value, 0.0);
  EXPECT_EQ(*copy[Metric::pcd_pearson].value, 0.0);
  EXPECT_EQ(*copy[Metric::pcd_kendall].value, 0.0);
  EXPECT_LE(*copy[Metric::var_pred].value, 1e-4);
  EXPECT_EQ(copy.aa.train_dev, 0.5);

  // Column 0 stuck at one level: worse on every metric, and PCD undefined (ranked last).
  std::vector<std::uint32_t> codes(400 * train.cols());
  const auto base = oracle::random_dataset(train.schema_ptr(), 400, 5);
  std::copy(base.codes().begin(), base.codes().end(), codes.begin());
  for (std::size_t i = 0; i < 400; ++i) codes[i * train.cols()] = 0;
  const CategoricalDataset noise(train.schema_ptr(), codes);
  const SystemMetrics worse = evaluate(train, test, noise, cfg, "noise");
  const MetricsReport single = build_report({copy});
  for (double r : single.ranks[0]) EXPECT_EQ(r, 1.0);
  const MetricsReport two = build_report({worse, copy});
  EXPECT_EQ(two.average_rank[1], 1.0);
  EXPECT_EQ(two.average_rank[0], 2.0);

  std::ostringstream csv;
  two.write_csv(csv);
  EXPECT_EQ(csv.str().rfind("system,KL,KS,Coverage,DimProb,PCD(P),PCD(K),log-cluster,VarPred,Rank", 0), 0u);
  EXPECT_EQ(two.to_json().at("systems").size(), 2u);
}

TEST(Report, LogClusterMissingForUnequalSizes) {
  const auto train = make_toy_bayes_net(300, 1), test = make_toy_bayes_net(100, 2);
  const auto synth = make_toy_bayes_net(250, 3);
  const SystemMetrics m = evaluate(train, test, synth, fast_metrics());
  EXPECT_FALSE(m[Metric::log_cluster].value);
  EXPECT_TRUE(m[Metric::kl].value);
}
