#include "cwsynth/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "cwsynth/error.hpp"
#include "cwsynth/random.hpp"
#include "kmeans.hpp"

namespace cwsynth {

void MetricsConfig::validate() const {
  if (!(kl_smoothing > 0.0)) throw ConfigError("kl smoothing must be positive");
  if (clusters == 0) throw ConfigError("cluster count must be positive");
  if (kmeans_iters == 0) throw ConfigError("k-means iterations must be positive");
  if (!(cluster_floor > 0.0)) throw ConfigError("log-cluster floor must be positive");
  var_pred.validate();
}

namespace {

void require_same_schema(const CategoricalDataset& a, const CategoricalDataset& b) {
  if (!(a.schema() == b.schema())) throw DataError("datasets do not share a schema");
}

void require_rows(const CategoricalDataset& ds, const char* what) {
  if (ds.rows() == 0) throw DataError(std::string(what) + " dataset is empty");
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

std::vector<double> kl_per_column(const CategoricalDataset& real, const CategoricalDataset& synth,
                                  double smoothing) {
  require_same_schema(real, synth);
  require_rows(real, "real");
  require_rows(synth, "synthetic");
  std::vector<double> out;
  for (std::size_t j = 0; j < real.cols(); ++j) {
    const auto p = marginal_pmf(real, j);
    const auto q = marginal_pmf(synth, j);
    if (p == q) {
      out.push_back(0.0);
      continue;
    }
    const double norm = 1.0 + smoothing * static_cast<double>(q.size());
    double s = 0.0;
    for (std::size_t l = 0; l < p.size(); ++l)
      if (p[l] > 0.0) s += p[l] * std::log(p[l] * norm / (q[l] + smoothing));
    out.push_back(s);
  }
  return out;
}

double kl_marginal(const CategoricalDataset& real, const CategoricalDataset& synth,
                   double smoothing) {
  return mean_of(kl_per_column(real, synth, smoothing));
}

std::vector<double> ks_per_column(const CategoricalDataset& real, const CategoricalDataset& synth) {
  require_same_schema(real, synth);
  require_rows(real, "real");
  require_rows(synth, "synthetic");
  std::vector<double> out;
  for (std::size_t j = 0; j < real.cols(); ++j) {
    const auto p = marginal_pmf(real, j);
    const auto q = marginal_pmf(synth, j);
    double cp = 0.0, cq = 0.0, best = 0.0;
    for (std::size_t l = 0; l < p.size(); ++l) {
      cp += p[l];
      cq += q[l];
      best = std::max(best, std::abs(cp - cq));
    }
    out.push_back(std::min(best, 1.0));
  }
  return out;
}

double ks_marginal(const CategoricalDataset& real, const CategoricalDataset& synth) {
  return mean_of(ks_per_column(real, synth));
}

std::vector<double> coverage_per_column(const CategoricalDataset& real,
                                        const CategoricalDataset& synth) {
  require_same_schema(real, synth);
  require_rows(real, "real");
  std::vector<double> out;
  for (std::size_t j = 0; j < real.cols(); ++j) {
    std::vector<bool> in_real(real.schema().levels(j)), in_synth(real.schema().levels(j));
    for (std::size_t i = 0; i < real.rows(); ++i) in_real[real.at(i, j)] = true;
    for (std::size_t i = 0; i < synth.rows(); ++i) in_synth[synth.at(i, j)] = true;
    std::size_t seen = 0, both = 0;
    for (std::size_t l = 0; l < in_real.size(); ++l) {
      seen += in_real[l];
      both += in_real[l] && in_synth[l];
    }
    out.push_back(static_cast<double>(both) / static_cast<double>(seen));
  }
  return out;
}

double support_coverage(const CategoricalDataset& real, const CategoricalDataset& synth) {
  return mean_of(coverage_per_column(real, synth));
}

double dim_prob_mse(const CategoricalDataset& real, const CategoricalDataset& synth) {
  require_same_schema(real, synth);
  require_rows(real, "real");
  require_rows(synth, "synthetic");
  double s = 0.0;
  for (std::size_t j = 0; j < real.cols(); ++j) {
    const auto p = marginal_pmf(real, j);
    const auto q = marginal_pmf(synth, j);
    for (std::size_t l = 0; l < p.size(); ++l) s += (p[l] - q[l]) * (p[l] - q[l]);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Correlations

std::optional<double> pearson(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b) {
  if (a.size() != b.size()) throw ShapeError("pearson: length mismatch");
  const std::size_t n = a.size();
  if (n < 2) return std::nullopt;
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0.0 || sbb <= 0.0) return std::nullopt;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::optional<double> kendall_tau_b(std::span<const std::uint32_t> a,
                                    std::span<const std::uint32_t> b) {
  if (a.size() != b.size()) throw ShapeError("kendall: length mismatch");
  const std::size_t n = a.size();
  if (n < 2) return std::nullopt;
  const std::size_t ra = *std::max_element(a.begin(), a.end()) + 1;
  const std::size_t rb = *std::max_element(b.begin(), b.end()) + 1;
  std::vector<std::int64_t> table(ra * rb, 0);
  for (std::size_t i = 0; i < n; ++i) ++table[a[i] * rb + b[i]];
  // above[u][v] = sum of table[u'][v'] for u' > u and v' > v; below uses v' < v.
  std::vector<std::int64_t> above((ra + 1) * (rb + 1), 0), below((ra + 1) * (rb + 1), 0);
  auto at = [&](std::vector<std::int64_t>& m, std::size_t u, std::size_t v) -> std::int64_t& {
    return m[u * (rb + 1) + v];
  };
  for (std::size_t u = ra; u-- > 0;)
    for (std::size_t v = rb; v-- > 0;)
      at(above, u, v) = table[u * rb + v] + at(above, u + 1, v) + at(above, u, v + 1) -
                        at(above, u + 1, v + 1);
  // below indexed with v shifted by one: at(below, u, v + 1) covers columns <= v.
  for (std::size_t u = ra; u-- > 0;)
    for (std::size_t v = 0; v < rb; ++v)
      at(below, u, v + 1) = table[u * rb + v] + at(below, u + 1, v + 1) + at(below, u, v) -
                            at(below, u + 1, v);
  std::int64_t concordant = 0, discordant = 0;
  for (std::size_t u = 0; u < ra; ++u)
    for (std::size_t v = 0; v < rb; ++v) {
      const std::int64_t c = table[u * rb + v];
      if (c == 0) continue;
      concordant += c * at(above, u + 1, v + 1);
      discordant += c * at(below, u + 1, v);
    }
  const auto pairs = [](std::int64_t t) { return t * (t - 1) / 2; };
  std::int64_t ties_a = 0, ties_b = 0;
  for (std::size_t u = 0; u < ra; ++u) {
    std::int64_t row = 0;
    for (std::size_t v = 0; v < rb; ++v) row += table[u * rb + v];
    ties_a += pairs(row);
  }
  for (std::size_t v = 0; v < rb; ++v) {
    std::int64_t col = 0;
    for (std::size_t u = 0; u < ra; ++u) col += table[u * rb + v];
    ties_b += pairs(col);
  }
  const std::int64_t n0 = pairs(static_cast<std::int64_t>(n));
  const double denom = std::sqrt(static_cast<double>(n0 - ties_a)) *
                       std::sqrt(static_cast<double>(n0 - ties_b));
  if (!(denom > 0.0)) return std::nullopt;
  return static_cast<double>(concordant - discordant) / denom;
}

Correlation correlation_matrix(const CategoricalDataset& ds, CorrelationKind kind) {
  const std::size_t p = ds.cols();
  std::vector<std::vector<std::uint32_t>> cols(p);
  for (std::size_t j = 0; j < p; ++j) {
    cols[j] = ds.column_codes(j);
    if (cols[j].empty() || std::all_of(cols[j].begin(), cols[j].end(),
                                       [&](std::uint32_t c) { return c == cols[j][0]; }))
      return {std::nullopt, "column '" + ds.schema().column(j).name + "' is constant"};
  }
  Matrix m = Matrix::identity(p);
  for (std::size_t a = 0; a < p; ++a)
    for (std::size_t b = a + 1; b < p; ++b) {
      const auto r = kind == CorrelationKind::pearson ? pearson(cols[a], cols[b])
                                                      : kendall_tau_b(cols[a], cols[b]);
      if (!r)
        return {std::nullopt, "correlation of '" + ds.schema().column(a).name + "' and '" +
                                  ds.schema().column(b).name + "' is undefined"};
      m(a, b) = m(b, a) = *r;
    }
  return {std::move(m), {}};
}

MetricValue pcd(const CategoricalDataset& real, const CategoricalDataset& synth,
                CorrelationKind kind) {
  require_same_schema(real, synth);
  if (real.cols() < 2) return {std::nullopt, "needs at least two columns"};
  const Correlation cr = correlation_matrix(real, kind);
  if (!cr.matrix) return {std::nullopt, "real data: " + cr.missing_reason};
  const Correlation cs = correlation_matrix(synth, kind);
  if (!cs.matrix) return {std::nullopt, "synthetic data: " + cs.missing_reason};
  double s = 0.0;
  for (std::size_t i = 0; i < cr.matrix->size(); ++i) {
    const double d = cr.matrix->data()[i] - cs.matrix->data()[i];
    s += d * d;
  }
  return {std::sqrt(s), {}};
}

// ---------------------------------------------------------------------------
// Clustering and prediction

double log_cluster(const CategoricalDataset& real, const CategoricalDataset& synth,
                   std::size_t clusters, std::uint64_t seed, std::size_t max_iters, double c,
                   double floor) {
  require_same_schema(real, synth);
  if (real.rows() != synth.rows())
    throw DataError("log-cluster needs equally sized real and synthetic data (" +
                    std::to_string(real.rows()) + " vs " + std::to_string(synth.rows()) + ")");
  require_rows(real, "real");
  if (clusters == 0) throw ConfigError("cluster count must be positive");
  const Matrix xr = to_onehot(real), xs = to_onehot(synth);
  Matrix pooled(xr.rows() + xs.rows(), xr.cols());
  std::copy(xr.values().begin(), xr.values().end(), pooled.values().begin());
  std::copy(xs.values().begin(), xs.values().end(), pooled.values().begin() + xr.size());
  Rng rng = make_rng(seed, 0xC105);
  const auto km = detail::kmeans(pooled, std::min(clusters, pooled.rows()), max_iters, rng);
  std::vector<std::size_t> total(km.centers.rows(), 0), from_real(km.centers.rows(), 0);
  for (std::size_t i = 0; i < pooled.rows(); ++i) {
    ++total[km.assignment[i]];
    if (i < xr.rows()) ++from_real[km.assignment[i]];
  }
  double s = 0.0;
  std::size_t used = 0;
  for (std::size_t g = 0; g < total.size(); ++g) {
    if (total[g] == 0) continue;
    const double frac = static_cast<double>(from_real[g]) / static_cast<double>(total[g]);
    s += (frac - c) * (frac - c);
    ++used;
  }
  return std::log(std::max(s / static_cast<double>(used), floor));
}

double var_pred_mse(std::span<const double> real_accuracy, std::span<const double> synth_accuracy) {
  if (real_accuracy.size() != synth_accuracy.size() || real_accuracy.empty())
    throw ShapeError("var_pred: accuracy vectors differ in length");
  double s = 0.0;
  for (std::size_t j = 0; j < real_accuracy.size(); ++j) {
    const double d = real_accuracy[j] - synth_accuracy[j];
    s += d * d;
  }
  return s / static_cast<double>(real_accuracy.size());
}

VarPredResult var_pred(const CategoricalDataset& real_train, const CategoricalDataset& synth,
                       const CategoricalDataset& real_test, const ClassifierConfig& cfg,
                       std::uint64_t seed) {
  require_same_schema(real_train, synth);
  require_same_schema(real_train, real_test);
  require_rows(real_test, "test");
  ClassifierBank on_real(real_train.schema_ptr());
  on_real.pretrain(real_train, cfg, seed);
  ClassifierBank on_synth(real_train.schema_ptr());
  on_synth.pretrain(synth, cfg, seed);
  VarPredResult r;
  r.real_accuracy = on_real.accuracy(real_test);
  r.synth_accuracy = on_synth.accuracy(real_test);
  r.mse = var_pred_mse(r.real_accuracy, r.synth_accuracy);
  return r;
}

// ---------------------------------------------------------------------------
// Adversarial accuracy

std::vector<std::uint32_t> nearest_hamming(const CategoricalDataset& query,
                                           const CategoricalDataset& reference,
                                           bool exclude_self) {
  require_same_schema(query, reference);
  const std::size_t p = query.cols();
  if (exclude_self && query.rows() != reference.rows())
    throw ShapeError("self-excluded nearest neighbours need equally sized sets");
  if (reference.rows() == 0 || (exclude_self && reference.rows() < 2))
    throw DataError("nearest-neighbour reference set is too small");
  const auto rc = reference.codes();
  std::vector<std::uint32_t> out(query.rows());
  for (std::size_t i = 0; i < query.rows(); ++i) {
    const auto q = query.row(i);
    std::uint32_t best = static_cast<std::uint32_t>(p) + 1;
    for (std::size_t r = 0; r < reference.rows() && best > 0; ++r) {
      if (exclude_self && r == i) continue;
      const std::uint32_t* row = rc.data() + r * p;
      std::uint32_t dist = 0;
      for (std::size_t j = 0; j < p && dist < best; ++j) dist += q[j] != row[j];
      best = std::min(best, dist);
    }
    out[i] = best;
  }
  return out;
}

double adversarial_accuracy_pair(const CategoricalDataset& a, const CategoricalDataset& b) {
  require_same_schema(a, b);
  if (a.rows() != b.rows()) throw ShapeError("adversarial accuracy needs equally sized sets");
  if (a.rows() < 2) throw DataError("adversarial accuracy needs at least two rows");
  const auto d_ab = nearest_hamming(a, b, false);
  const auto d_aa = nearest_hamming(a, a, true);
  const auto d_ba = nearest_hamming(b, a, false);
  const auto d_bb = nearest_hamming(b, b, true);
  std::size_t first = 0, second = 0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    first += d_ab[i] > d_aa[i];
    second += d_ba[i] > d_bb[i];
  }
  const double n = static_cast<double>(a.rows());
  return 0.5 * (static_cast<double>(first) / n + static_cast<double>(second) / n);
}

namespace {

CategoricalDataset subsample(const CategoricalDataset& ds, std::size_t m, std::uint64_t seed) {
  if (ds.rows() == m) return ds;
  std::vector<std::size_t> idx(ds.rows());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng = make_rng(seed, ds.rows());
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(m);
  std::sort(idx.begin(), idx.end());
  return ds.subset(idx);
}

}  // namespace

AdversarialAccuracy adversarial_accuracy(const CategoricalDataset& train,
                                         const CategoricalDataset& test,
                                         const CategoricalDataset& synth, std::uint64_t seed) {
  require_same_schema(train, synth);
  require_same_schema(train, test);
  const std::size_t m = std::min({train.rows(), test.rows(), synth.rows()});
  if (m < 2) throw DataError("adversarial accuracy needs at least two rows per dataset");
  const auto tr = subsample(train, m, seed);
  const auto te = subsample(test, m, seed);
  const auto sy = subsample(synth, m, seed);
  AdversarialAccuracy r;
  r.rows = m;
  r.aa_train = adversarial_accuracy_pair(tr, sy);
  r.aa_test = adversarial_accuracy_pair(te, sy);
  r.train_dev = std::abs(r.aa_train - 0.5);
  r.test_dev = std::abs(r.aa_test - 0.5);
  r.privacy = std::abs(r.aa_train - r.aa_test);
  return r;
}

// ---------------------------------------------------------------------------
// Reports

const char* metric_name(Metric m) noexcept {
  switch (m) {
    case Metric::kl: return "KL";
    case Metric::ks: return "KS";
    case Metric::coverage: return "Coverage";
    case Metric::dim_prob: return "DimProb";
    case Metric::pcd_pearson: return "PCD(P)";
    case Metric::pcd_kendall: return "PCD(K)";
    case Metric::log_cluster: return "log-cluster";
    case Metric::var_pred: return "VarPred";
  }
  return "?";
}

bool higher_is_better(Metric m) noexcept { return m == Metric::coverage; }

SystemMetrics evaluate(const CategoricalDataset& real_train, const CategoricalDataset& real_test,
                       const CategoricalDataset& synth, const MetricsConfig& cfg,
                       std::string name) {
  cfg.validate();
  require_same_schema(real_train, synth);
  require_same_schema(real_train, real_test);
  SystemMetrics s;
  s.name = std::move(name);
  s.kl_columns = kl_per_column(real_train, synth, cfg.kl_smoothing);
  s.ks_columns = ks_per_column(real_train, synth);
  s.coverage_columns = coverage_per_column(real_train, synth);
  s[Metric::kl].value = mean_of(s.kl_columns);
  s[Metric::ks].value = mean_of(s.ks_columns);
  s[Metric::coverage].value = mean_of(s.coverage_columns);
  s[Metric::dim_prob].value = dim_prob_mse(real_train, synth);
  s[Metric::pcd_pearson] = pcd(real_train, synth, CorrelationKind::pearson);
  s[Metric::pcd_kendall] = pcd(real_train, synth, CorrelationKind::kendall);
  if (real_train.rows() == synth.rows())
    s[Metric::log_cluster].value =
        log_cluster(real_train, synth, cfg.clusters, cfg.seed, cfg.kmeans_iters,
                    cfg.cluster_target, cfg.cluster_floor);
  else
    s[Metric::log_cluster].missing_reason = "synthetic and real training sizes differ";
  s.var_pred = var_pred(real_train, synth, real_test, cfg.var_pred, cfg.seed);
  s[Metric::var_pred].value = s.var_pred.mse;
  s.aa = adversarial_accuracy(real_train, real_test, synth, cfg.seed);
  return s;
}

std::vector<double> rank_values(std::span<const std::optional<double>> values,
                                bool higher_better) {
  const std::size_t n = values.size();
  std::vector<std::size_t> present;
  for (std::size_t i = 0; i < n; ++i)
    if (values[i] && !std::isnan(*values[i])) present.push_back(i);
  auto key = [&](std::size_t i) { return higher_better ? -*values[i] : *values[i]; };
  std::stable_sort(present.begin(), present.end(),
                   [&](std::size_t a, std::size_t b) { return key(a) < key(b); });
  std::vector<double> ranks(n, 0.0);
  for (std::size_t k = 0; k < present.size();) {
    std::size_t e = k;
    while (e + 1 < present.size() && key(present[e + 1]) == key(present[k])) ++e;
    const double r = 0.5 * static_cast<double>(k + e) + 1.0;
    for (std::size_t t = k; t <= e; ++t) ranks[present[t]] = r;
    k = e + 1;
  }
  const std::size_t missing = n - present.size();
  const double last = static_cast<double>(present.size()) + 0.5 * static_cast<double>(missing + 1);
  for (std::size_t i = 0; i < n; ++i)
    if (!(values[i] && !std::isnan(*values[i]))) ranks[i] = last;
  return ranks;
}

MetricsReport build_report(std::vector<SystemMetrics> systems) {
  if (systems.empty()) throw ConfigError("report needs at least one system");
  MetricsReport r;
  r.systems = std::move(systems);
  const std::size_t s = r.systems.size();
  r.ranks.assign(s, {});
  r.average_rank.assign(s, 0.0);
  for (std::size_t m = 0; m < kNumRankedMetrics; ++m) {
    std::vector<std::optional<double>> col(s);
    for (std::size_t i = 0; i < s; ++i) col[i] = r.systems[i].values[m].value;
    const auto ranks = rank_values(col, higher_is_better(kRankedMetrics[m]));
    for (std::size_t i = 0; i < s; ++i) {
      r.ranks[i][m] = ranks[i];
      r.average_rank[i] += ranks[i] / static_cast<double>(kNumRankedMetrics);
    }
  }
  return r;
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json systems_json = nlohmann::json::array();
  for (std::size_t i = 0; i < systems.size(); ++i) {
    const SystemMetrics& s = systems[i];
    nlohmann::json values = nlohmann::json::object(), missing = nlohmann::json::object(),
                   ranks_json = nlohmann::json::object();
    for (std::size_t m = 0; m < kNumRankedMetrics; ++m) {
      const char* key = metric_name(kRankedMetrics[m]);
      if (s.values[m].value) {
        values[key] = *s.values[m].value;
      } else {
        values[key] = nullptr;
        missing[key] = s.values[m].missing_reason;
      }
      ranks_json[key] = ranks.empty() ? 1.0 : ranks[i][m];
    }
    systems_json.push_back({
        {"name", s.name},
        {"metrics", std::move(values)},
        {"missing", std::move(missing)},
        {"ranks", std::move(ranks_json)},
        {"average_rank", average_rank.empty() ? 1.0 : average_rank[i]},
        {"per_column", {{"KL", s.kl_columns}, {"KS", s.ks_columns}, {"Coverage", s.coverage_columns}}},
        {"var_pred_accuracy", {{"real", s.var_pred.real_accuracy}, {"synthetic", s.var_pred.synth_accuracy}}},
        {"adversarial_accuracy",
         {{"rows", s.aa.rows},
          {"AA_TrS", s.aa.aa_train},
          {"AA_TeS", s.aa.aa_test},
          {"AA(train)", s.aa.train_dev},
          {"AA(test)", s.aa.test_dev},
          {"AA(privacy)", s.aa.privacy}}},
    });
  }
  return {{"format", "cwsynth-metrics"}, {"systems", std::move(systems_json)}};
}

void MetricsReport::write_csv(std::ostream& out) const {
  out << "system";
  for (Metric m : kRankedMetrics) out << ',' << metric_name(m);
  out << ",Rank,AA(train),AA(test),AA(privacy)\n";
  out.precision(10);
  for (std::size_t i = 0; i < systems.size(); ++i) {
    const SystemMetrics& s = systems[i];
    out << s.name;
    for (const MetricValue& v : s.values) {
      out << ',';
      if (v.value)
        out << *v.value;
      else
        out << "nan";
    }
    out << ',' << average_rank[i] << ',' << s.aa.train_dev << ',' << s.aa.test_dev << ','
        << s.aa.privacy << '\n';
  }
}

}  // namespace cwsynth
