// Acceptance suite: one [PASS]/[FAIL] line per criterion, exit status = number of failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "cli_runner.hpp"
#include "cwsynth/classifier.hpp"
#include "cwsynth/cramer_wold.hpp"
#include "cwsynth/metrics.hpp"
#include "cwsynth/model.hpp"
#include "cwsynth/prior.hpp"
#include "cwsynth/random.hpp"
#include "cwsynth/synthesis.hpp"
#include "cwsynth/trainer.hpp"
#include "oracles.hpp"

using namespace cwsynth;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---- 1: closed-form Cramer-Wold distance vs Monte-Carlo slices ----

Outcome cw_vs_monte_carlo() {
  std::mt19937_64 rng(20240501);
  const std::size_t dims[] = {2, 20, 231, 400};
  double worst = 0.0;
  std::string worst_case;
  for (int c = 0; c < 50; ++c) {
    const std::size_t p = dims[c % 4];
    const std::size_t n = 10 + rng() % 191, m = 10 + rng() % 191;
    std::normal_distribution<double> shift(0.0, 0.5);
    std::uniform_real_distribution<double> spread(0.6, 1.6);
    const double sy = spread(rng);
    const Matrix x = oracle::random_matrix(n, p, rng());
    Matrix y = oracle::random_matrix(m, p, rng(), sy);
    std::vector<double> mu(p);
    for (double& v : mu) v = shift(rng);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t k = 0; k < p; ++k) y(i, k) += mu[k];
    CwConfig cfg;
    cfg.mc_projections = 10000;
    cfg.seed = rng();
    const double exact = cw_distance(x, y, cfg);
    const double mc = cw_distance_mc(x, y, cfg);
    const double rel = std::abs(mc - exact) / std::abs(exact);
    if (rel > worst) {
      worst = rel;
      worst_case = fmt("p=%zu n=%zu m=%zu", p, n, m);
    }
  }
  return {worst <= 0.02, fmt("50 cases, max rel err %.4f at %s (tol 0.02)", worst, worst_case.c_str())};
}

// ---- 2: gradients of every step-1 term ----

Outcome step1_gradients() {
  const auto schema = oracle::make_schema({2, 3, 2, 3});
  const auto ds = oracle::random_dataset(schema, 8, 5);
  ClassifierBank bank(schema);
  ClassifierConfig cc;
  cc.epochs = 10;
  bank.pretrain(ds, cc, 3);
  Step1Config cfg;
  cfg.model.latent_dim = 2;
  cfg.model.hidden = {6};
  cfg.lambda = 10.0;
  cfg.gamma = 0.5;
  const EncoderDecoder model(schema, cfg.model, 7);
  const Matrix x = to_onehot(ds);
  const Matrix noise = oracle::random_matrix(8, 2, 11);

  using Pick = std::function<Var(const Step1Loss&)>;
  const std::pair<const char*, Pick> terms[] = {
      {"recon", [](const Step1Loss& l) { return l.recon; }},
      {"entropy", [](const Step1Loss& l) { return *l.entropy; }},
      {"cw", [](const Step1Loss& l) { return *l.cw; }},
      {"classifier", [](const Step1Loss& l) { return *l.classifier; }},
      {"total", [](const Step1Loss& l) { return l.total; }},
  };
  double worst = 0.0;
  std::string detail;
  for (const auto& [name, pick] : terms) {
    const auto r = grad_check(
        model.params(),
        [&](Tape& t, const ParamStore& p) { return pick(build_step1_loss(t, model, p, x, noise, &bank, cfg)); },
        1e-5);
    worst = std::max(worst, r.max_rel_error);
    detail += fmt("%s %.2e ", name, r.max_rel_error);
  }
  return {worst <= 1e-4, detail + fmt("(%zu params, tol 1e-4)", model.params().size())};
}

// ---- 3: 0 <= E[KL(q(z|x) || q_bar)] <= entropy bound ----

Outcome entropy_bound_inequality() {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> loc(-4.0, 4.0), var(0.05, 3.0);
  int held = 0;
  double min_gap = 1e300, min_kl = 1e300;
  for (int c = 0; c < 20; ++c) {
    const std::size_t n = 1 + rng() % 8;
    Matrix mean(n, 1), variance(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
      mean(i, 0) = loc(rng);
      variance(i, 0) = var(rng);
    }
    const double kl = expected_kl_to_aggregate(mean, variance);
    const double bound = entropy_reg_exact(mean, variance);
    if (kl >= -1e-6 && kl <= bound + 1e-6) ++held;
    min_gap = std::min(min_gap, bound - kl);
    min_kl = std::min(min_kl, kl);
  }
  return {held == 20, fmt("%d/20 hold, min KL %.3e, min bound-KL gap %.3e (tol 1e-6)", held, min_kl, min_gap)};
}

// ---- 4 and 5: desk-scale training runs on the toy Bayes net ----

struct RunSummary {
  double mean_variance = 0.0;
  double kl = 0.0;
  double pcd_pearson = 0.0;
};

RunSummary train_and_score(const CategoricalDataset& train, const CategoricalDataset& test, double lambda,
                           bool entropy, std::uint64_t seed) {
  Step1Config cfg;
  cfg.epochs = 100;
  cfg.lambda = lambda;
  cfg.entropy_reg = entropy;
  cfg.seed = derive_seed(seed, 1);
  cfg.cw.seed = derive_seed(seed, 2);
  const auto trained = train_step1(train, nullptr, cfg, &test);
  RunSummary s;
  for (double v : trained.report.avg_variance) s.mean_variance += v / trained.report.avg_variance.size();

  const LatentBatch z = aggregate_posterior_sample(trained.model, train, 1, derive_seed(seed, 5));
  GmmOptions gmm;
  gmm.seed = derive_seed(seed, 3);
  const PriorModel prior = fit_gmm(z.z, gmm).model;
  const auto synth = generate(trained.model, prior, train.rows(), derive_seed(seed, 7));
  s.kl = kl_marginal(train, synth);
  s.pcd_pearson = pcd(train, synth, CorrelationKind::pearson).value.value_or(NAN);
  return s;
}

enum class Variant { base, cw, no_entropy };  // (lambda 0, on), (lambda 100, on), (lambda 0, off)

// Runs are memoized so criterion 5 reuses the seeds criterion 4 already trained.
const RunSummary& ablation_run(Variant v, std::uint64_t seed) {
  static const auto data = make_toy_bayes_net(5000, 2024);
  static const auto parts = split(data, 0.2, 1);
  static std::map<std::pair<Variant, std::uint64_t>, RunSummary> cache;
  auto it = cache.find({v, seed});
  if (it == cache.end()) {
    const double lambda = v == Variant::cw ? 100.0 : 0.0;
    it = cache.emplace(std::pair{v, seed},
                       train_and_score(parts.first, parts.second, lambda, v != Variant::no_entropy, seed))
             .first;
  }
  return it->second;
}

Outcome posterior_variance_ratio() {
  double worst = 1e300;
  std::string detail;
  for (std::uint64_t s = 1; s <= 3; ++s) {
    const double on = ablation_run(Variant::base, s).mean_variance;
    const double off = ablation_run(Variant::no_entropy, s).mean_variance;
    worst = std::min(worst, on / off);
    detail += fmt("seed %lu: %.3g/%.3g=%.0fx; ", static_cast<unsigned long>(s), on, off, on / off);
  }
  return {worst >= 10.0, detail + "min ratio >= 10 required"};
}

Outcome ablation_trends() {
  auto mean = [](Variant v, double RunSummary::*f) {
    double s = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) s += ablation_run(v, seed).*f;
    return s / 5.0;
  };
  const double pcd0 = mean(Variant::base, &RunSummary::pcd_pearson);
  const double pcd100 = mean(Variant::cw, &RunSummary::pcd_pearson);
  const double kl_on = mean(Variant::base, &RunSummary::kl), kl_off = mean(Variant::no_entropy, &RunSummary::kl);
  return {pcd100 <= pcd0 && kl_on <= kl_off,
          fmt("PCD(P) lambda=100 %.4f vs lambda=0 %.4f; KL entropy on %.3e vs off %.3e (5 seeds)", pcd100, pcd0,
              kl_on, kl_off)};
}

// ---- 6: metric identity suite ----

Outcome metric_identity() {
  const auto data = make_toy_bayes_net(5000, 6);
  const auto [train, test] = split(data, 0.2, 2);
  const CategoricalDataset copy = train.subset([&] {
    std::vector<std::size_t> idx(train.rows());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return idx;
  }());
  MetricsConfig cfg;
  cfg.seed = 99;
  const SystemMetrics m = evaluate(train, test, copy, cfg, "copy");
  const double kl = *m[Metric::kl].value, ks = *m[Metric::ks].value, cov = *m[Metric::coverage].value;
  const double dp = *m[Metric::dim_prob].value, pp = *m[Metric::pcd_pearson].value;
  const double pk = *m[Metric::pcd_kendall].value, vp = *m[Metric::var_pred].value;
  const bool ok = std::abs(kl) <= 1e-9 && ks == 0.0 && cov == 1.0 && dp == 0.0 && pp == 0.0 && pk == 0.0 &&
                  vp <= 1e-4 && m.aa.train_dev == 0.5;
  return {ok, fmt("KL %.1e KS %g Coverage %g DimProb %g PCD(P) %g PCD(K) %g VarPred %.1e AA(train) %g", kl, ks, cov,
                  dp, pp, pk, vp, m.aa.train_dev)};
}

// ---- 7: adversarial accuracy of iid halves ----

// 54 independent columns with 231 one-hot levels in total, skewed random marginals.
CategoricalDataset survey_shaped_source(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> levels(54, 4);
  levels.back() = 231 - 53 * 4;
  const auto schema = oracle::make_schema(levels);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::discrete_distribution<std::uint32_t>> cols;
  for (std::size_t t : levels) {
    std::vector<double> w(t);
    for (double& v : w) v = 0.05 + u(rng) * u(rng);
    cols.emplace_back(w.begin(), w.end());
  }
  std::vector<std::uint32_t> codes(n * levels.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < levels.size(); ++j) codes[i * levels.size() + j] = cols[j](rng);
  return CategoricalDataset(schema, std::move(codes));
}

Outcome aa_calibration() {
  double worst = 0.0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto source = survey_shaped_source(10000, 500 + seed);
    const auto [a, b] = split(source, 0.5, seed);
    const double aa = adversarial_accuracy_pair(a, b);
    const auto cross = nearest_hamming(a, b, false), self = nearest_hamming(a, a, true);
    std::size_t ties = 0;
    for (std::size_t i = 0; i < cross.size(); ++i) ties += cross[i] == self[i];
    worst = std::max(worst, std::abs(aa - 0.5));
    detail += fmt("%.3f(ties %.2f) ", aa, static_cast<double>(ties) / static_cast<double>(cross.size()));
  }
  return {worst <= 0.05, "AA_TrS per seed: " + detail + fmt("max |AA-0.5| %.3f (tol 0.05)", worst)};
}

// ---- 8: oracle equivalences ----

Outcome oracle_equivalences() {
  std::mt19937_64 rng(8);
  double kendall_err = 0.0;
  for (int c = 0; c < 100; ++c) {
    const std::size_t n = 2 + rng() % 199;
    const std::uint32_t la = 2 + rng() % 6, lb = 2 + rng() % 6;
    std::vector<std::uint32_t> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = rng() % la;
      b[i] = rng() % 2 ? a[i] % lb : rng() % lb;
    }
    a[0] = 0, a[1] = 1, b[0] = 0, b[1] = 1;
    kendall_err = std::max(kendall_err, std::abs(*kendall_tau_b(a, b) - oracle::kendall_brute(a, b)));
  }

  const Matrix pts = oracle::random_matrix(40, 2, 9);
  const PriorModel kde = fit_kde(pts);
  const double lo = -4.0 - 10.0 * kde.bandwidth()[0], hi = 4.0 + 10.0 * kde.bandwidth()[0];
  const double mass = oracle::simpson(
      [&](double s) {
        return oracle::simpson(
            [&](double t) {
              const double z[2] = {s, t};
              return std::exp(kde.log_pdf(z));
            },
            lo, hi, 600);
      },
      lo, hi, 600);

  int monotone = 0;
  for (std::uint64_t r = 0; r < 20; ++r) {
    std::mt19937_64 g(100 + r);
    const std::size_t n = 50 + g() % 300, d = 1 + g() % 3;
    Matrix z = oracle::random_matrix(n, d, g());
    for (std::size_t i = 0; i < n; ++i) z(i, 0) += 3.0 * static_cast<double>(i % 3);
    GmmOptions opt;
    opt.components = 1 + g() % 6;
    opt.seed = g();
    const auto fit = fit_gmm(z, opt);
    bool ok = true;
    for (std::size_t i = 1; i < fit.log_likelihood.size(); ++i)
      ok = ok && fit.log_likelihood[i] >= fit.log_likelihood[i - 1] - 1e-12;
    monotone += ok;
  }
  return {kendall_err <= 1e-12 && std::abs(mass - 1.0) <= 1e-3 && monotone == 20,
          fmt("Kendall max |diff| %.1e over 100 cases; KDE mass %.6f; EM monotone %d/20", kendall_err, mass, monotone)};
}

// ---- 9: CLI pipeline reproducibility ----

Outcome cli_reproducibility() {
  const fs::path dir = cli::scratch_dir("acceptance");
  const auto q = [&](const fs::path& p) { return "\"" + (dir / p).string() + "\""; };
  const auto log = dir / "log.txt";
  std::string failure;
  auto step = [&](const std::string& args) {
    if (!failure.empty()) return;
    const auto r = cli::run(args, log);
    if (r.exit_code != 0) failure = args.substr(0, args.find(' ')) + " exited " + std::to_string(r.exit_code);
  };
  step("toy-data --rows 2000 --seed 3 --out " + q("toy.csv"));
  step("split --data " + q("toy.csv") + " --test-fraction 0.2 --seed 3 --out " + q("split"));
  for (const char* run : {"r1", "r2"}) {
    const fs::path r = run;
    step("pretrain-classifiers --data " + q("split/train.csv") + " --out " + q(r / "bank.cwgw") + " --seed 42");
    step("fit --data " + q("split/train.csv") + " --test " + q("split/test.csv") + " --classifiers " +
         q(r / "bank.cwgw") + " --lambda 100 --gamma 0.5 --epochs 5 --out " + q(r / "model") + " --seed 42");
    step("sample --model " + q(r / "model") + " --out " + q(r / "synth.csv") + " --seed 42");
    step("evaluate --data " + q("split/train.csv") + " --test " + q("split/test.csv") + " --synth " +
         q(r / "synth.csv") + " --out " + q(r / "report.json") + " --csv " + q(r / "report.csv") + " --seed 42");
  }
  int identical = 0;
  const char* files[] = {"bank.cwgw", "model/model.cwgw", "model/prior.cwgw", "model/train_report.json",
                         "synth.csv", "report.json", "report.csv"};
  for (const char* f : files) {
    const std::string a = cli::slurp(dir / "r1" / f), b = cli::slurp(dir / "r2" / f);
    identical += !a.empty() && a == b;
  }
  fs::remove_all(dir);
  if (!failure.empty()) return {false, failure};
  return {identical == 7, fmt("%d/7 artifacts bit-identical across two runs", identical)};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "cramer-wold closed form vs monte-carlo", 60.0, cw_vs_monte_carlo},
      {2, "step-1 gradient suite", 10.0, step1_gradients},
      {3, "entropy bound inequality", 30.0, entropy_bound_inequality},
      {4, "posterior variance with vs without entropy term", 600.0, posterior_variance_ratio},
      {5, "ablation trends", 1800.0, ablation_trends},
      {6, "metric identity suite", 120.0, metric_identity},
      {7, "adversarial accuracy calibration", 300.0, aa_calibration},
      {8, "oracle equivalences", 300.0, oracle_equivalences},
      {9, "end-to-end reproducibility", 600.0, cli_reproducibility},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool pass = out.pass && secs < c.budget_seconds;
    failures += !pass;
    std::printf("[%s] %d %s: %s; %.1f s (budget %.0f s)\n", pass ? "PASS" : "FAIL", c.id, c.name,
                out.detail.c_str(), secs, c.budget_seconds);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures;
}
