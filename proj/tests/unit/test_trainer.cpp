#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "cwsynth/error.hpp"
#include "cwsynth/trainer.hpp"
#include "oracles.hpp"

using namespace cwsynth;

namespace {

Step1Config small_config() {
  Step1Config cfg;
  cfg.model.latent_dim = 2;
  cfg.model.hidden = {16};
  cfg.epochs = 3;
  cfg.batch_size = 64;
  cfg.learning_rate = 5e-3;
  cfg.seed = 11;
  return cfg;
}

ClassifierBank trained_bank(const CategoricalDataset& ds) {
  ClassifierBank bank(ds.schema_ptr());
  ClassifierConfig cc;
  cc.epochs = 3;
  bank.pretrain(ds, cc, 1);
  return bank;
}

}  // namespace

TEST(Step1Config, Validation) {
  Step1Config cfg;
  cfg.lambda = -1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.gamma = -0.1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.epochs = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.model.latent_dim = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.lambda = 100.0;
  cfg.gamma = 0.5;
  EXPECT_NO_THROW(cfg.validate());
}

TEST(Step1Config, MinBatch) {
  Step1Config cfg;
  EXPECT_EQ(cfg.min_batch(), 2u);
  cfg.entropy_reg = false;
  EXPECT_EQ(cfg.min_batch(), 1u);
  cfg.lambda = 1.0;
  EXPECT_EQ(cfg.min_batch(), 2u);
}

TEST(TrainStep1, PlainAutoencoderReconDecreases) {
  const auto ds = make_toy_bayes_net(2000, 3);
  Step1Config cfg = small_config();
  cfg.entropy_reg = false;
  cfg.epochs = 5;
  cfg.model.hidden = {32, 32};
  const auto result = train_step1(ds, nullptr, cfg);
  const auto& epochs = result.report.epochs;
  ASSERT_EQ(epochs.size(), 5u);
  for (std::size_t e = 1; e < 5; ++e) EXPECT_LT(epochs[e].recon, epochs[e - 1].recon) << e;
  EXPECT_FALSE(epochs[0].entropy);
  EXPECT_FALSE(epochs[0].cw);
  EXPECT_FALSE(epochs[0].classifier);
}

TEST(TrainStep1, LossTermsAddUp) {
  const auto ds = make_toy_bayes_net(300, 4);
  const auto bank = trained_bank(ds);
  Step1Config cfg = small_config();
  cfg.lambda = 10.0;
  cfg.gamma = 0.5;
  const auto result = train_step1(ds, &bank, cfg);
  for (const auto& e : result.report.epochs) {
    ASSERT_TRUE(e.entropy && e.cw && e.classifier);
    EXPECT_NEAR(e.total, e.recon + *e.entropy + *e.cw + *e.classifier, 1e-10);
  }
  EXPECT_EQ(result.report.steps, 3u * 5u);
}

TEST(TrainStep1, BitDeterministic) {
  const auto ds = make_toy_bayes_net(300, 5);
  const auto bank = trained_bank(ds);
  Step1Config cfg = small_config();
  cfg.lambda = 5.0;
  cfg.gamma = 0.2;
  const auto a = train_step1(ds, &bank, cfg);
  const auto b = train_step1(ds, &bank, cfg);
  EXPECT_EQ(a.model.params(), b.model.params());
  auto ja = a.report.to_json(), jb = b.report.to_json();
  ja.erase("wall_seconds");
  jb.erase("wall_seconds");
  EXPECT_EQ(ja.dump(), jb.dump());
  cfg.seed = 12;
  EXPECT_NE(train_step1(ds, &bank, cfg).model.params(), a.model.params());
}

TEST(TrainStep1, BankIsLeftUnchanged) {
  const auto ds = make_toy_bayes_net(200, 6);
  const auto bank = trained_bank(ds);
  const ClassifierBank before = bank;
  Step1Config cfg = small_config();
  cfg.gamma = 1.0;
  train_step1(ds, &bank, cfg);
  EXPECT_EQ(bank, before);
}

TEST(TrainStep1, GammaNeedsFrozenMatchingBank) {
  const auto ds = make_toy_bayes_net(100, 6);
  Step1Config cfg = small_config();
  cfg.gamma = 0.5;
  EXPECT_THROW(train_step1(ds, nullptr, cfg), ConfigError);
  ClassifierBank unfrozen(ds.schema_ptr());
  EXPECT_THROW(train_step1(ds, &unfrozen, cfg), ConfigError);
  ClassifierBank other(oracle::make_schema({2, 2}));
  other.freeze();
  EXPECT_THROW(train_step1(ds, &other, cfg), DataError);
  cfg.gamma = 0.0;
  EXPECT_NO_THROW(train_step1(ds, &unfrozen, cfg));
}

TEST(TrainStep1, NonFiniteLossNamesTheTerm) {
  const auto ds = make_toy_bayes_net(100, 7);
  Step1Config cfg = small_config();
  cfg.learning_rate = 1e300;
  cfg.lambda = 1e300;
  try {
    train_step1(ds, nullptr, cfg);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos) << e.what();
  }
}

TEST(TrainStep1, ReportSerialization) {
  const auto ds = make_toy_bayes_net(100, 8);
  Step1Config cfg = small_config();
  cfg.lambda = 1.0;
  const auto r = train_step1(ds, nullptr, cfg).report;
  const auto j = r.to_json();
  EXPECT_EQ(j.at("epochs"), 3);
  EXPECT_EQ(j.at("terms").at("recon").size(), 3u);
  EXPECT_EQ(r.avg_variance.size(), 2u);
  std::ostringstream csv;
  r.write_csv(csv);
  std::string header;
  std::istringstream in(csv.str());
  std::getline(in, header);
  EXPECT_NE(header.find("cw"), std::string::npos);
  EXPECT_EQ(header.find("classifier"), std::string::npos);
}

TEST(Step1Loss, GradientMatchesFiniteDifferences) {
  const auto schema = oracle::make_schema({2, 2, 2, 2});
  const auto ds = oracle::random_dataset(schema, 8, 3);
  ClassifierBank bank(schema);
  ClassifierConfig cc;
  cc.epochs = 5;
  bank.pretrain(ds, cc, 2);
  Step1Config cfg;
  cfg.model.latent_dim = 2;
  cfg.model.hidden = {5};
  cfg.lambda = 3.0;
  cfg.gamma = 0.5;
  cfg.cw.kappa = 0.5;
  const EncoderDecoder model(schema, cfg.model, 4);
  const Matrix x = to_onehot(ds);
  const Matrix noise = oracle::random_matrix(8, 2, 9);
  const auto report = grad_check(model.params(), [&](Tape& t, const ParamStore& p) {
    return build_step1_loss(t, model, p, x, noise, &bank, cfg).total;
  });
  EXPECT_LE(report.max_rel_error, 1e-4);
}

TEST(AggregatePosterior, ShapesAndDegenerateEncoder) {
  const auto schema = oracle::make_schema({3, 3});
  const auto ds = oracle::random_dataset(schema, 10, 1);
  ModelConfig mc;
  mc.hidden = {4};
  EncoderDecoder model(schema, mc, 1);
  EXPECT_EQ(aggregate_posterior_sample(model, ds, 1, 0).z.rows(), 10u);
  EXPECT_EQ(aggregate_posterior_sample(model, ds, 3, 0).z.rows(), 30u);
  for (const Slice& s : model.params().slices())
    if (s.name.rfind("encoder.", 0) == 0) model.params().assign(s.name, Matrix(s.rows, s.cols));
  model.params().assign("encoder.out.bias", Matrix(1, 4, {0.25, -0.5, -40.0, -40.0}));
  const auto lb = aggregate_posterior_sample(model, ds, 2, 5);
  for (std::size_t i = 0; i < lb.z.rows(); ++i) {
    EXPECT_NEAR(lb.z(i, 0), 0.25, 1e-3);
    EXPECT_NEAR(lb.z(i, 1), -0.5, 1e-3);
  }
}

TEST(AggregatePosterior, MomentsMatchMixtureOracle) {
  const auto schema = oracle::make_schema({2, 3});
  const auto ds = oracle::random_dataset(schema, 20, 2);
  ModelConfig mc;
  mc.hidden = {4};
  const EncoderDecoder model(schema, mc, 3);
  const auto [mean, var] = model.encode(to_onehot(ds));
  const std::size_t draws = 5000;
  const auto lb = aggregate_posterior_sample(model, ds, draws, 8);
  for (std::size_t k = 0; k < 2; ++k) {
    double m = 0.0, second = 0.0, s = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < 20; ++i) {
      m += mean(i, k) / 20.0;
      second += (var(i, k) + mean(i, k) * mean(i, k)) / 20.0;
    }
    for (std::size_t r = 0; r < lb.z.rows(); ++r) {
      s += lb.z(r, k);
      s2 += lb.z(r, k) * lb.z(r, k);
    }
    const double n = static_cast<double>(lb.z.rows());
    const double sd = std::sqrt(second - m * m);
    EXPECT_NEAR(s / n, m, 4.0 * sd / std::sqrt(n));
    EXPECT_NEAR(s2 / n, second, 0.05 * second);
  }
}
