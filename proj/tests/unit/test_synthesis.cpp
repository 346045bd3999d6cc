#include <cmath>

#include <gtest/gtest.h>

#include "cwsynth/error.hpp"
#include "cwsynth/synthesis.hpp"
#include "oracles.hpp"

using namespace cwsynth;

namespace {

EncoderDecoder make_model(const SchemaPtr& schema, std::size_t d = 2) {
  ModelConfig cfg;
  cfg.latent_dim = d;
  cfg.hidden = {8};
  return EncoderDecoder(schema, cfg, 5);
}

}  // namespace

TEST(Generate, UniformDecoderGivesUniformMarginals) {
  const auto schema = oracle::make_schema({2, 3, 5});
  auto model = make_model(schema);
  for (const Slice& s : model.params().slices())
    if (s.name.rfind("decoder.out.", 0) == 0) model.params().assign(s.name, Matrix(s.rows, s.cols));
  const std::size_t n = 10000;
  const auto ds = generate(model, PriorModel::standard_normal(2), n, 3);
  ASSERT_EQ(ds.rows(), n);
  for (std::size_t j = 0; j < 3; ++j) {
    const double p = 1.0 / static_cast<double>(schema->levels(j));
    const double tol = 3.0 * std::sqrt(p * (1.0 - p) / n);
    for (double f : marginal_pmf(ds, j)) EXPECT_NEAR(f, p, tol) << j;
  }
}

TEST(Generate, SeededReproducibility) {
  const auto schema = oracle::make_schema({3, 4});
  const auto model = make_model(schema);
  const auto prior = PriorModel::standard_normal(2);
  EXPECT_EQ(generate(model, prior, 200, 1), generate(model, prior, 200, 1));
  EXPECT_NE(generate(model, prior, 200, 1), generate(model, prior, 200, 2));
}

TEST(Generate, ArgmaxDependsOnlyOnLatent) {
  const auto schema = oracle::make_schema({3, 4, 2});
  const auto model = make_model(schema);
  Matrix z = oracle::random_matrix(6, 2, 2);
  for (std::size_t k = 0; k < 2; ++k) z(3, k) = z(0, k);
  const auto a = generate_from_latent(model, z, 1, DecodeMode::argmax);
  const auto b = generate_from_latent(model, z, 99, DecodeMode::argmax);
  EXPECT_EQ(a, b);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(a.at(0, j), a.at(3, j));
}

TEST(Generate, LevelsStayInSupport) {
  const auto schema = oracle::make_schema({2, 7, 3});
  const auto ds = generate(make_model(schema), PriorModel::standard_normal(2), 500, 4);
  for (std::size_t i = 0; i < ds.rows(); ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_LT(ds.at(i, j), schema->levels(j));
}

TEST(Generate, Errors) {
  const auto schema = oracle::make_schema({2, 2});
  const auto model = make_model(schema);
  EXPECT_THROW(generate(model, PriorModel{}, 10, 0), ConfigError);
  EXPECT_THROW(generate(model, PriorModel::standard_normal(3), 10, 0), ShapeError);
  EXPECT_THROW(generate_from_latent(model, Matrix(2, 3), 0), ShapeError);
}
