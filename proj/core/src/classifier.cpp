#include "cwsynth/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "cwsynth/error.hpp"
#include "cwsynth/random.hpp"

namespace cwsynth {

void ClassifierConfig::validate() const {
  if (epochs == 0) throw ConfigError("classifier epochs must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("classifier learning rate must be positive");
  if (batch_size == 0) throw ConfigError("classifier batch size must be positive");
}

ClassifierBank::ClassifierBank(SchemaPtr schema) : schema_(std::move(schema)) {
  const std::size_t w = schema_->onehot_width();
  weights_ = Matrix(w, w);
  bias_ = Matrix(1, w);
  blocks_ = schema_->block_sizes();
  block_of_.resize(w);
  for (std::size_t j = 0; j < schema_->num_columns(); ++j)
    for (std::size_t l = 0; l < schema_->levels(j); ++l) block_of_[schema_->offset(j) + l] = j;
}

void ClassifierBank::logits_for_row(std::span<const std::uint32_t> codes, double* out) const {
  const std::size_t w = weights_.cols();
  std::copy_n(bias_.data(), w, out);
  for (std::size_t c = 0; c < codes.size(); ++c) {
    const double* wr = weights_.row(schema_->offset(c) + codes[c]).data();
    for (std::size_t k = 0; k < w; ++k) out[k] += wr[k];
  }
}

void ClassifierBank::pretrain(const CategoricalDataset& ds, const ClassifierConfig& cfg,
                              std::uint64_t seed) {
  cfg.validate();
  if (frozen_) throw ConfigError("classifier bank is frozen");
  if (ds.rows() == 0) throw DataError("cannot pretrain classifiers on an empty dataset");
  if (!(ds.schema() == *schema_)) throw DataError("dataset schema does not match the bank");

  const std::size_t w = schema_->onehot_width();
  const std::size_t p = schema_->num_columns();
  weights_.fill(0.0);
  bias_.fill(0.0);

  std::vector<double> params(w * w + w, 0.0);
  std::vector<double> grad(params.size());
  Adam opt(params.size(), cfg.learning_rate);
  std::vector<std::size_t> order(ds.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng(seed, 0xC1A5);
  std::vector<double> logits(w);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::fill(grad.begin(), grad.end(), 0.0);
      const double inv_b = 1.0 / static_cast<double>(end - start);
      for (std::size_t r = start; r < end; ++r) {
        const auto codes = ds.row(order[r]);
        logits_for_row(codes, logits.data());
        // softmax - target, per block
        for (std::size_t j = 0; j < p; ++j) {
          const std::size_t off = schema_->offset(j), t = blocks_[j];
          double mx = logits[off];
          for (std::size_t l = 1; l < t; ++l) mx = std::max(mx, logits[off + l]);
          double s = 0.0;
          for (std::size_t l = 0; l < t; ++l) s += std::exp(logits[off + l] - mx);
          for (std::size_t l = 0; l < t; ++l)
            logits[off + l] = std::exp(logits[off + l] - mx) / s - (l == codes[j] ? 1.0 : 0.0);
        }
        for (std::size_t k = 0; k < w; ++k) grad[w * w + k] += logits[k] * inv_b;
        for (std::size_t c = 0; c < p; ++c) {
          double* gr = grad.data() + (schema_->offset(c) + codes[c]) * w;
          for (std::size_t k = 0; k < w; ++k) gr[k] += logits[k] * inv_b;
          // input block c never feeds output block c
          std::fill_n(gr + schema_->offset(c), blocks_[c], 0.0);
        }
      }
      opt.step(params, grad);
      std::copy_n(params.data(), w * w, weights_.data());
      std::copy_n(params.data() + w * w, w, bias_.data());
    }
  }
  frozen_ = true;
}

Matrix ClassifierBank::log_probs(const Matrix& inputs) const {
  if (inputs.cols() != schema_->onehot_width())
    throw ShapeError("classifier: input width mismatch");
  Matrix logits = matmul(inputs, weights_);
  for (std::size_t i = 0; i < logits.rows(); ++i)
    for (std::size_t k = 0; k < logits.cols(); ++k) logits(i, k) += bias_(0, k);
  return block_log_softmax(logits, blocks_);
}

Matrix ClassifierBank::log_probs(const CategoricalDataset& ds) const {
  const std::size_t w = schema_->onehot_width();
  Matrix logits(ds.rows(), w);
  for (std::size_t i = 0; i < ds.rows(); ++i) logits_for_row(ds.row(i), logits.row(i).data());
  return block_log_softmax(logits, blocks_);
}

std::vector<double> ClassifierBank::accuracy(const CategoricalDataset& ds) const {
  const Matrix lp = log_probs(ds);
  const std::size_t p = schema_->num_columns();
  std::vector<double> acc(p, 0.0);
  if (ds.rows() == 0) return acc;
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      const double* b = lp.row(i).data() + schema_->offset(j);
      std::size_t best = 0;
      for (std::size_t l = 1; l < blocks_[j]; ++l)
        if (b[l] > b[best]) best = l;
      if (best == ds.at(i, j)) acc[j] += 1.0;
    }
  }
  for (double& a : acc) a /= static_cast<double>(ds.rows());
  return acc;
}

std::vector<double> ClassifierBank::log_likelihood(const CategoricalDataset& ds) const {
  const Matrix lp = log_probs(ds);
  const std::size_t p = schema_->num_columns();
  std::vector<double> ll(p, 0.0);
  if (ds.rows() == 0) return ll;
  for (std::size_t i = 0; i < ds.rows(); ++i)
    for (std::size_t j = 0; j < p; ++j) ll[j] += lp(i, schema_->offset(j) + ds.at(i, j));
  for (double& v : ll) v /= static_cast<double>(ds.rows());
  return ll;
}

ParamStore ClassifierBank::to_params() const {
  ParamStore ps;
  const std::size_t w = schema_->onehot_width();
  for (std::size_t j = 0; j < schema_->num_columns(); ++j) {
    const std::size_t off = schema_->offset(j), t = blocks_[j];
    const std::string prefix = "classifier." + std::to_string(j);
    Matrix wj(w - t, t);
    std::size_t r = 0;
    for (std::size_t k = 0; k < w; ++k) {
      if (k >= off && k < off + t) continue;
      for (std::size_t l = 0; l < t; ++l) wj(r, l) = weights_(k, off + l);
      ++r;
    }
    Matrix bj(1, t);
    for (std::size_t l = 0; l < t; ++l) bj(0, l) = bias_(0, off + l);
    ps.add(prefix + ".weight", w - t, t, Init::zeros);
    ps.assign(prefix + ".weight", wj);
    ps.add(prefix + ".bias", 1, t, Init::zeros);
    ps.assign(prefix + ".bias", bj);
  }
  return ps;
}

ClassifierBank ClassifierBank::from_params(SchemaPtr schema, const ParamStore& params) {
  ClassifierBank bank(std::move(schema));
  const auto& s = *bank.schema_;
  const std::size_t w = s.onehot_width();
  for (std::size_t j = 0; j < s.num_columns(); ++j) {
    const std::size_t off = s.offset(j), t = bank.blocks_[j];
    const std::string prefix = "classifier." + std::to_string(j);
    const Slice* ws = params.find(prefix + ".weight");
    const Slice* bs = params.find(prefix + ".bias");
    if (!ws || !bs || ws->rows != w - t || ws->cols != t || bs->rows != 1 || bs->cols != t)
      throw DataError("classifier file does not match the schema at column " + std::to_string(j));
    const Matrix wj = params.matrix(prefix + ".weight");
    const Matrix bj = params.matrix(prefix + ".bias");
    std::size_t r = 0;
    for (std::size_t k = 0; k < w; ++k) {
      if (k >= off && k < off + t) continue;
      for (std::size_t l = 0; l < t; ++l) bank.weights_(k, off + l) = wj(r, l);
      ++r;
    }
    for (std::size_t l = 0; l < t; ++l) bank.bias_(0, off + l) = bj(0, l);
  }
  bank.frozen_ = true;
  return bank;
}

double classification_regularizer(const ClassifierBank& bank, const Matrix& probs) {
  if (!bank.frozen()) throw ConfigError("classification regularizer needs a frozen bank");
  const Matrix lp = bank.log_probs(probs);
  if (probs.rows() == 0) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) s += probs.data()[i] * lp.data()[i];
  return -s / static_cast<double>(probs.rows());
}

Var classification_regularizer(Tape& tape, const ClassifierBank& bank, Var probs) {
  if (!bank.frozen()) throw ConfigError("classification regularizer needs a frozen bank");
  if (tape.value(probs).cols() != bank.schema().onehot_width())
    throw ShapeError("classifier: input width mismatch");
  const Var logits = ad::add_row(tape, ad::matmul(tape, probs, tape.constant(bank.weights())),
                                 tape.constant(bank.bias()));
  const Var lp = ad::block_log_softmax(tape, logits, bank.schema().block_sizes());
  const double n = static_cast<double>(tape.value(probs).rows());
  return ad::scale(tape, ad::sum(tape, ad::mul(tape, probs, lp)), -1.0 / n);
}

}  // namespace cwsynth
