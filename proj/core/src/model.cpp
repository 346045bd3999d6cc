#include "cwsynth/model.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "cwsynth/error.hpp"
#include "cwsynth/random.hpp"

namespace cwsynth {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2 pi)
constexpr double kLogFloor = 1e-12;

std::string layer(const char* prefix, std::size_t i, const char* part) {
  return std::string(prefix) + "." + std::to_string(i) + "." + part;
}

std::string out_layer(const char* prefix, const char* part) {
  return std::string(prefix) + ".out." + part;
}

void add_mlp(ParamStore& ps, const char* prefix, std::size_t in, const std::vector<std::size_t>& hidden,
             std::size_t out) {
  std::size_t prev = in;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    ps.add(layer(prefix, i, "weight"), prev, hidden[i]);
    ps.add(layer(prefix, i, "bias"), 1, hidden[i], Init::zeros);
    prev = hidden[i];
  }
  ps.add(out_layer(prefix, "weight"), prev, out);
  ps.add(out_layer(prefix, "bias"), 1, out, Init::zeros);
}

ParamStore make_params(const DatasetSchema& schema, const ModelConfig& cfg) {
  if (cfg.latent_dim == 0) throw ConfigError("latent_dim must be positive");
  for (std::size_t h : cfg.hidden)
    if (h == 0) throw ConfigError("hidden layer widths must be positive");
  ParamStore ps;
  add_mlp(ps, "encoder", schema.onehot_width(), cfg.hidden, 2 * cfg.latent_dim);
  add_mlp(ps, "decoder", cfg.latent_dim, cfg.hidden, schema.onehot_width());
  return ps;
}

}  // namespace

const char* to_string(Activation a) noexcept { return a == Activation::relu ? "relu" : "tanh"; }

Activation parse_activation(std::string_view name) {
  if (name == "tanh") return Activation::tanh;
  if (name == "relu") return Activation::relu;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

EncoderDecoder::EncoderDecoder(SchemaPtr schema, ModelConfig config, std::uint64_t seed)
    : schema_(std::move(schema)), config_(std::move(config)) {
  params_ = make_params(*schema_, config_);
  params_.initialize(seed);
  blocks_ = schema_->block_sizes();
}

EncoderDecoder::EncoderDecoder(SchemaPtr schema, ModelConfig config, ParamStore params)
    : schema_(std::move(schema)), config_(std::move(config)), params_(std::move(params)) {
  const ParamStore expected = make_params(*schema_, config_);
  if (expected.slices() != params_.slices())
    throw DataError("model parameters do not match the architecture for this schema");
  blocks_ = schema_->block_sizes();
}

ModelConfig EncoderDecoder::infer_config(const ParamStore& params, Activation activation) {
  ModelConfig cfg;
  cfg.activation = activation;
  cfg.hidden.clear();
  for (std::size_t i = 0;; ++i) {
    const Slice* w = params.find(layer("encoder", i, "weight"));
    if (!w) break;
    cfg.hidden.push_back(w->cols);
  }
  const Slice* out = params.find(out_layer("encoder", "weight"));
  if (!out || out->cols % 2 != 0) throw DataError("model file lacks a valid encoder output layer");
  cfg.latent_dim = out->cols / 2;
  return cfg;
}

Var EncoderDecoder::mlp(Tape& tape, Var x, const ParamStore& ps, const char* prefix) const {
  Var h = x;
  for (std::size_t i = 0; i < config_.hidden.size(); ++i) {
    h = ad::dense(tape, h, tape.parameter(ps, layer(prefix, i, "weight")),
                  tape.parameter(ps, layer(prefix, i, "bias")));
    h = config_.activation == Activation::relu ? ad::relu(tape, h) : ad::tanh(tape, h);
  }
  return ad::dense(tape, h, tape.parameter(ps, out_layer(prefix, "weight")),
                   tape.parameter(ps, out_layer(prefix, "bias")));
}

EncoderDecoder::Posterior EncoderDecoder::encode(Tape& tape, Var onehot) const {
  return encode(tape, onehot, params_);
}

EncoderDecoder::Posterior EncoderDecoder::encode(Tape& tape, Var onehot,
                                                 const ParamStore& ps) const {
  if (tape.value(onehot).cols() != input_width())
    throw ShapeError("encode: input width " + std::to_string(tape.value(onehot).cols()) +
                     " != " + std::to_string(input_width()));
  const Var out = mlp(tape, onehot, ps, "encoder");
  const std::size_t d = config_.latent_dim;
  const Var mean = ad::slice_cols(tape, out, 0, d);
  const Var pre = ad::slice_cols(tape, out, d, d);
  const Var variance = ad::clamp_min(tape, ad::softplus(tape, pre), kVarianceFloor);
  return {mean, variance};
}

Var EncoderDecoder::decode_log_probs(Tape& tape, Var z) const {
  return decode_log_probs(tape, z, params_);
}

Var EncoderDecoder::decode_log_probs(Tape& tape, Var z, const ParamStore& ps) const {
  if (tape.value(z).cols() != config_.latent_dim)
    throw ShapeError("decode: latent width " + std::to_string(tape.value(z).cols()) + " != " +
                     std::to_string(config_.latent_dim));
  return ad::block_log_softmax(tape, mlp(tape, z, ps, "decoder"), blocks_);
}

std::pair<Matrix, Matrix> EncoderDecoder::encode(const Matrix& onehot) const {
  Tape tape;
  const auto post = encode(tape, tape.constant(onehot));
  return {tape.value(post.mean), tape.value(post.variance)};
}

Matrix EncoderDecoder::decode(const Matrix& z) const {
  Tape tape;
  Matrix probs = tape.value(decode_log_probs(tape, tape.constant(z)));
  for (double& v : probs.values()) v = std::exp(v);
  return probs;
}

// ---------------------------------------------------------------------------

LatentBatch reparameterize(const Matrix& mean, const Matrix& variance, std::uint64_t seed) {
  if (!mean.same_shape(variance)) throw ShapeError("reparameterize: shape mismatch");
  Rng rng = make_rng(seed, 0x2E9);
  std::normal_distribution<double> normal(0.0, 1.0);
  LatentBatch b{Matrix(mean.rows(), mean.cols()), mean, variance, Matrix(mean.rows(), mean.cols())};
  for (std::size_t i = 0; i < mean.size(); ++i) {
    const double eps = normal(rng);
    b.noise.data()[i] = eps;
    b.z.data()[i] = mean.data()[i] + std::sqrt(std::max(variance.data()[i], kVarianceFloor)) * eps;
  }
  return b;
}

Var reparameterize(Tape& tape, Var mean, Var variance, const Matrix& noise) {
  const Var sd = ad::sqrt(tape, ad::clamp_min(tape, variance, kVarianceFloor));
  return ad::add(tape, mean, ad::mul(tape, sd, tape.constant(noise)));
}

double recon_loss(const Matrix& targets, const Matrix& probs) {
  if (!targets.same_shape(probs)) throw ShapeError("recon_loss: shape mismatch");
  if (targets.rows() == 0) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double t = targets.data()[i];
    if (t != 0.0) s += t * std::log(std::max(probs.data()[i], kLogFloor));
  }
  return -s / static_cast<double>(targets.rows());
}

Var recon_loss(Tape& tape, Var targets, Var log_probs) {
  const double n = static_cast<double>(tape.value(targets).rows());
  return ad::scale(tape, ad::sum(tape, ad::mul(tape, targets, log_probs)), -1.0 / n);
}

double posterior_logpdf(std::span<const double> z, std::span<const double> mean,
                        std::span<const double> variance) {
  if (z.size() != mean.size() || z.size() != variance.size())
    throw ShapeError("posterior_logpdf: dimension mismatch");
  double s = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    const double v = std::max(variance[k], kVarianceFloor);
    const double diff = z[k] - mean[k];
    s += kLog2Pi + std::log(v) + diff * diff / v;
  }
  return -0.5 * s;
}

namespace {

void check_entropy_inputs(const Matrix& mean, const Matrix& variance, const Matrix& z) {
  if (!mean.same_shape(variance) || !mean.same_shape(z))
    throw ShapeError("entropy_reg: mean, variance and z must share a shape");
  if (mean.rows() < 2) throw ConfigError("entropy_reg: needs at least two rows");
}

}  // namespace

double entropy_reg_estimate(const Matrix& mean, const Matrix& variance, const Matrix& z) {
  check_entropy_inputs(mean, variance, z);
  const std::size_t n = mean.rows();
  double diag = 0.0, all = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto mu = mean.row(i);
    const auto var = variance.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      const double l = posterior_logpdf(z.row(j), mu, var);
      all += l;
      if (i == j) diag += l;
    }
  }
  const double nn = static_cast<double>(n);
  return diag / nn - all / (nn * nn);
}

Var entropy_reg(Tape& tape, Var mean, Var variance, Var z) {
  const Matrix& mu = tape.value(mean);
  const Matrix& var = tape.value(variance);
  const Matrix& zz = tape.value(z);
  check_entropy_inputs(mu, var, zz);
  const double value = entropy_reg_estimate(mu, var, zz);
  return tape.record({mean, variance, z}, Matrix(1, 1, value),
                     [mean, variance, z](Tape& tp, const Matrix& g) {
                       const Matrix& mu = tp.value(mean);
                       const Matrix& var = tp.value(variance);
                       const Matrix& zz = tp.value(z);
                       const std::size_t n = mu.rows(), d = mu.cols();
                       const double nn = static_cast<double>(n);
                       const double off = -1.0 / (nn * nn);
                       const double on = 1.0 / nn + off;
                       Matrix dmu(n, d), dvar(n, d), dz(n, d);
                       for (std::size_t i = 0; i < n; ++i) {
                         for (std::size_t k = 0; k < d; ++k) {
                           const bool floored = var(i, k) <= kVarianceFloor;
                           const double v = floored ? kVarianceFloor : var(i, k);
                           const double inv = 1.0 / v;
                           double gm = 0.0, gv = 0.0;
                           for (std::size_t j = 0; j < n; ++j) {
                             const double w = (i == j ? on : off);
                             const double diff = zz(j, k) - mu(i, k);
                             // d log q(z_j|x_i) / d mu_ik, / d var_ik, / d z_jk
                             gm += w * diff * inv;
                             gv += w * (-0.5) * (inv - diff * diff * inv * inv);
                             dz(j, k) -= w * diff * inv;
                           }
                           dmu(i, k) = gm;
                           dvar(i, k) = floored ? 0.0 : gv;
                         }
                       }
                       const double s = g(0, 0);
                       for (double& v : dmu.values()) v *= s;
                       for (double& v : dvar.values()) v *= s;
                       for (double& v : dz.values()) v *= s;
                       tp.accumulate(mean, dmu);
                       tp.accumulate(variance, dvar);
                       tp.accumulate(z, dz);
                     });
}

double entropy_reg_exact(const Matrix& mean, const Matrix& variance) {
  if (!mean.same_shape(variance)) throw ShapeError("entropy_reg_exact: shape mismatch");
  if (mean.rows() == 0) throw ConfigError("entropy_reg_exact: no rows");
  const std::size_t n = mean.rows(), d = mean.cols();
  double self = 0.0, cross = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) {
      const double vi = std::max(variance(i, k), kVarianceFloor);
      self += -0.5 * (kLog2Pi + std::log(vi) + 1.0);
      for (std::size_t j = 0; j < n; ++j) {
        const double vj = std::max(variance(j, k), kVarianceFloor);
        const double diff = mean(j, k) - mean(i, k);
        cross += -0.5 * (kLog2Pi + std::log(vi) + (vj + diff * diff) / vi);
      }
    }
  }
  const double nn = static_cast<double>(n);
  return self / nn - cross / (nn * nn);
}

double expected_kl_to_aggregate(const Matrix& mean, const Matrix& variance, std::size_t panels) {
  if (!mean.same_shape(variance)) throw ShapeError("expected_kl_to_aggregate: shape mismatch");
  if (mean.cols() != 1) throw ShapeError("expected_kl_to_aggregate: one latent dimension only");
  if (mean.rows() == 0) throw ConfigError("expected_kl_to_aggregate: no rows");
  const std::size_t n = mean.rows();
  if (panels < 2) panels = 2;
  if (panels % 2) ++panels;
  double lo = mean(0, 0), hi = mean(0, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const double sd = std::sqrt(std::max(variance(i, 0), kVarianceFloor));
    lo = std::min(lo, mean(i, 0) - 12.0 * sd);
    hi = std::max(hi, mean(i, 0) + 12.0 * sd);
  }
  const double h = (hi - lo) / static_cast<double>(panels);
  std::vector<double> logq(n);
  double total = 0.0;
  for (std::size_t k = 0; k <= panels; ++k) {
    const double z = lo + h * static_cast<double>(k);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      logq[i] = posterior_logpdf({&z, 1}, mean.row(i), variance.row(i));
      mx = std::max(mx, logq[i]);
    }
    double s = 0.0;
    for (double l : logq) s += std::exp(l - mx);
    const double log_bar = mx + std::log(s / static_cast<double>(n));
    // Integrand of (1/n) sum_i q_i (log q_i - log q_bar).
    double f = 0.0;
    for (double l : logq) f += std::exp(l) * (l - log_bar);
    f /= static_cast<double>(n);
    const double w = (k == 0 || k == panels) ? 1.0 : (k % 2 ? 4.0 : 2.0);
    total += w * f;
  }
  return total * h / 3.0;
}

std::vector<double> average_posterior_variance(const EncoderDecoder& model, const Matrix& onehot) {
  const auto [mean, variance] = model.encode(onehot);
  return column_means(variance);
}

}  // namespace cwsynth
