#include "cwsynth/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>
#include <string>

#include "cwsynth/error.hpp"
#include "cwsynth/random.hpp"

namespace cwsynth {

void Step1Config::validate() const {
  if (model.latent_dim == 0) throw ConfigError("latent_dim must be positive");
  for (std::size_t h : model.hidden)
    if (h == 0) throw ConfigError("hidden layer sizes must be positive");
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("optimizer moment decays must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("optimizer epsilon must be positive");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be >= 0");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ConfigError("gamma must be >= 0");
  if (batch_size < min_batch())
    throw ConfigError("batch_size must be >= 2 when the entropy term or lambda > 0 is active");
  cw.validate();
}

nlohmann::json TrainReport::to_json() const {
  nlohmann::json terms = nlohmann::json::object();
  auto column = [&](const char* name, auto get) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : epochs) arr.push_back(get(e));
    terms[name] = std::move(arr);
  };
  column("recon", [](const LossTerms& e) { return e.recon; });
  if (entropy_reg) column("entropy", [](const LossTerms& e) { return e.entropy.value_or(0.0); });
  if (lambda > 0.0) column("cw", [](const LossTerms& e) { return e.cw.value_or(0.0); });
  if (gamma > 0.0)
    column("classifier", [](const LossTerms& e) { return e.classifier.value_or(0.0); });
  column("total", [](const LossTerms& e) { return e.total; });
  return {{"epochs", epochs.size()},
          {"steps", steps},
          {"seed", seed},
          {"lambda", lambda},
          {"gamma", gamma},
          {"entropy_reg", entropy_reg},
          {"avg_variance", avg_variance},
          {"wall_seconds", wall_seconds},
          {"terms", std::move(terms)}};
}

void TrainReport::write_csv(std::ostream& out) const {
  out << "epoch,recon";
  if (entropy_reg) out << ",entropy";
  if (lambda > 0.0) out << ",cw";
  if (gamma > 0.0) out << ",classifier";
  out << ",total\n";
  out.precision(17);
  for (std::size_t e = 0; e < epochs.size(); ++e) {
    const LossTerms& t = epochs[e];
    out << e + 1 << ',' << t.recon;
    if (entropy_reg) out << ',' << t.entropy.value_or(0.0);
    if (lambda > 0.0) out << ',' << t.cw.value_or(0.0);
    if (gamma > 0.0) out << ',' << t.classifier.value_or(0.0);
    out << ',' << t.total << '\n';
  }
}

Step1Loss build_step1_loss(Tape& tape, const EncoderDecoder& model, const ParamStore& params,
                           const Matrix& onehot, const Matrix& noise, const ClassifierBank* bank,
                           const Step1Config& cfg) {
  if (onehot.cols() != model.input_width()) throw ShapeError("step-1 batch width mismatch");
  if (noise.rows() != onehot.rows() || noise.cols() != model.latent_dim())
    throw ShapeError("step-1 noise shape mismatch");
  const Var x = tape.constant(onehot);
  const auto post = model.encode(tape, x, params);
  const Var z = reparameterize(tape, post.mean, post.variance, noise);
  const Var log_probs = model.decode_log_probs(tape, z, params);

  Step1Loss loss;
  loss.recon = recon_loss(tape, x, log_probs);
  loss.total = loss.recon;
  if (cfg.entropy_reg) {
    loss.entropy = entropy_reg(tape, post.mean, post.variance, z);
    loss.total = ad::add(tape, loss.total, *loss.entropy);
  }
  const bool need_probs = cfg.lambda > 0.0 || cfg.gamma > 0.0;
  const Var probs = need_probs ? ad::exp(tape, log_probs) : log_probs;
  if (cfg.lambda > 0.0) {
    loss.cw = ad::scale(tape, cw_distance(tape, x, probs, cfg.cw), cfg.lambda);
    loss.total = ad::add(tape, loss.total, *loss.cw);
  }
  if (cfg.gamma > 0.0) {
    if (bank == nullptr) throw ConfigError("gamma > 0 requires a pre-trained classifier bank");
    loss.classifier = ad::scale(tape, classification_regularizer(tape, *bank, probs), cfg.gamma);
    loss.total = ad::add(tape, loss.total, *loss.classifier);
  }
  return loss;
}

namespace {

void require_finite(double v, const char* term, std::size_t epoch, std::size_t step) {
  if (!std::isfinite(v))
    throw NumericError(std::string("non-finite ") + term + " term at epoch " +
                       std::to_string(epoch + 1) + ", step " + std::to_string(step + 1));
}

// Batch boundaries over a permutation of n rows; a remainder too small for the
// set-level terms is merged into the previous batch.
std::vector<std::size_t> batch_bounds(std::size_t n, std::size_t batch, std::size_t min_batch) {
  std::vector<std::size_t> bounds{0};
  while (bounds.back() < n) bounds.push_back(std::min(n, bounds.back() + batch));
  if (bounds.size() > 2 && bounds.back() - bounds[bounds.size() - 2] < min_batch)
    bounds.erase(bounds.end() - 2);
  return bounds;
}

}  // namespace

TrainResult train_step1(const CategoricalDataset& train, const ClassifierBank* bank,
                        const Step1Config& cfg, const CategoricalDataset* heldout) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const std::size_t n = train.rows();
  if (n < cfg.min_batch())
    throw DataError("training set has " + std::to_string(n) + " rows; need at least " +
                    std::to_string(cfg.min_batch()));
  if (cfg.gamma > 0.0) {
    if (bank == nullptr) throw ConfigError("gamma > 0 requires a pre-trained classifier bank");
    if (!bank->frozen()) throw ConfigError("classifier bank must be pre-trained and frozen");
    if (!(bank->schema() == train.schema()))
      throw DataError("classifier bank schema does not match the training data");
  } else {
    bank = nullptr;
  }
  if (heldout != nullptr && !(heldout->schema() == train.schema()))
    throw DataError("held-out schema does not match the training data");

  EncoderDecoder model(train.schema_ptr(), cfg.model, derive_seed(cfg.seed, 0x1417));
  Adam adam(model.params().size(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
  const Matrix onehot = to_onehot(train);
  const std::size_t d = cfg.model.latent_dim;

  Rng shuffle_rng = make_rng(cfg.seed, 0x5F1);
  Rng noise_rng = make_rng(cfg.seed, 0x2015E);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto bounds = batch_bounds(n, std::min(cfg.batch_size, n), cfg.min_batch());

  TrainReport report;
  report.seed = cfg.seed;
  report.lambda = cfg.lambda;
  report.gamma = cfg.gamma;
  report.entropy_reg = cfg.entropy_reg;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    LossTerms acc;
    if (cfg.entropy_reg) acc.entropy = 0.0;
    if (cfg.lambda > 0.0) acc.cw = 0.0;
    if (cfg.gamma > 0.0) acc.classifier = 0.0;

    for (std::size_t b = 0; b + 1 < bounds.size(); ++b) {
      const std::span<const std::size_t> idx(order.data() + bounds[b], bounds[b + 1] - bounds[b]);
      const Matrix batch = gather_rows(onehot, idx);
      Matrix noise(idx.size(), d);
      for (double& v : noise.values()) v = normal(noise_rng);

      Tape tape;
      Step1Loss loss;
      try {
        loss = build_step1_loss(tape, model, model.params(), batch, noise, bank, cfg);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " at epoch " + std::to_string(epoch + 1) +
                           ", step " + std::to_string(b + 1));
      }
      const double w = static_cast<double>(idx.size()) / static_cast<double>(n);
      const double recon = tape.scalar(loss.recon);
      require_finite(recon, "reconstruction", epoch, b);
      acc.recon += w * recon;
      if (loss.entropy) {
        const double v = tape.scalar(*loss.entropy);
        require_finite(v, "entropy", epoch, b);
        *acc.entropy += w * v;
      }
      if (loss.cw) {
        const double v = tape.scalar(*loss.cw);
        require_finite(v, "cramer-wold", epoch, b);
        *acc.cw += w * v;
      }
      if (loss.classifier) {
        const double v = tape.scalar(*loss.classifier);
        require_finite(v, "classifier", epoch, b);
        *acc.classifier += w * v;
      }
      acc.total += w * tape.scalar(loss.total);

      const std::vector<double> grad = tape.backward(loss.total, model.params());
      for (double g : grad) require_finite(g, "gradient of the total", epoch, b);
      adam.step(model.params().values(), grad);
      for (double v : model.params().values()) require_finite(v, "parameter update", epoch, b);
      ++report.steps;
    }
    report.epochs.push_back(acc);
  }

  report.avg_variance =
      average_posterior_variance(model, to_onehot(heldout != nullptr ? *heldout : train));
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {std::move(model), std::move(report)};
}

LatentBatch aggregate_posterior_sample(const EncoderDecoder& model, const CategoricalDataset& ds,
                                       std::size_t draws_per_row, std::uint64_t seed) {
  if (!(ds.schema() == model.schema())) throw DataError("dataset schema does not match the model");
  if (draws_per_row == 0) throw ConfigError("draws_per_row must be positive");
  const auto [mean, variance] = model.encode(to_onehot(ds));
  if (draws_per_row == 1) return reparameterize(mean, variance, seed);
  std::vector<std::size_t> rep(ds.rows() * draws_per_row);
  for (std::size_t i = 0; i < rep.size(); ++i) rep[i] = i / draws_per_row;
  return reparameterize(gather_rows(mean, rep), gather_rows(variance, rep), seed);
}

}  // namespace cwsynth
