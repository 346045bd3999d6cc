// cwsynth: train, sample and evaluate categorical synthetic data generators.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cwsynth/classifier.hpp"
#include "cwsynth/config.hpp"
#include "cwsynth/data.hpp"
#include "cwsynth/error.hpp"
#include "cwsynth/metrics.hpp"
#include "cwsynth/model.hpp"
#include "cwsynth/pca.hpp"
#include "cwsynth/persist.hpp"
#include "cwsynth/prior.hpp"
#include "cwsynth/random.hpp"
#include "cwsynth/synthesis.hpp"
#include "cwsynth/trainer.hpp"

namespace fs = std::filesystem;
using namespace cwsynth;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string schema;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "INI configuration file");
  cmd->add_option("--seed", c.seed, "base seed (overrides [run] seed)");
  cmd->add_option("--schema", c.schema, "schema.json fixing column levels");
}

PipelineConfig resolve_config(const Common& c) {
  PipelineConfig cfg = c.config.empty() ? PipelineConfig{} : load_config(c.config);
  cfg.set_seed(c.seed.value_or(cfg.seed));
  return cfg;
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

CategoricalDataset load_data(const std::string& path, const std::string& schema_path) {
  if (!schema_path.empty()) return load_csv(path, true, load_schema(schema_path));
  auto loaded = load_csv(path, true);
  print_warnings(loaded.warnings);
  return std::move(loaded.dataset);
}

const std::string& prepare_output(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  return path;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(prepare_output(path.string()));
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

ClassifierBank load_bank(const std::string& path, const SchemaPtr& schema) {
  const WeightFile wf = load_weights(path, schema->hash());
  return ClassifierBank::from_params(schema, wf.params);
}

struct LoadedModel {
  SchemaPtr schema;
  EncoderDecoder model;
  PriorModel prior;
  std::size_t train_rows = 0;
};

LoadedModel load_model_dir(const fs::path& dir, const std::string& prior_override) {
  const SchemaPtr schema = load_schema(dir / "schema.json");
  const nlohmann::json meta = read_json(dir / "model.json");
  const WeightFile weights = load_weights(dir / "model.cwgw", schema->hash());
  const ModelConfig mc = EncoderDecoder::infer_config(
      weights.params, parse_activation(meta.at("activation").get<std::string>()));
  EncoderDecoder model(schema, mc, weights.params);
  const fs::path prior_path = prior_override.empty() ? dir / "prior.cwgw" : fs::path(prior_override);
  PriorModel prior = PriorModel::from_params(load_weights(prior_path).params);
  return {schema, std::move(model), std::move(prior), meta.at("train_rows").get<std::size_t>()};
}

// ---------------------------------------------------------------------------

struct ToyDataArgs {
  std::size_t rows = 5000;
  std::uint64_t seed = 0;
  std::string out;
};

int run_toy_data(const ToyDataArgs& a) {
  save_csv(prepare_output(a.out), make_toy_bayes_net(a.rows, a.seed));
  std::cerr << "wrote " << a.rows << " rows to " << a.out << '\n';
  return kOk;
}

struct SplitArgs {
  std::string data;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
  std::string out;
};

int run_split(const SplitArgs& a) {
  const auto ds = load_data(a.data, "");
  const auto [train, test] = split(ds, a.test_fraction, a.seed);
  fs::create_directories(a.out);
  save_csv(fs::path(a.out) / "train.csv", train);
  save_csv(fs::path(a.out) / "test.csv", test);
  save_schema(fs::path(a.out) / "schema.json", ds.schema());
  std::cerr << "train " << train.rows() << " rows, test " << test.rows() << " rows\n";
  return kOk;
}

struct PretrainArgs {
  Common common;
  std::string data;
  std::string out;
};

int run_pretrain(const PretrainArgs& a) {
  const PipelineConfig cfg = resolve_config(a.common);
  const auto ds = load_data(a.data, a.common.schema);
  ClassifierBank bank(ds.schema_ptr());
  bank.pretrain(ds, cfg.classifier, derive_seed(cfg.seed, 0xC1));
  save_weights(prepare_output(a.out), bank.to_params(), ds.schema().hash());
  const auto acc = bank.accuracy(ds);
  for (std::size_t j = 0; j < acc.size(); ++j)
    std::cerr << "  " << ds.schema().column(j).name << " train accuracy " << acc[j] << '\n';
  return kOk;
}

struct FitArgs {
  Common common;
  std::string data;
  std::string test;
  std::string classifiers;
  std::string out;
  std::optional<double> lambda;
  std::optional<double> gamma;
  std::optional<std::size_t> latent_dim;
  std::optional<std::size_t> epochs;
  bool no_entropy_reg = false;
};

int run_fit(const FitArgs& a) {
  PipelineConfig cfg = resolve_config(a.common);
  if (a.lambda) cfg.train.lambda = *a.lambda;
  if (a.gamma) cfg.train.gamma = *a.gamma;
  if (a.latent_dim) cfg.train.model.latent_dim = *a.latent_dim;
  if (a.epochs) cfg.train.epochs = *a.epochs;
  if (a.no_entropy_reg) cfg.train.entropy_reg = false;
  cfg.validate();

  const auto train = load_data(a.data, a.common.schema);
  std::optional<CategoricalDataset> heldout;
  if (!a.test.empty()) heldout = load_csv(a.test, true, train.schema_ptr());
  std::optional<ClassifierBank> bank;
  if (!a.classifiers.empty()) bank = load_bank(a.classifiers, train.schema_ptr());
  if (cfg.train.gamma > 0.0 && !bank)
    throw ConfigError("gamma > 0 requires --classifiers (run pretrain-classifiers first)");

  std::cerr << "step 1: " << cfg.train.epochs << " epochs, lambda " << cfg.train.lambda
            << ", gamma " << cfg.train.gamma
            << ", entropy term " << (cfg.train.entropy_reg ? "on" : "off") << '\n';
  auto [model, report] = train_step1(train, bank ? &*bank : nullptr, cfg.train,
                                     heldout ? &*heldout : nullptr);

  const LatentBatch z =
      aggregate_posterior_sample(model, train, cfg.prior.draws_per_row, derive_seed(cfg.seed, 5));
  nlohmann::json prior_info;
  PriorModel prior;
  if (cfg.prior.kind == PriorKind::gmm) {
    GmmFit fit = fit_gmm(z.z, cfg.prior.gmm);
    print_warnings(fit.warnings);
    prior_info = {{"kind", "gmm"},
                  {"iterations", fit.iterations},
                  {"converged", fit.converged},
                  {"log_likelihood", fit.log_likelihood},
                  {"warnings", fit.warnings}};
    prior = std::move(fit.model);
  } else {
    prior = fit_kde(z.z, cfg.prior.kde_bandwidth, cfg.prior.kde_bandwidth_floor);
    prior_info = {{"kind", "kde"}, {"bandwidth", prior.bandwidth()}};
  }
  const auto [mean, variance] = model.encode(to_onehot(train));
  const std::uint64_t kl_seed = derive_seed(cfg.seed, 6);
  prior_info["aggregate_kl"] = aggregate_kl(mean, variance, prior, 1000, kl_seed);
  prior_info["aggregate_kl_standard_normal"] =
      aggregate_kl(mean, variance, PriorModel::standard_normal(model.latent_dim()), 1000, kl_seed);

  const fs::path out(a.out);
  fs::create_directories(out);
  save_schema(out / "schema.json", train.schema());
  save_weights(out / "model.cwgw", model.params(), train.schema().hash());
  save_weights(out / "prior.cwgw", prior.to_params(), train.schema().hash());
  write_json(out / "model.json", {{"format", "cwsynth-model"},
                                  {"activation", to_string(model.config().activation)},
                                  {"latent_dim", model.latent_dim()},
                                  {"hidden", model.config().hidden},
                                  {"train_rows", train.rows()}});
  // Wall time lives in its own file so the other artifacts are reproducible byte for byte.
  nlohmann::json report_json = report.to_json();
  write_json(out / "run_info.json", {{"wall_seconds", report_json["wall_seconds"]}});
  report_json.erase("wall_seconds");
  write_json(out / "train_report.json", report_json);
  write_json(out / "prior_report.json", prior_info);
  {
    std::ofstream trace(out / "train_trace.csv");
    report.write_csv(trace);
    std::ofstream ini(out / "config.ini");
    write_config(ini, cfg);
  }
  std::cerr << "final recon " << report.epochs.back().recon << ", avg variance";
  for (double v : report.avg_variance) std::cerr << ' ' << v;
  std::cerr << "\nwrote " << out.string() << '\n';
  return kOk;
}

struct SampleArgs {
  Common common;
  std::string model;
  std::string prior;
  std::optional<std::size_t> count;
  bool argmax = false;
  std::string out;
};

int run_sample(const SampleArgs& a) {
  PipelineConfig cfg = resolve_config(a.common);
  const LoadedModel m = load_model_dir(a.model, a.prior);
  const std::size_t count = a.count.value_or(cfg.sample.count.value_or(m.train_rows));
  if (count == 0) throw ConfigError("--count must be positive");
  const DecodeMode mode = a.argmax ? DecodeMode::argmax : cfg.sample.mode;
  save_csv(prepare_output(a.out), generate(m.model, m.prior, count, derive_seed(cfg.seed, 7), mode));
  std::cerr << "wrote " << count << " synthetic rows to " << a.out << '\n';
  return kOk;
}

struct EvaluateArgs {
  Common common;
  std::string data;
  std::string test;
  std::vector<std::string> synth;
  std::vector<std::string> names;
  std::string out;
  std::string csv;
};

int run_evaluate(const EvaluateArgs& a) {
  const PipelineConfig cfg = resolve_config(a.common);
  if (!a.names.empty() && a.names.size() != a.synth.size())
    throw ConfigError("--name must be given once per --synth");
  const auto train = load_data(a.data, a.common.schema);
  const auto test = load_csv(a.test, true, train.schema_ptr());
  std::vector<SystemMetrics> systems;
  for (std::size_t s = 0; s < a.synth.size(); ++s) {
    const auto synth = load_csv(a.synth[s], true, train.schema_ptr());
    const std::string name = a.names.empty() ? fs::path(a.synth[s]).stem().string() : a.names[s];
    systems.push_back(evaluate(train, test, synth, cfg.metrics, name));
  }
  const MetricsReport report = build_report(std::move(systems));
  write_json(a.out, report.to_json());
  if (!a.csv.empty()) {
    std::ofstream out(prepare_output(a.csv));
    report.write_csv(out);
  }
  report.write_csv(std::cout);
  return kOk;
}

struct LatentDumpArgs {
  Common common;
  std::string model;
  std::string data;
  std::string out;
};

int run_latent_dump(const LatentDumpArgs& a) {
  const PipelineConfig cfg = resolve_config(a.common);
  const LoadedModel m = load_model_dir(a.model, "");
  const auto ds = load_csv(a.data, true, m.schema);
  const LatentBatch z =
      aggregate_posterior_sample(m.model, ds, cfg.prior.draws_per_row, derive_seed(cfg.seed, 8));
  const PcaResult pca = pca_project(z.z, 2);
  std::ofstream out(prepare_output(a.out));
  if (!out) throw DataError("cannot write " + a.out);
  out.precision(10);
  out << "row";
  for (std::size_t k = 0; k < pca.projection.cols(); ++k) out << ",pc" << k + 1;
  out << '\n';
  for (std::size_t i = 0; i < pca.projection.rows(); ++i) {
    out << i / cfg.prior.draws_per_row;
    for (double v : pca.projection.row(i)) out << ',' << v;
    out << '\n';
  }
  std::cerr << "explained variance";
  for (double v : pca.eigenvalues) std::cerr << ' ' << v;
  std::cerr << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Categorical synthetic data with a Cramer-Wold regularized two-step VAE"};
  app.require_subcommand(1);

  ToyDataArgs toy;
  auto* toy_cmd = app.add_subcommand("toy-data", "write the 10-column toy Bayes-net dataset");
  toy_cmd->add_option("--rows", toy.rows, "row count")->check(CLI::PositiveNumber);
  toy_cmd->add_option("--seed", toy.seed, "seed");
  toy_cmd->add_option("--out", toy.out, "output CSV")->required();

  SplitArgs sp;
  auto* split_cmd = app.add_subcommand("split", "seeded train/test split into <out>/train.csv, test.csv");
  split_cmd->add_option("--data", sp.data, "input CSV")->required();
  split_cmd->add_option("--test-fraction", sp.test_fraction, "held-out fraction in (0, 1)");
  split_cmd->add_option("--seed", sp.seed, "seed");
  split_cmd->add_option("--out", sp.out, "output directory")->required();

  PretrainArgs pre;
  auto* pre_cmd = app.add_subcommand("pretrain-classifiers", "train and freeze the per-column classifiers");
  add_common(pre_cmd, pre.common);
  pre_cmd->add_option("--data", pre.data, "training CSV")->required();
  pre_cmd->add_option("--out", pre.out, "output weight file")->required();

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "step 1 (encoder/decoder) then step 2 (latent prior)");
  add_common(fit_cmd, fit.common);
  fit_cmd->add_option("--data", fit.data, "training CSV")->required();
  fit_cmd->add_option("--test", fit.test, "held-out CSV for the posterior variance report");
  fit_cmd->add_option("--classifiers", fit.classifiers, "pre-trained classifier weights");
  fit_cmd->add_option("--out", fit.out, "output directory")->required();
  fit_cmd->add_option("--lambda", fit.lambda, "Cramer-Wold weight");
  fit_cmd->add_option("--gamma", fit.gamma, "classifier regularizer weight");
  fit_cmd->add_option("--latent-dim", fit.latent_dim, "latent dimension");
  fit_cmd->add_option("--epochs", fit.epochs, "training epochs");
  fit_cmd->add_flag("--no-entropy-reg", fit.no_entropy_reg, "drop the entropy regularization term");

  SampleArgs smp;
  auto* sample_cmd = app.add_subcommand("sample", "draw synthetic rows from a fitted model");
  add_common(sample_cmd, smp.common);
  sample_cmd->add_option("--model", smp.model, "directory written by fit")->required();
  sample_cmd->add_option("--prior", smp.prior, "prior weight file (default <model>/prior.cwgw)");
  sample_cmd->add_option("--count", smp.count, "rows to draw (default: training row count)");
  sample_cmd->add_flag("--argmax", smp.argmax, "take the most probable level instead of sampling");
  sample_cmd->add_option("--out", smp.out, "output CSV")->required();

  EvaluateArgs ev;
  auto* eval_cmd = app.add_subcommand("evaluate", "score synthetic datasets against real train/test data");
  add_common(eval_cmd, ev.common);
  eval_cmd->add_option("--data", ev.data, "real training CSV")->required();
  eval_cmd->add_option("--test", ev.test, "real test CSV")->required();
  eval_cmd->add_option("--synth", ev.synth, "synthetic CSV (repeatable)")->required();
  eval_cmd->add_option("--name", ev.names, "display name per --synth");
  eval_cmd->add_option("--out", ev.out, "JSON report")->required();
  eval_cmd->add_option("--csv", ev.csv, "CSV summary table");

  LatentDumpArgs ld;
  auto* ld_cmd = app.add_subcommand("latent-dump", "PCA projection of aggregated-posterior samples");
  add_common(ld_cmd, ld.common);
  ld_cmd->add_option("--model", ld.model, "directory written by fit")->required();
  ld_cmd->add_option("--data", ld.data, "CSV to encode")->required();
  ld_cmd->add_option("--out", ld.out, "output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*toy_cmd) return run_toy_data(toy);
    if (*split_cmd) return run_split(sp);
    if (*pre_cmd) return run_pretrain(pre);
    if (*fit_cmd) return run_fit(fit);
    if (*sample_cmd) return run_sample(smp);
    if (*eval_cmd) return run_evaluate(ev);
    if (*ld_cmd) return run_latent_dump(ld);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: malformed metadata: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}
