#include "cwsynth/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>
#include <string>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "cwsynth/error.hpp"
#include "cwsynth/random.hpp"

namespace cwsynth {

void PipelineConfig::set_seed(std::uint64_t s) {
  seed = s;
  train.seed = derive_seed(s, 1);
  train.cw.seed = derive_seed(s, 2);
  prior.gmm.seed = derive_seed(s, 3);
  metrics.seed = derive_seed(s, 4);
}

void PipelineConfig::validate() const {
  train.validate();
  classifier.validate();
  metrics.validate();
  if (prior.gmm.components == 0) throw ConfigError("prior components must be positive");
  if (prior.gmm.max_iters == 0) throw ConfigError("prior max_iters must be positive");
  if (!(prior.gmm.tol >= 0.0)) throw ConfigError("prior tol must be >= 0");
  if (!(prior.gmm.variance_floor > 0.0)) throw ConfigError("prior variance_floor must be positive");
  if (prior.kde_bandwidth && !(*prior.kde_bandwidth > 0.0))
    throw ConfigError("prior bandwidth must be positive");
  if (!(prior.kde_bandwidth_floor > 0.0)) throw ConfigError("prior bandwidth_floor must be positive");
  if (prior.draws_per_row == 0) throw ConfigError("prior draws_per_row must be positive");
  if (sample.count && *sample.count == 0) throw ConfigError("sample count must be positive");
}

namespace {

std::string where(const std::string& section, const std::string& key) {
  return "[" + section + "] " + key;
}

double to_double(const std::string& v, const std::string& ctx) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw ConfigError(ctx + ": expected a number, got '" + v + "'");
  return out;
}

std::uint64_t to_uint(const std::string& v, const std::string& ctx) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw ConfigError(ctx + ": expected a nonnegative integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& v, const std::string& ctx) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(ctx + ": expected true or false, got '" + v + "'");
}

std::vector<std::size_t> to_sizes(const std::string& v, const std::string& ctx) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) throw ConfigError(ctx + ": empty list entry");
    out.push_back(to_uint(item.substr(b, e - b + 1), ctx));
  }
  return out;
}

using Setter = std::function<void(PipelineConfig&, const std::string&, const std::string&)>;

std::map<std::string, std::map<std::string, Setter>> setters() {
  std::map<std::string, std::map<std::string, Setter>> s;
  s["run"]["seed"] = [](auto& c, auto& v, auto& ctx) { c.set_seed(to_uint(v, ctx)); };

  auto& model = s["model"];
  model["latent_dim"] = [](auto& c, auto& v, auto& ctx) { c.train.model.latent_dim = to_uint(v, ctx); };
  model["hidden"] = [](auto& c, auto& v, auto& ctx) { c.train.model.hidden = to_sizes(v, ctx); };
  model["activation"] = [](auto& c, auto& v, auto&) { c.train.model.activation = parse_activation(v); };

  auto& train = s["train"];
  train["epochs"] = [](auto& c, auto& v, auto& ctx) { c.train.epochs = to_uint(v, ctx); };
  train["batch_size"] = [](auto& c, auto& v, auto& ctx) { c.train.batch_size = to_uint(v, ctx); };
  train["learning_rate"] = [](auto& c, auto& v, auto& ctx) { c.train.learning_rate = to_double(v, ctx); };
  train["beta1"] = [](auto& c, auto& v, auto& ctx) { c.train.beta1 = to_double(v, ctx); };
  train["beta2"] = [](auto& c, auto& v, auto& ctx) { c.train.beta2 = to_double(v, ctx); };
  train["epsilon"] = [](auto& c, auto& v, auto& ctx) { c.train.epsilon = to_double(v, ctx); };
  train["lambda"] = [](auto& c, auto& v, auto& ctx) { c.train.lambda = to_double(v, ctx); };
  train["gamma"] = [](auto& c, auto& v, auto& ctx) { c.train.gamma = to_double(v, ctx); };
  train["entropy_reg"] = [](auto& c, auto& v, auto& ctx) { c.train.entropy_reg = to_bool(v, ctx); };

  auto& cw = s["cw"];
  cw["kappa"] = [](auto& c, auto& v, auto& ctx) {
    c.train.cw.kappa = v == "auto" ? std::nullopt : std::optional<double>(to_double(v, ctx));
  };
  cw["kernel"] = [](auto& c, auto& v, auto&) { c.train.cw.kernel_mode = parse_kernel_mode(v); };
  cw["switch_dim"] = [](auto& c, auto& v, auto& ctx) { c.train.cw.switch_dim = to_uint(v, ctx); };

  auto& cls = s["classifier"];
  cls["epochs"] = [](auto& c, auto& v, auto& ctx) { c.classifier.epochs = to_uint(v, ctx); };
  cls["learning_rate"] = [](auto& c, auto& v, auto& ctx) { c.classifier.learning_rate = to_double(v, ctx); };
  cls["batch_size"] = [](auto& c, auto& v, auto& ctx) { c.classifier.batch_size = to_uint(v, ctx); };

  auto& prior = s["prior"];
  prior["kind"] = [](auto& c, auto& v, auto&) { c.prior.kind = parse_prior_kind(v); };
  prior["components"] = [](auto& c, auto& v, auto& ctx) { c.prior.gmm.components = to_uint(v, ctx); };
  prior["max_iters"] = [](auto& c, auto& v, auto& ctx) { c.prior.gmm.max_iters = to_uint(v, ctx); };
  prior["tol"] = [](auto& c, auto& v, auto& ctx) { c.prior.gmm.tol = to_double(v, ctx); };
  prior["variance_floor"] = [](auto& c, auto& v, auto& ctx) { c.prior.gmm.variance_floor = to_double(v, ctx); };
  prior["bandwidth"] = [](auto& c, auto& v, auto& ctx) {
    c.prior.kde_bandwidth = v == "auto" ? std::nullopt : std::optional<double>(to_double(v, ctx));
  };
  prior["bandwidth_floor"] = [](auto& c, auto& v, auto& ctx) { c.prior.kde_bandwidth_floor = to_double(v, ctx); };
  prior["draws_per_row"] = [](auto& c, auto& v, auto& ctx) { c.prior.draws_per_row = to_uint(v, ctx); };

  auto& sample = s["sample"];
  sample["count"] = [](auto& c, auto& v, auto& ctx) {
    c.sample.count = v == "auto" ? std::nullopt : std::optional<std::size_t>(to_uint(v, ctx));
  };
  sample["mode"] = [](auto& c, auto& v, auto& ctx) {
    if (v == "sample") c.sample.mode = DecodeMode::sample;
    else if (v == "argmax") c.sample.mode = DecodeMode::argmax;
    else throw ConfigError(ctx + ": expected sample or argmax, got '" + v + "'");
  };

  auto& metrics = s["metrics"];
  metrics["kl_smoothing"] = [](auto& c, auto& v, auto& ctx) { c.metrics.kl_smoothing = to_double(v, ctx); };
  metrics["clusters"] = [](auto& c, auto& v, auto& ctx) { c.metrics.clusters = to_uint(v, ctx); };
  metrics["kmeans_iters"] = [](auto& c, auto& v, auto& ctx) { c.metrics.kmeans_iters = to_uint(v, ctx); };
  metrics["varpred_epochs"] = [](auto& c, auto& v, auto& ctx) { c.metrics.var_pred.epochs = to_uint(v, ctx); };
  metrics["varpred_learning_rate"] = [](auto& c, auto& v, auto& ctx) {
    c.metrics.var_pred.learning_rate = to_double(v, ctx);
  };
  metrics["varpred_batch_size"] = [](auto& c, auto& v, auto& ctx) {
    c.metrics.var_pred.batch_size = to_uint(v, ctx);
  };
  return s;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

PipelineConfig parse_config(std::istream& in) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  PipelineConfig cfg;
  cfg.set_seed(0);
  const auto table = setters();
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw ConfigError("config: key '" + section + "' outside a section");
    const auto sec = table.find(section);
    if (sec == table.end()) throw ConfigError("config: unknown section [" + section + "]");
    for (const auto& [key, value] : body) {
      const auto setter = sec->second.find(key);
      if (setter == sec->second.end())
        throw ConfigError("config: unknown key " + where(section, key));
      setter->second(cfg, value.data(), where(section, key));
    }
  }
  cfg.validate();
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse_config(in);
}

void write_config(std::ostream& out, const PipelineConfig& c) {
  auto opt = [](const auto& v) { return v ? fmt(static_cast<double>(*v)) : std::string("auto"); };
  std::string hidden;
  for (std::size_t i = 0; i < c.train.model.hidden.size(); ++i)
    hidden += (i ? "," : "") + std::to_string(c.train.model.hidden[i]);
  out << "[run]\nseed = " << c.seed << "\n\n"
      << "[model]\nlatent_dim = " << c.train.model.latent_dim << "\nhidden = " << hidden
      << "\nactivation = " << to_string(c.train.model.activation) << "\n\n"
      << "[train]\nepochs = " << c.train.epochs << "\nbatch_size = " << c.train.batch_size
      << "\nlearning_rate = " << fmt(c.train.learning_rate) << "\nbeta1 = " << fmt(c.train.beta1)
      << "\nbeta2 = " << fmt(c.train.beta2) << "\nepsilon = " << fmt(c.train.epsilon)
      << "\nlambda = " << fmt(c.train.lambda) << "\ngamma = " << fmt(c.train.gamma)
      << "\nentropy_reg = " << (c.train.entropy_reg ? "true" : "false") << "\n\n"
      << "[cw]\nkappa = " << opt(c.train.cw.kappa) << "\nkernel = " << to_string(c.train.cw.kernel_mode)
      << "\nswitch_dim = " << c.train.cw.switch_dim << "\n\n"
      << "[classifier]\nepochs = " << c.classifier.epochs
      << "\nlearning_rate = " << fmt(c.classifier.learning_rate)
      << "\nbatch_size = " << c.classifier.batch_size << "\n\n"
      << "[prior]\nkind = " << to_string(c.prior.kind) << "\ncomponents = " << c.prior.gmm.components
      << "\nmax_iters = " << c.prior.gmm.max_iters << "\ntol = " << fmt(c.prior.gmm.tol)
      << "\nvariance_floor = " << fmt(c.prior.gmm.variance_floor)
      << "\nbandwidth = " << opt(c.prior.kde_bandwidth)
      << "\nbandwidth_floor = " << fmt(c.prior.kde_bandwidth_floor)
      << "\ndraws_per_row = " << c.prior.draws_per_row << "\n\n"
      << "[sample]\ncount = " << (c.sample.count ? std::to_string(*c.sample.count) : "auto")
      << "\nmode = " << (c.sample.mode == DecodeMode::argmax ? "argmax" : "sample") << "\n\n"
      << "[metrics]\nkl_smoothing = " << fmt(c.metrics.kl_smoothing)
      << "\nclusters = " << c.metrics.clusters << "\nkmeans_iters = " << c.metrics.kmeans_iters
      << "\nvarpred_epochs = " << c.metrics.var_pred.epochs
      << "\nvarpred_learning_rate = " << fmt(c.metrics.var_pred.learning_rate)
      << "\nvarpred_batch_size = " << c.metrics.var_pred.batch_size << "\n";
}

}  // namespace cwsynth
