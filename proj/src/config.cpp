#include "gpfl/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "gpfl/metrics.hpp"

namespace gpfl {

Method method_from_string(const std::string& s) {
  if (s == "gpfl") return Method::gpfl;
  if (s == "fedavg") return Method::fedavg;
  if (s == "fedprox") return Method::fedprox;
  if (s == "fedper") return Method::fedper;
  if (s == "ditto") return Method::ditto;
  if (s == "gpfl_wo_pci") return Method::gpfl_wo_pci;
  if (s == "gpfl_wo_cov") return Method::gpfl_wo_cov;
  if (s == "gpfl_wo_mlg") return Method::gpfl_wo_mlg;
  if (s == "gpfl_wo_gce") return Method::gpfl_wo_gce;
  throw ConfigError("unknown method '" + s + "'");
}

std::string method_to_string(Method m) {
  switch (m) {
    case Method::gpfl: return "gpfl";
    case Method::fedavg: return "fedavg";
    case Method::fedprox: return "fedprox";
    case Method::fedper: return "fedper";
    case Method::ditto: return "ditto";
    case Method::gpfl_wo_pci: return "gpfl_wo_pci";
    case Method::gpfl_wo_cov: return "gpfl_wo_cov";
    case Method::gpfl_wo_mlg: return "gpfl_wo_mlg";
    case Method::gpfl_wo_gce: return "gpfl_wo_gce";
  }
  return "?";
}

bool is_gpfl_family(Method m) {
  switch (m) {
    case Method::gpfl:
    case Method::gpfl_wo_pci:
    case Method::gpfl_wo_cov:
    case Method::gpfl_wo_mlg:
    case Method::gpfl_wo_gce:
      return true;
    default:
      return false;
  }
}

RhoSpec parse_rho(const std::string& s) {
  RhoSpec r;
  auto sep = s.find(':');
  try {
    if (sep == std::string::npos) {
      r.lo = r.hi = std::stod(s);
    } else {
      r.lo = std::stod(s.substr(0, sep));
      r.hi = std::stod(s.substr(sep + 1));
    }
  } catch (const std::exception&) {
    throw ConfigError("rho: expected a number or lo:hi range, got '" + s +
                      "'");
  }
  if (!(r.lo > 0.0) || r.lo > r.hi || r.hi > 1.0)
    throw ConfigError("rho: need 0 < lo <= hi <= 1, got '" + s + "'");
  return r;
}

std::string rho_to_string(const RhoSpec& r) {
  if (r.lo == r.hi) return format_g17(r.lo);
  return format_g17(r.lo) + ":" + format_g17(r.hi);
}

void ExperimentConfig::validate() const {
  if (!(eta > 0.0)) throw ConfigError("eta must be > 0");
  if (feature_dim < 1) throw ConfigError("feature_dim must be >= 1");
  if (categories < 2) throw ConfigError("categories must be >= 2");
  if (clients < 1) throw ConfigError("clients must be >= 1");
  if (batch < 1) throw ConfigError("batch must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("train_fraction must be in (0,1)");
  if (source == DataSource::csv && csv_path.empty())
    throw ConfigError("source=csv requires csv_path");
  if (partition == PartitionKind::pathological) {
    if (classes_per_client > categories ||
        classes_per_client * clients < categories)
      throw ConfigError("pathological partition needs classes_per_client <= "
                        "categories and classes_per_client*clients >= "
                        "categories");
  }
  if (!(beta > 0.0)) throw ConfigError("beta must be > 0");
}

namespace {

std::string bool_str(bool b) { return b ? "true" : "false"; }

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    long long x = std::stoll(v, &pos);
    if (pos != v.size() || x < 0) throw std::invalid_argument(v);
    return static_cast<std::size_t>(x);
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v +
                      "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    unsigned long long x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an integer seed, got '" + v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

}  // namespace

void apply_config_entry(ExperimentConfig& cfg, const std::string& key,
                        const std::string& value) {
  if (key == "method") cfg.method = method_from_string(value);
  else if (key == "input_dim") cfg.input_dim = parse_size(key, value);
  else if (key == "feature_dim") cfg.feature_dim = parse_size(key, value);
  else if (key == "categories") cfg.categories = parse_size(key, value);
  else if (key == "hidden") cfg.hidden = parse_size(key, value);
  else if (key == "backbone") {
    if (value == "mlp") cfg.backbone = BackboneKind::mlp;
    else if (value == "cnn") cfg.backbone = BackboneKind::cnn;
    else throw ConfigError("backbone: expected mlp or cnn, got '" + value +
                           "'");
  }
  else if (key == "eta") cfg.eta = parse_double(key, value);
  else if (key == "lambda") cfg.lambda = parse_double(key, value);
  else if (key == "mu") cfg.mu = parse_double(key, value);
  else if (key == "prox_mu") cfg.prox_mu = parse_double(key, value);
  else if (key == "ditto_lambda") cfg.ditto_lambda = parse_double(key, value);
  else if (key == "rho") cfg.rho = parse_rho(value);
  else if (key == "rounds") cfg.rounds = parse_size(key, value);
  else if (key == "batch") cfg.batch = parse_size(key, value);
  else if (key == "epochs") cfg.epochs = parse_size(key, value);
  else if (key == "squared_reg") cfg.squared_reg = parse_bool(key, value);
  else if (key == "clients") cfg.clients = parse_size(key, value);
  else if (key == "parallel_clients")
    cfg.parallel_clients = parse_bool(key, value);
  else if (key == "weighted_mean") cfg.weighted_mean = parse_bool(key, value);
  else if (key == "capture_updates")
    cfg.capture_updates = parse_bool(key, value);
  else if (key == "source") {
    if (value == "synthetic") cfg.source = DataSource::synthetic;
    else if (value == "csv") cfg.source = DataSource::csv;
    else throw ConfigError("source: expected synthetic or csv, got '" + value +
                           "'");
  }
  else if (key == "csv_path") cfg.csv_path = value;
  else if (key == "partition") {
    if (value == "pathological") cfg.partition = PartitionKind::pathological;
    else if (value == "dirichlet") cfg.partition = PartitionKind::dirichlet;
    else if (value == "iid") cfg.partition = PartitionKind::iid;
    else throw ConfigError("partition: expected pathological, dirichlet or "
                           "iid, got '" + value + "'");
  }
  else if (key == "classes_per_client")
    cfg.classes_per_client = parse_size(key, value);
  else if (key == "beta") cfg.beta = parse_double(key, value);
  else if (key == "min_samples") cfg.min_samples = parse_size(key, value);
  else if (key == "train_fraction")
    cfg.train_fraction = parse_double(key, value);
  else if (key == "synth_n") cfg.synth_n = parse_size(key, value);
  else if (key == "synth_spread") cfg.synth_spread = parse_double(key, value);
  else if (key == "synth_separation")
    cfg.synth_separation = parse_double(key, value);
  else if (key == "normalize01") cfg.normalize01 = parse_bool(key, value);
  else if (key == "seed_data") cfg.seed_data = parse_u64(key, value);
  else if (key == "seed_init") cfg.seed_init = parse_u64(key, value);
  else if (key == "seed_sample") cfg.seed_sample = parse_u64(key, value);
  else if (key == "seed_attack") cfg.seed_attack = parse_u64(key, value);
  else if (key == "attack_steps") cfg.attack_steps = parse_size(key, value);
  else if (key == "attack_eta") cfg.attack_eta = parse_double(key, value);
  else if (key == "attack_restarts")
    cfg.attack_restarts = parse_size(key, value);
  else if (key == "out") cfg.out_dir = value;
  else throw ConfigError("unknown config key '" + key + "'");
}

std::map<std::string, std::string> ExperimentConfig::to_map() const {
  std::map<std::string, std::string> m;
  m["method"] = method_to_string(method);
  m["input_dim"] = std::to_string(input_dim);
  m["feature_dim"] = std::to_string(feature_dim);
  m["categories"] = std::to_string(categories);
  m["hidden"] = std::to_string(hidden);
  m["backbone"] = backbone == BackboneKind::cnn ? "cnn" : "mlp";
  m["eta"] = format_g17(eta);
  m["lambda"] = format_g17(lambda);
  m["mu"] = format_g17(mu);
  m["prox_mu"] = format_g17(prox_mu);
  m["ditto_lambda"] = format_g17(ditto_lambda);
  m["rho"] = rho_to_string(rho);
  m["rounds"] = std::to_string(rounds);
  m["batch"] = std::to_string(batch);
  m["epochs"] = std::to_string(epochs);
  m["squared_reg"] = bool_str(squared_reg);
  m["clients"] = std::to_string(clients);
  m["parallel_clients"] = bool_str(parallel_clients);
  m["weighted_mean"] = bool_str(weighted_mean);
  m["capture_updates"] = bool_str(capture_updates);
  m["source"] = source == DataSource::csv ? "csv" : "synthetic";
  m["csv_path"] = csv_path;
  m["partition"] = partition == PartitionKind::pathological ? "pathological"
                   : partition == PartitionKind::dirichlet  ? "dirichlet"
                                                            : "iid";
  m["classes_per_client"] = std::to_string(classes_per_client);
  m["beta"] = format_g17(beta);
  m["min_samples"] = std::to_string(min_samples);
  m["train_fraction"] = format_g17(train_fraction);
  m["synth_n"] = std::to_string(synth_n);
  m["synth_spread"] = format_g17(synth_spread);
  m["synth_separation"] = format_g17(synth_separation);
  m["normalize01"] = bool_str(normalize01);
  m["seed_data"] = std::to_string(seed_data);
  m["seed_init"] = std::to_string(seed_init);
  m["seed_sample"] = std::to_string(seed_sample);
  m["seed_attack"] = std::to_string(seed_attack);
  m["attack_steps"] = std::to_string(attack_steps);
  m["attack_eta"] = format_g17(attack_eta);
  m["attack_restarts"] = std::to_string(attack_restarts);
  m["out"] = out_dir;
  return m;
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  ExperimentConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto strip = [](std::string s) {
      auto b = s.find_first_not_of(" \t\r");
      auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    line = strip(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(line_no) +
                        ": expected key = value");
    std::string key = strip(line.substr(0, eq));
    std::string value = strip(line.substr(eq + 1));
    if (value.size() >= 2 && ((value.front() == '"' && value.back() == '"') ||
                              (value.front() == '\'' && value.back() == '\'')))
      value = value.substr(1, value.size() - 2);
    apply_config_entry(cfg, key, value);
  }
  return cfg;
}

}  // namespace gpfl
