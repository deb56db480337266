#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "gpfl/data.hpp"
#include "gpfl/nn.hpp"

namespace gpfl {

enum class Method {
  gpfl,
  fedavg,
  fedprox,
  fedper,
  ditto,
  gpfl_wo_pci,
  gpfl_wo_cov,
  gpfl_wo_mlg,
  gpfl_wo_gce,
};

Method method_from_string(const std::string& s);
std::string method_to_string(Method m);
bool is_gpfl_family(Method m);

// Fixed ratio when lo == hi; otherwise rho ~ Uniform[lo, hi] each round.
struct RhoSpec {
  double lo = 1.0;
  double hi = 1.0;
};

RhoSpec parse_rho(const std::string& s);
std::string rho_to_string(const RhoSpec& r);

enum class DataSource { synthetic, csv };

struct ExperimentConfig {
  Method method = Method::gpfl;

  // model dims
  std::size_t input_dim = 32;    // D
  std::size_t feature_dim = 16;  // K
  std::size_t categories = 8;    // U
  std::size_t hidden = 64;
  BackboneKind backbone = BackboneKind::mlp;

  // training
  double eta = 0.005;
  double lambda = 1.0;
  double mu = 0.0;
  double prox_mu = 0.1;      // fedprox
  double ditto_lambda = 0.1; // ditto
  RhoSpec rho;
  std::size_t rounds = 300;  // T
  std::size_t batch = 10;
  std::size_t epochs = 1;
  bool squared_reg = false;

  // federation
  std::size_t clients = 20;  // N
  bool parallel_clients = false;
  bool weighted_mean = false;
  bool capture_updates = false;

  // data
  DataSource source = DataSource::synthetic;
  std::string csv_path;
  PartitionKind partition = PartitionKind::pathological;
  std::size_t classes_per_client = 2;
  double beta = 0.1;
  std::size_t min_samples = 4;
  double train_fraction = 0.75;
  std::size_t synth_n = 4000;
  double synth_spread = 0.5;
  double synth_separation = 3.0;
  bool normalize01 = false;

  // seeds: four independent streams
  std::uint64_t seed_data = 1;
  std::uint64_t seed_init = 2;
  std::uint64_t seed_sample = 3;
  std::uint64_t seed_attack = 4;

  // privacy probe
  std::size_t attack_steps = 300;
  double attack_eta = 0.1;
  std::size_t attack_restarts = 3;

  std::string out_dir = "out";

  ModelSpec model_spec() const {
    return {input_dim, feature_dim, categories, hidden, backbone};
  }
  PartitionSpec partition_spec() const {
    return {partition, clients,      classes_per_client, beta,
            min_samples, train_fraction, seed_data};
  }

  void validate() const;
  // Fully resolved key/value view; echoed into run summaries so a run can
  // be reproduced from its artifacts alone.
  std::map<std::string, std::string> to_map() const;
};

// Flat key = value file (TOML-compatible subset: comments with #, optional
// quotes around strings). Unknown keys are rejected by name.
ExperimentConfig parse_config_file(const std::string& path);

// Applies one key/value pair (used by both the file parser and flag
// overrides); throws ConfigError naming the key on unknown keys or bad
// values.
void apply_config_entry(ExperimentConfig& cfg, const std::string& key,
                        const std::string& value);

}  // namespace gpfl
