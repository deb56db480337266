#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gpfl/config.hpp"
#include "gpfl/data.hpp"
#include "gpfl/metrics.hpp"
#include "gpfl/model.hpp"

namespace gpfl {

// Which parameters a method shares with the server is a pure function of
// the method; heads and label proportions stay on the client for every
// personalized method.
struct MethodSpec {
  Method method = Method::gpfl;
  double lambda = 1.0;
  double mu = 0.0;
  double prox_mu = 0.1;
  double ditto_lambda = 0.1;
  bool squared_reg = false;
  // Test-harness mode: guidance losses off and CoV re-zeroed at every local
  // initialization, which reduces the personalized route to a ReLU-gated
  // FedPer model.
  bool fedper_equiv_harness = false;

  ModelVariant variant() const;
  std::vector<std::string> shared_prefixes() const;
  std::vector<std::string> trainable_prefixes() const;
};

MethodSpec method_spec_from(const ExperimentConfig& cfg);

struct Upload {
  std::size_t client_id = 0;
  std::vector<std::pair<std::string, std::vector<double>>> params;
};

struct ClientCapture {
  std::size_t client_id = 0;
  // new - old over one single-sample SGD step from the broadcast snapshot
  std::vector<std::pair<std::string, std::vector<double>>> delta;
  std::vector<double> x_truth;
  std::size_t y_truth = 0;
};

struct CaptureBundle {
  bool present = false;
  Method method = Method::gpfl;
  double eta = 0.0;
  ModelSpec spec;
  std::vector<std::pair<std::string, std::vector<double>>> snapshot;
  std::vector<ClientCapture> clients;
};

struct ClientState {
  std::size_t id = 0;
  ClientShard shard;
  std::vector<double> alpha;  // train-split label proportions, never shared
  double n_weight = 0.0;      // n_i
  GpflModel model;            // extractor + head for every method
  Backbone ditto_personal;    // ditto's personalized model
  ConditionalInputs cond;     // cached at local initialization
  std::vector<NamedParam> params;        // named view of `model`
  std::vector<NamedParam> ditto_params;  // named view of `ditto_personal`
  // local hyperparameters
  double eta = 0.005;
  std::size_t batch = 10;
  std::size_t epochs = 1;
};

std::vector<NamedParam> collect_named_params(const GpflModel& m);

// Draws rho from the range (when lo < hi) and then samples round(rho*N)
// distinct clients uniformly, at least one.
std::vector<std::size_t> sample_clients(std::size_t n_clients,
                                        const RhoSpec& rho, Rng& rng);

// Deterministic per-(round, epoch) permutation of sample indices. The
// derivation is client-independent so clients with identical shards walk
// identical batch sequences (the lockstep symmetry).
std::vector<std::size_t> local_batch_order(std::size_t n,
                                           std::uint64_t seed_sample,
                                           std::size_t round,
                                           std::size_t epoch);

// Task loss for the non-gpfl methods: plain CE for fedavg/fedper, CE plus a
// proximal pull toward the broadcast for fedprox and ditto's personalized
// model.
Tensor baseline_loss(const MethodSpec& method, const Backbone& model,
                     std::span<const Sample> batch,
                     std::span<const NamedParam> params,
                     std::span<const std::vector<double>> broadcast_ref,
                     bool personalized_pass = false);

struct LocalOutcome {
  Upload upload;
  double loss_p = 0.0;
  double loss_alg = 0.0;
  double loss_mlg = 0.0;
  bool skipped = false;
  std::optional<ClientCapture> capture;
};

// Installs the broadcast, snapshots the frozen embedding table, rebuilds the
// conditional inputs, runs E epochs of minibatch SGD (partial final batch
// included) and returns the method's shared parameters.
LocalOutcome local_round(ClientState& client,
                         std::span<const NamedParam> broadcast,
                         const MethodSpec& method, std::size_t round,
                         std::uint64_t seed_sample, bool capture = false);

// Sample-count-weighted mean over the participating set, folded in
// client-id order so parallel and sequential modes agree bit-for-bit.
void aggregate(std::span<const Upload> uploads,
               std::span<const double> n_weights,
               std::vector<NamedParam>& global_params);

struct RunArtifacts {
  std::vector<RoundRecord> records;
  BestRound best;
  double final_mean_acc = 0.0;
  std::uint64_t shards_fingerprint = 0;
  CaptureBundle captures;
};

class Federation {
 public:
  Federation(const ExperimentConfig& cfg, std::vector<ClientShard> shards);

  RunArtifacts run();

  void train_round(std::size_t t);
  RoundRecord eval_round(std::size_t t);

  ClientState& client(std::size_t i) { return clients_[i]; }
  std::size_t n_clients() const { return clients_.size(); }
  std::vector<NamedParam>& global_params() { return server_params_; }
  const MethodSpec& method() const { return method_; }
  const CaptureBundle& captures() const { return captures_; }

  double evaluate_client(std::size_t i) const;
  std::size_t predict(std::size_t i, std::span<const double> x) const;

 private:
  struct LossTriple {
    double loss_p = 0.0, loss_alg = 0.0, loss_mlg = 0.0;
  };

  ExperimentConfig cfg_;
  MethodSpec method_;
  std::vector<ClientState> clients_;
  GpflModel server_model_;
  std::vector<NamedParam> server_params_;
  Rng sample_rng_;
  CaptureBundle captures_;
  std::uint64_t shards_fingerprint_ = 0;
  std::vector<std::size_t> last_participants_;
  LossTriple last_loss_;
};

Dataset build_dataset(const ExperimentConfig& cfg);

RunArtifacts run_experiment(const ExperimentConfig& cfg);
RunArtifacts run_with_shards(const ExperimentConfig& cfg,
                             std::vector<ClientShard> shards);

}  // namespace gpfl
