#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gpfl/errors.hpp"
#include "gpfl/rng.hpp"

namespace gpfl {

struct Dataset {
  std::vector<double> features;     // row-major [n, dim]
  std::vector<std::size_t> labels;  // in [0, categories)
  std::size_t dim = 0;
  std::size_t categories = 0;

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * dim, dim};
  }
};

enum class PartitionKind { pathological, dirichlet, iid };

struct PartitionSpec {
  PartitionKind kind = PartitionKind::pathological;
  std::size_t clients = 20;
  std::size_t classes_per_client = 2;  // pathological S
  double beta = 0.1;                   // dirichlet concentration
  std::size_t min_samples = 4;
  double train_fraction = 0.75;
  std::uint64_t seed = 1;
};

struct ClientShard {
  Dataset train;
  Dataset test;
  std::size_t client_id = 0;
};

// Gaussian class clusters: means ~ separation · N(0, I), samples
// ~ N(mean, spread² I), labels balanced to within one sample.
Dataset gen_synthetic(std::size_t categories, std::size_t dim, std::size_t n,
                      double spread, double separation, Rng& rng);

// Min-max rescale each feature column into [0, 1].
void normalize_unit_range(Dataset& ds);

// Raw (unsplit) shards as index lists; exposed for the partition tests.
std::vector<std::vector<std::size_t>> pathological_indices(
    const Dataset& ds, std::size_t clients, std::size_t classes_per_client,
    Rng& rng);
std::vector<std::vector<std::size_t>> dirichlet_indices(const Dataset& ds,
                                                        std::size_t clients,
                                                        double beta, Rng& rng);

// Assign each client S classes covering every class, then split each class's
// samples into disjoint unequal chunks among its assignees.
std::vector<ClientShard> partition_pathological(const Dataset& ds,
                                                const PartitionSpec& spec);

// Per class draw proportions ~ Dir(beta · 1_N), allocate by largest
// remainder; redraw until every client holds >= min_samples.
std::vector<ClientShard> partition_dirichlet(const Dataset& ds,
                                             const PartitionSpec& spec);

std::vector<ClientShard> partition_iid(const Dataset& ds,
                                       const PartitionSpec& spec);

std::vector<ClientShard> partition(const Dataset& ds,
                                   const PartitionSpec& spec);

// Stratified-by-label random split; train receives floor(fraction · n).
void split_dataset(const Dataset& shard, double train_fraction, Rng& rng,
                   Dataset& train, Dataset& test);

// CSV: one row per sample, dim float columns plus an integer label column,
// optional single header line. Written floats carry 17 significant digits.
Dataset load_csv_dataset(const std::string& path);
void save_csv_dataset(const Dataset& ds, const std::string& path);

// FNV-1a over shard contents; stable fingerprint across runs.
std::uint64_t shard_hash(std::span<const ClientShard> shards);

}  // namespace gpfl
