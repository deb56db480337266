#include "gpfl/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

namespace gpfl {

Dataset gen_synthetic(std::size_t categories, std::size_t dim, std::size_t n,
                      double spread, double separation, Rng& rng) {
  if (categories < 2 || dim < 2)
    throw ConfigError("gen_synthetic: need categories >= 2 and dim >= 2");
  std::vector<double> means(categories * dim);
  for (auto& m : means) m = separation * rng.normal();

  Dataset ds;
  ds.dim = dim;
  ds.categories = categories;
  ds.features.reserve(n * dim);
  ds.labels.reserve(n);
  for (std::size_t u = 0; u < categories; ++u) {
    std::size_t count = n / categories + (u < n % categories ? 1 : 0);
    for (std::size_t s = 0; s < count; ++s) {
      for (std::size_t d = 0; d < dim; ++d)
        ds.features.push_back(means[u * dim + d] + spread * rng.normal());
      ds.labels.push_back(u);
    }
  }
  return ds;
}

void normalize_unit_range(Dataset& ds) {
  for (std::size_t d = 0; d < ds.dim; ++d) {
    double lo = ds.features[d], hi = ds.features[d];
    for (std::size_t i = 1; i < ds.size(); ++i) {
      double v = ds.features[i * ds.dim + d];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    double range = hi - lo;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      double& v = ds.features[i * ds.dim + d];
      v = range > 0.0 ? (v - lo) / range : 0.0;
    }
  }
}

namespace {

std::vector<std::vector<std::size_t>> indices_by_class(const Dataset& ds) {
  std::vector<std::vector<std::size_t>> by_class(ds.categories);
  for (std::size_t i = 0; i < ds.size(); ++i)
    by_class[ds.labels[i]].push_back(i);
  return by_class;
}

// Integer counts from proportions; the remainder goes to the largest
// fractional parts (ties broken by lower index).
std::vector<std::size_t> largest_remainder(std::span<const double> props,
                                           std::size_t total) {
  const std::size_t n = props.size();
  std::vector<std::size_t> counts(n);
  std::vector<std::pair<double, std::size_t>> fracs(n);
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double ideal = props[i] * static_cast<double>(total);
    counts[i] = static_cast<std::size_t>(ideal);
    fracs[i] = {ideal - static_cast<double>(counts[i]), i};
    assigned += counts[i];
  }
  std::sort(fracs.begin(), fracs.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (std::size_t r = 0; assigned < total; ++r) {
    counts[fracs[r % n].second] += 1;
    ++assigned;
  }
  return counts;
}

}  // namespace

std::vector<std::vector<std::size_t>> pathological_indices(
    const Dataset& ds, std::size_t clients, std::size_t classes_per_client,
    Rng& rng) {
  const std::size_t u = ds.categories, n = clients, s = classes_per_client;
  if (s > u || s * n < u)
    throw ConfigError("pathological partition infeasible: need S <= U and "
                      "S*N >= U (S=" + std::to_string(s) +
                      ", N=" + std::to_string(n) + ", U=" + std::to_string(u) +
                      ")");

  // Deal a shuffled class list round-robin so every class lands somewhere,
  // then fill the remaining slots with distinct random classes per client.
  std::vector<std::size_t> classes(u);
  std::iota(classes.begin(), classes.end(), 0);
  rng.shuffle(classes);
  std::vector<std::vector<std::size_t>> class_sets(n);
  for (std::size_t slot = 0; slot < n * s; ++slot) {
    std::size_t client = slot % n;
    if (slot < u) {
      class_sets[client].push_back(classes[slot]);
    } else {
      for (;;) {
        std::size_t c = rng.below(u);
        auto& set = class_sets[client];
        if (std::find(set.begin(), set.end(), c) == set.end()) {
          set.push_back(c);
          break;
        }
      }
    }
  }

  auto by_class = indices_by_class(ds);
  std::vector<std::vector<std::size_t>> shards(n);
  for (std::size_t c = 0; c < u; ++c) {
    std::vector<std::size_t> assignees;
    for (std::size_t i = 0; i < n; ++i) {
      auto& set = class_sets[i];
      if (std::find(set.begin(), set.end(), c) != set.end())
        assignees.push_back(i);
    }
    auto& pool = by_class[c];
    rng.shuffle(pool);
    // Unequal chunk sizes from Dir(1), but at least one sample per assignee
    // when the class is large enough.
    std::vector<double> props = rng.dirichlet(1.0, assignees.size());
    std::vector<std::size_t> counts = largest_remainder(props, pool.size());
    if (pool.size() >= assignees.size()) {
      for (std::size_t i = 0; i < counts.size(); ++i) {
        while (counts[i] == 0) {
          auto mx = std::max_element(counts.begin(), counts.end());
          --*mx;
          ++counts[i];
        }
      }
    }
    std::size_t cursor = 0;
    for (std::size_t i = 0; i < assignees.size(); ++i) {
      for (std::size_t t = 0; t < counts[i]; ++t)
        shards[assignees[i]].push_back(pool[cursor++]);
    }
  }
  return shards;
}

std::vector<std::vector<std::size_t>> dirichlet_indices(const Dataset& ds,
                                                        std::size_t clients,
                                                        double beta,
                                                        Rng& rng) {
  if (beta <= 0.0) throw ConfigError("dirichlet partition: beta must be > 0");
  auto by_class = indices_by_class(ds);
  std::vector<std::vector<std::size_t>> shards(clients);
  for (std::size_t c = 0; c < ds.categories; ++c) {
    auto& pool = by_class[c];
    rng.shuffle(pool);
    std::vector<double> q = rng.dirichlet(beta, clients);
    std::vector<std::size_t> counts = largest_remainder(q, pool.size());
    std::size_t cursor = 0;
    for (std::size_t i = 0; i < clients; ++i)
      for (std::size_t t = 0; t < counts[i]; ++t)
        shards[i].push_back(pool[cursor++]);
  }
  return shards;
}

namespace {

Dataset subset(const Dataset& ds, std::span<const std::size_t> idx) {
  Dataset out;
  out.dim = ds.dim;
  out.categories = ds.categories;
  out.features.reserve(idx.size() * ds.dim);
  out.labels.reserve(idx.size());
  for (std::size_t i : idx) {
    auto r = ds.row(i);
    out.features.insert(out.features.end(), r.begin(), r.end());
    out.labels.push_back(ds.labels[i]);
  }
  return out;
}

std::vector<ClientShard> build_shards(
    const Dataset& ds, const std::vector<std::vector<std::size_t>>& indices,
    const PartitionSpec& spec) {
  std::vector<ClientShard> shards(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    Dataset shard = subset(ds, indices[i]);
    Rng rng(derive_seed(spec.seed, "split", i));
    shards[i].client_id = i;
    split_dataset(shard, spec.train_fraction, rng, shards[i].train,
                  shards[i].test);
  }
  return shards;
}

bool meets_min_samples(const std::vector<std::vector<std::size_t>>& indices,
                       std::size_t min_samples) {
  for (const auto& shard : indices)
    if (shard.size() < min_samples) return false;
  return true;
}

}  // namespace

std::vector<ClientShard> partition_pathological(const Dataset& ds,
                                                const PartitionSpec& spec) {
  Rng rng(derive_seed(spec.seed, "partition"));
  constexpr int kRetries = 100;
  for (int attempt = 0; attempt < kRetries; ++attempt) {
    auto indices =
        pathological_indices(ds, spec.clients, spec.classes_per_client, rng);
    if (meets_min_samples(indices, spec.min_samples))
      return build_shards(ds, indices, spec);
  }
  throw PartitionError("pathological partition: could not give every client "
                       ">= " + std::to_string(spec.min_samples) +
                       " samples in " + std::to_string(kRetries) +
                       " attempts; lower min_samples or use fewer clients");
}

std::vector<ClientShard> partition_dirichlet(const Dataset& ds,
                                             const PartitionSpec& spec) {
  Rng rng(derive_seed(spec.seed, "partition"));
  constexpr int kRetries = 100;
  for (int attempt = 0; attempt < kRetries; ++attempt) {
    auto indices = dirichlet_indices(ds, spec.clients, spec.beta, rng);
    if (meets_min_samples(indices, spec.min_samples))
      return build_shards(ds, indices, spec);
  }
  throw PartitionError("dirichlet partition infeasible after " +
                       std::to_string(kRetries) +
                       " draws; raise beta or lower min_samples");
}

std::vector<ClientShard> partition_iid(const Dataset& ds,
                                       const PartitionSpec& spec) {
  Rng rng(derive_seed(spec.seed, "partition"));
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> indices(spec.clients);
  for (std::size_t i = 0; i < order.size(); ++i)
    indices[i % spec.clients].push_back(order[i]);
  if (!meets_min_samples(indices, spec.min_samples))
    throw PartitionError("iid partition: dataset too small for " +
                         std::to_string(spec.clients) + " clients");
  return build_shards(ds, indices, spec);
}

std::vector<ClientShard> partition(const Dataset& ds,
                                   const PartitionSpec& spec) {
  if (spec.clients == 0) throw ConfigError("partition: zero clients");
  switch (spec.kind) {
    case PartitionKind::pathological:
      return partition_pathological(ds, spec);
    case PartitionKind::dirichlet:
      return partition_dirichlet(ds, spec);
    case PartitionKind::iid:
      return partition_iid(ds, spec);
  }
  throw ConfigError("partition: unknown kind");
}

void split_dataset(const Dataset& shard, double train_fraction, Rng& rng,
                   Dataset& train, Dataset& test) {
  const std::size_t n = shard.size();
  if (n < 2)
    throw PartitionError("split: shard needs >= 2 samples, got " +
                         std::to_string(n));
  const std::size_t train_target =
      static_cast<std::size_t>(train_fraction * static_cast<double>(n));

  std::vector<std::vector<std::size_t>> by_class(shard.categories);
  for (std::size_t i = 0; i < n; ++i) by_class[shard.labels[i]].push_back(i);

  // Per-class largest-remainder toward the global floor(fraction*n) target.
  // floor(f*n_c) <= n_c - 1 for f < 1, so every class keeps a test sample
  // unless the remainder pass has nowhere else to go.
  struct ClassPlan {
    std::size_t cls, count, size;
    double frac;
  };
  std::vector<ClassPlan> plans;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    if (by_class[c].empty()) continue;
    rng.shuffle(by_class[c]);
    double ideal = train_fraction * static_cast<double>(by_class[c].size());
    std::size_t cnt = static_cast<std::size_t>(ideal);
    plans.push_back({c, cnt, by_class[c].size(),
                     ideal - static_cast<double>(cnt)});
    assigned += cnt;
  }
  std::sort(plans.begin(), plans.end(), [](const auto& a, const auto& b) {
    if (a.frac != b.frac) return a.frac > b.frac;
    return a.cls < b.cls;
  });
  while (assigned < train_target) {
    bool placed = false;
    for (auto& p : plans) {
      if (p.count + 1 <= p.size - 1) {  // keep one test sample per class
        ++p.count;
        ++assigned;
        placed = true;
        break;
      }
    }
    if (!placed) {
      for (auto& p : plans) {
        if (p.count < p.size) {
          ++p.count;
          ++assigned;
          placed = true;
          break;
        }
      }
    }
    if (!placed) break;
  }

  std::vector<std::size_t> train_idx, test_idx;
  for (const auto& p : plans) {
    const auto& pool = by_class[p.cls];
    train_idx.insert(train_idx.end(), pool.begin(), pool.begin() + p.count);
    test_idx.insert(test_idx.end(), pool.begin() + p.count, pool.end());
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  train = subset(shard, train_idx);
  test = subset(shard, test_idx);
}

Dataset load_csv_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset file: " + path);
  Dataset ds;
  std::string line;
  std::size_t line_no = 0;
  long long max_label = -1;
  std::size_t expected_cols = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");

    auto parse_double = [&](const std::string& s, double& out) {
      char* end = nullptr;
      out = std::strtod(s.c_str(), &end);
      return end != s.c_str() && *end == '\0';
    };

    if (expected_cols == 0) {
      // optional header: skip the first line if any cell is non-numeric
      bool numeric = !cells.empty();
      for (const auto& c : cells) {
        double tmp;
        if (!parse_double(c, tmp)) {
          numeric = false;
          break;
        }
      }
      if (!numeric) {
        expected_cols = cells.size();
        continue;
      }
      expected_cols = cells.size();
    }
    if (cells.size() != expected_cols)
      throw ParseError(path + ":" + std::to_string(line_no) + ": row has " +
                       std::to_string(cells.size()) + " cells, expected " +
                       std::to_string(expected_cols));
    if (cells.size() < 2)
      throw ParseError(path + ":" + std::to_string(line_no) +
                       ": need at least one feature column plus a label");
    for (std::size_t i = 0; i + 1 < cells.size(); ++i) {
      double v;
      if (!parse_double(cells[i], v))
        throw ParseError(path + ":" + std::to_string(line_no) + ": cell '" +
                         cells[i] + "' is not numeric");
      ds.features.push_back(v);
    }
    char* end = nullptr;
    long long lbl = std::strtoll(cells.back().c_str(), &end, 10);
    if (end == cells.back().c_str() || *end != '\0')
      throw ParseError(path + ":" + std::to_string(line_no) + ": label '" +
                       cells.back() + "' is not an integer");
    if (lbl < 0)
      throw ParseError(path + ":" + std::to_string(line_no) +
                       ": negative label " + std::to_string(lbl));
    ds.labels.push_back(static_cast<std::size_t>(lbl));
    max_label = std::max(max_label, lbl);
  }
  if (ds.labels.empty())
    throw ParseError(path + ": no data rows found");
  ds.dim = expected_cols - 1;
  ds.categories = static_cast<std::size_t>(max_label + 1);
  return ds;
}

void save_csv_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write dataset file: " + path);
  char buf[64];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t d = 0; d < ds.dim; ++d) {
      std::snprintf(buf, sizeof buf, "%.17g", ds.features[i * ds.dim + d]);
      out << buf << ',';
    }
    out << ds.labels[i] << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

namespace {

void hash_bytes(std::uint64_t& h, const void* data, std::size_t n) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
}

void hash_dataset(std::uint64_t& h, const Dataset& ds) {
  hash_bytes(h, ds.features.data(), ds.features.size() * sizeof(double));
  hash_bytes(h, ds.labels.data(), ds.labels.size() * sizeof(std::size_t));
}

}  // namespace

std::uint64_t shard_hash(std::span<const ClientShard> shards) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const ClientShard& s : shards) {
    hash_bytes(h, &s.client_id, sizeof s.client_id);
    hash_dataset(h, s.train);
    hash_dataset(h, s.test);
  }
  return h;
}

}  // namespace gpfl
