#pragma once

#include <string>

#include "gpfl/federation.hpp"
#include "gpfl/privacy.hpp"

namespace gpfl {

// Deterministic JSON text for a finished run; timing is deliberately left
// out so identical seeds give identical bytes.
std::string summary_json(const ExperimentConfig& cfg,
                         const RunArtifacts& art);

// summary.json + rounds.csv + curves.svg (+ captures.json when updates were
// captured) under `dir`.
void write_run_outputs(const ExperimentConfig& cfg, const RunArtifacts& art,
                       const std::string& dir);

CaptureBundle load_captures(const std::string& run_dir);

struct AblationRow {
  std::string method;
  double best_acc = 0.0;
  std::size_t best_round = 0;
  double final_acc = 0.0;
  std::uint64_t shard_hash = 0;
};

// gpfl plus its four variants plus fedper on shared data/init seeds.
std::vector<AblationRow> run_ablation(const ExperimentConfig& cfg);

// Allows at most `tolerated_inversions` adjacent-pair inversions in the
// chain gpfl >= wo_mlg >= wo_gce >= fedper.
bool ablation_ordering_ok(std::span<const AblationRow> rows,
                          int tolerated_inversions = 1);

int cmd_train(const ExperimentConfig& cfg);
int cmd_ablate(const ExperimentConfig& cfg);
int cmd_attack(const ExperimentConfig& cfg, const std::string& run_dir);

}  // namespace gpfl
