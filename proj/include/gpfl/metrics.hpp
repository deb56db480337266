#pragma once

#include <span>
#include <string>
#include <vector>

#include "gpfl/errors.hpp"

namespace gpfl {

struct RoundRecord {
  std::size_t round = 0;
  std::vector<std::size_t> participants;
  std::vector<double> client_acc;  // all N clients, every round
  double mean_acc = 0.0;
  double loss_p = 0.0;
  double loss_alg = 0.0;
  double loss_mlg = 0.0;
  double wall_ms = 0.0;  // never serialized; timing is not reproducible
};

struct FairnessStats {
  double stddev = 0.0;  // population (divide by N)
  double cv = 0.0;      // stddev / mean; NaN sentinel when mean == 0
};

FairnessStats fairness(std::span<const double> client_acc);

struct BestRound {
  std::size_t round = 0;
  double mean_acc = 0.0;
  FairnessStats fairness;
};

// Argmax of mean accuracy; ties go to the earliest round.
BestRound best_round(std::span<const RoundRecord> records);

// round,mean_acc,loss_p,loss_alg,loss_mlg,acc_client_0..N-1 at 17
// significant digits.
void write_records_csv(std::span<const RoundRecord> records,
                       const std::string& path);
std::vector<RoundRecord> read_records_csv(const std::string& path);

// 960x540 line chart: mean accuracy (left axis) and loss (right axis)
// against rounds.
void write_accuracy_chart_svg(std::span<const RoundRecord> records,
                              const std::string& path);

// Bar chart used by the ablation runner.
void write_bar_chart_svg(std::span<const std::string> labels,
                         std::span<const double> values,
                         const std::string& title, const std::string& path);

std::string format_g17(double v);

}  // namespace gpfl
