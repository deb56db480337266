#pragma once

#include <span>
#include <string>
#include <vector>

#include "gpfl/federation.hpp"

namespace gpfl {

enum class AttackTargetKind {
  feature_extractor,
  pseudo_feature_extractor,  // extractor composed with the valve's g-route
  pseudo_model,              // pseudo extractor + cosine logits against C
  full_model,
};

std::string target_kind_to_string(AttackTargetKind k);

// Everything a semi-honest server holds about one victim round: the shared
// parameter snapshot, the observed update over one local step, and the
// dimensions needed to rebuild the exposed module. Ground truth rides along
// for scoring only; the attack itself never reads it.
struct AttackTarget {
  AttackTargetKind kind = AttackTargetKind::feature_extractor;
  ModelSpec spec;
  double eta = 0.0;  // local step size, public
  std::vector<std::pair<std::string, std::vector<double>>> snapshot;
  std::vector<std::pair<std::string, std::vector<double>>> delta;
  std::vector<double> x_truth;
};

// Builds a target from a capture bundle. Targets restricted to fewer
// parameters (feature extractor) simply drop the extra entries.
AttackTarget make_attack_target(const CaptureBundle& bundle,
                                std::size_t client_index,
                                AttackTargetKind kind);

struct AttackResult {
  std::vector<double> x_recovered;
  std::vector<double> z_recovered;
  double dlg_loss = 0.0;
  double psnr_db = 0.0;  // filled by the scoring step
  bool diverged = false;
};

// A target lowered to the pieces the optimizer needs: a differentiable
// forward over the exposed module, its tracked parameters, and the gradient
// estimate ∇̂ = −Δ/η recovered from the observed update.
struct DlgProblem {
  std::function<Tensor(const Tensor&)> forward;
  std::vector<NamedParam> params;
  std::vector<std::vector<double>> grad_target;  // aligned with params
  std::size_t x_dim = 0;
  std::size_t z_dim = 0;
};

DlgProblem make_dlg_problem(const AttackTarget& target);

// Gradient-matching inversion: descends ‖∇ℓ̃(Φ(x̃), z̃) − ∇̂‖² over the dummy
// input and output, where ℓ̃ is MSE. Outer gradients come from central
// finite differences; inner gradients from the autodiff graph.
AttackResult run_dlg(const DlgProblem& problem, std::size_t steps,
                     double attack_eta, Rng& rng);
AttackResult run_dlg(const AttackTarget& target, std::size_t steps,
                     double attack_eta, Rng& rng);

// Cosine similarity of f against every row of the table (the pseudo-model's
// logit map).
std::vector<double> pseudo_model_logits(std::span<const double> f_g,
                                        const EmbeddingTable& table);

// 10·log10(1 / MSE) after clamping both images to [0, 1]; +inf when exact.
double psnr(std::span<const double> img_a, std::span<const double> img_b);

}  // namespace gpfl
