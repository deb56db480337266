#pragma once

#include <optional>
#include <span>
#include <vector>

#include "gpfl/nn.hpp"

namespace gpfl {

// One CoV sub-module: FC -> ReLU -> layer-norm (learnable gain/bias).
struct CovBranch {
  FcLayer fc;      // K -> K
  Tensor ln_gain;  // [K]
  Tensor ln_bias;  // [K]
};

// The valve parameters V: a gamma branch and a beta branch with identical
// structure and independent parameters.
struct CovParams {
  CovBranch gamma;
  CovBranch beta;
  double ln_eps = 1e-5;

  void collect_params(const std::string& prefix,
                      std::vector<NamedParam>& out) const;
  std::vector<Tensor> tensors() const;
  void zero_all();
};

CovParams init_cov(std::size_t feature_dim, std::uint64_t seed);

// Per-round constants: global input g, personalized input p, and the label
// proportions alpha they derive from. None of these carries gradient.
struct ConditionalInputs {
  std::vector<double> g;
  std::vector<double> p;
  std::vector<double> alpha;
};

// alpha[u] = count(label == u) / len(labels)
std::vector<double> compute_alpha(std::span<const std::size_t> labels,
                                  std::size_t categories);

// g = (Σ_u row_u) / U over a frozen table.
std::vector<double> compute_g(const EmbeddingTable& frozen_table);

// p = (Σ_u row_u · alpha_u) / U over a frozen table.
std::vector<double> compute_p(const EmbeddingTable& frozen_table,
                              std::span<const double> alpha);

// The per-route gates (γ, β); they depend on the conditional input only, so
// a batch can compute them once and reuse them for every sample.
struct CovGates {
  Tensor gamma;
  Tensor beta;
};

CovGates cov_gates(std::span<const double> cond, const CovParams& v);

// relu[(γ + 1) ⊙ f + β]
Tensor apply_cov_gates(const Tensor& f, const CovGates& gates);

// relu[(γ + 1) ⊙ f + β] with γ = ln(relu(FCγ(cond))), β = ln(relu(FCβ(cond))).
// cond is a constant; gradients flow into f's producers and into V only.
Tensor cov_transform(const Tensor& f, std::span<const double> cond,
                     const CovParams& v);

// Full client model for the gpfl method family.
struct GpflModel {
  Backbone backbone;          // extractor + personalized head W_i^h
  CovParams cov;              // V
  EmbeddingTable gce;         // C, trainable
  EmbeddingTable gce_frozen;  // Ĉ, snapshot taken at local initialization
};

// Every component draws from its own seed stream, so two methods that share
// only some components still start from identical values for the shared
// ones.
GpflModel init_gpfl_model(const ModelSpec& spec, std::uint64_t seed_init);

struct ModelVariant {
  bool use_cov = true;       // off in the w/o CoV variant
  bool use_gce = true;       // off in w/o GCE (drops both guidance losses)
  bool use_mlg = true;       // off in w/o L^mlg
  bool personalized_cond = true;  // off in w/o PCI: constants replace g/p_i
};

enum class ForwardMode { train, eval };

struct GpflForward {
  std::optional<Tensor> f_g;  // global guidance route, train mode only
  Tensor logits;              // personalized task route
};

// Train mode activates both routes; eval computes only the personalized
// route and never reads C or Ĉ.
GpflForward forward_gpfl(const GpflModel& model, const Tensor& x,
                         const ConditionalInputs& cond, ForwardMode mode,
                         const ModelVariant& variant = {});

// -log[ exp(sim(f_g, C_y)) / Σ_u exp(sim(f_g, C_u)) ]
Tensor loss_alg(const Tensor& f_g, std::size_t y, const EmbeddingTable& gce);

// ‖f_g - Ĉ_y‖₂ against the frozen table; gradient reaches f_g only.
Tensor loss_mlg(const Tensor& f_g, std::size_t y,
                const EmbeddingTable& frozen_table);

struct GpflLossParts {
  double l_p = 0.0;
  double l_alg = 0.0;
  double l_mlg = 0.0;
  double reg_v = 0.0;
  double reg_c = 0.0;
  double total = 0.0;
  double lambda = 0.0;
  double mu = 0.0;
};

struct Sample {
  std::span<const double> x;
  std::size_t y;
};

struct TotalLoss {
  Tensor value;  // differentiable total
  GpflLossParts parts;
};

// Batch-mean data losses plus μ‖V‖₂ + μ‖C‖₂ (plain norms unless squared_reg).
TotalLoss total_loss(std::span<const Sample> batch, const GpflModel& model,
                     const ConditionalInputs& cond, double lambda, double mu,
                     const ModelVariant& variant = {},
                     bool squared_reg = false);

}  // namespace gpfl
