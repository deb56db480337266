#include "gpfl/model.hpp"

#include <algorithm>
#include <cmath>

namespace gpfl {

void CovParams::collect_params(const std::string& prefix,
                               std::vector<NamedParam>& out) const {
  out.push_back({prefix + ".gamma.fc.w", gamma.fc.weight});
  out.push_back({prefix + ".gamma.fc.b", gamma.fc.bias});
  out.push_back({prefix + ".gamma.ln.gain", gamma.ln_gain});
  out.push_back({prefix + ".gamma.ln.bias", gamma.ln_bias});
  out.push_back({prefix + ".beta.fc.w", beta.fc.weight});
  out.push_back({prefix + ".beta.fc.b", beta.fc.bias});
  out.push_back({prefix + ".beta.ln.gain", beta.ln_gain});
  out.push_back({prefix + ".beta.ln.bias", beta.ln_bias});
}

std::vector<Tensor> CovParams::tensors() const {
  return {gamma.fc.weight, gamma.fc.bias, gamma.ln_gain, gamma.ln_bias,
          beta.fc.weight,  beta.fc.bias,  beta.ln_gain,  beta.ln_bias};
}

void CovParams::zero_all() {
  for (Tensor t : tensors()) {
    auto v = t.values_mut();
    std::fill(v.begin(), v.end(), 0.0);
  }
}

CovParams init_cov(std::size_t k, std::uint64_t seed) {
  Rng rng(seed);
  CovParams v;
  v.gamma.fc = init_fc(k, k, rng);
  v.gamma.ln_gain = Tensor::from({k}, std::vector<double>(k, 1.0), true);
  v.gamma.ln_bias = Tensor::zeros({k}, true);
  v.beta.fc = init_fc(k, k, rng);
  v.beta.ln_gain = Tensor::from({k}, std::vector<double>(k, 1.0), true);
  v.beta.ln_bias = Tensor::zeros({k}, true);
  return v;
}

std::vector<double> compute_alpha(std::span<const std::size_t> labels,
                                  std::size_t categories) {
  if (categories < 1) throw ConfigError("compute_alpha: U must be >= 1");
  if (labels.empty())
    throw EmptyInputError("compute_alpha: client shard has no labels");
  std::vector<double> alpha(categories, 0.0);
  for (std::size_t y : labels) {
    if (y >= categories)
      throw IndexError("compute_alpha: label " + std::to_string(y) +
                       " out of range [0," + std::to_string(categories) + ")");
    alpha[y] += 1.0;
  }
  for (auto& a : alpha) a /= static_cast<double>(labels.size());
  return alpha;
}

std::vector<double> compute_g(const EmbeddingTable& frozen_table) {
  if (!frozen_table.frozen())
    throw ContractError("compute_g: conditional inputs must come from the "
                        "frozen table");
  const std::size_t u = frozen_table.categories(), k = frozen_table.dim();
  if (u == 0) throw EmptyInputError("compute_g: empty table");
  ++frozen_table.accesses;
  std::vector<double> g(k, 0.0);
  auto rows = frozen_table.rows.values();
  for (std::size_t r = 0; r < u; ++r)
    for (std::size_t i = 0; i < k; ++i) g[i] += rows[r * k + i];
  for (auto& v : g) v /= static_cast<double>(u);
  return g;
}

std::vector<double> compute_p(const EmbeddingTable& frozen_table,
                              std::span<const double> alpha) {
  if (!frozen_table.frozen())
    throw ContractError("compute_p: conditional inputs must come from the "
                        "frozen table");
  const std::size_t u = frozen_table.categories(), k = frozen_table.dim();
  if (alpha.size() != u)
    throw DimensionError("compute_p: alpha length " +
                         std::to_string(alpha.size()) + " != categories " +
                         std::to_string(u));
  ++frozen_table.accesses;
  std::vector<double> p(k, 0.0);
  auto rows = frozen_table.rows.values();
  for (std::size_t r = 0; r < u; ++r)
    for (std::size_t i = 0; i < k; ++i) p[i] += rows[r * k + i] * alpha[r];
  for (auto& v : p) v /= static_cast<double>(u);
  return p;
}

namespace {

Tensor cov_branch(const CovBranch& b, const Tensor& cond, double eps) {
  return layer_norm(relu(b.fc.forward(cond)), b.ln_gain, b.ln_bias, eps);
}

}  // namespace

CovGates cov_gates(std::span<const double> cond, const CovParams& v) {
  const std::size_t k = v.gamma.fc.in_dim();
  if (cond.size() != k)
    throw DimensionError("cov_gates: conditional dim " +
                         std::to_string(cond.size()) + " != " +
                         std::to_string(k));
  Tensor c = Tensor::from({k}, std::vector<double>(cond.begin(), cond.end()));
  return {cov_branch(v.gamma, c, v.ln_eps), cov_branch(v.beta, c, v.ln_eps)};
}

Tensor apply_cov_gates(const Tensor& f, const CovGates& gates) {
  const std::size_t k = gates.gamma.size();
  if (f.size() != k)
    throw DimensionError("apply_cov_gates: feature dim " +
                         std::to_string(f.size()) + " != " +
                         std::to_string(k));
  Tensor ones = Tensor::from({k}, std::vector<double>(k, 1.0));
  return relu(add(hadamard(add(gates.gamma, ones), f), gates.beta));
}

Tensor cov_transform(const Tensor& f, std::span<const double> cond,
                     const CovParams& v) {
  return apply_cov_gates(f, cov_gates(cond, v));
}

GpflModel init_gpfl_model(const ModelSpec& spec, std::uint64_t seed_init) {
  GpflModel m;
  m.backbone = init_backbone(spec, derive_seed(seed_init, "fe"));
  m.backbone.head = init_head(spec, derive_seed(seed_init, "head"));
  m.cov = init_cov(spec.feature_dim, derive_seed(seed_init, "cov"));
  m.gce = init_embeddings(spec.categories, spec.feature_dim,
                          derive_seed(seed_init, "gce"));
  m.gce_frozen = m.gce.frozen_copy();
  return m;
}

GpflForward forward_gpfl(const GpflModel& model, const Tensor& x,
                         const ConditionalInputs& cond, ForwardMode mode,
                         const ModelVariant& variant) {
  Tensor f = model.backbone.extract(x);
  GpflForward out;
  Tensor f_p = variant.use_cov ? cov_transform(f, cond.p, model.cov) : f;
  out.logits = head_forward(model.backbone.head, f_p);
  if (mode == ForwardMode::train && variant.use_gce)
    out.f_g = variant.use_cov ? cov_transform(f, cond.g, model.cov) : f;
  return out;
}

Tensor loss_alg(const Tensor& f_g, std::size_t y, const EmbeddingTable& gce) {
  const std::size_t u = gce.categories();
  if (y >= u)
    throw IndexError("loss_alg: label " + std::to_string(y) +
                     " out of range [0," + std::to_string(u) + ")");
  std::vector<Tensor> sims;
  sims.reserve(u);
  for (std::size_t r = 0; r < u; ++r)
    sims.push_back(cosine_sim(f_g, gce.lookup(r)));
  return softmax_cross_entropy(stack_scalars(sims), y);
}

Tensor loss_mlg(const Tensor& f_g, std::size_t y,
                const EmbeddingTable& frozen_table) {
  if (!frozen_table.frozen())
    throw ContractError("loss_mlg: requires the frozen table");
  return l2_distance(f_g, frozen_table.lookup(y));
}

TotalLoss total_loss(std::span<const Sample> batch, const GpflModel& model,
                     const ConditionalInputs& cond, double lambda, double mu,
                     const ModelVariant& variant, bool squared_reg) {
  if (batch.empty()) throw EmptyInputError("total_loss: empty batch");

  // the gates depend only on (cond, V), so one evaluation serves the batch
  CovGates gates_p, gates_g;
  if (variant.use_cov) {
    gates_p = cov_gates(cond.p, model.cov);
    if (variant.use_gce) gates_g = cov_gates(cond.g, model.cov);
  }

  Tensor lp_sum, alg_sum, mlg_sum;
  for (const Sample& s : batch) {
    Tensor x = Tensor::from({s.x.size()},
                            std::vector<double>(s.x.begin(), s.x.end()));
    Tensor f = model.backbone.extract(x);
    Tensor f_p = variant.use_cov ? apply_cov_gates(f, gates_p) : f;
    Tensor lp = softmax_cross_entropy(
        head_forward(model.backbone.head, f_p), s.y);
    lp_sum = lp_sum.valid() ? add(lp_sum, lp) : lp;
    if (variant.use_gce) {
      Tensor f_g = variant.use_cov ? apply_cov_gates(f, gates_g) : f;
      Tensor la;
      try {
        la = loss_alg(f_g, s.y, model.gce);
      } catch (const DegenerateVectorError&) {
        // dead-ReLU sample: every angle is undefined, so use the uniform
        // limit -log(1/U), which carries no gradient
        la = Tensor::scalar(
            std::log(static_cast<double>(model.gce.categories())));
      }
      alg_sum = alg_sum.valid() ? add(alg_sum, la) : la;
      if (variant.use_mlg) {
        Tensor lm = loss_mlg(f_g, s.y, model.gce_frozen);
        mlg_sum = mlg_sum.valid() ? add(mlg_sum, lm) : lm;
      }
    }
  }
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  Tensor total = scale(lp_sum, inv_b);

  TotalLoss out;
  out.parts.lambda = lambda;
  out.parts.mu = mu;
  out.parts.l_p = total.item();
  if (alg_sum.valid()) {
    Tensor la = scale(alg_sum, inv_b);
    out.parts.l_alg = la.item();
    total = add(total, la);
  }
  if (mlg_sum.valid()) {
    Tensor lm = scale(mlg_sum, inv_b);
    out.parts.l_mlg = lm.item();
    total = add(total, scale(lm, lambda));
  }
  if (mu != 0.0) {
    if (variant.use_cov) {
      std::vector<Tensor> vt = model.cov.tensors();
      Tensor rv = squared_reg ? sum_sq(vt) : l2_norm(vt);
      out.parts.reg_v = rv.item();
      total = add(total, scale(rv, mu));
    }
    if (variant.use_gce) {
      std::vector<Tensor> ct{model.gce.rows};
      Tensor rc = squared_reg ? sum_sq(ct) : l2_norm(ct);
      out.parts.reg_c = rc.item();
      total = add(total, scale(rc, mu));
    }
  }
  out.parts.total = total.item();
  out.value = total;
  return out;
}

}  // namespace gpfl
