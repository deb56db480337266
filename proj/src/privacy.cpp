#include "gpfl/privacy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace gpfl {

std::string target_kind_to_string(AttackTargetKind k) {
  switch (k) {
    case AttackTargetKind::feature_extractor: return "feature_extractor";
    case AttackTargetKind::pseudo_feature_extractor:
      return "pseudo_feature_extractor";
    case AttackTargetKind::pseudo_model: return "pseudo_model";
    case AttackTargetKind::full_model: return "full_model";
  }
  return "?";
}

AttackTarget make_attack_target(const CaptureBundle& bundle,
                                std::size_t client_index,
                                AttackTargetKind kind) {
  if (!bundle.present || client_index >= bundle.clients.size())
    throw ContractError("make_attack_target: no captured update at index " +
                        std::to_string(client_index));
  AttackTarget t;
  t.kind = kind;
  t.spec = bundle.spec;
  t.eta = bundle.eta;
  t.snapshot = bundle.snapshot;
  t.delta = bundle.clients[client_index].delta;
  t.x_truth = bundle.clients[client_index].x_truth;
  return t;
}

namespace {

std::vector<std::string> target_prefixes(AttackTargetKind kind) {
  switch (kind) {
    case AttackTargetKind::feature_extractor:
      return {"fe."};
    case AttackTargetKind::pseudo_feature_extractor:
      return {"fe.", "cov."};
    case AttackTargetKind::pseudo_model:
      return {"fe.", "cov.", "gce."};
    case AttackTargetKind::full_model:
      return {"fe.", "head."};
  }
  return {};
}

bool has_prefix(const std::string& name,
                std::span<const std::string> prefixes) {
  for (const std::string& p : prefixes)
    if (name.rfind(p, 0) == 0) return true;
  return false;
}

const std::vector<double>* find_named(
    const std::vector<std::pair<std::string, std::vector<double>>>& kv,
    const std::string& name) {
  for (const auto& [k, v] : kv)
    if (k == name) return &v;
  return nullptr;
}

}  // namespace

DlgProblem make_dlg_problem(const AttackTarget& t) {
  if (!(t.eta > 0.0))
    throw ContractError("dlg: captured update has no positive step size");
  auto model = std::make_shared<GpflModel>(init_gpfl_model(t.spec, 0));
  std::vector<NamedParam> all = collect_named_params(*model);
  for (const auto& [name, values] : t.snapshot) {
    for (NamedParam& p : all) {
      if (p.name != name) continue;
      if (p.tensor.size() != values.size())
        throw DimensionError("dlg: snapshot size mismatch on " + name);
      auto dst = p.tensor.values_mut();
      std::copy(values.begin(), values.end(), dst.begin());
    }
  }

  DlgProblem prob;
  prob.x_dim = t.spec.input_dim;
  const std::vector<std::string> prefixes = target_prefixes(t.kind);
  for (const NamedParam& p : all) {
    if (!has_prefix(p.name, prefixes)) continue;
    const std::vector<double>* delta = find_named(t.delta, p.name);
    if (!delta)
      throw ContractError("dlg: target '" + target_kind_to_string(t.kind) +
                          "' needs an observed update for " + p.name);
    if (delta->size() != p.tensor.size())
      throw DimensionError("dlg: update size mismatch on " + p.name);
    std::vector<double> ghat(delta->size());
    for (std::size_t i = 0; i < ghat.size(); ++i)
      ghat[i] = -(*delta)[i] / t.eta;
    prob.params.push_back(p);
    prob.grad_target.push_back(std::move(ghat));
  }

  const bool needs_cov = t.kind == AttackTargetKind::pseudo_feature_extractor ||
                         t.kind == AttackTargetKind::pseudo_model;
  auto g_cond = std::make_shared<std::vector<double>>();
  if (needs_cov) {
    const std::vector<double>* rows = find_named(t.snapshot, "gce.rows");
    if (!rows)
      throw ContractError("dlg: pseudo targets need the shared embedding "
                          "table in the snapshot");
    const std::size_t u = t.spec.categories, k = t.spec.feature_dim;
    g_cond->assign(k, 0.0);
    for (std::size_t r = 0; r < u; ++r)
      for (std::size_t i = 0; i < k; ++i) (*g_cond)[i] += (*rows)[r * k + i];
    for (auto& v : *g_cond) v /= static_cast<double>(u);
  }

  switch (t.kind) {
    case AttackTargetKind::feature_extractor:
      prob.z_dim = t.spec.feature_dim;
      prob.forward = [model](const Tensor& x) {
        return model->backbone.extract(x);
      };
      break;
    case AttackTargetKind::pseudo_feature_extractor:
      prob.z_dim = t.spec.feature_dim;
      prob.forward = [model, g_cond](const Tensor& x) {
        return cov_transform(model->backbone.extract(x), *g_cond, model->cov);
      };
      break;
    case AttackTargetKind::pseudo_model:
      prob.z_dim = t.spec.categories;
      prob.forward = [model, g_cond](const Tensor& x) {
        Tensor fg =
            cov_transform(model->backbone.extract(x), *g_cond, model->cov);
        std::vector<Tensor> sims;
        sims.reserve(model->gce.categories());
        for (std::size_t u = 0; u < model->gce.categories(); ++u)
          sims.push_back(cosine_sim(fg, model->gce.lookup(u)));
        return stack_scalars(sims);
      };
      break;
    case AttackTargetKind::full_model:
      prob.z_dim = t.spec.categories;
      prob.forward = [model](const Tensor& x) {
        return head_forward(model->backbone.head, model->backbone.extract(x));
      };
      break;
  }
  return prob;
}

namespace {

// ‖∇ℓ̃(Φ(x̃), z̃) − ∇̂‖² for one (x̃, z̃); non-finite forwards map to a large
// finite value so the descent steers away instead of aborting.
double dlg_loss(const DlgProblem& p, std::span<const double> x,
                std::span<const double> z) {
  for (const NamedParam& np : p.params) np.tensor.zero_grad();
  double loss = 0.0;
  try {
    Tensor xt =
        Tensor::from({x.size()}, std::vector<double>(x.begin(), x.end()));
    Tensor out = p.forward(xt);
    Tensor zt =
        Tensor::from({z.size()}, std::vector<double>(z.begin(), z.end()));
    Tensor diff = sub(out, zt);
    Tensor mse =
        scale(sum(hadamard(diff, diff)), 1.0 / static_cast<double>(z.size()));
    mse.backward();
  } catch (const DegenerateVectorError&) {
    return 1e12;
  }
  for (std::size_t j = 0; j < p.params.size(); ++j) {
    auto g = p.params[j].tensor.grad();
    const std::vector<double>& ghat = p.grad_target[j];
    for (std::size_t i = 0; i < g.size(); ++i) {
      double d = g[i] - ghat[i];
      loss += d * d;
    }
  }
  return loss;
}

}  // namespace

AttackResult run_dlg(const DlgProblem& prob, std::size_t steps,
                     double attack_eta, Rng& rng) {
  std::vector<double> x(prob.x_dim), z(prob.z_dim);
  for (auto& v : x) v = rng.normal(0.0, 0.1);
  for (auto& v : z) v = rng.normal(0.0, 0.1);

  AttackResult best;
  best.x_recovered = x;
  best.z_recovered = z;
  best.dlg_loss = dlg_loss(prob, x, z);

  constexpr double h = 1e-3;
  std::vector<double> gx(x.size()), gz(z.size());
  for (std::size_t step = 0; step < steps; ++step) {
    double cur = dlg_loss(prob, x, z);
    if (!std::isfinite(cur)) {
      best.diverged = true;
      return best;
    }
    if (cur < best.dlg_loss) {
      best.dlg_loss = cur;
      best.x_recovered = x;
      best.z_recovered = z;
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
      double keep = x[i];
      x[i] = keep + h;
      double lp = dlg_loss(prob, x, z);
      x[i] = keep - h;
      double lm = dlg_loss(prob, x, z);
      x[i] = keep;
      gx[i] = (lp - lm) / (2.0 * h);
    }
    for (std::size_t i = 0; i < z.size(); ++i) {
      double keep = z[i];
      z[i] = keep + h;
      double lp = dlg_loss(prob, x, z);
      z[i] = keep - h;
      double lm = dlg_loss(prob, x, z);
      z[i] = keep;
      gz[i] = (lp - lm) / (2.0 * h);
    }
    bool finite = true;
    for (double v : gx) finite = finite && std::isfinite(v);
    for (double v : gz) finite = finite && std::isfinite(v);
    if (!finite) {
      best.diverged = true;
      return best;
    }
    for (std::size_t i = 0; i < x.size(); ++i) x[i] -= attack_eta * gx[i];
    for (std::size_t i = 0; i < z.size(); ++i) z[i] -= attack_eta * gz[i];
  }
  double last = dlg_loss(prob, x, z);
  if (std::isfinite(last) && last < best.dlg_loss) {
    best.dlg_loss = last;
    best.x_recovered = x;
    best.z_recovered = z;
  }
  return best;
}

AttackResult run_dlg(const AttackTarget& target, std::size_t steps,
                     double attack_eta, Rng& rng) {
  return run_dlg(make_dlg_problem(target), steps, attack_eta, rng);
}

std::vector<double> pseudo_model_logits(std::span<const double> f_g,
                                        const EmbeddingTable& table) {
  double nf = 0.0;
  for (double v : f_g) nf += v * v;
  nf = std::sqrt(nf);
  if (nf < 1e-12)
    throw DegenerateVectorError("pseudo_model_logits: degenerate feature");
  NoGradGuard ng;
  Tensor f = Tensor::from({f_g.size()},
                          std::vector<double>(f_g.begin(), f_g.end()));
  std::vector<double> logits(table.categories());
  for (std::size_t u = 0; u < table.categories(); ++u)
    logits[u] = cosine_sim(f, table.lookup(u)).item();
  return logits;
}

double psnr(std::span<const double> img_a, std::span<const double> img_b) {
  if (img_a.size() != img_b.size() || img_a.empty())
    throw DimensionError("psnr: shape mismatch");
  double mse = 0.0;
  for (std::size_t i = 0; i < img_a.size(); ++i) {
    double a = std::clamp(img_a[i], 0.0, 1.0);
    double b = std::clamp(img_b[i], 0.0, 1.0);
    mse += (a - b) * (a - b);
  }
  mse /= static_cast<double>(img_a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

}  // namespace gpfl
