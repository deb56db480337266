#include "gpfl/federation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace gpfl {

ModelVariant MethodSpec::variant() const {
  ModelVariant v;
  switch (method) {
    case Method::gpfl_wo_pci: v.personalized_cond = false; break;
    case Method::gpfl_wo_cov: v.use_cov = false; break;
    case Method::gpfl_wo_mlg: v.use_mlg = false; break;
    case Method::gpfl_wo_gce: v.use_gce = false; break;
    default: break;
  }
  if (fedper_equiv_harness) v.use_gce = false;
  return v;
}

std::vector<std::string> MethodSpec::shared_prefixes() const {
  switch (method) {
    case Method::gpfl:
    case Method::gpfl_wo_pci:
    case Method::gpfl_wo_mlg:
      return {"fe.", "cov.", "gce."};
    case Method::gpfl_wo_cov:
      return {"fe.", "gce."};
    case Method::gpfl_wo_gce:
      return {"fe.", "cov."};
    case Method::fedavg:
    case Method::fedprox:
    case Method::ditto:
      return {"fe.", "head."};
    case Method::fedper:
      return {"fe."};
  }
  return {};
}

std::vector<std::string> MethodSpec::trainable_prefixes() const {
  if (!is_gpfl_family(method)) return {"fe.", "head."};
  ModelVariant v = variant();
  std::vector<std::string> p{"fe.", "head."};
  if (v.use_cov) p.push_back("cov.");
  if (v.use_gce) p.push_back("gce.");
  return p;
}

MethodSpec method_spec_from(const ExperimentConfig& cfg) {
  MethodSpec m;
  m.method = cfg.method;
  m.lambda = cfg.lambda;
  m.mu = cfg.mu;
  m.prox_mu = cfg.prox_mu;
  m.ditto_lambda = cfg.ditto_lambda;
  m.squared_reg = cfg.squared_reg;
  return m;
}

std::vector<NamedParam> collect_named_params(const GpflModel& m) {
  std::vector<NamedParam> out;
  m.backbone.collect_params("fe", out);
  out.push_back({"head.w", m.backbone.head.weight});
  out.push_back({"head.b", m.backbone.head.bias});
  m.cov.collect_params("cov", out);
  out.push_back({"gce.rows", m.gce.rows});
  return out;
}

namespace {

bool has_prefix(const std::string& name, std::span<const std::string> ps) {
  for (const std::string& p : ps)
    if (name.rfind(p, 0) == 0) return true;
  return false;
}

std::vector<NamedParam> filter_params(std::span<const NamedParam> params,
                                      std::span<const std::string> prefixes) {
  std::vector<NamedParam> out;
  for (const NamedParam& p : params)
    if (has_prefix(p.name, prefixes)) out.push_back(p);
  return out;
}

const NamedParam* find_param(std::span<const NamedParam> params,
                             const std::string& name) {
  for (const NamedParam& p : params)
    if (p.name == name) return &p;
  return nullptr;
}

void install(std::span<const NamedParam> broadcast,
             std::span<const NamedParam> client_params,
             std::span<const std::string> prefixes) {
  for (const NamedParam& src : broadcast) {
    if (!has_prefix(src.name, prefixes)) continue;
    const NamedParam* dst = find_param(client_params, src.name);
    if (!dst)
      throw ContractError("install: client has no parameter '" + src.name +
                          "'");
    NamedParam target = *dst;
    auto vals = target.tensor.values_mut();
    std::copy(src.tensor.values().begin(), src.tensor.values().end(),
              vals.begin());
  }
}

std::vector<std::vector<double>> snapshot_values(
    std::span<const NamedParam> params) {
  std::vector<std::vector<double>> out;
  out.reserve(params.size());
  for (const NamedParam& p : params)
    out.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
  return out;
}

std::vector<Sample> make_batch(const Dataset& ds,
                               std::span<const std::size_t> idx) {
  std::vector<Sample> batch;
  batch.reserve(idx.size());
  for (std::size_t i : idx) batch.push_back({ds.row(i), ds.labels[i]});
  return batch;
}

struct SgdStats {
  double loss_p = 0.0, loss_alg = 0.0, loss_mlg = 0.0;
  std::size_t samples = 0;
};

template <typename LossFn>
SgdStats run_sgd(const Dataset& train, std::span<NamedParam> trainable,
                 LossFn&& loss_fn, double eta, std::size_t batch,
                 std::size_t epochs, std::uint64_t seed_sample,
                 std::size_t round) {
  SgdStats stats;
  for (std::size_t e = 0; e < epochs; ++e) {
    std::vector<std::size_t> order =
        local_batch_order(train.size(), seed_sample, round, e);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      std::size_t stop = std::min(start + batch, order.size());
      std::vector<Sample> chunk = make_batch(
          train,
          std::span<const std::size_t>(order).subspan(start, stop - start));
      TotalLoss tl = loss_fn(std::span<const Sample>(chunk));
      tl.value.backward();
      sgd_step(trainable, eta);
      const double w = static_cast<double>(chunk.size());
      stats.loss_p += tl.parts.l_p * w;
      stats.loss_alg += tl.parts.l_alg * w;
      stats.loss_mlg += tl.parts.l_mlg * w;
      stats.samples += chunk.size();
    }
  }
  if (stats.samples > 0) {
    const double inv = 1.0 / static_cast<double>(stats.samples);
    stats.loss_p *= inv;
    stats.loss_alg *= inv;
    stats.loss_mlg *= inv;
  }
  return stats;
}

std::vector<double> uniform_cond(std::size_t k) {
  return std::vector<double>(k, 1.0 / static_cast<double>(k));
}

// Local initialization for the gpfl family: freeze the received embeddings
// and rebuild the round's conditional inputs.
void local_initialize_gpfl(ClientState& c, const MethodSpec& method) {
  const ModelVariant v = method.variant();
  if (method.fedper_equiv_harness) c.model.cov.zero_all();
  const std::size_t k = c.model.backbone.feature_dim();
  if (v.use_gce) {
    c.model.gce_frozen = c.model.gce.frozen_copy();
    if (v.personalized_cond) {
      c.cond.g = compute_g(c.model.gce_frozen);
      c.cond.p = compute_p(c.model.gce_frozen, c.cond.alpha);
    } else {
      // fixed inputs replacing the dynamic ones: a = g on the personalized
      // route, b = all-ones/K on the global route
      c.cond.p = compute_g(c.model.gce_frozen);
      c.cond.g = uniform_cond(k);
    }
  } else {
    c.cond.g = uniform_cond(k);
    c.cond.p = uniform_cond(k);
  }
}

void zero_all_grads(std::span<const NamedParam> params) {
  for (const NamedParam& p : params) p.tensor.zero_grad();
}

}  // namespace

std::vector<std::size_t> sample_clients(std::size_t n_clients,
                                        const RhoSpec& rho, Rng& rng) {
  if (n_clients == 0) throw ConfigError("sample_clients: empty registry");
  double r = rho.lo == rho.hi ? rho.lo : rng.uniform(rho.lo, rho.hi);
  std::size_t k = static_cast<std::size_t>(
      std::llround(r * static_cast<double>(n_clients)));
  k = std::clamp<std::size_t>(k, 1, n_clients);
  std::vector<std::size_t> ids(n_clients);
  std::iota(ids.begin(), ids.end(), 0);
  // partial Fisher-Yates: the first k entries are a uniform k-subset
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + rng.below(n_clients - i);
    std::swap(ids[i], ids[j]);
  }
  ids.resize(k);
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<std::size_t> local_batch_order(std::size_t n,
                                           std::uint64_t seed_sample,
                                           std::size_t round,
                                           std::size_t epoch) {
  std::uint64_t s = derive_seed(seed_sample, "batch-order", round);
  s = derive_seed(s, "epoch", epoch);
  Rng rng(s);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  return order;
}

Tensor baseline_loss(const MethodSpec& method, const Backbone& model,
                     std::span<const Sample> batch,
                     std::span<const NamedParam> params,
                     std::span<const std::vector<double>> broadcast_ref,
                     bool personalized_pass) {
  if (batch.empty()) throw EmptyInputError("baseline_loss: empty batch");
  if (is_gpfl_family(method.method))
    throw ContractError("baseline_loss: gpfl methods use total_loss");
  Tensor ce_sum;
  for (const Sample& s : batch) {
    Tensor x = Tensor::from({s.x.size()},
                            std::vector<double>(s.x.begin(), s.x.end()));
    Tensor logits = head_forward(model.head, model.extract(x));
    Tensor ce = softmax_cross_entropy(logits, s.y);
    ce_sum = ce_sum.valid() ? add(ce_sum, ce) : ce;
  }
  Tensor loss = scale(ce_sum, 1.0 / static_cast<double>(batch.size()));

  const bool prox_pass =
      method.method == Method::fedprox ||
      (method.method == Method::ditto && personalized_pass);
  if (prox_pass) {
    const double coeff = method.method == Method::fedprox ? method.prox_mu
                                                          : method.ditto_lambda;
    if (!(coeff >= 0.0))
      throw ConfigError(method.method == Method::fedprox
                            ? "fedprox requires prox_mu >= 0"
                            : "ditto requires ditto_lambda >= 0");
    if (coeff > 0.0) {
      if (params.size() != broadcast_ref.size())
        throw ConfigError("baseline_loss: proximal term needs the broadcast "
                          "snapshot");
      std::vector<Tensor> ts;
      ts.reserve(params.size());
      for (const NamedParam& p : params) ts.push_back(p.tensor);
      loss = add(loss, scale(sum_sq_diff(ts, broadcast_ref), coeff / 2.0));
    }
  }
  return loss;
}

namespace {

ClientCapture one_sample_capture(ClientState& c, const MethodSpec& method,
                                 std::span<const NamedParam> shared_params) {
  Sample s{c.shard.train.row(0), c.shard.train.labels[0]};
  std::vector<Sample> batch{s};
  Tensor loss;
  if (is_gpfl_family(method.method)) {
    loss = total_loss(batch, c.model, c.cond, method.lambda, method.mu,
                      method.variant(), method.squared_reg)
               .value;
  } else {
    // plain task loss; prox terms vanish at the broadcast point anyway
    MethodSpec plain = method;
    plain.method = Method::fedavg;
    loss = baseline_loss(plain, c.model.backbone, batch, {}, {});
  }
  loss.backward();
  ClientCapture cap;
  cap.client_id = c.id;
  cap.x_truth.assign(s.x.begin(), s.x.end());
  cap.y_truth = s.y;
  for (const NamedParam& p : shared_params) {
    std::vector<double> d(p.tensor.size());
    auto g = p.tensor.grad();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = -c.eta * g[i];
    cap.delta.emplace_back(p.name, std::move(d));
  }
  zero_all_grads(c.params);
  zero_all_grads(c.ditto_params);
  return cap;
}

}  // namespace

LocalOutcome local_round(ClientState& client,
                         std::span<const NamedParam> broadcast,
                         const MethodSpec& method, std::size_t round,
                         std::uint64_t seed_sample, bool capture) {
  LocalOutcome out;
  out.upload.client_id = client.id;
  if (client.shard.train.size() == 0) {
    std::fprintf(stderr,
                 "warning: client %zu has an empty shard; skipping round %zu\n",
                 client.id, round);
    out.skipped = true;
    return out;
  }

  const std::vector<std::string> shared = method.shared_prefixes();
  install(broadcast, client.params, shared);
  std::vector<NamedParam> shared_params = filter_params(client.params, shared);
  std::vector<NamedParam> trainable =
      filter_params(client.params, method.trainable_prefixes());

  std::vector<std::vector<double>> broadcast_ref;
  if (method.method == Method::fedprox || method.method == Method::ditto)
    broadcast_ref = snapshot_values(shared_params);

  SgdStats stats;
  if (is_gpfl_family(method.method)) {
    local_initialize_gpfl(client, method);
    if (capture) out.capture = one_sample_capture(client, method, shared_params);
    const ModelVariant variant = method.variant();
    stats = run_sgd(
        client.shard.train, trainable,
        [&](std::span<const Sample> batch) {
          return total_loss(batch, client.model, client.cond, method.lambda,
                            method.mu, variant, method.squared_reg);
        },
        client.eta, client.batch, client.epochs, seed_sample, round);
  } else {
    if (capture) out.capture = one_sample_capture(client, method, shared_params);
    stats = run_sgd(
        client.shard.train, trainable,
        [&](std::span<const Sample> batch) {
          TotalLoss tl;
          // ditto's shared pass is a plain fedavg step; the proximal term
          // applies to the personalized pass only
          tl.value = baseline_loss(method, client.model.backbone, batch,
                                   shared_params, broadcast_ref);
          tl.parts.l_p = tl.value.item();
          return tl;
        },
        client.eta, client.batch, client.epochs, seed_sample, round);
    if (method.method == Method::ditto) {
      // personalized model: CE plus a proximal pull toward the broadcast
      run_sgd(
          client.shard.train, client.ditto_params,
          [&](std::span<const Sample> batch) {
            TotalLoss tl;
            tl.value = baseline_loss(method, client.ditto_personal, batch,
                                     client.ditto_params, broadcast_ref,
                                     /*personalized_pass=*/true);
            tl.parts.l_p = tl.value.item();
            return tl;
          },
          client.eta, client.batch, client.epochs,
          derive_seed(seed_sample, "ditto-personal"), round);
    }
  }
  out.loss_p = stats.loss_p;
  out.loss_alg = stats.loss_alg;
  out.loss_mlg = stats.loss_mlg;

  for (const NamedParam& p : shared_params)
    out.upload.params.emplace_back(
        p.name, std::vector<double>(p.tensor.values().begin(),
                                    p.tensor.values().end()));
  return out;
}

void aggregate(std::span<const Upload> uploads,
               std::span<const double> n_weights,
               std::vector<NamedParam>& global_params) {
  if (uploads.empty()) return;
  double n_t = 0.0;
  for (const Upload& u : uploads) {
    if (u.client_id >= n_weights.size())
      throw AggregationError("aggregate: unknown client " +
                             std::to_string(u.client_id));
    n_t += n_weights[u.client_id];
  }
  if (!(n_t > 0.0))
    throw AggregationError("aggregate: participating weight is zero");

  const std::size_t n_names = uploads[0].params.size();
  for (const Upload& u : uploads)
    if (u.params.size() != n_names)
      throw AggregationError("aggregate: client " +
                             std::to_string(u.client_id) +
                             " uploaded a different parameter set");

  for (std::size_t j = 0; j < n_names; ++j) {
    const std::string& name = uploads[0].params[j].first;
    const NamedParam* gp = find_param(global_params, name);
    if (!gp) throw AggregationError("aggregate: unknown parameter " + name);
    std::vector<double> acc(gp->tensor.size(), 0.0);
    for (const Upload& u : uploads) {
      if (u.params[j].first != name || u.params[j].second.size() != acc.size())
        throw AggregationError("aggregate: shape mismatch from client " +
                               std::to_string(u.client_id) + " on " + name);
      const double w = n_weights[u.client_id];
      const std::vector<double>& v = u.params[j].second;
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += w * v[i];
    }
    NamedParam target = *gp;
    auto vals = target.tensor.values_mut();
    for (std::size_t i = 0; i < acc.size(); ++i) vals[i] = acc[i] / n_t;
  }
}

Federation::Federation(const ExperimentConfig& cfg,
                       std::vector<ClientShard> shards)
    : cfg_(cfg),
      method_(method_spec_from(cfg)),
      sample_rng_(derive_seed(cfg.seed_sample, "sampling")) {
  if (shards.size() != cfg.clients)
    throw ConfigError("federation: got " + std::to_string(shards.size()) +
                      " shards for " + std::to_string(cfg.clients) +
                      " clients");
  shards_fingerprint_ = shard_hash(shards);

  const ModelSpec spec = cfg.model_spec();
  server_model_ = init_gpfl_model(spec, cfg.seed_init);
  server_params_ = collect_named_params(server_model_);

  std::size_t total_train = 0;
  for (const ClientShard& s : shards) total_train += s.train.size();
  if (total_train == 0) throw ConfigError("federation: no training data");

  clients_.reserve(shards.size());
  for (std::size_t i = 0; i < shards.size(); ++i) {
    ClientState c;
    c.id = i;
    c.shard = std::move(shards[i]);
    c.model = init_gpfl_model(spec, cfg.seed_init);
    c.params = collect_named_params(c.model);
    if (cfg.method == Method::ditto) {
      GpflModel pm = init_gpfl_model(spec, cfg.seed_init);
      c.ditto_personal = std::move(pm.backbone);
      c.ditto_personal.collect_params("fe", c.ditto_params);
      c.ditto_params.push_back({"head.w", c.ditto_personal.head.weight});
      c.ditto_params.push_back({"head.b", c.ditto_personal.head.bias});
    }
    c.n_weight = static_cast<double>(c.shard.train.size()) /
                 static_cast<double>(total_train);
    c.eta = cfg.eta;
    c.batch = cfg.batch;
    c.epochs = cfg.epochs;
    if (c.shard.train.size() > 0) {
      c.cond.alpha = compute_alpha(c.shard.train.labels, cfg.categories);
      if (is_gpfl_family(cfg.method)) local_initialize_gpfl(c, method_);
    }
    clients_.push_back(std::move(c));
  }

  double weight_sum = 0.0;
  for (const ClientState& c : clients_) weight_sum += c.n_weight;
  if (std::abs(weight_sum - 1.0) > 1e-9)
    throw ContractError("federation: client weights sum to " +
                        std::to_string(weight_sum));
}

void Federation::train_round(std::size_t t) {
  std::vector<std::size_t> sampled =
      sample_clients(clients_.size(), cfg_.rho, sample_rng_);
  const bool capture = cfg_.capture_updates && t == 1;
  if (capture) {
    captures_.present = true;
    captures_.method = cfg_.method;
    captures_.eta = cfg_.eta;
    captures_.spec = cfg_.model_spec();
    captures_.snapshot.clear();
    for (const NamedParam& p :
         filter_params(server_params_, method_.shared_prefixes()))
      captures_.snapshot.emplace_back(
          p.name, std::vector<double>(p.tensor.values().begin(),
                                      p.tensor.values().end()));
  }

  std::vector<LocalOutcome> outcomes(sampled.size());
  const std::span<const NamedParam> broadcast(server_params_);
  if (cfg_.parallel_clients) {
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < sampled.size(); ++i)
      outcomes[i] = local_round(clients_[sampled[i]], broadcast, method_, t,
                                cfg_.seed_sample, capture);
  } else {
    for (std::size_t i = 0; i < sampled.size(); ++i)
      outcomes[i] = local_round(clients_[sampled[i]], broadcast, method_, t,
                                cfg_.seed_sample, capture);
  }

  last_participants_ = sampled;
  last_loss_ = {};
  std::vector<Upload> uploads;
  std::vector<double> weights(clients_.size(), 0.0);
  for (ClientState& c : clients_) weights[c.id] = c.n_weight;
  std::size_t contributed = 0;
  for (LocalOutcome& o : outcomes) {
    if (o.capture) captures_.clients.push_back(std::move(*o.capture));
    if (o.skipped) continue;
    last_loss_.loss_p += o.loss_p;
    last_loss_.loss_alg += o.loss_alg;
    last_loss_.loss_mlg += o.loss_mlg;
    ++contributed;
    uploads.push_back(std::move(o.upload));
  }
  if (contributed > 0) {
    last_loss_.loss_p /= static_cast<double>(contributed);
    last_loss_.loss_alg /= static_cast<double>(contributed);
    last_loss_.loss_mlg /= static_cast<double>(contributed);
  }
  aggregate(uploads, weights, server_params_);
}

double Federation::evaluate_client(std::size_t i) const {
  const ClientState& c = clients_[i];
  const Dataset& test = c.shard.test;
  if (test.size() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t s = 0; s < test.size(); ++s)
    if (predict(i, test.row(s)) == test.labels[s]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

std::size_t Federation::predict(std::size_t i,
                                std::span<const double> x) const {
  NoGradGuard ng;
  const ClientState& c = clients_[i];
  Tensor xt =
      Tensor::from({x.size()}, std::vector<double>(x.begin(), x.end()));
  if (is_gpfl_family(cfg_.method)) {
    GpflForward f =
        forward_gpfl(c.model, xt, c.cond, ForwardMode::eval, method_.variant());
    return argmax(f.logits.values());
  }
  switch (cfg_.method) {
    case Method::fedper:
      return argmax(
          head_forward(c.model.backbone.head, c.model.backbone.extract(xt))
              .values());
    case Method::ditto:
      return argmax(
          head_forward(c.ditto_personal.head, c.ditto_personal.extract(xt))
              .values());
    default:  // fedavg/fedprox evaluate the global model
      return argmax(head_forward(server_model_.backbone.head,
                                 server_model_.backbone.extract(xt))
                        .values());
  }
}

RoundRecord Federation::eval_round(std::size_t t) {
  RoundRecord r;
  r.round = t;
  r.client_acc.resize(clients_.size());
  if (cfg_.parallel_clients) {
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < clients_.size(); ++i)
      r.client_acc[i] = evaluate_client(i);
  } else {
    for (std::size_t i = 0; i < clients_.size(); ++i)
      r.client_acc[i] = evaluate_client(i);
  }
  if (cfg_.weighted_mean) {
    double acc = 0.0;
    for (std::size_t i = 0; i < clients_.size(); ++i)
      acc += clients_[i].n_weight * r.client_acc[i];
    r.mean_acc = acc;
  } else {
    double acc = 0.0;
    for (double a : r.client_acc) acc += a;
    r.mean_acc = acc / static_cast<double>(clients_.size());
  }
  return r;
}

RunArtifacts Federation::run() {
  RunArtifacts art;
  art.shards_fingerprint = shards_fingerprint_;

  art.records.push_back(eval_round(0));
  for (std::size_t t = 1; t <= cfg_.rounds; ++t) {
    auto start = std::chrono::steady_clock::now();
    train_round(t);
    RoundRecord r = eval_round(t);
    r.participants = last_participants_;
    r.loss_p = last_loss_.loss_p;
    r.loss_alg = last_loss_.loss_alg;
    r.loss_mlg = last_loss_.loss_mlg;
    r.wall_ms = std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - start)
                    .count();
    art.records.push_back(std::move(r));
  }
  if (clients_.size() >= 2) {
    art.best = best_round(art.records);
  } else {
    // single-client runs carry no fairness statistic
    art.best.round = art.records[0].round;
    art.best.mean_acc = art.records[0].mean_acc;
    for (const RoundRecord& r : art.records)
      if (r.mean_acc > art.best.mean_acc) {
        art.best.round = r.round;
        art.best.mean_acc = r.mean_acc;
      }
  }
  art.final_mean_acc = art.records.back().mean_acc;
  art.captures = captures_;
  return art;
}

Dataset build_dataset(const ExperimentConfig& cfg) {
  Dataset ds;
  if (cfg.source == DataSource::csv) {
    ds = load_csv_dataset(cfg.csv_path);
    if (ds.categories < cfg.categories) ds.categories = cfg.categories;
  } else {
    Rng rng(derive_seed(cfg.seed_data, "synth"));
    ds = gen_synthetic(cfg.categories, cfg.input_dim, cfg.synth_n,
                       cfg.synth_spread, cfg.synth_separation, rng);
  }
  if (cfg.normalize01) normalize_unit_range(ds);
  return ds;
}

RunArtifacts run_with_shards(const ExperimentConfig& cfg,
                             std::vector<ClientShard> shards) {
  Federation fed(cfg, std::move(shards));
  return fed.run();
}

RunArtifacts run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  Dataset ds = build_dataset(cfg);
  std::vector<ClientShard> shards = partition(ds, cfg.partition_spec());
  return run_with_shards(cfg, std::move(shards));
}

}  // namespace gpfl
