#include "gpfl/runner.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "gpfl/metrics.hpp"
#include "json.hpp"

namespace gpfl {

namespace {

using nlohmann::json;

std::string hash_hex(std::uint64_t h) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "0x%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

json fairness_json(const FairnessStats& fs) {
  json j;
  j["stddev"] = fs.stddev;
  j["cv"] = fs.cv;  // NaN serializes as null (mean == 0 sentinel)
  return j;
}

json summary_object(const ExperimentConfig& cfg, const RunArtifacts& art) {
  json j;
  j["schema"] = 1;
  j["method"] = method_to_string(cfg.method);
  json cfg_j;
  for (const auto& [k, v] : cfg.to_map()) cfg_j[k] = v;
  j["config"] = cfg_j;
  j["seeds"] = {{"data", cfg.seed_data},
                {"init", cfg.seed_init},
                {"sample", cfg.seed_sample},
                {"attack", cfg.seed_attack}};
  j["best"] = {{"round", art.best.round},
               {"mean_acc", art.best.mean_acc},
               {"fairness", fairness_json(art.best.fairness)}};
  j["final"] = {{"round", art.records.back().round},
                {"mean_acc", art.final_mean_acc}};
  j["rounds_recorded"] = art.records.size();
  j["shard_hash"] = hash_hex(art.shards_fingerprint);
  return j;
}

json named_values_json(
    const std::vector<std::pair<std::string, std::vector<double>>>& kv) {
  json j = json::object();
  for (const auto& [name, values] : kv) j[name] = values;
  return j;
}

std::vector<std::pair<std::string, std::vector<double>>> named_values_from(
    const json& j) {
  std::vector<std::pair<std::string, std::vector<double>>> out;
  for (auto it = j.begin(); it != j.end(); ++it)
    out.emplace_back(it.key(), it.value().get<std::vector<double>>());
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace

std::string summary_json(const ExperimentConfig& cfg,
                         const RunArtifacts& art) {
  return summary_object(cfg, art).dump(2) + "\n";
}

void write_run_outputs(const ExperimentConfig& cfg, const RunArtifacts& art,
                       const std::string& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir + "/summary.json", summary_json(cfg, art));
  write_records_csv(art.records, dir + "/rounds.csv");
  write_accuracy_chart_svg(art.records, dir + "/curves.svg");

  if (art.captures.present) {
    json j;
    j["method"] = method_to_string(art.captures.method);
    j["eta"] = art.captures.eta;
    j["spec"] = {{"input_dim", art.captures.spec.input_dim},
                 {"feature_dim", art.captures.spec.feature_dim},
                 {"categories", art.captures.spec.categories},
                 {"hidden", art.captures.spec.hidden},
                 {"backbone", art.captures.spec.backbone == BackboneKind::cnn
                                  ? "cnn"
                                  : "mlp"}};
    j["snapshot"] = named_values_json(art.captures.snapshot);
    json clients = json::array();
    for (const ClientCapture& c : art.captures.clients) {
      json cj;
      cj["client_id"] = c.client_id;
      cj["delta"] = named_values_json(c.delta);
      cj["x_truth"] = c.x_truth;
      cj["y_truth"] = c.y_truth;
      clients.push_back(cj);
    }
    j["clients"] = clients;
    write_text(dir + "/captures.json", j.dump() + "\n");
  }
}

CaptureBundle load_captures(const std::string& run_dir) {
  const std::string path = run_dir + "/captures.json";
  std::ifstream in(path);
  if (!in)
    throw ConfigError("no captured updates at " + path +
                      "; rerun training with --capture-updates");
  json j;
  in >> j;
  CaptureBundle b;
  b.present = true;
  b.method = method_from_string(j.at("method").get<std::string>());
  b.eta = j.at("eta").get<double>();
  const json& spec = j.at("spec");
  b.spec.input_dim = spec.at("input_dim").get<std::size_t>();
  b.spec.feature_dim = spec.at("feature_dim").get<std::size_t>();
  b.spec.categories = spec.at("categories").get<std::size_t>();
  b.spec.hidden = spec.at("hidden").get<std::size_t>();
  b.spec.backbone = spec.at("backbone").get<std::string>() == "cnn"
                        ? BackboneKind::cnn
                        : BackboneKind::mlp;
  b.snapshot = named_values_from(j.at("snapshot"));
  for (const json& cj : j.at("clients")) {
    ClientCapture c;
    c.client_id = cj.at("client_id").get<std::size_t>();
    c.delta = named_values_from(cj.at("delta"));
    c.x_truth = cj.at("x_truth").get<std::vector<double>>();
    c.y_truth = cj.at("y_truth").get<std::size_t>();
    b.clients.push_back(std::move(c));
  }
  return b;
}

int cmd_train(const ExperimentConfig& cfg) {
  cfg.validate();
  RunArtifacts art = run_experiment(cfg);
  write_run_outputs(cfg, art, cfg.out_dir);
  std::printf("%s: best mean accuracy %.4f at round %zu (final %.4f), "
              "outputs in %s\n",
              method_to_string(cfg.method).c_str(), art.best.mean_acc,
              art.best.round, art.final_mean_acc, cfg.out_dir.c_str());
  return 0;
}

std::vector<AblationRow> run_ablation(const ExperimentConfig& cfg) {
  const Method methods[] = {Method::gpfl,        Method::gpfl_wo_pci,
                            Method::gpfl_wo_cov, Method::gpfl_wo_mlg,
                            Method::gpfl_wo_gce, Method::fedper};
  std::vector<AblationRow> rows(std::size(methods));
  std::vector<ExperimentConfig> cfgs(std::size(methods), cfg);
  for (std::size_t i = 0; i < std::size(methods); ++i)
    cfgs[i].method = methods[i];

#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < std::size(methods); ++i) {
    RunArtifacts art = run_experiment(cfgs[i]);
    rows[i] = {method_to_string(methods[i]), art.best.mean_acc,
               art.best.round, art.final_mean_acc, art.shards_fingerprint};
    write_run_outputs(cfgs[i], art,
                      cfg.out_dir + "/ablate_" + method_to_string(methods[i]));
  }
  for (const AblationRow& r : rows)
    if (r.shard_hash != rows[0].shard_hash)
      throw ContractError("ablation runs diverged on data shards");
  return rows;
}

bool ablation_ordering_ok(std::span<const AblationRow> rows,
                          int tolerated_inversions) {
  auto acc_of = [&](const std::string& m) {
    for (const AblationRow& r : rows)
      if (r.method == m) return r.best_acc;
    throw ContractError("ablation_ordering_ok: missing row " + m);
  };
  const double chain[] = {acc_of("gpfl"), acc_of("gpfl_wo_mlg"),
                          acc_of("gpfl_wo_gce"), acc_of("fedper")};
  int inversions = 0;
  for (std::size_t i = 0; i + 1 < std::size(chain); ++i)
    if (chain[i] < chain[i + 1]) ++inversions;
  return inversions <= tolerated_inversions;
}

int cmd_ablate(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<AblationRow> rows = run_ablation(cfg);

  std::filesystem::create_directories(cfg.out_dir);
  std::ofstream csv(cfg.out_dir + "/ablation.csv");
  if (!csv) throw IoError("cannot write " + cfg.out_dir + "/ablation.csv");
  csv << "method,best_acc,best_round,final_acc,shard_hash\n";
  std::vector<std::string> labels;
  std::vector<double> values;
  for (const AblationRow& r : rows) {
    csv << r.method << ',' << format_g17(r.best_acc) << ',' << r.best_round
        << ',' << format_g17(r.final_acc) << ',' << hash_hex(r.shard_hash)
        << '\n';
    labels.push_back(r.method);
    values.push_back(r.best_acc);
  }
  write_bar_chart_svg(labels, values, "best accuracy by variant",
                      cfg.out_dir + "/ablation.svg");

  nlohmann::json j;
  j["rows"] = nlohmann::json::array();
  for (const AblationRow& r : rows)
    j["rows"].push_back({{"method", r.method},
                         {"best_acc", r.best_acc},
                         {"best_round", r.best_round},
                         {"final_acc", r.final_acc}});
  j["ordering_ok"] = ablation_ordering_ok(rows);
  j["shard_hash"] = hash_hex(rows[0].shard_hash);
  write_text(cfg.out_dir + "/ablation.json", j.dump(2) + "\n");

  std::printf("%-14s %10s %10s\n", "method", "best_acc", "best_round");
  for (const AblationRow& r : rows)
    std::printf("%-14s %10.4f %10zu\n", r.method.c_str(), r.best_acc,
                r.best_round);
  std::printf("ordering_ok: %s\n", j["ordering_ok"].get<bool>() ? "true"
                                                                : "false");
  return 0;
}

int cmd_attack(const ExperimentConfig& cfg, const std::string& run_dir) {
  CaptureBundle bundle = load_captures(run_dir);
  if (bundle.clients.empty())
    throw ConfigError("captures at " + run_dir + " hold no client updates");

  std::vector<AttackTargetKind> kinds{AttackTargetKind::feature_extractor};
  auto has = [&](const char* name) {
    for (const auto& [k, v] : bundle.snapshot)
      if (k.rfind(name, 0) == 0) return true;
    return false;
  };
  if (has("cov.") && has("gce.")) {
    kinds.push_back(AttackTargetKind::pseudo_feature_extractor);
    kinds.push_back(AttackTargetKind::pseudo_model);
  }
  if (has("head.")) kinds.push_back(AttackTargetKind::full_model);

  struct Entry {
    AttackTargetKind kind;
    std::size_t seed;
    AttackResult result;
  };
  std::vector<Entry> entries;
  for (AttackTargetKind kind : kinds)
    for (std::size_t s = 0; s < cfg.attack_restarts; ++s)
      entries.push_back({kind, s, {}});

#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < entries.size(); ++i) {
    AttackTarget t = make_attack_target(bundle, 0, entries[i].kind);
    Rng rng(derive_seed(cfg.seed_attack, target_kind_to_string(entries[i].kind),
                        entries[i].seed));
    AttackResult r = run_dlg(t, cfg.attack_steps, cfg.attack_eta, rng);
    r.psnr_db = psnr(r.x_recovered, t.x_truth);
    entries[i].result = std::move(r);
  }

  nlohmann::json list = nlohmann::json::array();
  nlohmann::json per_target = nlohmann::json::object();
  for (AttackTargetKind kind : kinds) {
    const Entry* best = nullptr;
    for (const Entry& e : entries) {
      if (e.kind != kind) continue;
      nlohmann::json ej;
      ej["method"] = method_to_string(bundle.method);
      ej["target_kind"] = target_kind_to_string(kind);
      ej["seed"] = e.seed;
      ej["psnr_db"] = e.result.psnr_db;
      ej["dlg_loss"] = e.result.dlg_loss;
      ej["diverged"] = e.result.diverged;
      list.push_back(ej);
      if (!best || e.result.dlg_loss < best->result.dlg_loss) best = &e;
    }
    per_target[target_kind_to_string(kind)] = {
        {"best_seed", best->seed},
        {"psnr_db", best->result.psnr_db},
        {"dlg_loss", best->result.dlg_loss}};
    std::printf("%-26s best psnr %.3f dB (dlg loss %.3e, seed %zu)\n",
                target_kind_to_string(kind).c_str(), best->result.psnr_db,
                best->result.dlg_loss, best->seed);
  }

  // append under the run's summary
  const std::string summary_path = run_dir + "/summary.json";
  std::ifstream in(summary_path);
  if (!in) throw IoError("cannot open " + summary_path);
  nlohmann::json summary;
  in >> summary;
  in.close();
  summary["privacy"] = {{"entries", list}, {"per_target", per_target}};
  write_text(summary_path, summary.dump(2) + "\n");
  return 0;
}

}  // namespace gpfl
