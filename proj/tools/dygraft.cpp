#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "CLI11.hpp"
#include "fmt/format.h"
#include "nlohmann/json.hpp"

#include "dygraft/checkpoint.hpp"
#include "dygraft/config.hpp"
#include "dygraft/eval.hpp"
#include "dygraft/ingest.hpp"
#include "dygraft/model_scorers.hpp"

namespace fs = std::filesystem;
using namespace dygraft;

namespace {

void apply_thread_cap() {
#ifdef _OPENMP
  if (const char* env = std::getenv("DYGRAFT_THREADS")) {
    int n = std::atoi(env);
    if (n > 0) omp_set_num_threads(n);
  }
#endif
}

Dataset load_from_config(const RunConfig& cfg) {
  if (!cfg.edge_file || !cfg.node_file || !cfg.has_splits)
    throw ConfigError("config: dataset.edge_file, dataset.node_file and "
                      "dataset.splits are required");
  return load_dataset(*cfg.edge_file, *cfg.node_file, cfg.splits);
}

void write_loss_curve(const fs::path& path, const std::vector<double>& curve,
                      int epoch_offset) {
  std::ofstream out(path);
  out << "epoch\tloss\n";
  out.precision(17);
  for (size_t i = 0; i < curve.size(); ++i)
    out << (epoch_offset + static_cast<int>(i)) << '\t' << curve[i] << '\n';
}

int cmd_generate(const RunConfig& cfg) {
  if (!cfg.has_generate) throw ConfigError("config: 'generate' block is required");
  fs::create_directories(cfg.out_dir);
  fs::path nodes = fs::path(cfg.out_dir) / "nodes.tsv";
  fs::path edges = fs::path(cfg.out_dir) / "edges.tsv";
  generate_synthetic(cfg.generate, nodes, edges);
  std::cout << "wrote " << nodes.string() << " and " << edges.string() << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& checkpoint_in) {
  if (!cfg.has_model) throw ConfigError("config: 'model' block is required");
  Dataset ds = load_from_config(cfg);
  fs::create_directories(cfg.out_dir);
  {
    std::ofstream rep(fs::path(cfg.out_dir) / "dataset_report.json");
    rep << split_report(ds.store, ds.split).dump(2) << "\n";
  }

  Checkpoint ckpt;
  ckpt.config = cfg.model_json();
  int epoch_offset = 0;
  TrainResult result;

  if (cfg.model_kind == ModelKind::DgtD) {
    DiscreteModel model(cfg.discrete, ds.store, cfg.seed);
    if (!checkpoint_in.empty()) {
      Checkpoint prev = load_checkpoint(checkpoint_in);
      require_config_match(prev, ckpt.config);
      model.params().values_mut() = prev.parameters;
      epoch_offset = prev.config.value("epochs_done", 0);
    }
    result = model.train(ds.store, ds.split, cfg.optim);
    ckpt.model_kind = "dgt_d";
    ckpt.parameters = model.params().values();
  } else {
    ContinuousModel model(cfg.continuous, ds.store, cfg.seed);
    if (!checkpoint_in.empty()) {
      Checkpoint prev = load_checkpoint(checkpoint_in);
      require_config_match(prev, ckpt.config);
      model.params().values_mut() = prev.parameters;
      epoch_offset = prev.config.value("epochs_done", 0);
    }
    result = model.train(ds.store, ds.split, cfg.optim);
    ckpt.model_kind = "dgt_c";
    ckpt.parameters = model.params().values();
    // Memory snapshot at the end of training data, for resumable forecasting.
    ckpt.memory = model.replay(ds.store, ds.split.train_end + 1);
  }

  save_checkpoint(fs::path(cfg.out_dir) / "checkpoint.json", ckpt);
  write_loss_curve(fs::path(cfg.out_dir) / "loss_curve.tsv", result.loss_curve,
                   epoch_offset);
  std::cout << fmt::format("trained {} epochs, final loss {:.6f}\n",
                           result.loss_curve.size(), result.loss_curve.back());
  return 0;
}

int cmd_evaluate(const RunConfig& cfg, const std::string& checkpoint_in,
                 const std::string& scorer_name) {
  Dataset ds = load_from_config(cfg);
  EvalPart part = cfg.eval.part == "valid" ? EvalPart::Valid : EvalPart::Test;
  auto queries = build_queries(ds.store, ds.split, part, cfg.eval.seed,
                               cfg.eval.n_negatives);
  auto categories = categorize_edges(ds.store, ds.split, part);
  auto labels = augment(ds.store);
  EvalOptions opts;
  opts.group_keys = cfg.eval.group_keys;

  std::unique_ptr<TailScorer> scorer;
  std::unique_ptr<DiscreteModel> dmodel;
  std::unique_ptr<ContinuousModel> cmodel;
  if (scorer_name == "oracle") {
    scorer = std::make_unique<OracleScorer>();
  } else if (scorer_name == "recency") {
    scorer = std::make_unique<RecencyScorer>(ds.store);
  } else if (scorer_name == "frequency") {
    scorer = std::make_unique<FrequencyScorer>(ds.store);
  } else if (scorer_name == "model") {
    if (checkpoint_in.empty())
      throw ConfigError("evaluate: --checkpoint is required with the model scorer");
    Checkpoint ckpt = load_checkpoint(checkpoint_in);
    if (cfg.has_model) require_config_match(ckpt, cfg.model_json());
    if (ckpt.model_kind == "dgt_d") {
      dmodel = std::make_unique<DiscreteModel>(discrete_config_from_json(ckpt.config),
                                               ds.store, cfg.seed);
      dmodel->params().values_mut() = ckpt.parameters;
      scorer = std::make_unique<DiscreteScorer>(*dmodel, ds.store, queries);
    } else {
      cmodel = std::make_unique<ContinuousModel>(
          continuous_config_from_json(ckpt.config), ds.store, cfg.seed);
      cmodel->params().values_mut() = ckpt.parameters;
      scorer = std::make_unique<ContinuousScorer>(*cmodel, ds.store, queries);
    }
  } else {
    throw ConfigError(fmt::format("unknown scorer '{}'", scorer_name));
  }

  auto [report, results] = evaluate(*scorer, queries, ds.store, categories, labels, opts);

  fs::create_directories(cfg.out_dir);
  {
    std::ofstream out(fs::path(cfg.out_dir) / "metrics.json");
    out << report.to_json().dump(2) << "\n";
  }
  {
    std::ofstream out(fs::path(cfg.out_dir) / "results.tsv");
    write_results_tsv(results, queries, out);
  }
  std::cout << fmt::format("queries={} MRR={:.4f} Hits@1={:.4f} Hits@3={:.4f} "
                           "Hits@10={:.4f}\n",
                           report.overall.count, report.overall.mrr,
                           report.overall.hits.at(1), report.overall.hits.at(3),
                           report.overall.hits.at(10));
  return 0;
}

int cmd_forecast(const RunConfig& cfg, const std::string& checkpoint_in, int horizon,
                 const std::string& mode_name) {
  if (horizon < 0) throw ConfigError("forecast: --horizon must be >= 0");
  Dataset ds = load_from_config(cfg);
  fs::create_directories(cfg.out_dir);
  fs::path out_path = fs::path(cfg.out_dir) / "forecast.tsv";
  std::ofstream out(out_path);
  out << "t\thead\trelation\ttail\tscore\n";
  out.precision(17);
  if (horizon == 0) {
    std::cout << "horizon 0: empty forecast\n";
    return 0;
  }
  if (checkpoint_in.empty()) throw ConfigError("forecast: --checkpoint is required");
  Checkpoint ckpt = load_checkpoint(checkpoint_in);
  Timestamp from_t = ds.split.train_end + 1;
  const auto& rels = ds.store.relations();

  std::vector<PredictedEdge> preds;
  if (ckpt.model_kind == "dgt_d") {
    DiscreteModel model(discrete_config_from_json(ckpt.config), ds.store, cfg.seed);
    model.params().values_mut() = ckpt.parameters;
    RolloutMode mode = mode_name == "auto" ? RolloutMode::Autoregressive
                                           : RolloutMode::TeacherForced;
    preds = model.rollout(ds.store, from_t, horizon, mode, /*top_k=*/10);
  } else {
    if (mode_name == "auto")
      throw ConfigError("forecast: autoregressive mode applies to dgt_d only");
    ContinuousModel model(continuous_config_from_json(ckpt.config), ds.store, cfg.seed);
    model.params().values_mut() = ckpt.parameters;
    for (int s = 0; s < horizon; ++s) {
      Timestamp target = from_t + s;
      NodeMemory mem = model.replay(ds.store, target);
      std::set<std::pair<NodeId, RelationId>> queries;
      for (const auto& e : ds.store.snapshot(target)) queries.insert({e.head, e.relation});
      for (const auto& [head, rel] : queries) {
        std::vector<NodeId> cands;
        for (NodeId c : ds.store.nodes_of_kind(rels.sig(rel).tail_kind))
          if (c != head) cands.push_back(c);
        if (cands.empty()) continue;
        auto scores = model.score_query(mem, ds.store, head, rel, target, cands);
        std::vector<int> order(cands.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
          if (scores[a] != scores[b]) return scores[a] > scores[b];
          return cands[a] < cands[b];
        });
        for (int k = 0; k < 10 && k < static_cast<int>(order.size()); ++k)
          preds.push_back({target, head, rel, cands[order[k]], scores[order[k]]});
      }
    }
    std::sort(preds.begin(), preds.end(),
              [](const PredictedEdge& a, const PredictedEdge& b) {
                if (a.t != b.t) return a.t < b.t;
                if (a.head != b.head) return a.head < b.head;
                if (a.relation != b.relation) return a.relation < b.relation;
                if (a.score != b.score) return a.score > b.score;
                return a.tail < b.tail;
              });
  }

  for (const auto& p : preds)
    out << p.t << '\t' << p.head << '\t' << rels.sig(p.relation).name << '\t' << p.tail
        << '\t' << p.score << '\n';
  std::cout << fmt::format("wrote {} predictions to {}\n", preds.size(),
                           out_path.string());
  return 0;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& csv_out) {
  using nlohmann::json;
  std::vector<std::pair<std::string, json>> runs;
  for (const auto& path : inputs) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(fmt::format("cannot open {}", path));
    json j;
    in >> j;
    runs.emplace_back(fs::path(path).parent_path().filename().string().empty()
                          ? path
                          : fs::path(path).parent_path().filename().string(),
                      std::move(j));
  }

  // Collect all (group key, group value) rows across runs.
  std::set<std::pair<std::string, std::string>> rows;
  rows.insert({"overall", ""});
  for (const auto& [name, j] : runs)
    for (auto git = j.at("groups").begin(); git != j.at("groups").end(); ++git)
      for (auto vit = git.value().begin(); vit != git.value().end(); ++vit)
        rows.insert({git.key(), vit.key()});

  auto cell = [](const json& j, const std::string& key, const std::string& val) {
    if (key == "overall") return fmt::format("{:.4f}", j.at("overall").at("mrr").get<double>());
    const auto& groups = j.at("groups");
    if (!groups.contains(key) || !groups.at(key).contains(val)) return std::string("—");
    return fmt::format("{:.4f}", groups.at(key).at(val).at("mrr").get<double>());
  };

  std::ostringstream csv;
  std::cout << fmt::format("{:<32}", "group (MRR)");
  csv << "group";
  for (const auto& [name, j] : runs) {
    std::cout << fmt::format("{:>14}", name);
    csv << ',' << name;
  }
  std::cout << "\n";
  csv << "\n";
  for (const auto& [key, val] : rows) {
    std::string label = val.empty() ? key : key + "=" + val;
    std::cout << fmt::format("{:<32}", label);
    csv << label;
    for (const auto& [name, j] : runs) {
      std::string c = cell(j, key, val);
      std::cout << fmt::format("{:>14}", c);
      csv << ',' << (c == "—" ? "" : c);
    }
    std::cout << "\n";
    csv << "\n";
  }
  if (!csv_out.empty()) {
    std::ofstream out(csv_out);
    out << csv.str();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  apply_thread_cap();

  CLI::App app{"dygraft: dynamic heterogeneous graph edge forecasting"};
  app.require_subcommand(1);

  std::string config_path, checkpoint_path, out_dir, mode = "teacher", scorer = "model";
  std::string report_csv;
  std::vector<std::string> report_inputs;
  int horizon = 1;
  int64_t seed_override = -1;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* opt = sub->add_option("--config", config_path, "JSON run configuration");
    if (needs_config) opt->required();
    sub->add_option("--out", out_dir, "output directory (overrides config)");
    sub->add_option("--seed", seed_override, "seed override");
  };

  auto* gen = app.add_subcommand("generate", "write a synthetic dataset");
  add_common(gen, true);
  auto* train = app.add_subcommand("train", "train a model, write checkpoint");
  add_common(train, true);
  train->add_option("--checkpoint", checkpoint_path, "resume from this checkpoint");
  auto* eval = app.add_subcommand("evaluate", "ranking evaluation, write metrics");
  add_common(eval, true);
  eval->add_option("--checkpoint", checkpoint_path, "model checkpoint");
  eval->add_option("--scorer", scorer, "model|oracle|recency|frequency");
  auto* fc = app.add_subcommand("forecast", "multi-step edge forecast");
  add_common(fc, true);
  fc->add_option("--checkpoint", checkpoint_path, "model checkpoint");
  fc->add_option("--horizon", horizon, "future steps");
  fc->add_option("--mode", mode, "teacher|auto");
  auto* rep = app.add_subcommand("report", "compare metric JSONs across runs");
  rep->add_option("inputs", report_inputs, "metrics.json files")->required();
  rep->add_option("--out", report_csv, "CSV output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (rep->parsed()) return cmd_report(report_inputs, report_csv);

    RunConfig cfg = RunConfig::parse_file(config_path);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (seed_override >= 0) {
      cfg.seed = static_cast<uint64_t>(seed_override);
      cfg.optim.seed = cfg.seed;
      cfg.eval.seed = cfg.seed;
      cfg.generate.seed = cfg.seed;
    }
    if (gen->parsed()) return cmd_generate(cfg);
    if (train->parsed()) return cmd_train(cfg, checkpoint_path);
    if (eval->parsed()) return cmd_evaluate(cfg, checkpoint_path, scorer);
    if (fc->parsed()) return cmd_forecast(cfg, checkpoint_path, horizon, mode);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const BuildError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
