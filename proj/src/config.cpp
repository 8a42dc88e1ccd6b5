#include "dygraft/config.hpp"

#include <fstream>
#include <set>

#include "fmt/format.h"

namespace dygraft {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& where,
                const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(fmt::format("config: '{}' must be an object", where));
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError(fmt::format("config: unknown key '{}' in '{}'", it.key(), where));
}

SequenceLayer seq_layer(const std::string& s, const std::string& where) {
  if (s == "transformer") return SequenceLayer::Transformer;
  if (s == "recurrent") return SequenceLayer::RecurrentUnit;
  throw ConfigError(fmt::format("config: {}.sequence_layer must be 'transformer' or "
                                "'recurrent', got '{}'", where, s));
}

std::string seq_layer_name(SequenceLayer s) {
  return s == SequenceLayer::Transformer ? "transformer" : "recurrent";
}

}  // namespace

nlohmann::json to_json(const DiscreteModelConfig& c) {
  return {{"kind", "dgt_d"},
          {"d", c.d},
          {"n_history", c.n_history},
          {"rgcn_layers", c.rgcn_layers},
          {"n_heads", c.n_heads},
          {"n_encoder_layers", c.n_encoder_layers},
          {"sequence_layer", seq_layer_name(c.sequence_layer)},
          {"dropout", c.dropout}};
}

nlohmann::json to_json(const ContinuousModelConfig& c) {
  return {{"kind", "dgt_c"},
          {"d_mem", c.d_mem},
          {"d_emb", c.d_emb},
          {"n_heads", c.n_heads},
          {"hops", c.hops},
          {"neighbor_cap", c.neighbor_cap},
          {"time_enc_dim", c.time_enc_dim},
          {"batch_window", c.batch_window},
          {"sequence_layer", seq_layer_name(c.sequence_layer)}};
}

DiscreteModelConfig discrete_config_from_json(const nlohmann::json& j) {
  check_keys(j, "model", {"kind", "d", "n_history", "rgcn_layers", "n_heads",
                          "n_encoder_layers", "sequence_layer", "dropout"});
  DiscreteModelConfig c;
  c.d = j.value("d", c.d);
  c.n_history = j.value("n_history", c.n_history);
  c.rgcn_layers = j.value("rgcn_layers", c.rgcn_layers);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.n_encoder_layers = j.value("n_encoder_layers", c.n_encoder_layers);
  if (j.contains("sequence_layer"))
    c.sequence_layer = seq_layer(j["sequence_layer"].get<std::string>(), "model");
  c.dropout = j.value("dropout", c.dropout);
  c.validate();
  return c;
}

ContinuousModelConfig continuous_config_from_json(const nlohmann::json& j) {
  check_keys(j, "model", {"kind", "d_mem", "d_emb", "n_heads", "hops", "neighbor_cap",
                          "time_enc_dim", "batch_window", "sequence_layer"});
  ContinuousModelConfig c;
  c.d_mem = j.value("d_mem", c.d_mem);
  c.d_emb = j.value("d_emb", c.d_emb);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.hops = j.value("hops", c.hops);
  c.neighbor_cap = j.value("neighbor_cap", c.neighbor_cap);
  c.time_enc_dim = j.value("time_enc_dim", c.time_enc_dim);
  c.batch_window = j.value("batch_window", c.batch_window);
  if (j.contains("sequence_layer"))
    c.sequence_layer = seq_layer(j["sequence_layer"].get<std::string>(), "model");
  c.validate();
  return c;
}

RunConfig RunConfig::parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config file {}", path.string()));
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return parse(j);
}

RunConfig RunConfig::parse(const nlohmann::json& j) {
  check_keys(j, "<root>",
             {"dataset", "model", "optim", "eval", "generate", "seed", "out_dir"});
  RunConfig c;
  c.seed = j.value("seed", uint64_t{0});
  c.out_dir = j.value("out_dir", std::string("."));

  if (j.contains("dataset")) {
    const auto& d = j["dataset"];
    check_keys(d, "dataset", {"edge_file", "node_file", "splits"});
    if (d.contains("edge_file")) c.edge_file = d["edge_file"].get<std::string>();
    if (d.contains("node_file")) c.node_file = d["node_file"].get<std::string>();
    if (d.contains("splits")) {
      const auto& s = d["splits"];
      check_keys(s, "dataset.splits", {"train_end", "valid_end", "test_end"});
      c.splits.train_end = s.at("train_end").get<Timestamp>();
      c.splits.valid_end = s.at("valid_end").get<Timestamp>();
      c.splits.test_end = s.at("test_end").get<Timestamp>();
      c.splits.validate();
      c.has_splits = true;
    }
  }

  if (j.contains("model")) {
    const auto& m = j["model"];
    std::string kind = m.value("kind", std::string("dgt_d"));
    if (kind == "dgt_d") {
      c.model_kind = ModelKind::DgtD;
      c.discrete = discrete_config_from_json(m);
    } else if (kind == "dgt_c") {
      c.model_kind = ModelKind::DgtC;
      c.continuous = continuous_config_from_json(m);
    } else {
      throw ConfigError(fmt::format("config: model.kind must be 'dgt_d' or 'dgt_c', "
                                    "got '{}'", kind));
    }
    c.has_model = true;
  }

  if (j.contains("optim")) {
    const auto& o = j["optim"];
    check_keys(o, "optim", {"lr", "epochs", "negatives", "batch_size",
                            "checkpoint_every", "seed"});
    c.optim.lr = o.value("lr", c.optim.lr);
    c.optim.epochs = o.value("epochs", c.optim.epochs);
    c.optim.negatives = o.value("negatives", c.optim.negatives);
    c.optim.batch_size = o.value("batch_size", c.optim.batch_size);
    c.optim.checkpoint_every = o.value("checkpoint_every", c.optim.checkpoint_every);
    c.optim.seed = o.value("seed", c.seed);
  } else {
    c.optim.seed = c.seed;
  }

  if (j.contains("eval")) {
    const auto& e = j["eval"];
    check_keys(e, "eval", {"seed", "n_negatives", "group_keys", "part"});
    c.eval.seed = e.value("seed", c.seed);
    c.eval.n_negatives = e.value("n_negatives", c.eval.n_negatives);
    if (e.contains("group_keys"))
      c.eval.group_keys = e["group_keys"].get<std::vector<std::string>>();
    c.eval.part = e.value("part", c.eval.part);
    if (c.eval.part != "valid" && c.eval.part != "test")
      throw ConfigError("config: eval.part must be 'valid' or 'test'");
  } else {
    c.eval.seed = c.seed;
  }

  if (j.contains("generate")) {
    const auto& g = j["generate"];
    check_keys(g, "generate",
               {"n_scientists", "n_institutions", "n_capabilities", "n_timesteps",
                "clique_size", "newcomer_rate", "repeat_prob", "seed"});
    c.generate.n_scientists = g.value("n_scientists", c.generate.n_scientists);
    c.generate.n_institutions = g.value("n_institutions", c.generate.n_institutions);
    c.generate.n_capabilities = g.value("n_capabilities", c.generate.n_capabilities);
    c.generate.n_timesteps = g.value("n_timesteps", c.generate.n_timesteps);
    c.generate.clique_size = g.value("clique_size", c.generate.clique_size);
    c.generate.newcomer_rate = g.value("newcomer_rate", c.generate.newcomer_rate);
    c.generate.repeat_prob = g.value("repeat_prob", c.generate.repeat_prob);
    c.generate.seed = g.value("seed", c.seed);
    c.generate.validate();
    c.has_generate = true;
  }
  return c;
}

nlohmann::json RunConfig::model_json() const {
  return model_kind == ModelKind::DgtD ? to_json(discrete) : to_json(continuous);
}

}  // namespace dygraft
