#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "nlohmann/json.hpp"

#include "dygraft/dgt_continuous.hpp"
#include "dygraft/dgt_discrete.hpp"
#include "dygraft/ingest.hpp"

namespace dygraft {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ModelKind { DgtD, DgtC };

struct EvalConfig {
  uint64_t seed = 0;
  int n_negatives = 200;
  std::vector<std::string> group_keys = {"relation", "direction", "category"};
  std::string part = "test";  // "valid" or "test"
};

// Whole-run configuration parsed from a JSON document. Unknown keys anywhere
// are rejected.
struct RunConfig {
  std::optional<std::string> edge_file;
  std::optional<std::string> node_file;
  SplitSpec splits;
  bool has_splits = false;

  ModelKind model_kind = ModelKind::DgtD;
  DiscreteModelConfig discrete;
  ContinuousModelConfig continuous;
  bool has_model = false;

  OptimConfig optim;
  EvalConfig eval;
  SyntheticConfig generate;
  bool has_generate = false;

  uint64_t seed = 0;
  std::string out_dir = ".";

  static RunConfig parse_file(const std::filesystem::path& path);
  static RunConfig parse(const nlohmann::json& j);

  nlohmann::json model_json() const;  // the model block, canonicalized
};

nlohmann::json to_json(const DiscreteModelConfig& c);
nlohmann::json to_json(const ContinuousModelConfig& c);
DiscreteModelConfig discrete_config_from_json(const nlohmann::json& j);
ContinuousModelConfig continuous_config_from_json(const nlohmann::json& j);

}  // namespace dygraft
