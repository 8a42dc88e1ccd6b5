#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "nlohmann/json.hpp"

#include "dygraft/dgt_continuous.hpp"
#include "dygraft/tape.hpp"

namespace dygraft {

// Single-file versioned checkpoint: model kind, config block, parameters,
// and (for DGT-C) an optional memory snapshot so forecasting can resume
// without replaying the stream.
struct Checkpoint {
  int version = 1;
  std::string model_kind;  // "dgt_d" | "dgt_c"
  nlohmann::json config;
  std::map<std::string, nn::Mat> parameters;
  std::optional<NodeMemory> memory;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Throws when the stored config block differs from `expected`.
void require_config_match(const Checkpoint& ckpt, const nlohmann::json& expected);

nlohmann::json matrix_to_json(const nn::Mat& m);
nn::Mat matrix_from_json(const nlohmann::json& j);

}  // namespace dygraft
