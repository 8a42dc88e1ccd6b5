#include "dygraft/checkpoint.hpp"

#include <fstream>

#include "fmt/format.h"

namespace dygraft {

using nlohmann::json;

nlohmann::json matrix_to_json(const nn::Mat& m) {
  json rows = json::array();
  for (int r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

nn::Mat matrix_from_json(const json& j) {
  if (!j.is_array() || j.empty()) return nn::Mat(0, 0);
  nn::Mat m(j.size(), j[0].size());
  for (size_t r = 0; r < j.size(); ++r)
    for (size_t c = 0; c < j[r].size(); ++c)
      m(static_cast<int>(r), static_cast<int>(c)) = j[r][c].get<double>();
  return m;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  json params = json::object();
  for (const auto& [name, m] : ckpt.parameters) params[name] = matrix_to_json(m);
  json j = {{"version", ckpt.version},
            {"model_kind", ckpt.model_kind},
            {"config", ckpt.config},
            {"parameters", std::move(params)}};
  if (ckpt.memory) {
    j["memory"] = {{"M", matrix_to_json(ckpt.memory->M)},
                   {"last_update", ckpt.memory->last_update}};
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot write checkpoint {}", path.string()));
  out << j.dump();
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open checkpoint {}", path.string()));
  json j;
  in >> j;
  Checkpoint c;
  c.version = j.at("version").get<int>();
  if (c.version != 1)
    throw std::runtime_error(fmt::format("unsupported checkpoint version {}", c.version));
  c.model_kind = j.at("model_kind").get<std::string>();
  c.config = j.at("config");
  for (auto it = j.at("parameters").begin(); it != j.at("parameters").end(); ++it)
    c.parameters[it.key()] = matrix_from_json(it.value());
  if (j.contains("memory")) {
    NodeMemory m;
    m.M = matrix_from_json(j["memory"].at("M"));
    m.last_update = j["memory"].at("last_update").get<std::vector<Timestamp>>();
    c.memory = std::move(m);
  }
  return c;
}

void require_config_match(const Checkpoint& ckpt, const nlohmann::json& expected) {
  if (ckpt.config != expected)
    throw std::runtime_error(
        fmt::format("checkpoint config mismatch:\n  stored:   {}\n  expected: {}",
                    ckpt.config.dump(), expected.dump()));
}

}  // namespace dygraft
