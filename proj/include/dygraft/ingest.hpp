#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "nlohmann/json.hpp"

#include "dygraft/graph_store.hpp"

namespace dygraft {

struct SplitSpec {
  Timestamp train_end = 0;  // inclusive
  Timestamp valid_end = 0;  // inclusive
  Timestamp test_end = 0;   // inclusive

  void validate() const;
  bool in_train(Timestamp t) const { return t <= train_end; }
  bool in_valid(Timestamp t) const { return t > train_end && t <= valid_end; }
  bool in_test(Timestamp t) const { return t > valid_end && t <= test_end; }
};

enum class EvalPart { Valid, Test };

enum class EdgeCategory {
  TransductiveRepeated,      // both endpoints seen in training, triple repeats
  SemiTransductiveFirstTime, // both endpoints seen, first-time triple
  Inductive,                 // at least one endpoint unseen in training
};

const char* to_string(EdgeCategory c);

struct AugmentationLabels {
  // Parallel to store.events(). new-partner/new-capability flags are only
  // meaningful for partnership/expertise edges and default to false elsewhere.
  std::vector<bool> head_incumbent;
  std::vector<bool> tail_is_new_partner;
  std::vector<bool> tail_is_new_capability;
};

struct Dataset {
  GraphStore store;
  SplitSpec split;
};

// TSV loader. Node file columns: id kind country name sector (header row
// required). Edge file columns: head_id relation tail_id time (header row
// required). Malformed lines are reported with their 1-based line number.
Dataset load_dataset(const std::filesystem::path& edge_file,
                     const std::filesystem::path& node_file, const SplitSpec& split);

// Per-split unique-active-node and edge counts, serialized for eyeballing.
nlohmann::json split_report(const GraphStore& store, const SplitSpec& split);

// Inductive iff an endpoint is unseen at train_end+1; TransductiveRepeated iff
// both endpoints seen and the (head, relation, tail) triple occurs in training;
// SemiTransductiveFirstTime otherwise.
std::map<Quadruplet, EdgeCategory> categorize_edges(const GraphStore& store,
                                                    const SplitSpec& split,
                                                    EvalPart part);

AugmentationLabels augment(const GraphStore& store);

struct SyntheticConfig {
  int n_scientists = 200;
  int n_institutions = 20;
  int n_capabilities = 10;
  int n_timesteps = 100;
  int clique_size = 5;
  double newcomer_rate = 0.0;   // arrival probability per reserve scientist
  double repeat_prob = 0.9;     // per clique pair per timestep
  uint64_t seed = 0;

  void validate() const;
};

// Writes node/edge TSV files. Plants (a) collaboration cliques whose pairs
// re-fire each timestep with probability repeat_prob, (b) newcomer scientists
// arriving over time and attaching to incumbents by preferential attachment,
// (c) persistent per-scientist capability and institution edges.
void generate_synthetic(const SyntheticConfig& cfg,
                        const std::filesystem::path& node_file,
                        const std::filesystem::path& edge_file);

}  // namespace dygraft
