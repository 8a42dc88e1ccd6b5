#pragma once

#include <random>
#include <vector>

#include "dygraft/graph_store.hpp"
#include "dygraft/ingest.hpp"
#include "dygraft/layers.hpp"

namespace dygraft {

enum class SequenceLayer { Transformer, RecurrentUnit };

struct DiscreteModelConfig {
  int d = 200;               // embedding width
  int n_history = 4;         // snapshot window length
  int rgcn_layers = 2;
  int n_heads = 4;
  int n_encoder_layers = 2;
  SequenceLayer sequence_layer = SequenceLayer::Transformer;
  double dropout = 0.0;      // reserved; training at this scale runs without it

  void validate() const;
};

struct OptimConfig {
  double lr = 1e-3;
  int epochs = 10;
  int negatives = 64;
  int batch_size = 1024;     // events per optimizer step (discrete groups by timestep)
  int checkpoint_every = 0;  // epochs; 0 disables
  uint64_t seed = 0;
};

struct TrainResult {
  std::vector<double> loss_curve;  // one entry per epoch (mean loss per event)
};

struct PredictedEdge {
  Timestamp t;
  NodeId head;
  RelationId relation;
  NodeId tail;
  double score;
};

enum class RolloutMode { TeacherForced, Autoregressive };

// DGT-D: relational graph convolution within each snapshot, a Transformer
// (or recurrent, for the ablation) encoder over the last N snapshots'
// interleaved global/local representations, and per-relation scoring heads.
class DiscreteModel {
 public:
  DiscreteModel(DiscreteModelConfig cfg, const GraphStore& store, uint64_t seed);

  const DiscreteModelConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  struct SnapshotEncoding {
    Timestamp t;
    std::vector<NodeId> active;  // sorted; rows of H_N in this order
    nn::Mat H_N;                 // |active| x d
    nn::Mat H_G;                 // 1 x d; zero vector for an empty snapshot
  };

  SnapshotEncoding encode_snapshot(const GraphStore& store, Timestamp t) const;

  // History window of snapshot encodings, time-ascending, length <= n_history.
  // An empty history yields the learned default context.
  nn::Mat encode_history(const std::vector<SnapshotEncoding>& history,
                         NodeId query_node) const;

  std::vector<double> score_tails(const nn::Mat& context, RelationId relation,
                                  const std::vector<NodeId>& candidates) const;

  // Convenience: ground-truth history ending just before t, then score.
  std::vector<double> score_query(const GraphStore& store, NodeId known,
                                  RelationId relation, Timestamp t,
                                  const std::vector<NodeId>& candidates) const;

  TrainResult train(const GraphStore& store, const SplitSpec& split,
                    const OptimConfig& opt);

  // Loss over all events at target timestep t (and their mirrors) against
  // sampled negatives; accumulates parameter gradients when requested.
  // Exposed so gradient checks can drive the exact training-path loss.
  double timestep_loss(const GraphStore& store, Timestamp t, Timestamp train_end,
                       uint64_t sample_seed, int negatives, bool accumulate_grads);

  std::vector<PredictedEdge> rollout(const GraphStore& store, Timestamp from_t,
                                     int m_steps, RolloutMode mode, int top_k) const;

 private:
  struct TapeSnapshot {
    Timestamp t;
    std::vector<NodeId> active;
    nn::Tape::Var H_N;  // invalid when snapshot empty
    nn::Tape::Var H_G;
  };

  nn::Tape::Var node_input_rows(nn::Tape& t, nn::ParamBinding& p,
                                const std::vector<NodeId>& ids) const;
  TapeSnapshot encode_snapshot_on_tape(nn::Tape& t, nn::ParamBinding& p,
                                       const GraphStore& store, Timestamp ts) const;
  TapeSnapshot encode_snapshot_from_events(nn::Tape& t, nn::ParamBinding& p,
                                           const GraphStore& store, Timestamp ts,
                                           const std::vector<Quadruplet>& events) const;
  nn::Tape::Var encode_history_on_tape(nn::Tape& t, nn::ParamBinding& p,
                                       const std::vector<TapeSnapshot>& history,
                                       NodeId query_node) const;
  nn::Tape::Var score_tails_on_tape(nn::Tape& t, nn::ParamBinding& p,
                                    nn::Tape::Var context, RelationId relation,
                                    const std::vector<NodeId>& candidates) const;
  std::vector<TapeSnapshot> history_window(nn::Tape& t, nn::ParamBinding& p,
                                           const GraphStore& store,
                                           Timestamp target) const;
  double range_loss(const GraphStore& store, const std::vector<Quadruplet>& events,
                    size_t begin, size_t end, Timestamp target,
                    const std::unordered_map<uint64_t, std::set<NodeId>>* train_tails,
                    Timestamp train_end, uint64_t sample_seed, int negatives,
                    bool accumulate_grads);

  DiscreteModelConfig cfg_;
  nn::ParamStore params_;
  std::vector<NodeKind> kinds_;
  RelationTable rels_;
  int n_nodes_;
  int n_relations_;  // base + inverse
};

}  // namespace dygraft
