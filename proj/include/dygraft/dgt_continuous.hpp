#pragma once

#include <map>
#include <random>
#include <vector>

#include "dygraft/dgt_discrete.hpp"  // SequenceLayer, OptimConfig, TrainResult
#include "dygraft/graph_store.hpp"
#include "dygraft/layers.hpp"

namespace dygraft {

struct ContinuousModelConfig {
  int d_mem = 172;
  int d_emb = 172;
  int n_heads = 4;
  int hops = 1;
  int neighbor_cap = 10;
  int time_enc_dim = 17;       // 1 linear + periodic components
  int batch_window = 200;      // events per processing batch
  SequenceLayer sequence_layer = SequenceLayer::Transformer;

  void validate() const;
};

// Per-node compressed history state. Absent nodes hold the zero vector with
// the kNeverSeen sentinel; the sentinel never enters arithmetic (first-contact
// events use delta-t 0 plus a fresh-node flag).
struct NodeMemory {
  nn::Mat M;                          // n_nodes x d_mem
  std::vector<Timestamp> last_update;

  static NodeMemory fresh(int n_nodes, int d_mem);
};

// DGT-C: continuous-time model. Node memories are updated by a sequence layer
// over per-node message sequences; embeddings come from temporal graph
// attention over recent neighbors with Time2Vec-encoded deltas; edges are
// scored by a feed-forward probability head.
class ContinuousModel {
 public:
  ContinuousModel(ContinuousModelConfig cfg, const GraphStore& store, uint64_t seed);

  const ContinuousModelConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  NodeMemory fresh_memory() const;

  // Applies the batch (time-sorted) to the memory, folding one timestamp
  // group at a time; within a group every message reads pre-group state.
  void update_memory(NodeMemory& memory, const std::vector<Quadruplet>& batch) const;

  // Fresh memory advanced over all events with time strictly before `until`.
  NodeMemory replay(const GraphStore& store, Timestamp until) const;

  nn::Mat embed(const NodeMemory& memory, const GraphStore& store, NodeId node,
                Timestamp t) const;

  double edge_probability(const nn::Mat& z_head, const nn::Mat& z_tail,
                          RelationId relation) const;

  // Scores candidates for (known, relation) at time t; memory must already be
  // frozen at information strictly before t.
  std::vector<double> score_query(const NodeMemory& memory, const GraphStore& store,
                                  NodeId known, RelationId relation, Timestamp t,
                                  const std::vector<NodeId>& candidates) const;

  TrainResult train(const GraphStore& store, const SplitSpec& split,
                    const OptimConfig& opt);

  // One training step's loss: re-runs the previous batch's memory update on
  // the tape (so the update network receives gradient), then scores `batch`
  // from that state. Exposed for the finite-difference gradient check.
  double chunk_loss(const GraphStore& store, const std::vector<Quadruplet>& prev_batch,
                    const std::vector<Quadruplet>& batch, const NodeMemory& base,
                    Timestamp train_end, uint64_t sample_seed, int negatives,
                    bool accumulate_grads);

 private:
  struct TapeMemory {
    const NodeMemory* base;
    std::map<NodeId, nn::Tape::Var> rows;       // on-tape overrides
    std::map<NodeId, Timestamp> times;
  };

  nn::Tape::Var mem_row(nn::Tape& t, TapeMemory& tm, NodeId v) const;
  Timestamp mem_time(const TapeMemory& tm, NodeId v) const;
  void update_on_tape(nn::Tape& t, nn::ParamBinding& p, TapeMemory& tm,
                      const std::vector<Quadruplet>& batch) const;
  nn::Tape::Var embed_on_tape(nn::Tape& t, nn::ParamBinding& p, TapeMemory& tm,
                              const GraphStore& store, NodeId node, Timestamp at) const;
  nn::Tape::Var edge_logit_on_tape(nn::Tape& t, nn::ParamBinding& p, nn::Tape::Var z_head,
                                   nn::Tape::Var z_tail, RelationId relation) const;

  ContinuousModelConfig cfg_;
  nn::ParamStore params_;
  std::vector<NodeKind> kinds_;
  RelationTable rels_;
  int n_nodes_;
  int n_relations_;
};

}  // namespace dygraft
