#pragma once

#include <cstdint>
#include <set>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "dygraft/types.hpp"

namespace dygraft {

// One entry of a node's temporal adjacency, base and mirrored directions alike.
struct AdjEntry {
  NodeId other;
  RelationId relation;  // as seen from the owning node (inverse id for mirrored)
  Timestamp time;
};

struct NeighborEvent {
  NodeId node;
  RelationId relation;
  Timestamp time;
  int hop;
};

struct TemporalNeighborhood {
  NodeId center;
  Timestamp as_of;
  std::vector<NeighborEvent> neighbors;  // hop-major, most-recent-first per hop
};

// Immutable indexed event log of a dynamic heterogeneous graph.
// Mirrored (inverse) edges are derived at query time, never stored.
// Safe for unlimited concurrent readers once built.
class GraphStore {
 public:
  static GraphStore build(std::vector<NodeRecord> nodes, RelationTable relations,
                          std::vector<Quadruplet> events);

  const std::vector<NodeRecord>& nodes() const { return nodes_; }
  const RelationTable& relations() const { return relations_; }
  const std::vector<Quadruplet>& events() const { return events_; }
  size_t duplicates_dropped() const { return duplicates_dropped_; }

  const NodeRecord& node(NodeId id) const;
  int n_nodes() const { return static_cast<int>(nodes_.size()); }
  Timestamp min_time() const { return min_time_; }
  Timestamp max_time() const { return max_time_; }

  std::vector<NodeId> nodes_of_kind(NodeKind k) const;

  // All events with time == t (empty multigraph if none).
  std::vector<Quadruplet> snapshot(Timestamp t) const;

  // Nodes touched by events at time t, base and mirrored endpoints alike.
  std::vector<NodeId> active_nodes(Timestamp t) const;

  // Temporal k-hop BFS over events strictly before as_of, following both base
  // and mirrored relations. Per hop, keeps the cap_per_hop most recent events,
  // tie-broken by (node, relation). Deterministic; seed reserved for future
  // sampling strategies and currently unused.
  TemporalNeighborhood neighborhood(NodeId center, Timestamp as_of, int hops,
                                    int cap_per_hop, uint64_t seed = 0) const;

  // Adjacency entries of `node` with time strictly before as_of, chronological.
  std::vector<AdjEntry> history_before(NodeId node, Timestamp as_of) const;

  // Node ids of the given kind with at least one event strictly before t.
  std::set<NodeId> known_entities(NodeKind kind, Timestamp before) const;

  // All tails ever observed for (head, relation), mirrored relations included.
  const std::set<NodeId>& true_tails(NodeId head, RelationId relation) const;

  Timestamp first_event_time(NodeId node) const;  // kNeverSeen if none

 private:
  GraphStore() = default;

  std::vector<NodeRecord> nodes_;
  RelationTable relations_;
  std::vector<Quadruplet> events_;  // sorted by (time, head, relation, tail)
  size_t duplicates_dropped_ = 0;
  Timestamp min_time_ = 0, max_time_ = 0;

  std::unordered_map<Timestamp, std::pair<size_t, size_t>> by_time_;  // [begin,end)
  std::vector<std::vector<AdjEntry>> adjacency_;  // per node, time-ascending
  std::unordered_map<uint64_t, std::set<NodeId>> tails_;  // (head,rel) -> tails
  std::set<NodeId> empty_set_;

  static uint64_t hr_key(NodeId h, RelationId r) {
    return (static_cast<uint64_t>(static_cast<uint32_t>(h)) << 16) ^
           static_cast<uint64_t>(static_cast<uint32_t>(r));
  }
};

}  // namespace dygraft
