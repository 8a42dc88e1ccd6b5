#include "dygraft/graph_store.hpp"

#include <algorithm>

#include "fmt/format.h"

namespace dygraft {

NodeKind node_kind_from_string(const std::string& s) {
  if (s == "scientist") return NodeKind::Scientist;
  if (s == "institution") return NodeKind::Institution;
  if (s == "capability") return NodeKind::Capability;
  throw BuildError(fmt::format("unknown node kind '{}'", s));
}

RelationId RelationTable::add(const std::string& name, NodeKind head_kind,
                              NodeKind tail_kind) {
  if (finalized_) throw BuildError("RelationTable already finalized");
  RelationId id = static_cast<RelationId>(sigs_.size());
  sigs_.push_back({name, head_kind, tail_kind, false});
  by_name_[name] = id;
  return id;
}

void RelationTable::finalize() {
  if (finalized_) return;
  n_base_ = static_cast<int>(sigs_.size());
  for (int r = 0; r < n_base_; ++r) {
    const auto& base = sigs_[r];
    std::string name = "inv_" + base.name;
    sigs_.push_back({name, base.tail_kind, base.head_kind, true});
    by_name_[name] = static_cast<RelationId>(n_base_ + r);
  }
  finalized_ = true;
}

RelationId RelationTable::inverse(RelationId r) const {
  if (!finalized_) throw BuildError("RelationTable not finalized");
  return r < n_base_ ? r + n_base_ : r - n_base_;
}

RelationId RelationTable::by_name(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw BuildError(fmt::format("unknown relation '{}'", name));
  return it->second;
}

RelationTable RelationTable::standard() {
  RelationTable t;
  t.add("collab", NodeKind::Scientist, NodeKind::Scientist);
  t.add("partner", NodeKind::Scientist, NodeKind::Institution);
  t.add("expertise", NodeKind::Scientist, NodeKind::Capability);
  t.finalize();
  return t;
}

GraphStore GraphStore::build(std::vector<NodeRecord> nodes, RelationTable relations,
                             std::vector<Quadruplet> events) {
  if (!relations.finalized()) relations.finalize();
  GraphStore s;

  // Contiguous ids from 0, exactly one record per id.
  std::sort(nodes.begin(), nodes.end(),
            [](const NodeRecord& a, const NodeRecord& b) { return a.id < b.id; });
  for (size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].id != static_cast<NodeId>(i))
      throw BuildError(fmt::format("node ids not contiguous from 0: got {} at index {}",
                                   nodes[i].id, i));
  }

  const int n = static_cast<int>(nodes.size());
  for (const auto& e : events) {
    if (e.head < 0 || e.head >= n)
      throw BuildError(fmt::format("event ({},{},{},{}): unknown head id", e.head,
                                   e.relation, e.tail, e.time));
    if (e.tail < 0 || e.tail >= n)
      throw BuildError(fmt::format("event ({},{},{},{}): unknown tail id", e.head,
                                   e.relation, e.tail, e.time));
    if (e.relation < 0 || e.relation >= relations.n_base())
      throw BuildError(fmt::format("event ({},{},{},{}): unknown base relation", e.head,
                                   e.relation, e.tail, e.time));
    if (e.time < 0)
      throw BuildError(fmt::format("event ({},{},{},{}): negative timestamp", e.head,
                                   e.relation, e.tail, e.time));
    const auto& sig = relations.sig(e.relation);
    if (nodes[e.head].kind != sig.head_kind || nodes[e.tail].kind != sig.tail_kind)
      throw BuildError(fmt::format(
          "event ({},{},{},{}): kind signature violation for relation '{}'", e.head,
          e.relation, e.tail, e.time, sig.name));
    if (sig.head_kind == sig.tail_kind && e.head == e.tail)
      throw BuildError(fmt::format("event ({},{},{},{}): self loop on same-kind relation",
                                   e.head, e.relation, e.tail, e.time));
  }

  std::sort(events.begin(), events.end());
  size_t before = events.size();
  events.erase(std::unique(events.begin(), events.end()), events.end());
  s.duplicates_dropped_ = before - events.size();

  s.nodes_ = std::move(nodes);
  s.relations_ = std::move(relations);
  s.events_ = std::move(events);
  s.min_time_ = s.events_.empty() ? 0 : s.events_.front().time;
  s.max_time_ = s.events_.empty() ? 0 : s.events_.back().time;

  // Time bucket index over the sorted log.
  for (size_t i = 0; i < s.events_.size();) {
    size_t j = i;
    while (j < s.events_.size() && s.events_[j].time == s.events_[i].time) ++j;
    s.by_time_[s.events_[i].time] = {i, j};
    i = j;
  }

  // Per-node adjacency, both directions; log is time-sorted so these are too.
  s.adjacency_.resize(s.nodes_.size());
  for (const auto& e : s.events_) {
    s.adjacency_[e.head].push_back({e.tail, e.relation, e.time});
    s.adjacency_[e.tail].push_back({e.head, s.relations_.inverse(e.relation), e.time});
    s.tails_[hr_key(e.head, e.relation)].insert(e.tail);
    s.tails_[hr_key(e.tail, s.relations_.inverse(e.relation))].insert(e.head);
  }
  return s;
}

const NodeRecord& GraphStore::node(NodeId id) const {
  if (id < 0 || id >= n_nodes())
    throw BuildError(fmt::format("unknown node id {}", id));
  return nodes_[id];
}

std::vector<NodeId> GraphStore::nodes_of_kind(NodeKind k) const {
  std::vector<NodeId> out;
  for (const auto& r : nodes_)
    if (r.kind == k) out.push_back(r.id);
  return out;
}

std::vector<Quadruplet> GraphStore::snapshot(Timestamp t) const {
  auto it = by_time_.find(t);
  if (it == by_time_.end()) return {};
  return {events_.begin() + it->second.first, events_.begin() + it->second.second};
}

std::vector<NodeId> GraphStore::active_nodes(Timestamp t) const {
  auto it = by_time_.find(t);
  if (it == by_time_.end()) return {};
  std::set<NodeId> seen;
  for (size_t i = it->second.first; i < it->second.second; ++i) {
    seen.insert(events_[i].head);
    seen.insert(events_[i].tail);
  }
  return {seen.begin(), seen.end()};
}

std::vector<AdjEntry> GraphStore::history_before(NodeId node, Timestamp as_of) const {
  if (node < 0 || node >= n_nodes())
    throw BuildError(fmt::format("unknown node id {}", node));
  const auto& adj = adjacency_[node];
  auto end = std::lower_bound(adj.begin(), adj.end(), as_of,
                              [](const AdjEntry& a, Timestamp t) { return a.time < t; });
  return {adj.begin(), end};
}

TemporalNeighborhood GraphStore::neighborhood(NodeId center, Timestamp as_of, int hops,
                                              int cap_per_hop, uint64_t /*seed*/) const {
  if (center < 0 || center >= n_nodes())
    throw BuildError(fmt::format("unknown node id {}", center));
  if (hops < 1 || cap_per_hop < 1)
    throw BuildError("neighborhood: hops and cap_per_hop must be >= 1");

  TemporalNeighborhood out{center, as_of, {}};
  std::vector<NodeId> frontier = {center};
  for (int hop = 1; hop <= hops; ++hop) {
    std::vector<AdjEntry> pool;
    for (NodeId v : frontier) {
      auto h = history_before(v, as_of);
      pool.insert(pool.end(), h.begin(), h.end());
    }
    // Most recent first; (node, relation) tie-break for determinism.
    std::sort(pool.begin(), pool.end(), [](const AdjEntry& a, const AdjEntry& b) {
      if (a.time != b.time) return a.time > b.time;
      if (a.other != b.other) return a.other < b.other;
      return a.relation < b.relation;
    });
    pool.erase(std::unique(pool.begin(), pool.end(),
                           [](const AdjEntry& a, const AdjEntry& b) {
                             return a.time == b.time && a.other == b.other &&
                                    a.relation == b.relation;
                           }),
               pool.end());
    if (static_cast<int>(pool.size()) > cap_per_hop) pool.resize(cap_per_hop);

    frontier.clear();
    std::set<NodeId> next;
    for (const auto& e : pool) {
      out.neighbors.push_back({e.other, e.relation, e.time, hop});
      next.insert(e.other);
    }
    frontier.assign(next.begin(), next.end());
    if (frontier.empty()) break;
  }
  return out;
}

std::set<NodeId> GraphStore::known_entities(NodeKind kind, Timestamp before) const {
  std::set<NodeId> out;
  for (const auto& e : events_) {
    if (e.time >= before) break;
    if (nodes_[e.head].kind == kind) out.insert(e.head);
    if (nodes_[e.tail].kind == kind) out.insert(e.tail);
  }
  return out;
}

const std::set<NodeId>& GraphStore::true_tails(NodeId head, RelationId relation) const {
  auto it = tails_.find(hr_key(head, relation));
  return it == tails_.end() ? empty_set_ : it->second;
}

Timestamp GraphStore::first_event_time(NodeId node) const {
  if (node < 0 || node >= n_nodes())
    throw BuildError(fmt::format("unknown node id {}", node));
  return adjacency_[node].empty() ? kNeverSeen : adjacency_[node].front().time;
}

}  // namespace dygraft
