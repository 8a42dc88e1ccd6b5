#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dygraft {

using NodeId = int32_t;
using RelationId = int32_t;
using Timestamp = int64_t;

constexpr Timestamp kNeverSeen = INT64_MIN;  // last_update sentinel

enum class NodeKind : uint8_t { Scientist = 0, Institution = 1, Capability = 2 };

inline const char* to_string(NodeKind k) {
  switch (k) {
    case NodeKind::Scientist: return "scientist";
    case NodeKind::Institution: return "institution";
    case NodeKind::Capability: return "capability";
  }
  return "?";
}

NodeKind node_kind_from_string(const std::string& s);

struct NodeRecord {
  NodeId id = -1;
  NodeKind kind = NodeKind::Scientist;
  std::map<std::string, std::string> metadata;   // country, name, sector, ...
  std::optional<std::vector<double>> features;
};

// One timestamped directed typed edge. The event atom of the whole system.
struct Quadruplet {
  NodeId head = -1;
  RelationId relation = -1;
  NodeId tail = -1;
  Timestamp time = 0;

  friend bool operator==(const Quadruplet&, const Quadruplet&) = default;
  friend auto operator<=>(const Quadruplet& a, const Quadruplet& b) {
    if (auto c = a.time <=> b.time; c != 0) return c;
    if (auto c = a.head <=> b.head; c != 0) return c;
    if (auto c = a.relation <=> b.relation; c != 0) return c;
    return a.tail <=> b.tail;
  }
};

struct RelationSignature {
  std::string name;
  NodeKind head_kind;
  NodeKind tail_kind;
  bool is_inverse = false;
};

// Base relations plus one synthesized inverse per base relation.
// Inverse of relation r is r + n_base; inverse of an inverse is the base.
class RelationTable {
 public:
  RelationId add(const std::string& name, NodeKind head_kind, NodeKind tail_kind);
  void finalize();  // appends the mirrored inverses

  RelationId inverse(RelationId r) const;
  const RelationSignature& sig(RelationId r) const { return sigs_.at(r); }
  RelationId by_name(const std::string& name) const;
  int size() const { return static_cast<int>(sigs_.size()); }
  int n_base() const { return n_base_; }
  bool finalized() const { return finalized_; }

  // The standard table used by every dataset in this project.
  static RelationTable standard();

 private:
  std::vector<RelationSignature> sigs_;
  std::map<std::string, RelationId> by_name_;
  int n_base_ = 0;
  bool finalized_ = false;
};

struct BuildError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace dygraft
