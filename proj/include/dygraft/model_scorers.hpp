#pragma once

#include <map>
#include <vector>

#include "dygraft/dgt_continuous.hpp"
#include "dygraft/dgt_discrete.hpp"
#include "dygraft/eval.hpp"

namespace dygraft {

// Frozen-model adapters for the evaluation harness. Both precompute the
// shared per-timestep state for the given query set up front, so score() is
// read-only and safe under concurrent callers.

class DiscreteScorer : public TailScorer {
 public:
  DiscreteScorer(const DiscreteModel& model, const GraphStore& store,
                 const std::vector<RankingQuery>& queries);
  std::vector<double> score(const RankingQuery& q) const override;

 private:
  const DiscreteModel& model_;
  const GraphStore& store_;
  std::map<Timestamp, DiscreteModel::SnapshotEncoding> encodings_;
};

class ContinuousScorer : public TailScorer {
 public:
  ContinuousScorer(const ContinuousModel& model, const GraphStore& store,
                   const std::vector<RankingQuery>& queries);
  std::vector<double> score(const RankingQuery& q) const override;

 private:
  const ContinuousModel& model_;
  const GraphStore& store_;
  std::map<Timestamp, NodeMemory> memory_at_;  // frozen strictly before each t
};

// Test/diagnostic scorer: the positive candidate always wins.
class OracleScorer : public TailScorer {
 public:
  std::vector<double> score(const RankingQuery& q) const override {
    std::vector<double> s(q.negatives.size() + 1, 0.0);
    s[0] = 1.0;
    return s;
  }
};

}  // namespace dygraft
