#pragma once

#include <map>
#include <string>
#include <vector>

#include "nlohmann/json.hpp"

#include "dygraft/graph_store.hpp"
#include "dygraft/ingest.hpp"

namespace dygraft {

enum class Direction { PredictTail, PredictHead };

const char* to_string(Direction d);

// One ranking query: 1 positive vs up to 200 filtered negatives. Head
// prediction is expressed through the mirrored relation, so `relation` is
// already the inverse id when direction == PredictHead.
struct RankingQuery {
  NodeId known;
  RelationId relation;
  Direction direction;
  Timestamp t;
  NodeId positive;
  std::vector<NodeId> negatives;
  Quadruplet source;  // the evaluation quadruplet this query came from

  std::vector<NodeId> candidates() const;  // positive first, then negatives
};

struct RankingResult {
  size_t query_index = 0;
  double rank = 0;
  double reciprocal_rank = 0;
  std::map<int, bool> hits;  // keys 1, 3, 10
  EdgeCategory category = EdgeCategory::Inductive;
  std::map<std::string, std::string> metadata;
};

struct MetricStats {
  double mrr = 0;
  std::map<int, double> hits;  // hits@k rates
  size_t count = 0;
};

struct MetricReport {
  MetricStats overall;
  // group key -> group value -> stats
  std::map<std::string, std::map<std::string, MetricStats>> groups;

  nlohmann::json to_json() const;
};

// Frozen-model scoring surface used by evaluate().
class TailScorer {
 public:
  virtual ~TailScorer() = default;
  virtual std::vector<double> score(const RankingQuery& q) const = 0;
};

// Two queries per evaluation quadruplet (tail prediction, and head prediction
// via the mirrored relation). Negatives are drawn uniformly from
// kind-compatible entities and filtered against true triples across all
// splits; when fewer than 200 survive the filter, all of them are used.
std::vector<RankingQuery> build_queries(const GraphStore& store, const SplitSpec& split,
                                        EvalPart part, uint64_t seed,
                                        int n_negatives = 200);

// Tie-average rank of the candidate at positive_index:
// 1 + #strictly-greater + #equal-others / 2. Throws on non-finite scores.
double tie_average_rank(const std::vector<double>& scores, size_t positive_index);

struct EvalOptions {
  std::vector<std::string> group_keys = {"relation", "direction", "category"};
  int threads = 0;  // 0 = library default
};

std::pair<MetricReport, std::vector<RankingResult>> evaluate(
    const TailScorer& scorer, const std::vector<RankingQuery>& queries,
    const GraphStore& store, const std::map<Quadruplet, EdgeCategory>& categories,
    const AugmentationLabels& augmentation, const EvalOptions& opts = {});

// Single-thread reference path; evaluate() must agree with it exactly.
std::pair<MetricReport, std::vector<RankingResult>> evaluate_serial(
    const TailScorer& scorer, const std::vector<RankingQuery>& queries,
    const GraphStore& store, const std::map<Quadruplet, EdgeCategory>& categories,
    const AugmentationLabels& augmentation, const EvalOptions& opts = {});

// Sanity-floor baselines: most-recent / most-frequent prior interaction of the
// known node under the query relation; candidates never seen with it score 0.
class RecencyScorer : public TailScorer {
 public:
  explicit RecencyScorer(const GraphStore& store) : store_(store) {}
  std::vector<double> score(const RankingQuery& q) const override;

 private:
  const GraphStore& store_;
};

class FrequencyScorer : public TailScorer {
 public:
  explicit FrequencyScorer(const GraphStore& store) : store_(store) {}
  std::vector<double> score(const RankingQuery& q) const override;

 private:
  const GraphStore& store_;
};

// Per-query results as TSV for external plotting.
void write_results_tsv(const std::vector<RankingResult>& results,
                       const std::vector<RankingQuery>& queries, std::ostream& out);

}  // namespace dygraft
