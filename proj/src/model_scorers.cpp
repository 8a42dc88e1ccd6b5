#include "dygraft/model_scorers.hpp"

#include <algorithm>
#include <set>

namespace dygraft {

DiscreteScorer::DiscreteScorer(const DiscreteModel& model, const GraphStore& store,
                               const std::vector<RankingQuery>& queries)
    : model_(model), store_(store) {
  std::set<Timestamp> needed;
  for (const auto& q : queries)
    for (Timestamp ts = std::max<Timestamp>(store.min_time(),
                                            q.t - model.config().n_history);
         ts < q.t; ++ts)
      needed.insert(ts);
  for (Timestamp ts : needed) encodings_[ts] = model_.encode_snapshot(store, ts);
}

std::vector<double> DiscreteScorer::score(const RankingQuery& q) const {
  std::vector<DiscreteModel::SnapshotEncoding> hist;
  for (Timestamp ts = std::max<Timestamp>(store_.min_time(),
                                          q.t - model_.config().n_history);
       ts < q.t; ++ts) {
    auto it = encodings_.find(ts);
    if (it != encodings_.end()) hist.push_back(it->second);
  }
  nn::Mat ctx = model_.encode_history(hist, q.known);
  return model_.score_tails(ctx, q.relation, q.candidates());
}

ContinuousScorer::ContinuousScorer(const ContinuousModel& model, const GraphStore& store,
                                   const std::vector<RankingQuery>& queries)
    : model_(model), store_(store) {
  std::set<Timestamp> needed;
  for (const auto& q : queries) needed.insert(q.t);
  // One chronological replay, frozen at each needed time.
  NodeMemory mem = model.fresh_memory();
  size_t next_event = 0;
  const auto& events = store.events();
  for (Timestamp t : needed) {
    std::vector<Quadruplet> batch;
    while (next_event < events.size() && events[next_event].time < t)
      batch.push_back(events[next_event++]);
    model.update_memory(mem, batch);
    memory_at_[t] = mem;
  }
}

std::vector<double> ContinuousScorer::score(const RankingQuery& q) const {
  return model_.score_query(memory_at_.at(q.t), store_, q.known, q.relation, q.t,
                            q.candidates());
}

}  // namespace dygraft
