#include "dygraft/eval.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "fmt/format.h"

namespace dygraft {

const char* to_string(Direction d) {
  return d == Direction::PredictTail ? "predict_tail" : "predict_head";
}

std::vector<NodeId> RankingQuery::candidates() const {
  std::vector<NodeId> out;
  out.reserve(1 + negatives.size());
  out.push_back(positive);
  out.insert(out.end(), negatives.begin(), negatives.end());
  return out;
}

namespace {

uint64_t mix_seed(uint64_t a, uint64_t b) {
  uint64_t x = a * 0x9e3779b97f4a7c15ULL + b + 1;
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

std::vector<NodeId> draw_negatives(const GraphStore& store, NodeId known,
                                   RelationId relation, NodeId positive,
                                   int n_negatives, uint64_t seed) {
  NodeKind want = store.relations().sig(relation).tail_kind;
  const auto& truth = store.true_tails(known, relation);

  std::vector<NodeId> pool;
  for (const auto& rec : store.nodes()) {
    if (rec.kind != want) continue;
    if (rec.id == positive || rec.id == known) continue;
    if (truth.count(rec.id)) continue;
    pool.push_back(rec.id);
  }
  if (static_cast<int>(pool.size()) <= n_negatives) return pool;  // all available

  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates over the pool prefix.
  for (int i = 0; i < n_negatives; ++i) {
    std::uniform_int_distribution<size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(n_negatives);
  return pool;
}

}  // namespace

std::vector<RankingQuery> build_queries(const GraphStore& store, const SplitSpec& split,
                                        EvalPart part, uint64_t seed, int n_negatives) {
  split.validate();
  std::vector<RankingQuery> out;
  size_t qidx = 0;
  for (const auto& e : store.events()) {
    bool keep = part == EvalPart::Valid ? split.in_valid(e.time) : split.in_test(e.time);
    if (!keep) continue;

    RankingQuery tail_q;
    tail_q.known = e.head;
    tail_q.relation = e.relation;
    tail_q.direction = Direction::PredictTail;
    tail_q.t = e.time;
    tail_q.positive = e.tail;
    tail_q.source = e;
    tail_q.negatives = draw_negatives(store, e.head, e.relation, e.tail, n_negatives,
                                      mix_seed(seed, qidx++));
    out.push_back(std::move(tail_q));

    RankingQuery head_q;
    head_q.known = e.tail;
    head_q.relation = store.relations().inverse(e.relation);
    head_q.direction = Direction::PredictHead;
    head_q.t = e.time;
    head_q.positive = e.head;
    head_q.source = e;
    head_q.negatives = draw_negatives(store, e.tail, head_q.relation, e.head,
                                      n_negatives, mix_seed(seed, qidx++));
    out.push_back(std::move(head_q));
  }
  return out;
}

double tie_average_rank(const std::vector<double>& scores, size_t positive_index) {
  double s = scores.at(positive_index);
  if (!std::isfinite(s) && !std::isinf(s))
    throw std::invalid_argument("rank: NaN score");
  int greater = 0, equal = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i]) && !std::isinf(scores[i]))
      throw std::invalid_argument("rank: NaN score");
    if (i == positive_index) continue;
    if (scores[i] > s) ++greater;
    else if (scores[i] == s) ++equal;
  }
  return 1.0 + greater + equal / 2.0;
}

namespace {

RankingResult score_one(const TailScorer& scorer, const RankingQuery& q, size_t idx,
                        const GraphStore& store,
                        const std::map<Quadruplet, EdgeCategory>& categories,
                        const AugmentationLabels& augmentation) {
  auto scores = scorer.score(q);
  if (scores.size() != q.negatives.size() + 1)
    throw std::runtime_error("scorer returned wrong candidate count");

  RankingResult r;
  r.query_index = idx;
  r.rank = tie_average_rank(scores, 0);
  r.reciprocal_rank = 1.0 / r.rank;
  for (int k : {1, 3, 10}) r.hits[k] = r.rank <= k;

  auto cit = categories.find(q.source);
  r.category = cit != categories.end() ? cit->second : EdgeCategory::Inductive;

  RelationId base_rel = q.relation;
  if (store.relations().sig(base_rel).is_inverse)
    base_rel = store.relations().inverse(base_rel);
  r.metadata["relation"] = store.relations().sig(base_rel).name;
  r.metadata["direction"] = to_string(q.direction);
  r.metadata["category"] = to_string(r.category);
  auto country = [&](NodeId id) {
    auto it = store.node(id).metadata.find("country");
    return it == store.node(id).metadata.end() ? std::string("?") : it->second;
  };
  r.metadata["head_country"] = country(q.source.head);
  r.metadata["tail_country"] = country(q.source.tail);
  r.metadata["country_pair"] = country(q.source.head) + "-" + country(q.source.tail);

  // Incumbency label of the source event, when available.
  if (!augmentation.head_incumbent.empty()) {
    const auto& events = store.events();
    auto eit = std::lower_bound(events.begin(), events.end(), q.source);
    if (eit != events.end() && *eit == q.source) {
      size_t ei = static_cast<size_t>(eit - events.begin());
      r.metadata["head_incumbent"] =
          augmentation.head_incumbent[ei] ? "incumbent" : "newcomer";
    }
  }
  return r;
}

MetricReport aggregate(const std::vector<RankingResult>& results,
                       const std::vector<std::string>& group_keys) {
  MetricReport rep;
  auto fold = [](MetricStats& s, const RankingResult& r) {
    s.mrr += r.reciprocal_rank;
    for (const auto& [k, hit] : r.hits) s.hits[k] += hit ? 1.0 : 0.0;
    s.count++;
  };
  auto norm = [](MetricStats& s) {
    if (s.count == 0) return;
    s.mrr /= static_cast<double>(s.count);
    for (auto& [k, v] : s.hits) v /= static_cast<double>(s.count);
  };
  for (const auto& r : results) {
    fold(rep.overall, r);
    for (const auto& key : group_keys) {
      auto it = r.metadata.find(key);
      if (it != r.metadata.end()) fold(rep.groups[key][it->second], r);
    }
  }
  norm(rep.overall);
  for (auto& [key, vals] : rep.groups)
    for (auto& [v, s] : vals) norm(s);
  return rep;
}

}  // namespace

std::pair<MetricReport, std::vector<RankingResult>> evaluate_serial(
    const TailScorer& scorer, const std::vector<RankingQuery>& queries,
    const GraphStore& store, const std::map<Quadruplet, EdgeCategory>& categories,
    const AugmentationLabels& augmentation, const EvalOptions& opts) {
  std::vector<RankingResult> results(queries.size());
  for (size_t i = 0; i < queries.size(); ++i)
    results[i] = score_one(scorer, queries[i], i, store, categories, augmentation);
  return {aggregate(results, opts.group_keys), std::move(results)};
}

std::pair<MetricReport, std::vector<RankingResult>> evaluate(
    const TailScorer& scorer, const std::vector<RankingQuery>& queries,
    const GraphStore& store, const std::map<Quadruplet, EdgeCategory>& categories,
    const AugmentationLabels& augmentation, const EvalOptions& opts) {
  std::vector<RankingResult> results(queries.size());
  std::exception_ptr failure = nullptr;
#ifdef _OPENMP
  int threads = opts.threads > 0 ? opts.threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (long i = 0; i < static_cast<long>(queries.size()); ++i) {
    try {
      results[i] = score_one(scorer, queries[i], static_cast<size_t>(i), store,
                             categories, augmentation);
    } catch (...) {
#pragma omp critical
      failure = std::current_exception();
    }
  }
#else
  (void)failure;
  for (size_t i = 0; i < queries.size(); ++i)
    results[i] = score_one(scorer, queries[i], i, store, categories, augmentation);
#endif
  if (failure) std::rethrow_exception(failure);
  // Per-query results are merged by index, so aggregation order is fixed.
  return {aggregate(results, opts.group_keys), std::move(results)};
}

nlohmann::json MetricReport::to_json() const {
  auto stats_json = [](const MetricStats& s) {
    nlohmann::json h;
    for (const auto& [k, v] : s.hits) h[fmt::format("hits@{}", k)] = v;
    return nlohmann::json{{"mrr", s.mrr}, {"hits", h}, {"count", s.count}};
  };
  nlohmann::json groups = nlohmann::json::object();
  for (const auto& [key, vals] : this->groups) {
    nlohmann::json g = nlohmann::json::object();
    for (const auto& [v, s] : vals) g[v] = stats_json(s);
    groups[key] = g;
  }
  return {{"overall", stats_json(overall)}, {"groups", groups}};
}

std::vector<double> RecencyScorer::score(const RankingQuery& q) const {
  auto hist = store_.history_before(q.known, q.t);
  std::map<NodeId, double> best;
  for (const auto& h : hist)
    if (h.relation == q.relation)
      best[h.other] = std::max(best[h.other], static_cast<double>(h.time + 1));
  auto cands = q.candidates();
  std::vector<double> out;
  out.reserve(cands.size());
  for (NodeId c : cands) {
    auto it = best.find(c);
    out.push_back(it == best.end() ? 0.0 : it->second);
  }
  return out;
}

std::vector<double> FrequencyScorer::score(const RankingQuery& q) const {
  auto hist = store_.history_before(q.known, q.t);
  std::map<NodeId, double> count;
  for (const auto& h : hist)
    if (h.relation == q.relation) count[h.other] += 1.0;
  auto cands = q.candidates();
  std::vector<double> out;
  out.reserve(cands.size());
  for (NodeId c : cands) {
    auto it = count.find(c);
    out.push_back(it == count.end() ? 0.0 : it->second);
  }
  return out;
}

void write_results_tsv(const std::vector<RankingResult>& results,
                       const std::vector<RankingQuery>& queries, std::ostream& out) {
  out << "query\tknown\trelation\tdirection\tt\tpositive\tn_candidates\trank\t"
         "reciprocal_rank\thits1\thits3\thits10\tcategory\thead_country\ttail_country\n";
  for (const auto& r : results) {
    const auto& q = queries[r.query_index];
    out << r.query_index << '\t' << q.known << '\t' << q.relation << '\t'
        << to_string(q.direction) << '\t' << q.t << '\t' << q.positive << '\t'
        << (1 + q.negatives.size()) << '\t' << r.rank << '\t' << r.reciprocal_rank
        << '\t' << r.hits.at(1) << '\t' << r.hits.at(3) << '\t' << r.hits.at(10) << '\t'
        << to_string(r.category) << '\t' << r.metadata.at("head_country") << '\t'
        << r.metadata.at("tail_country") << '\n';
  }
}

}  // namespace dygraft
