#include "dygraft/dgt_discrete.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "fmt/format.h"

namespace dygraft {

using nn::Mat;
using nn::ParamBinding;
using nn::Tape;

namespace {

// Deterministic per-(seed, epoch, timestep) stream split.
uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c) {
  uint64_t x = a * 0x9e3779b97f4a7c15ULL + b * 0xbf58476d1ce4e5b9ULL + c + 1;
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

uint64_t triple_key(NodeId h, RelationId r) {
  return (static_cast<uint64_t>(static_cast<uint32_t>(h)) << 16) ^
         static_cast<uint64_t>(static_cast<uint32_t>(r));
}

}  // namespace

void DiscreteModelConfig::validate() const {
  if (d < 1 || n_history < 1 || rgcn_layers < 1 || n_heads < 1 || n_encoder_layers < 1)
    throw BuildError("discrete config: all sizes must be >= 1");
  if (d % n_heads != 0) throw BuildError("discrete config: d must be divisible by n_heads");
  if (dropout < 0 || dropout >= 1) throw BuildError("discrete config: dropout in [0,1)");
}

DiscreteModel::DiscreteModel(DiscreteModelConfig cfg, const GraphStore& store,
                             uint64_t seed)
    : cfg_(cfg), rels_(store.relations()), n_nodes_(store.n_nodes()),
      n_relations_(store.relations().size()) {
  cfg_.validate();
  kinds_.reserve(n_nodes_);
  for (const auto& n : store.nodes()) kinds_.push_back(n.kind);

  std::mt19937_64 rng(seed);
  const int d = cfg_.d;
  const double es = 1.0 / std::sqrt(static_cast<double>(d));
  params_.create("node.E", n_nodes_, d, es, rng);
  params_.create("kind.E", 3, d, es, rng);
  params_.create("absent.E", 1, d, es, rng);
  params_.create("default_ctx.E", 1, d, es, rng);
  params_.create("pos.E", 2 * cfg_.n_history, d, es, rng);

  for (int l = 0; l < cfg_.rgcn_layers; ++l) {
    std::string pre = fmt::format("rgcn{}", l);
    params_.create(pre + ".self.W", d, d, es, rng);
    for (int r = 0; r < n_relations_; ++r)
      params_.create(fmt::format("{}.rel{}.W", pre, r), d, d, es, rng);
    params_.create_zeros(pre + ".b", 1, d);
  }

  if (cfg_.sequence_layer == SequenceLayer::Transformer) {
    for (int i = 0; i < cfg_.n_encoder_layers; ++i)
      nn::ensure_transformer_block(params_, rng, fmt::format("enc{}", i), d);
  } else {
    nn::ensure_gru(params_, rng, "enc_gru", d, d);
  }

  for (int r = 0; r < n_relations_; ++r)
    nn::ensure_linear(params_, rng, fmt::format("out_rel{}", r), d, d);
}

Tape::Var DiscreteModel::node_input_rows(Tape& t, ParamBinding& p,
                                         const std::vector<NodeId>& ids) const {
  std::vector<int> rows(ids.begin(), ids.end());
  std::vector<int> kind_rows;
  kind_rows.reserve(ids.size());
  for (NodeId id : ids) kind_rows.push_back(static_cast<int>(kinds_[id]));
  return t.add(t.gather_rows(p["node.E"], rows), t.gather_rows(p["kind.E"], kind_rows));
}

DiscreteModel::TapeSnapshot DiscreteModel::encode_snapshot_from_events(
    Tape& t, ParamBinding& p, const GraphStore& store, Timestamp ts,
    const std::vector<Quadruplet>& events) const {
  TapeSnapshot out;
  out.t = ts;
  if (events.empty()) {
    out.H_G = t.input(Mat::Zero(1, cfg_.d));
    return out;
  }

  std::set<NodeId> active_set;
  for (const auto& e : events) {
    active_set.insert(e.head);
    active_set.insert(e.tail);
  }
  out.active.assign(active_set.begin(), active_set.end());
  std::unordered_map<NodeId, int> index;
  for (size_t i = 0; i < out.active.size(); ++i)
    index[out.active[i]] = static_cast<int>(i);
  const int n = static_cast<int>(out.active.size());

  // Same-relation neighbor lists per node, mirrored edges included.
  std::vector<std::vector<std::vector<int>>> nbrs(
      n, std::vector<std::vector<int>>(n_relations_));
  for (const auto& e : events) {
    int hi = index[e.head], ti = index[e.tail];
    nbrs[hi][e.relation].push_back(ti);
    nbrs[ti][rels_.inverse(e.relation)].push_back(hi);
  }

  Tape::Var h = node_input_rows(t, p, out.active);
  for (int l = 0; l < cfg_.rgcn_layers; ++l) {
    std::string pre = fmt::format("rgcn{}", l);
    // Per-relation mean aggregation, assembled row by row.
    Tape::Var acc = t.add(t.matmul(h, p[pre + ".self.W"]), p[pre + ".b"]);
    for (int r = 0; r < n_relations_; ++r) {
      bool any = false;
      for (int i = 0; i < n && !any; ++i) any = !nbrs[i][r].empty();
      if (!any) continue;
      Tape::Var zero_row = t.input(Mat::Zero(1, cfg_.d));
      std::vector<Tape::Var> rows;
      rows.reserve(n);
      for (int i = 0; i < n; ++i) {
        if (nbrs[i][r].empty()) {
          rows.push_back(zero_row);
        } else {
          rows.push_back(t.mean_rows(t.gather_rows(h, nbrs[i][r])));
        }
      }
      Tape::Var agg = t.concat_rows(rows);
      acc = t.add(acc, t.matmul(agg, p[fmt::format("{}.rel{}.W", pre, r)]));
    }
    h = t.tanh(acc);
  }

  out.H_N = h;
  out.H_G = t.colwise_max(h);
  return out;
}

DiscreteModel::TapeSnapshot DiscreteModel::encode_snapshot_on_tape(
    Tape& t, ParamBinding& p, const GraphStore& store, Timestamp ts) const {
  return encode_snapshot_from_events(t, p, store, ts, store.snapshot(ts));
}

DiscreteModel::SnapshotEncoding DiscreteModel::encode_snapshot(const GraphStore& store,
                                                               Timestamp ts) const {
  Tape tape;
  ParamBinding pb(const_cast<nn::ParamStore&>(params_), tape);
  auto snap = encode_snapshot_on_tape(tape, pb, store, ts);
  SnapshotEncoding out;
  out.t = ts;
  out.active = snap.active;
  out.H_N = snap.active.empty() ? Mat(0, cfg_.d) : tape.val(snap.H_N);
  out.H_G = tape.val(snap.H_G);
  return out;
}

Tape::Var DiscreteModel::encode_history_on_tape(Tape& t, ParamBinding& p,
                                                const std::vector<TapeSnapshot>& history,
                                                NodeId query_node) const {
  const int L = static_cast<int>(history.size());
  if (L == 0) return p["default_ctx.E"];
  if (L > cfg_.n_history) throw BuildError("history longer than n_history");

  // Sequence: [H_G(t-L)...H_G(t-1), H_N,q(t-L)...H_N,q(t-1)], positions
  // aligned so the most recent snapshot always lands on the same slot.
  const int offset = cfg_.n_history - L;
  std::vector<Tape::Var> rows;
  std::vector<int> pos_idx;
  for (int i = 0; i < L; ++i) {
    rows.push_back(history[i].H_G);
    pos_idx.push_back(offset + i);
  }
  for (int i = 0; i < L; ++i) {
    const auto& snap = history[i];
    auto it = std::lower_bound(snap.active.begin(), snap.active.end(), query_node);
    if (it != snap.active.end() && *it == query_node) {
      int row = static_cast<int>(it - snap.active.begin());
      rows.push_back(t.slice_rows(snap.H_N, row, 1));
    } else {
      rows.push_back(p["absent.E"]);
    }
    pos_idx.push_back(cfg_.n_history + offset + i);
  }
  Tape::Var seq = t.add(t.concat_rows(rows), t.gather_rows(p["pos.E"], pos_idx));

  if (cfg_.sequence_layer == SequenceLayer::Transformer) {
    for (int i = 0; i < cfg_.n_encoder_layers; ++i)
      seq = nn::transformer_block(t, p, fmt::format("enc{}", i), seq, cfg_.n_heads,
                                  /*causal=*/true);
    return t.slice_rows(seq, 2 * L - 1, 1);
  }
  Tape::Var h0 = t.input(Mat::Zero(1, cfg_.d));
  return nn::gru_sequence(t, p, "enc_gru", seq, h0);
}

std::vector<DiscreteModel::TapeSnapshot> DiscreteModel::history_window(
    Tape& t, ParamBinding& p, const GraphStore& store, Timestamp target) const {
  std::vector<TapeSnapshot> hist;
  for (Timestamp ts = std::max<Timestamp>(store.min_time(), target - cfg_.n_history);
       ts < target; ++ts) {
    if (ts < store.min_time()) continue;
    hist.push_back(encode_snapshot_on_tape(t, p, store, ts));
  }
  while (static_cast<int>(hist.size()) > cfg_.n_history)
    hist.erase(hist.begin());
  return hist;
}

Mat DiscreteModel::encode_history(const std::vector<SnapshotEncoding>& history,
                                  NodeId query_node) const {
  Tape tape;
  ParamBinding pb(const_cast<nn::ParamStore&>(params_), tape);
  std::vector<TapeSnapshot> hist;
  for (const auto& s : history) {
    TapeSnapshot ts;
    ts.t = s.t;
    ts.active = s.active;
    if (!s.active.empty()) ts.H_N = tape.input(s.H_N);
    ts.H_G = tape.input(s.H_G);
    hist.push_back(std::move(ts));
  }
  return tape.val(encode_history_on_tape(tape, pb, hist, query_node));
}

Tape::Var DiscreteModel::score_tails_on_tape(Tape& t, ParamBinding& p,
                                             Tape::Var context, RelationId relation,
                                             const std::vector<NodeId>& candidates) const {
  if (candidates.empty()) throw BuildError("score_tails: empty candidate list");
  NodeKind want = rels_.sig(relation).tail_kind;
  for (NodeId c : candidates)
    if (kinds_[c] != want)
      throw BuildError(fmt::format("score_tails: candidate {} has kind {}, relation "
                                   "'{}' wants {}",
                                   c, to_string(kinds_[c]), rels_.sig(relation).name,
                                   to_string(want)));
  Tape::Var q = nn::linear(t, p, fmt::format("out_rel{}", relation), context);
  Tape::Var cand = node_input_rows(t, p, candidates);
  return t.matmul(q, t.transpose(cand));  // 1 x |candidates|
}

std::vector<double> DiscreteModel::score_tails(const Mat& context, RelationId relation,
                                               const std::vector<NodeId>& candidates) const {
  Tape tape;
  ParamBinding pb(const_cast<nn::ParamStore&>(params_), tape);
  Tape::Var logits =
      score_tails_on_tape(tape, pb, tape.input(context), relation, candidates);
  const Mat& v = tape.val(logits);
  return {v.data(), v.data() + v.size()};
}

std::vector<double> DiscreteModel::score_query(const GraphStore& store, NodeId known,
                                               RelationId relation, Timestamp t,
                                               const std::vector<NodeId>& candidates) const {
  Tape tape;
  ParamBinding pb(const_cast<nn::ParamStore&>(params_), tape);
  auto hist = history_window(tape, pb, store, t);
  Tape::Var ctx = encode_history_on_tape(tape, pb, hist, known);
  Tape::Var logits = score_tails_on_tape(tape, pb, ctx, relation, candidates);
  const Mat& v = tape.val(logits);
  return {v.data(), v.data() + v.size()};
}

double DiscreteModel::range_loss(
    const GraphStore& store, const std::vector<Quadruplet>& events, size_t begin,
    size_t end, Timestamp target,
    const std::unordered_map<uint64_t, std::set<NodeId>>* train_tails,
    Timestamp train_end, uint64_t sample_seed, int negatives, bool accumulate_grads) {
  if (begin >= end) return 0.0;

  // Fallback map when the caller has not precomputed training tails.
  std::unordered_map<uint64_t, std::set<NodeId>> local;
  if (train_tails == nullptr) {
    for (const auto& e : store.events()) {
      if (e.time > train_end) break;
      local[triple_key(e.head, e.relation)].insert(e.tail);
      local[triple_key(e.tail, rels_.inverse(e.relation))].insert(e.head);
    }
    train_tails = &local;
  }

  std::vector<std::vector<NodeId>> by_kind(3);
  for (NodeId i = 0; i < n_nodes_; ++i)
    by_kind[static_cast<int>(kinds_[i])].push_back(i);

  Tape tape;
  ParamBinding pb(params_, tape);
  auto hist = history_window(tape, pb, store, target);

  std::mt19937_64 rng(sample_seed);
  Tape::Var total{};
  int n_examples = 0;
  auto add_example = [&](NodeId head, RelationId rel, NodeId tail) {
    Tape::Var ctx = encode_history_on_tape(tape, pb, hist, head);
    std::vector<NodeId> cands = {tail};
    const auto& pool = by_kind[static_cast<int>(rels_.sig(rel).tail_kind)];
    const std::set<NodeId>* truth = nullptr;
    auto it = train_tails->find(triple_key(head, rel));
    if (it != train_tails->end()) truth = &it->second;
    std::uniform_int_distribution<size_t> pick(0, pool.size() - 1);
    for (int k = 0; k < negatives; ++k) {
      NodeId neg = tail;
      for (int tries = 0; tries < 64; ++tries) {
        neg = pool[pick(rng)];
        if (neg != tail && neg != head && (!truth || !truth->count(neg))) break;
      }
      cands.push_back(neg);
    }
    Tape::Var logits = score_tails_on_tape(tape, pb, ctx, rel, cands);
    Tape::Var ce = tape.softmax_cross_entropy(logits, 0);
    total = total.valid() ? tape.add(total, ce) : ce;
    ++n_examples;
  };

  for (size_t i = begin; i < end; ++i) {
    const auto& e = events[i];
    add_example(e.head, e.relation, e.tail);
    add_example(e.tail, rels_.inverse(e.relation), e.head);
  }

  Tape::Var loss = tape.scale(total, 1.0 / n_examples);
  double value = tape.val(loss)(0, 0);
  if (!std::isfinite(value))
    throw std::runtime_error(
        fmt::format("dgt-d: non-finite loss at timestep {}", target));
  if (accumulate_grads) {
    tape.backward(loss);
    pb.flush_grads();
  }
  return value;
}

double DiscreteModel::timestep_loss(const GraphStore& store, Timestamp t,
                                    Timestamp train_end, uint64_t sample_seed,
                                    int negatives, bool accumulate_grads) {
  auto events = store.snapshot(t);
  return range_loss(store, events, 0, events.size(), t, nullptr, train_end,
                    sample_seed, negatives, accumulate_grads);
}

TrainResult DiscreteModel::train(const GraphStore& store, const SplitSpec& split,
                                 const OptimConfig& opt) {
  split.validate();
  std::unordered_map<uint64_t, std::set<NodeId>> train_tails;
  std::vector<Timestamp> targets;
  for (const auto& e : store.events()) {
    if (e.time > split.train_end) break;
    train_tails[triple_key(e.head, e.relation)].insert(e.tail);
    train_tails[triple_key(e.tail, rels_.inverse(e.relation))].insert(e.head);
    if (targets.empty() || targets.back() != e.time) targets.push_back(e.time);
  }
  if (static_cast<int>(targets.size()) < 2)
    throw BuildError("train_discrete: need at least 2 training timesteps");

  TrainResult result;
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    double epoch_loss = 0.0;
    long n_batches = 0;
    for (Timestamp t : targets) {
      auto events = store.snapshot(t);
      size_t bs = static_cast<size_t>(std::max(1, opt.batch_size));
      for (size_t b = 0; b < events.size(); b += bs) {
        size_t e = std::min(events.size(), b + bs);
        params_.zero_grads();
        double loss = range_loss(store, events, b, e, t, &train_tails,
                                 split.train_end,
                                 mix_seed(opt.seed, static_cast<uint64_t>(epoch),
                                          static_cast<uint64_t>(t) * 1315423911ULL + b),
                                 opt.negatives, /*accumulate_grads=*/true);
        params_.adam_step(opt.lr);
        epoch_loss += loss;
        ++n_batches;
      }
    }
    result.loss_curve.push_back(epoch_loss / std::max(1L, n_batches));
  }
  return result;
}

std::vector<PredictedEdge> DiscreteModel::rollout(const GraphStore& store,
                                                  Timestamp from_t, int m_steps,
                                                  RolloutMode mode, int top_k) const {
  if (m_steps < 0) throw BuildError("rollout: m_steps must be >= 0");
  std::vector<PredictedEdge> out;
  std::map<Timestamp, std::vector<Quadruplet>> predicted;  // autoregressive feedback

  std::vector<std::vector<NodeId>> by_kind(3);
  for (NodeId i = 0; i < n_nodes_; ++i)
    by_kind[static_cast<int>(kinds_[i])].push_back(i);

  for (int s = 0; s < m_steps; ++s) {
    Timestamp target = from_t + s;
    Tape tape;
    ParamBinding pb(const_cast<nn::ParamStore&>(params_), tape);

    std::vector<TapeSnapshot> hist;
    for (Timestamp ts = std::max<Timestamp>(store.min_time(), target - cfg_.n_history);
         ts < target; ++ts) {
      if (mode == RolloutMode::Autoregressive && ts >= from_t) {
        auto it = predicted.find(ts);
        static const std::vector<Quadruplet> kEmpty;
        hist.push_back(encode_snapshot_from_events(
            tape, pb, store, ts, it == predicted.end() ? kEmpty : it->second));
      } else {
        hist.push_back(encode_snapshot_on_tape(tape, pb, store, ts));
      }
    }

    // Queries come from the observed (head, relation) pairs at the target step.
    std::set<std::pair<NodeId, RelationId>> queries;
    for (const auto& e : store.snapshot(target)) queries.insert({e.head, e.relation});

    std::vector<Quadruplet> step_predictions;
    for (const auto& [head, rel] : queries) {
      Tape::Var ctx = encode_history_on_tape(tape, pb, hist, head);
      const auto& pool = by_kind[static_cast<int>(rels_.sig(rel).tail_kind)];
      std::vector<NodeId> cands;
      for (NodeId c : pool)
        if (c != head) cands.push_back(c);
      if (cands.empty()) continue;
      Tape::Var logits = score_tails_on_tape(tape, pb, ctx, rel, cands);
      const Mat& v = tape.val(logits);
      std::vector<int> order(cands.size());
      for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
      std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (v(0, a) != v(0, b)) return v(0, a) > v(0, b);
        return cands[a] < cands[b];
      });
      for (int k = 0; k < top_k && k < static_cast<int>(order.size()); ++k) {
        NodeId tail = cands[order[k]];
        out.push_back({target, head, rel, tail, v(0, order[k])});
        step_predictions.push_back({head, rel, tail, target});
      }
    }
    if (mode == RolloutMode::Autoregressive) predicted[target] = step_predictions;
  }

  std::sort(out.begin(), out.end(), [](const PredictedEdge& a, const PredictedEdge& b) {
    if (a.t != b.t) return a.t < b.t;
    if (a.head != b.head) return a.head < b.head;
    if (a.relation != b.relation) return a.relation < b.relation;
    if (a.score != b.score) return a.score > b.score;
    return a.tail < b.tail;
  });
  return out;
}

}  // namespace dygraft
