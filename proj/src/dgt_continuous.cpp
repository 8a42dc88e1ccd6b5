#include "dygraft/dgt_continuous.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "fmt/format.h"

namespace dygraft {

using nn::Mat;
using nn::ParamBinding;
using nn::Tape;

namespace {

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

void ContinuousModelConfig::validate() const {
  if (d_mem < 1 || d_emb < 1 || n_heads < 1 || hops < 1 || neighbor_cap < 1 ||
      batch_window < 1)
    throw BuildError("continuous config: all sizes must be >= 1");
  if (d_mem % n_heads != 0 || d_emb % n_heads != 0)
    throw BuildError("continuous config: widths must be divisible by n_heads");
  if (time_enc_dim < 2) throw BuildError("continuous config: time_enc_dim >= 2");
}

NodeMemory NodeMemory::fresh(int n_nodes, int d_mem) {
  NodeMemory m;
  m.M = Mat::Zero(n_nodes, d_mem);
  m.last_update.assign(n_nodes, kNeverSeen);
  return m;
}

ContinuousModel::ContinuousModel(ContinuousModelConfig cfg, const GraphStore& store,
                                 uint64_t seed)
    : cfg_(cfg), rels_(store.relations()), n_nodes_(store.n_nodes()),
      n_relations_(store.relations().size()) {
  cfg_.validate();
  kinds_.reserve(n_nodes_);
  for (const auto& n : store.nodes()) kinds_.push_back(n.kind);

  std::mt19937_64 rng(seed);
  const int dm = cfg_.d_mem, de = cfg_.d_emb, dt = cfg_.time_enc_dim;
  const int d_rel = dt;  // relation embedding width, matches the time encoding

  params_.create("rel.E", n_relations_, d_rel, 1.0 / std::sqrt(double(d_rel)), rng);
  nn::ensure_time2vec(params_, rng, "t2v", dt);

  // Memory update: raw message -> d_mem, then the sequence layer.
  const int msg_in = 2 * dm + dt + d_rel + 1;  // +1 fresh-node flag
  nn::ensure_linear(params_, rng, "msg_proj", msg_in, dm);
  if (cfg_.sequence_layer == SequenceLayer::Transformer)
    nn::ensure_transformer_block(params_, rng, "mem_enc", dm);
  else
    nn::ensure_gru(params_, rng, "mem_gru", dm, dm);

  // TGAT embedding stack.
  nn::ensure_linear(params_, rng, "in_proj", dm, de);
  for (int l = 0; l < cfg_.hops; ++l) {
    std::string pre = fmt::format("tgat{}", l);
    nn::ensure_linear(params_, rng, pre + ".q", de + dt, de);
    nn::ensure_linear(params_, rng, pre + ".k", de + dt + d_rel, de);
    nn::ensure_linear(params_, rng, pre + ".v", de + dt + d_rel, de);
    nn::ensure_linear(params_, rng, pre + ".o", de, de);
    nn::ensure_ffn(params_, rng, pre + ".ffn", de);
  }

  // Edge probability head on [z_head || z_tail || rel].
  nn::ensure_linear(params_, rng, "ep.f1", 2 * de + d_rel, de);
  nn::ensure_linear(params_, rng, "ep.f2", de, 1);
}

NodeMemory ContinuousModel::fresh_memory() const {
  return NodeMemory::fresh(n_nodes_, cfg_.d_mem);
}

Tape::Var ContinuousModel::mem_row(Tape& t, TapeMemory& tm, NodeId v) const {
  auto it = tm.rows.find(v);
  if (it != tm.rows.end()) return it->second;
  Tape::Var r = t.input(tm.base->M.row(v));
  tm.rows[v] = r;
  return r;
}

Timestamp ContinuousModel::mem_time(const TapeMemory& tm, NodeId v) const {
  auto it = tm.times.find(v);
  return it != tm.times.end() ? it->second : tm.base->last_update[v];
}

void ContinuousModel::update_on_tape(Tape& t, ParamBinding& p, TapeMemory& tm,
                                     const std::vector<Quadruplet>& batch) const {
  for (size_t i = 1; i < batch.size(); ++i)
    if (batch[i] < batch[i - 1])
      throw BuildError("update_memory: batch not sorted by (time, head, relation, tail)");
  for (const auto& e : batch) {
    if (e.time < mem_time(tm, e.head) || e.time < mem_time(tm, e.tail))
      throw BuildError(fmt::format(
          "update_memory: event at t={} older than a node's last update", e.time));
  }

  const int dt_dim = cfg_.time_enc_dim;
  // Fold one timestamp group at a time; messages inside a group read the
  // state left by the previous group.
  for (size_t gi = 0; gi < batch.size();) {
    size_t gj = gi;
    while (gj < batch.size() && batch[gj].time == batch[gi].time) ++gj;
    Timestamp now = batch[gi].time;

    // Per-node chronological message sequences, event order as tie-break.
    std::map<NodeId, std::vector<Tape::Var>> msgs;
    for (size_t i = gi; i < gj; ++i) {
      const auto& e = batch[i];
      auto push = [&](NodeId target, NodeId partner, RelationId rel) {
        Timestamp lu = mem_time(tm, target);
        double delta = lu == kNeverSeen ? 0.0 : static_cast<double>(now - lu);
        double fresh = lu == kNeverSeen ? 1.0 : 0.0;
        Tape::Var m_t = mem_row(t, tm, target);
        Tape::Var m_p = mem_row(t, tm, partner);
        Tape::Var payload = t.concat_cols(m_t, m_p);
        payload = t.concat_cols(payload, nn::time2vec(t, p, "t2v", delta, dt_dim));
        payload = t.concat_cols(payload, t.gather_rows(p["rel.E"], {rel}));
        Mat f(1, 1);
        f(0, 0) = fresh;
        payload = t.concat_cols(payload, t.input(std::move(f)));
        msgs[target].push_back(payload);
      };
      push(e.head, e.tail, e.relation);
      push(e.tail, e.head, rels_.inverse(e.relation));
    }

    std::map<NodeId, Tape::Var> fresh_rows;
    for (auto& [v, seq_msgs] : msgs) {
      Tape::Var seq = nn::linear(t, p, "msg_proj", t.concat_rows(seq_msgs));
      Tape::Var out;
      if (cfg_.sequence_layer == SequenceLayer::Transformer) {
        Tape::Var enc = nn::transformer_block(t, p, "mem_enc", seq, cfg_.n_heads,
                                              /*causal=*/true);
        out = t.slice_rows(enc, static_cast<int>(seq_msgs.size()) - 1, 1);
      } else {
        out = nn::gru_sequence(t, p, "mem_gru", seq, mem_row(t, tm, v));
      }
      fresh_rows[v] = out;
    }
    for (auto& [v, row] : fresh_rows) {
      tm.rows[v] = row;
      tm.times[v] = now;
    }
    gi = gj;
  }
}

void ContinuousModel::update_memory(NodeMemory& memory,
                                    const std::vector<Quadruplet>& batch) const {
  if (batch.empty()) return;
  Tape tape;
  ParamBinding pb(const_cast<nn::ParamStore&>(params_), tape);
  TapeMemory tm{&memory, {}, {}};
  update_on_tape(tape, pb, tm, batch);
  for (const auto& [v, var] : tm.rows) {
    if (!tm.times.count(v)) continue;  // read-only row, never rewritten
    memory.M.row(v) = tape.val(var);
    memory.last_update[v] = tm.times[v];
  }
}

NodeMemory ContinuousModel::replay(const GraphStore& store, Timestamp until) const {
  NodeMemory mem = fresh_memory();
  std::vector<Quadruplet> batch;
  for (const auto& e : store.events()) {
    if (e.time >= until) break;
    batch.push_back(e);
  }
  // Single pass; update_memory folds per timestamp group internally.
  update_memory(mem, batch);
  return mem;
}

Tape::Var ContinuousModel::embed_on_tape(Tape& t, ParamBinding& p, TapeMemory& tm,
                                         const GraphStore& store, NodeId node,
                                         Timestamp at) const {
  const int dt_dim = cfg_.time_enc_dim;
  // h0 = projected memory; each TGAT layer attends over the node's most
  // recent events strictly before `at`.
  std::function<Tape::Var(NodeId, Timestamp, int)> level =
      [&](NodeId v, Timestamp as_of, int l) -> Tape::Var {
    Tape::Var h = nn::linear(t, p, "in_proj", mem_row(t, tm, v));
    for (int layer = 0; layer < l; ++layer) {
      auto nb = store.neighborhood(v, as_of, 1, cfg_.neighbor_cap);
      std::string pre = fmt::format("tgat{}", layer);
      Tape::Var q_in = t.concat_cols(h, nn::time2vec(t, p, "t2v", 0.0, dt_dim));
      Tape::Var q = nn::linear(t, p, pre + ".q", q_in);
      if (nb.neighbors.empty()) {
        h = q;  // projected query alone
        continue;
      }
      std::vector<Tape::Var> key_rows;
      for (const auto& ev : nb.neighbors) {
        Tape::Var hn = layer == 0 ? nn::linear(t, p, "in_proj", mem_row(t, tm, ev.node))
                                  : level(ev.node, ev.time, layer);
        Tape::Var kr = t.concat_cols(
            hn, nn::time2vec(t, p, "t2v", static_cast<double>(as_of - ev.time), dt_dim));
        kr = t.concat_cols(kr, t.gather_rows(p["rel.E"], {ev.relation}));
        key_rows.push_back(kr);
      }
      Tape::Var kv_in = t.concat_rows(key_rows);
      Tape::Var k = nn::linear(t, p, pre + ".k", kv_in);
      Tape::Var vv = nn::linear(t, p, pre + ".v", kv_in);
      const int dk = cfg_.d_emb / cfg_.n_heads;
      Tape::Var heads;
      for (int hh = 0; hh < cfg_.n_heads; ++hh) {
        Tape::Var qh = t.slice_cols(q, hh * dk, dk);
        Tape::Var kh = t.slice_cols(k, hh * dk, dk);
        Tape::Var vh = t.slice_cols(vv, hh * dk, dk);
        Tape::Var scores = t.scale(t.matmul(qh, t.transpose(kh)), 1.0 / std::sqrt(dk));
        Tape::Var attn = t.softmax_rows(scores);
        Tape::Var oh = t.matmul(attn, vh);
        heads = hh == 0 ? oh : t.concat_cols(heads, oh);
      }
      Tape::Var attended = t.add(q, nn::linear(t, p, pre + ".o", heads));
      h = t.add(attended, nn::ffn(t, p, pre + ".ffn", attended));
    }
    return h;
  };
  // Recursion uses layer index as remaining depth: the top call runs the full
  // stack, neighbor embeddings at layer l use depth l.
  return level(node, at, cfg_.hops);
}

Mat ContinuousModel::embed(const NodeMemory& memory, const GraphStore& store,
                           NodeId node, Timestamp at) const {
  Tape tape;
  ParamBinding pb(const_cast<nn::ParamStore&>(params_), tape);
  TapeMemory tm{&memory, {}, {}};
  return tape.val(embed_on_tape(tape, pb, tm, store, node, at));
}

Tape::Var ContinuousModel::edge_logit_on_tape(Tape& t, ParamBinding& p,
                                              Tape::Var z_head, Tape::Var z_tail,
                                              RelationId relation) const {
  Tape::Var x = t.concat_cols(t.concat_cols(z_head, z_tail),
                              t.gather_rows(p["rel.E"], {relation}));
  return nn::linear(t, p, "ep.f2", t.tanh(nn::linear(t, p, "ep.f1", x)));
}

double ContinuousModel::edge_probability(const Mat& z_head, const Mat& z_tail,
                                         RelationId relation) const {
  Tape tape;
  ParamBinding pb(const_cast<nn::ParamStore&>(params_), tape);
  Tape::Var logit = edge_logit_on_tape(tape, pb, tape.input(z_head),
                                       tape.input(z_tail), relation);
  return 1.0 / (1.0 + std::exp(-tape.val(logit)(0, 0)));
}

std::vector<double> ContinuousModel::score_query(const NodeMemory& memory,
                                                 const GraphStore& store, NodeId known,
                                                 RelationId relation, Timestamp at,
                                                 const std::vector<NodeId>& candidates) const {
  NodeKind want = rels_.sig(relation).tail_kind;
  for (NodeId c : candidates)
    if (kinds_[c] != want)
      throw BuildError(fmt::format("score_query: candidate {} kind mismatch", c));
  Tape tape;
  ParamBinding pb(const_cast<nn::ParamStore&>(params_), tape);
  TapeMemory tm{&memory, {}, {}};
  Tape::Var z_known = embed_on_tape(tape, pb, tm, store, known, at);
  std::vector<double> out;
  out.reserve(candidates.size());
  std::unordered_map<NodeId, Tape::Var> cache;
  for (NodeId c : candidates) {
    auto it = cache.find(c);
    Tape::Var z_c;
    if (it != cache.end()) {
      z_c = it->second;
    } else {
      z_c = embed_on_tape(tape, pb, tm, store, c, at);
      cache[c] = z_c;
    }
    Tape::Var logit = edge_logit_on_tape(tape, pb, z_known, z_c, relation);
    out.push_back(1.0 / (1.0 + std::exp(-tape.val(logit)(0, 0))));
  }
  return out;
}

double ContinuousModel::chunk_loss(const GraphStore& store,
                                   const std::vector<Quadruplet>& prev_batch,
                                   const std::vector<Quadruplet>& batch,
                                   const NodeMemory& base, Timestamp train_end,
                                   uint64_t sample_seed, int negatives,
                                   bool accumulate_grads) {
  if (batch.empty()) return 0.0;

  std::unordered_map<uint64_t, std::set<NodeId>> train_tails;
  for (const auto& e : store.events()) {
    if (e.time > train_end) break;
    train_tails[triple_key(e.head, e.relation)].insert(e.tail);
    train_tails[triple_key(e.tail, rels_.inverse(e.relation))].insert(e.head);
  }

  std::vector<std::vector<NodeId>> by_kind(3);
  for (NodeId i = 0; i < n_nodes_; ++i)
    by_kind[static_cast<int>(kinds_[i])].push_back(i);

  Tape tape;
  ParamBinding pb(params_, tape);
  TapeMemory tm{&base, {}, {}};
  // Last update replayed on the tape so the message network receives gradient.
  update_on_tape(tape, pb, tm, prev_batch);

  std::mt19937_64 rng(sample_seed);
  std::unordered_map<NodeId, std::map<Timestamp, Tape::Var>> emb_cache;
  auto embed_at = [&](NodeId v, Timestamp at) {
    auto& per_node = emb_cache[v];
    auto it = per_node.find(at);
    if (it != per_node.end()) return it->second;
    Tape::Var z = embed_on_tape(tape, pb, tm, store, v, at);
    per_node[at] = z;
    return z;
  };

  std::vector<Tape::Var> logits;
  std::vector<double> labels;
  auto add_example = [&](NodeId head, RelationId rel, NodeId tail, Timestamp at) {
    Tape::Var z_h = embed_at(head, at);
    logits.push_back(edge_logit_on_tape(tape, pb, z_h, embed_at(tail, at), rel));
    labels.push_back(1.0);
    const auto& pool = by_kind[static_cast<int>(rels_.sig(rel).tail_kind)];
    const std::set<NodeId>* truth = nullptr;
    auto t_it = train_tails.find(triple_key(head, rel));
    if (t_it != train_tails.end()) truth = &t_it->second;
    std::uniform_int_distribution<size_t> pick(0, pool.size() - 1);
    for (int k = 0; k < negatives; ++k) {
      NodeId neg = tail;
      for (int tries = 0; tries < 64; ++tries) {
        neg = pool[pick(rng)];
        if (neg != tail && neg != head && (!truth || !truth->count(neg))) break;
      }
      logits.push_back(edge_logit_on_tape(tape, pb, z_h, embed_at(neg, at), rel));
      labels.push_back(0.0);
    }
  };

  for (const auto& e : batch) {
    add_example(e.head, e.relation, e.tail, e.time);
    add_example(e.tail, rels_.inverse(e.relation), e.head, e.time);
  }

  Tape::Var scores = tape.concat_rows(logits);
  Tape::Var loss = tape.scale(tape.bce_with_logits(scores, labels),
                              1.0 / static_cast<double>(labels.size()));
  double value = tape.val(loss)(0, 0);
  if (!std::isfinite(value))
    throw std::runtime_error("dgt-c: non-finite loss");
  if (accumulate_grads) {
    tape.backward(loss);
    pb.flush_grads();
  }
  return value;
}

TrainResult ContinuousModel::train(const GraphStore& store, const SplitSpec& split,
                                   const OptimConfig& opt) {
  split.validate();
  std::vector<Quadruplet> stream;
  for (const auto& e : store.events()) {
    if (e.time > split.train_end) break;
    stream.push_back(e);
  }
  if (stream.empty()) throw BuildError("train_continuous: no training events");

  std::vector<std::pair<size_t, size_t>> chunks;
  for (size_t i = 0; i < stream.size(); i += cfg_.batch_window)
    chunks.push_back({i, std::min(stream.size(), i + cfg_.batch_window)});

  TrainResult result;
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    NodeMemory mem = fresh_memory();  // state after chunks < k-1
    double epoch_loss = 0.0;
    for (size_t k = 0; k < chunks.size(); ++k) {
      std::vector<Quadruplet> prev =
          k == 0 ? std::vector<Quadruplet>{}
                 : std::vector<Quadruplet>(stream.begin() + chunks[k - 1].first,
                                           stream.begin() + chunks[k - 1].second);
      std::vector<Quadruplet> cur(stream.begin() + chunks[k].first,
                                  stream.begin() + chunks[k].second);
      params_.zero_grads();
      double loss = chunk_loss(store, prev, cur, mem, split.train_end,
                               mix_seed(opt.seed, static_cast<uint64_t>(epoch), k),
                               opt.negatives, /*accumulate_grads=*/true);
      params_.adam_step(opt.lr);
      epoch_loss += loss;
      // Commit the previous chunk into the detached state.
      update_memory(mem, prev);
    }
    result.loss_curve.push_back(epoch_loss / static_cast<double>(chunks.size()));
  }
  return result;
}

}  // namespace dygraft
