#include "dygraft/ingest.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_set>

#include "fmt/format.h"

namespace dygraft {

void SplitSpec::validate() const {
  if (!(train_end < valid_end && valid_end < test_end))
    throw BuildError(fmt::format("invalid split: train_end={} valid_end={} test_end={}",
                                 train_end, valid_end, test_end));
}

const char* to_string(EdgeCategory c) {
  switch (c) {
    case EdgeCategory::TransductiveRepeated: return "transductive";
    case EdgeCategory::SemiTransductiveFirstTime: return "semi_transductive";
    case EdgeCategory::Inductive: return "inductive";
  }
  return "?";
}

namespace {

std::vector<std::string> split_tsv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, '\t')) out.push_back(field);
  return out;
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& edge_file,
                     const std::filesystem::path& node_file, const SplitSpec& split) {
  split.validate();

  std::ifstream nf(node_file);
  if (!nf) throw BuildError(fmt::format("cannot open node file {}", node_file.string()));
  std::string line;
  if (!std::getline(nf, line) || split_tsv_line(line) !=
      std::vector<std::string>{"id", "kind", "country", "name", "sector"})
    throw BuildError(fmt::format("{}: missing or wrong header row", node_file.string()));

  std::vector<NodeRecord> nodes;
  size_t lineno = 1;
  while (std::getline(nf, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = split_tsv_line(line);
    if (f.size() != 5)
      throw BuildError(fmt::format("{}:{}: expected 5 columns, got {}",
                                   node_file.string(), lineno, f.size()));
    NodeRecord rec;
    try {
      rec.id = std::stoi(f[0]);
    } catch (const std::exception&) {
      throw BuildError(fmt::format("{}:{}: bad node id '{}'", node_file.string(), lineno, f[0]));
    }
    rec.kind = node_kind_from_string(f[1]);
    rec.metadata["country"] = f[2];
    rec.metadata["name"] = f[3];
    rec.metadata["sector"] = f[4];
    nodes.push_back(std::move(rec));
  }

  RelationTable rels = RelationTable::standard();

  std::ifstream ef(edge_file);
  if (!ef) throw BuildError(fmt::format("cannot open edge file {}", edge_file.string()));
  if (!std::getline(ef, line) || split_tsv_line(line) !=
      std::vector<std::string>{"head_id", "relation", "tail_id", "time"})
    throw BuildError(fmt::format("{}: missing or wrong header row", edge_file.string()));

  std::vector<Quadruplet> events;
  lineno = 1;
  while (std::getline(ef, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = split_tsv_line(line);
    if (f.size() != 4)
      throw BuildError(fmt::format("{}:{}: expected 4 columns, got {}",
                                   edge_file.string(), lineno, f.size()));
    Quadruplet q;
    try {
      q.head = std::stoi(f[0]);
      q.relation = rels.by_name(f[1]);
      q.tail = std::stoi(f[2]);
      q.time = std::stoll(f[3]);
    } catch (const std::exception& e) {
      throw BuildError(fmt::format("{}:{}: {}", edge_file.string(), lineno, e.what()));
    }
    events.push_back(q);
  }

  auto store = GraphStore::build(std::move(nodes), std::move(rels), std::move(events));
  if (!store.events().empty() && store.max_time() > split.test_end)
    throw BuildError(fmt::format("split boundary test_end={} excludes events up to t={}",
                                 split.test_end, store.max_time()));
  return Dataset{std::move(store), split};
}

nlohmann::json split_report(const GraphStore& store, const SplitSpec& split) {
  struct Acc {
    std::set<NodeId> nodes;
    size_t edges = 0;
  } train, valid, test;
  for (const auto& e : store.events()) {
    Acc* a = split.in_train(e.time) ? &train : split.in_valid(e.time) ? &valid : &test;
    a->nodes.insert(e.head);
    a->nodes.insert(e.tail);
    a->edges++;
  }
  auto block = [](const Acc& a, Timestamp lo, Timestamp hi) {
    return nlohmann::json{{"time", {lo, hi}},
                          {"unique_active_nodes", a.nodes.size()},
                          {"edges", a.edges}};
  };
  return {{"train", block(train, store.min_time(), split.train_end)},
          {"valid", block(valid, split.train_end + 1, split.valid_end)},
          {"test", block(test, split.valid_end + 1, split.test_end)},
          {"duplicates_dropped", store.duplicates_dropped()}};
}

std::map<Quadruplet, EdgeCategory> categorize_edges(const GraphStore& store,
                                                    const SplitSpec& split,
                                                    EvalPart part) {
  split.validate();
  std::set<NodeId> seen;
  std::set<std::tuple<NodeId, RelationId, NodeId>> train_triples;
  for (const auto& e : store.events()) {
    if (e.time > split.train_end) break;
    seen.insert(e.head);
    seen.insert(e.tail);
    train_triples.insert({e.head, e.relation, e.tail});
  }

  std::map<Quadruplet, EdgeCategory> out;
  for (const auto& e : store.events()) {
    bool keep = part == EvalPart::Valid ? split.in_valid(e.time) : split.in_test(e.time);
    if (!keep) continue;
    EdgeCategory cat;
    if (!seen.count(e.head) || !seen.count(e.tail)) {
      cat = EdgeCategory::Inductive;
    } else if (train_triples.count({e.head, e.relation, e.tail})) {
      cat = EdgeCategory::TransductiveRepeated;
    } else {
      cat = EdgeCategory::SemiTransductiveFirstTime;
    }
    out[e] = cat;
  }
  return out;
}

AugmentationLabels augment(const GraphStore& store) {
  const auto& events = store.events();
  AugmentationLabels labels;
  labels.head_incumbent.assign(events.size(), false);
  labels.tail_is_new_partner.assign(events.size(), false);
  labels.tail_is_new_capability.assign(events.size(), false);

  RelationId partner = store.relations().by_name("partner");
  RelationId expertise = store.relations().by_name("expertise");

  std::set<NodeId> seen;                                // any prior event
  std::set<std::pair<NodeId, NodeId>> partner_pairs;    // prior (head, tail)
  std::set<std::pair<NodeId, NodeId>> expertise_pairs;

  // Flags are computed against strictly earlier timesteps, so state is merged
  // per time bucket, not per event.
  for (size_t i = 0; i < events.size();) {
    size_t j = i;
    while (j < events.size() && events[j].time == events[i].time) ++j;
    for (size_t k = i; k < j; ++k) {
      const auto& e = events[k];
      labels.head_incumbent[k] = seen.count(e.head) > 0;
      if (e.relation == partner)
        labels.tail_is_new_partner[k] = !partner_pairs.count({e.head, e.tail});
      if (e.relation == expertise)
        labels.tail_is_new_capability[k] = !expertise_pairs.count({e.head, e.tail});
    }
    for (size_t k = i; k < j; ++k) {
      const auto& e = events[k];
      seen.insert(e.head);
      seen.insert(e.tail);
      if (e.relation == partner) partner_pairs.insert({e.head, e.tail});
      if (e.relation == expertise) expertise_pairs.insert({e.head, e.tail});
    }
    i = j;
  }
  return labels;
}

void SyntheticConfig::validate() const {
  if (n_scientists < 1 || n_institutions < 1 || n_capabilities < 1 || n_timesteps < 1 ||
      clique_size < 1)
    throw BuildError("synthetic config: all counts must be >= 1");
  if (newcomer_rate < 0 || newcomer_rate > 1 || repeat_prob < 0 || repeat_prob > 1)
    throw BuildError("synthetic config: probabilities must be in [0,1]");
  if (clique_size > n_scientists)
    throw BuildError("synthetic config: clique_size exceeds n_scientists");
}

void generate_synthetic(const SyntheticConfig& cfg,
                        const std::filesystem::path& node_file,
                        const std::filesystem::path& edge_file) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  const int S = cfg.n_scientists;
  // Half the scientists are held back as a newcomer reserve when arrivals are
  // enabled; otherwise everyone is an incumbent from the warmup step.
  const int n_reserve = cfg.newcomer_rate > 0 ? S / 2 : 0;
  const int n_incumbent = S - n_reserve;
  const int n_cliques = std::max(1, n_incumbent / cfg.clique_size);

  const NodeId inst0 = S;
  const NodeId cap0 = S + cfg.n_institutions;
  const int n_nodes = S + cfg.n_institutions + cfg.n_capabilities;

  static const char* kCountries[] = {"US", "CN", "DE", "JP", "IN"};

  std::ofstream nf(node_file);
  nf << "id\tkind\tcountry\tname\tsector\n";
  for (int i = 0; i < n_nodes; ++i) {
    const char* kind = i < inst0 ? "scientist" : i < cap0 ? "institution" : "capability";
    const char* sector = (i >= inst0 && i < cap0 && i % 3 == 0) ? "non-academic" : "academic";
    nf << i << '\t' << kind << '\t' << kCountries[i % 5] << "\ts" << i << '\t' << sector
       << '\n';
  }

  std::set<Quadruplet> edges;
  auto emit = [&](NodeId h, RelationId r, NodeId t, Timestamp time) {
    edges.insert({h, r, t, time});
  };
  constexpr RelationId kCollab = 0, kPartner = 1, kExpertise = 2;

  auto clique_of = [&](int s) { return s / cfg.clique_size; };
  auto in_clique = [&](int s) { return s < n_cliques * cfg.clique_size; };

  std::vector<int> degree(S, 0);
  auto collab = [&](NodeId a, NodeId b, Timestamp t) {
    if (a == b) return;
    emit(std::min(a, b), kCollab, std::max(a, b), t);
    degree[a]++;
    degree[b]++;
  };

  // Preferential attachment over incumbents: weight 1 + degree.
  auto pick_incumbent = [&](NodeId exclude) {
    long total = 0;
    for (int s = 0; s < n_incumbent; ++s)
      if (s != exclude) total += 1 + degree[s];
    double u = unif(rng) * static_cast<double>(total);
    long acc = 0;
    for (int s = 0; s < n_incumbent; ++s) {
      if (s == exclude) continue;
      acc += 1 + degree[s];
      if (static_cast<double>(acc) >= u) return static_cast<NodeId>(s);
    }
    return static_cast<NodeId>(exclude == n_incumbent - 1 ? 0 : n_incumbent - 1);
  };

  // Reserve scientists: arrival step, or -1 when they never show up.
  struct Newcomer {
    NodeId id;
    Timestamp arrival;
    std::vector<NodeId> targets;
  };
  std::vector<Newcomer> newcomers;
  for (int k = 0; k < n_reserve; ++k) {
    NodeId id = n_incumbent + k;
    if (unif(rng) < cfg.newcomer_rate && cfg.n_timesteps > 1) {
      Timestamp arrival = 1 + static_cast<Timestamp>(unif(rng) * (cfg.n_timesteps - 1));
      if (arrival >= cfg.n_timesteps) arrival = cfg.n_timesteps - 1;
      newcomers.push_back({id, arrival, {}});
    }
  }

  // Warmup: all clique pairs fire; every incumbent gets a home institution and
  // a persistent capability.
  std::vector<NodeId> home_inst(S), home_cap(S);
  for (int s = 0; s < S; ++s) {
    home_inst[s] = inst0 + static_cast<NodeId>(unif(rng) * cfg.n_institutions) % cfg.n_institutions;
    home_cap[s] = cap0 + static_cast<NodeId>(unif(rng) * cfg.n_capabilities) % cfg.n_capabilities;
  }
  for (int s = 0; s < n_incumbent; ++s) {
    if (in_clique(s)) {
      int c = clique_of(s);
      for (int u = c * cfg.clique_size; u < s; ++u) collab(u, s, 0);
    }
    emit(s, kPartner, home_inst[s], 0);
    emit(s, kExpertise, home_cap[s], 0);
  }

  for (Timestamp t = 1; t < cfg.n_timesteps; ++t) {
    // Clique pairs re-fire independently.
    for (int c = 0; c < n_cliques; ++c) {
      int lo = c * cfg.clique_size, hi = lo + cfg.clique_size;
      for (int a = lo; a < hi; ++a)
        for (int b = a + 1; b < hi; ++b)
          if (unif(rng) < cfg.repeat_prob) collab(a, b, t);
    }
    // Partnership / capability persistence plus occasional switches.
    for (int s = 0; s < n_incumbent; ++s) {
      if (unif(rng) < 0.3) emit(s, kPartner, home_inst[s], t);
      if (unif(rng) < 0.3) emit(s, kExpertise, home_cap[s], t);
      if (unif(rng) < 0.05)
        emit(s, kPartner, inst0 + static_cast<NodeId>(unif(rng) * cfg.n_institutions) % cfg.n_institutions, t);
      if (unif(rng) < 0.05)
        emit(s, kExpertise, cap0 + static_cast<NodeId>(unif(rng) * cfg.n_capabilities) % cfg.n_capabilities, t);
    }
    // Newcomer arrivals and their early repeat collaborations.
    for (auto& nc : newcomers) {
      if (t == nc.arrival) {
        NodeId a = pick_incumbent(-1);
        NodeId b = pick_incumbent(a);
        nc.targets = {a, b};
        collab(nc.id, a, t);
        collab(nc.id, b, t);
        emit(nc.id, kPartner, home_inst[nc.id], t);
        emit(nc.id, kExpertise, home_cap[nc.id], t);
      } else if (t > nc.arrival && t <= nc.arrival + 3) {
        for (NodeId tgt : nc.targets)
          if (unif(rng) < 0.7) collab(nc.id, tgt, t);
        if (unif(rng) < 0.3) emit(nc.id, kPartner, home_inst[nc.id], t);
      }
    }
  }

  std::ofstream ef(edge_file);
  ef << "head_id\trelation\ttail_id\ttime\n";
  static const char* kRelNames[] = {"collab", "partner", "expertise"};
  for (const auto& e : edges)
    ef << e.head << '\t' << kRelNames[e.relation] << '\t' << e.tail << '\t' << e.time
       << '\n';
}

}  // namespace dygraft
