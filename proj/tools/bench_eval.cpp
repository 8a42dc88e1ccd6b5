// Compares the OpenMP evaluation fan-out against the serial reference on a
// synthetic workload and verifies both produce identical reports.

#include <chrono>
#include <cstdio>
#include <filesystem>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "dygraft/eval.hpp"
#include "dygraft/ingest.hpp"

using namespace dygraft;
namespace fs = std::filesystem;

namespace {

// A deliberately non-trivial scorer so the benchmark measures fan-out, not
// just memory traffic.
class HistoryScorer : public TailScorer {
 public:
  explicit HistoryScorer(const GraphStore& store) : store_(store) {}
  std::vector<double> score(const RankingQuery& q) const override {
    auto cands = q.candidates();
    std::vector<double> out;
    out.reserve(cands.size());
    for (NodeId c : cands) {
      auto nb = store_.neighborhood(c, q.t, 1, 8);
      double s = 0;
      for (const auto& e : nb.neighbors) s += 1.0 / (1.0 + (q.t - e.time));
      out.push_back(s);
    }
    return out;
  }

 private:
  const GraphStore& store_;
};

}  // namespace

int main() {
  fs::path dir = fs::temp_directory_path() / "dygraft_bench";
  fs::create_directories(dir);
  SyntheticConfig cfg;
  cfg.n_scientists = 200;
  cfg.n_timesteps = 40;
  cfg.newcomer_rate = 0.3;
  cfg.seed = 7;
  generate_synthetic(cfg, dir / "nodes.tsv", dir / "edges.tsv");
  SplitSpec split{27, 33, 39};
  Dataset ds = load_dataset(dir / "edges.tsv", dir / "nodes.tsv", split);

  auto queries = build_queries(ds.store, split, EvalPart::Test, 1);
  if (queries.size() > 1500) queries.resize(1500);
  auto categories = categorize_edges(ds.store, split, EvalPart::Test);
  auto labels = augment(ds.store);
  HistoryScorer scorer(ds.store);

  auto time_it = [&](auto&& fn) {
    auto t0 = std::chrono::steady_clock::now();
    auto r = fn();
    auto t1 = std::chrono::steady_clock::now();
    return std::make_pair(std::chrono::duration<double>(t1 - t0).count(), std::move(r));
  };

  auto [t_serial, serial] = time_it(
      [&] { return evaluate_serial(scorer, queries, ds.store, categories, labels); });
  auto [t_parallel, parallel] =
      time_it([&] { return evaluate(scorer, queries, ds.store, categories, labels); });

  bool same = serial.first.to_json() == parallel.first.to_json();
  int threads = 1;
#ifdef _OPENMP
  threads = omp_get_max_threads();
#endif
  std::printf("queries:        %zu\n", queries.size());
  std::printf("serial:         %.3f s\n", t_serial);
  std::printf("parallel (%2d):  %.3f s  (%.2fx)\n", threads, t_parallel,
              t_serial / t_parallel);
  std::printf("reports match:  %s\n", same ? "yes" : "NO");
  return same ? 0 : 1;
}
