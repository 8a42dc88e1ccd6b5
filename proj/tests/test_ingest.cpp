#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"

#include "dygraft/ingest.hpp"
#include "test_util.hpp"

using namespace dygraft;
namespace fs = std::filesystem;

namespace {

fs::path tmp_dir() {
  auto d = fs::temp_directory_path() / "dygraft_ingest_test";
  fs::create_directories(d);
  return d;
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream f(p);
  f << content;
}

std::string read_file(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

const char* kNodes3 =
    "id\tkind\tcountry\tname\tsector\n"
    "0\tscientist\tUS\talice\tacademic\n"
    "1\tscientist\tCN\tbob\tacademic\n"
    "2\tinstitution\tDE\tlab\tnon-academic\n";

}  // namespace

TEST_CASE("split spec validation") {
  CHECK_NOTHROW((SplitSpec{1, 2, 3}).validate());
  CHECK_THROWS_AS((SplitSpec{2, 2, 3}).validate(), BuildError);
  CHECK_THROWS_AS((SplitSpec{1, 3, 2}).validate(), BuildError);
}

TEST_CASE("tsv round trip") {
  auto dir = tmp_dir();
  write_file(dir / "nodes.tsv", kNodes3);
  write_file(dir / "edges.tsv",
             "head_id\trelation\ttail_id\ttime\n"
             "0\tcollab\t1\t0\n"
             "0\tpartner\t2\t1\n");
  auto ds = load_dataset(dir / "edges.tsv", dir / "nodes.tsv", {1, 2, 3});
  CHECK(ds.store.n_nodes() == 3);
  CHECK(ds.store.node(0).metadata.at("country") == "US");
  CHECK(ds.store.node(2).kind == NodeKind::Institution);
  CHECK(ds.store.node(2).metadata.at("sector") == "non-academic");
  REQUIRE(ds.store.events().size() == 2);
  CHECK(ds.store.events()[0] == Quadruplet{0, 0, 1, 0});
  CHECK(ds.store.events()[1] == Quadruplet{0, 1, 2, 1});
}

TEST_CASE("loader errors carry line numbers") {
  auto dir = tmp_dir();
  write_file(dir / "nodes.tsv", kNodes3);
  SUBCASE("wrong column count on edge line 2") {
    write_file(dir / "edges.tsv",
               "head_id\trelation\ttail_id\ttime\n"
               "0\tcollab\t1\n");
    CHECK_THROWS_WITH_AS(load_dataset(dir / "edges.tsv", dir / "nodes.tsv", {1, 2, 3}),
                         doctest::Contains(":2:"), BuildError);
  }
  SUBCASE("unknown relation name") {
    write_file(dir / "edges.tsv",
               "head_id\trelation\ttail_id\ttime\n"
               "0\tfriend\t1\t0\n");
    CHECK_THROWS_AS(load_dataset(dir / "edges.tsv", dir / "nodes.tsv", {1, 2, 3}),
                    BuildError);
  }
  SUBCASE("missing edge header") {
    write_file(dir / "edges.tsv", "0\tcollab\t1\t0\n");
    CHECK_THROWS_WITH_AS(load_dataset(dir / "edges.tsv", dir / "nodes.tsv", {1, 2, 3}),
                         doctest::Contains("header"), BuildError);
  }
  SUBCASE("missing node file") {
    write_file(dir / "edges.tsv", "head_id\trelation\ttail_id\ttime\n");
    CHECK_THROWS_AS(load_dataset(dir / "edges.tsv", dir / "nope.tsv", {1, 2, 3}),
                    BuildError);
  }
  SUBCASE("events past test_end") {
    write_file(dir / "edges.tsv",
               "head_id\trelation\ttail_id\ttime\n"
               "0\tcollab\t1\t9\n");
    CHECK_THROWS_AS(load_dataset(dir / "edges.tsv", dir / "nodes.tsv", {1, 2, 3}),
                    BuildError);
  }
}

TEST_CASE("split_report counts per part") {
  auto store = GraphStore::build(
      testutil::make_nodes(4, 0, 0), RelationTable::standard(),
      {{0, 0, 1, 0}, {0, 0, 2, 1}, {1, 0, 2, 2}, {2, 0, 3, 3}, {0, 0, 3, 3}});
  auto rep = split_report(store, {1, 2, 3});
  CHECK(rep["train"]["edges"] == 2);
  CHECK(rep["train"]["unique_active_nodes"] == 3);
  CHECK(rep["valid"]["edges"] == 1);
  CHECK(rep["valid"]["unique_active_nodes"] == 2);
  CHECK(rep["test"]["edges"] == 2);
  CHECK(rep["test"]["unique_active_nodes"] == 3);
  CHECK(rep["duplicates_dropped"] == 0);
}

TEST_CASE("categorize_edges covers all three categories") {
  // train: (0,collab,1)@0. test: repeat of that triple, a first-time triple
  // between seen nodes, and an edge touching an unseen node.
  auto store = GraphStore::build(testutil::make_nodes(4, 0, 0), RelationTable::standard(),
                                 {{0, 0, 1, 0}, {0, 0, 1, 3}, {1, 0, 0, 3}, {0, 0, 3, 3}});
  auto cats = categorize_edges(store, {1, 2, 3}, EvalPart::Test);
  REQUIRE(cats.size() == 3);
  CHECK(cats.at({0, 0, 1, 3}) == EdgeCategory::TransductiveRepeated);
  CHECK(cats.at({1, 0, 0, 3}) == EdgeCategory::SemiTransductiveFirstTime);
  CHECK(cats.at({0, 0, 3, 3}) == EdgeCategory::Inductive);
}

TEST_CASE("categorize_edges matches brute force on random store") {
  auto store = testutil::random_store(800, 25, 5, 5, 12, 41);
  SplitSpec split{7, 9, 12};
  for (EvalPart part : {EvalPart::Valid, EvalPart::Test}) {
    auto cats = categorize_edges(store, split, part);
    size_t n_part = 0;
    for (const auto& e : store.events()) {
      bool keep = part == EvalPart::Valid ? split.in_valid(e.time) : split.in_test(e.time);
      if (!keep) continue;
      ++n_part;
      // independent recomputation from scratch
      bool head_seen = false, tail_seen = false, triple_in_train = false;
      for (const auto& f : store.events()) {
        if (f.time > split.train_end) continue;
        if (f.head == e.head || f.tail == e.head) head_seen = true;
        if (f.head == e.tail || f.tail == e.tail) tail_seen = true;
        if (f.head == e.head && f.relation == e.relation && f.tail == e.tail)
          triple_in_train = true;
      }
      EdgeCategory expect = !head_seen || !tail_seen
                                ? EdgeCategory::Inductive
                                : triple_in_train ? EdgeCategory::TransductiveRepeated
                                                  : EdgeCategory::SemiTransductiveFirstTime;
      CHECK(cats.at(e) == expect);
    }
    CHECK(cats.size() == n_part);
  }
}

TEST_CASE("augment flags against strictly earlier timesteps") {
  auto store = testutil::random_store(600, 20, 5, 5, 10, 53);
  auto labels = augment(store);
  const auto& events = store.events();
  REQUIRE(labels.head_incumbent.size() == events.size());
  RelationId partner = store.relations().by_name("partner");
  RelationId expertise = store.relations().by_name("expertise");
  for (size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    bool incumbent = false, partner_before = false, expertise_before = false;
    for (const auto& f : events) {
      if (f.time >= e.time) break;
      if (f.head == e.head || f.tail == e.head) incumbent = true;
      if (f.head == e.head && f.tail == e.tail) {
        if (f.relation == partner) partner_before = true;
        if (f.relation == expertise) expertise_before = true;
      }
    }
    CHECK(labels.head_incumbent[i] == incumbent);
    CHECK(labels.tail_is_new_partner[i] == (e.relation == partner && !partner_before));
    CHECK(labels.tail_is_new_capability[i] ==
          (e.relation == expertise && !expertise_before));
  }
}

TEST_CASE("synthetic config validation") {
  SyntheticConfig bad;
  bad.clique_size = 0;
  CHECK_THROWS_AS(bad.validate(), BuildError);
  bad = {};
  bad.newcomer_rate = 1.5;
  CHECK_THROWS_AS(bad.validate(), BuildError);
  bad = {};
  bad.n_scientists = 3;
  bad.clique_size = 5;
  CHECK_THROWS_AS(bad.validate(), BuildError);
}

TEST_CASE("synthetic generation is deterministic and well formed") {
  auto dir = tmp_dir();
  SyntheticConfig cfg;
  cfg.n_scientists = 60;
  cfg.n_timesteps = 20;
  cfg.newcomer_rate = 0.5;
  cfg.seed = 11;
  generate_synthetic(cfg, dir / "n1.tsv", dir / "e1.tsv");
  generate_synthetic(cfg, dir / "n2.tsv", dir / "e2.tsv");
  CHECK(read_file(dir / "n1.tsv") == read_file(dir / "n2.tsv"));
  CHECK(read_file(dir / "e1.tsv") == read_file(dir / "e2.tsv"));

  cfg.seed = 12;
  generate_synthetic(cfg, dir / "n3.tsv", dir / "e3.tsv");
  CHECK(read_file(dir / "e1.tsv") != read_file(dir / "e3.tsv"));

  auto ds = load_dataset(dir / "e1.tsv", dir / "n1.tsv", {13, 16, 19});
  CHECK(ds.store.n_nodes() == 60 + 20 + 10);
  CHECK(ds.store.max_time() <= 19);
  CHECK(ds.store.duplicates_dropped() == 0);

  // Clique structure makes most test-part edges repeats of training triples.
  auto cats = categorize_edges(ds.store, ds.split, EvalPart::Test);
  size_t repeats = 0, inductive = 0;
  for (const auto& [e, c] : cats) {
    if (c == EdgeCategory::TransductiveRepeated) ++repeats;
    if (c == EdgeCategory::Inductive) ++inductive;
  }
  CHECK(repeats > cats.size() / 2);

  // With newcomers enabled, some arrive after train_end -> inductive edges.
  SplitSpec early{5, 12, 19};
  auto cats_early = categorize_edges(ds.store, early, EvalPart::Test);
  size_t ind_early = 0;
  for (const auto& [e, c] : cats_early)
    if (c == EdgeCategory::Inductive) ++ind_early;
  CHECK(ind_early > 0);
}
