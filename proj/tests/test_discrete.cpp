#include <cmath>

#include "doctest.h"

#include "dygraft/dgt_discrete.hpp"
#include "test_util.hpp"

using namespace dygraft;
using nn::Mat;

namespace {

DiscreteModelConfig tiny_cfg(SequenceLayer seq = SequenceLayer::Transformer) {
  DiscreteModelConfig cfg;
  cfg.d = 4;
  cfg.n_history = 2;
  cfg.rgcn_layers = 1;
  cfg.n_heads = 2;
  cfg.n_encoder_layers = 1;
  cfg.sequence_layer = seq;
  return cfg;
}

}  // namespace

TEST_CASE("config validation") {
  DiscreteModelConfig cfg = tiny_cfg();
  cfg.d = 6;
  cfg.n_heads = 4;  // 6 % 4 != 0
  CHECK_THROWS_AS(cfg.validate(), BuildError);
  cfg = tiny_cfg();
  cfg.n_history = 0;
  CHECK_THROWS_AS(cfg.validate(), BuildError);
  cfg = tiny_cfg();
  cfg.dropout = 1.0;
  CHECK_THROWS_AS(cfg.validate(), BuildError);
}

TEST_CASE("single relational layer matches hand computation") {
  auto store = GraphStore::build(testutil::make_nodes(2, 1, 0), RelationTable::standard(),
                                 {{0, 0, 1, 0}});
  DiscreteModel model(tiny_cfg(), store, 3);
  auto snap = model.encode_snapshot(store, 0);
  REQUIRE(snap.active == std::vector<NodeId>{0, 1});

  const auto& ps = model.params();
  Mat h0(2, 4);
  h0.row(0) = ps.value("node.E").row(0) + ps.value("kind.E").row(0);
  h0.row(1) = ps.value("node.E").row(1) + ps.value("kind.E").row(0);
  Mat acc = h0 * ps.value("rgcn0.self.W");
  acc.rowwise() += ps.value("rgcn0.b").row(0);
  // node 0 sees node 1 over collab; node 1 sees node 0 over its inverse
  acc.row(0) += h0.row(1) * ps.value("rgcn0.rel0.W");
  acc.row(1) += h0.row(0) * ps.value("rgcn0.rel3.W");
  Mat expect = acc.array().tanh().matrix();

  CHECK((snap.H_N - expect).cwiseAbs().maxCoeff() < 1e-12);
  Mat hg = expect.colwise().maxCoeff();
  CHECK((snap.H_G - hg).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("mean aggregation over several same-relation neighbors") {
  auto store = GraphStore::build(testutil::make_nodes(3, 1, 0), RelationTable::standard(),
                                 {{0, 0, 1, 0}, {0, 0, 2, 0}});
  DiscreteModel model(tiny_cfg(), store, 5);
  auto snap = model.encode_snapshot(store, 0);
  REQUIRE(snap.active == std::vector<NodeId>{0, 1, 2});

  const auto& ps = model.params();
  Mat h0(3, 4);
  for (int i = 0; i < 3; ++i)
    h0.row(i) = ps.value("node.E").row(i) + ps.value("kind.E").row(0);
  Mat acc = h0 * ps.value("rgcn0.self.W");
  acc.rowwise() += ps.value("rgcn0.b").row(0);
  acc.row(0) += 0.5 * (h0.row(1) + h0.row(2)) * ps.value("rgcn0.rel0.W");
  acc.row(1) += h0.row(0) * ps.value("rgcn0.rel3.W");
  acc.row(2) += h0.row(0) * ps.value("rgcn0.rel3.W");
  Mat expect = acc.array().tanh().matrix();
  CHECK((snap.H_N - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("empty snapshot encodes to the zero global vector") {
  auto store = GraphStore::build(testutil::make_nodes(2, 0, 0), RelationTable::standard(),
                                 {{0, 0, 1, 3}});
  DiscreteModel model(tiny_cfg(), store, 1);
  auto snap = model.encode_snapshot(store, 1);
  CHECK(snap.active.empty());
  CHECK(snap.H_N.rows() == 0);
  CHECK(snap.H_G.isZero(0.0));
}

TEST_CASE("empty history falls back to the learned default context") {
  auto store = testutil::random_store(40, 6, 2, 2, 4, 2);
  DiscreteModel model(tiny_cfg(), store, 7);
  Mat ctx = model.encode_history({}, 0);
  CHECK((ctx - model.params().value("default_ctx.E")).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("history order matters to the encoder") {
  auto store = testutil::random_store(60, 6, 2, 2, 4, 9);
  for (SequenceLayer seq : {SequenceLayer::Transformer, SequenceLayer::RecurrentUnit}) {
    DiscreteModel model(tiny_cfg(seq), store, 7);
    auto s0 = model.encode_snapshot(store, 0);
    auto s1 = model.encode_snapshot(store, 1);
    Mat fwd = model.encode_history({s0, s1}, 0);
    Mat rev = model.encode_history({s1, s0}, 0);
    CHECK((fwd - rev).cwiseAbs().maxCoeff() > 1e-8);
  }
}

TEST_CASE("absent query node uses the absent embedding consistently") {
  // two nodes never active in the window must get identical contexts
  auto store = GraphStore::build(testutil::make_nodes(4, 0, 0), RelationTable::standard(),
                                 {{0, 0, 1, 0}, {0, 0, 1, 1}});
  DiscreteModel model(tiny_cfg(), store, 11);
  auto s0 = model.encode_snapshot(store, 0);
  auto s1 = model.encode_snapshot(store, 1);
  Mat a = model.encode_history({s0, s1}, 2);
  Mat b = model.encode_history({s0, s1}, 3);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
  Mat present = model.encode_history({s0, s1}, 0);
  CHECK((a - present).cwiseAbs().maxCoeff() > 1e-8);
}

TEST_CASE("score_tails matches the projection formula and permutes with candidates") {
  auto store = testutil::random_store(50, 6, 3, 3, 4, 4);
  DiscreteModel model(tiny_cfg(), store, 13);
  const auto& ps = model.params();
  Mat ctx = Mat::Random(1, 4);

  std::vector<NodeId> cands = {6, 7, 8};  // institutions
  auto scores = model.score_tails(ctx, 1, cands);
  REQUIRE(scores.size() == 3);

  Mat q = ctx * ps.value("out_rel1.W");
  q += ps.value("out_rel1.b");
  for (int i = 0; i < 3; ++i) {
    Mat c = ps.value("node.E").row(cands[i]) + ps.value("kind.E").row(1);
    CHECK(scores[i] == doctest::Approx((q * c.transpose())(0, 0)).epsilon(1e-10));
  }

  auto flipped = model.score_tails(ctx, 1, {8, 6, 7});
  CHECK(flipped[0] == doctest::Approx(scores[2]));
  CHECK(flipped[1] == doctest::Approx(scores[0]));
  CHECK(flipped[2] == doctest::Approx(scores[1]));

  CHECK_THROWS_AS(model.score_tails(ctx, 1, {0}), BuildError);   // scientist, wants inst
  CHECK_THROWS_AS(model.score_tails(ctx, 1, {}), BuildError);
}

TEST_CASE("timestep_loss is deterministic in the sample seed") {
  auto store = testutil::random_store(80, 8, 2, 2, 5, 21);
  DiscreteModel m1(tiny_cfg(), store, 17);
  DiscreteModel m2(tiny_cfg(), store, 17);
  double a = m1.timestep_loss(store, 3, 2, 42, 4, false);
  double b = m2.timestep_loss(store, 3, 2, 42, 4, false);
  CHECK(a == b);
  double c = m1.timestep_loss(store, 3, 2, 43, 4, false);
  CHECK(a != c);
}

TEST_CASE("training drives the loss down on a memorizable pattern") {
  auto dir = std::filesystem::temp_directory_path() / "dygraft_disc_test";
  std::filesystem::create_directories(dir);
  SyntheticConfig gen;
  gen.n_scientists = 20;
  gen.n_institutions = 4;
  gen.n_capabilities = 3;
  gen.n_timesteps = 8;
  gen.clique_size = 4;
  gen.seed = 5;
  generate_synthetic(gen, dir / "n.tsv", dir / "e.tsv");
  auto ds = load_dataset(dir / "e.tsv", dir / "n.tsv", {5, 6, 7});

  DiscreteModelConfig cfg = tiny_cfg();
  cfg.d = 8;
  DiscreteModel model(cfg, ds.store, 1);
  OptimConfig opt;
  opt.epochs = 4;
  opt.negatives = 4;
  opt.lr = 5e-3;
  opt.seed = 1;
  auto result = model.train(ds.store, ds.split, opt);
  REQUIRE(result.loss_curve.size() == 4);
  CHECK(result.loss_curve.back() < result.loss_curve.front());
  for (double l : result.loss_curve) CHECK(std::isfinite(l));
}

TEST_CASE("train refuses a single training timestep") {
  auto store = GraphStore::build(testutil::make_nodes(3, 0, 0), RelationTable::standard(),
                                 {{0, 0, 1, 0}, {0, 0, 2, 2}, {1, 0, 2, 3}});
  DiscreteModel model(tiny_cfg(), store, 1);
  OptimConfig opt;
  CHECK_THROWS_AS(model.train(store, {0, 2, 3}, opt), BuildError);
}

TEST_CASE("rollout") {
  auto store = testutil::random_store(120, 8, 2, 2, 6, 33);
  DiscreteModel model(tiny_cfg(), store, 19);

  SUBCASE("zero steps or zero top_k yields nothing") {
    CHECK(model.rollout(store, 5, 0, RolloutMode::TeacherForced, 3).empty());
    CHECK(model.rollout(store, 5, 2, RolloutMode::TeacherForced, 0).empty());
    CHECK_THROWS_AS(model.rollout(store, 5, -1, RolloutMode::TeacherForced, 3),
                    BuildError);
  }

  SUBCASE("first step agrees between modes") {
    auto teacher = model.rollout(store, 5, 1, RolloutMode::TeacherForced, 2);
    auto autoreg = model.rollout(store, 5, 1, RolloutMode::Autoregressive, 2);
    REQUIRE(teacher.size() == autoreg.size());
    for (size_t i = 0; i < teacher.size(); ++i) {
      CHECK(teacher[i].head == autoreg[i].head);
      CHECK(teacher[i].tail == autoreg[i].tail);
      CHECK(teacher[i].score == doctest::Approx(autoreg[i].score));
    }
  }

  SUBCASE("predictions are well formed and ordered") {
    auto preds = model.rollout(store, 4, 3, RolloutMode::Autoregressive, 2);
    CHECK(!preds.empty());
    for (size_t i = 0; i < preds.size(); ++i) {
      const auto& e = preds[i];
      CHECK(e.t >= 4);
      CHECK(e.t < 7);
      CHECK(e.head != e.tail);
      CHECK(store.node(e.tail).kind == store.relations().sig(e.relation).tail_kind);
      if (i > 0) {
        const auto& prev = preds[i - 1];
        bool ordered = std::tie(prev.t, prev.head, prev.relation) <
                           std::tie(e.t, e.head, e.relation) ||
                       (prev.t == e.t && prev.head == e.head &&
                        prev.relation == e.relation && prev.score >= e.score);
        CHECK(ordered);
      }
    }
  }

  SUBCASE("modes diverge once predictions feed back") {
    auto teacher = model.rollout(store, 2, 4, RolloutMode::TeacherForced, 2);
    auto autoreg = model.rollout(store, 2, 4, RolloutMode::Autoregressive, 2);
    bool any_diff = teacher.size() != autoreg.size();
    for (size_t i = 0; !any_diff && i < teacher.size(); ++i)
      any_diff = teacher[i].tail != autoreg[i].tail ||
                 std::abs(teacher[i].score - autoreg[i].score) > 1e-9;
    CHECK(any_diff);
  }
}

TEST_CASE("score_query only depends on snapshots before t") {
  auto store = testutil::random_store(100, 8, 2, 2, 6, 47);
  // a second store with the future altered: drop all events at the last step
  std::vector<Quadruplet> pruned;
  for (const auto& e : store.events())
    if (e.time < 6) pruned.push_back(e);
  auto store2 = GraphStore::build(testutil::make_nodes(8, 2, 2),
                                  RelationTable::standard(), pruned);
  DiscreteModel model(tiny_cfg(), store, 29);
  std::vector<NodeId> cands = {1, 2, 3};
  auto a = model.score_query(store, 0, 0, 6, cands);
  auto b = model.score_query(store2, 0, 0, 6, cands);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]));
}
