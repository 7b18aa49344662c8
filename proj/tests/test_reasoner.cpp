#include "doctest.h"

#include <numeric>

#include "kbqa/reasoner.hpp"
#include "test_util.hpp"

using namespace kbqa;
using kbqa::testutil::fd_check;
using kbqa::testutil::random_matrix;

namespace {

ModelConfig tiny_config(int n_r = 4, int d = 5, int num_step = 2,
                        InteractionVariant variant = InteractionVariant::transformer) {
  ModelConfig mc;
  mc.word_dim = 6;
  mc.entity_dim = d;
  mc.num_step = num_step;
  mc.heads = 1;
  mc.num_relations = n_r;
  mc.variant = variant;
  mc.dropout = 0.0;
  return mc;
}

Model tiny_model(const ModelConfig& mc, uint64_t seed = 7) {
  Rng rng(seed ^ 0x5a5a);
  EmbeddingTable table =
      EmbeddingTable::random_init({"what", "is", "the", "capital", "of", "e1"}, mc.word_dim,
                                  rng);
  Matrix prior = Matrix::Zero(mc.num_relations, mc.num_relations);
  Rng prng(seed ^ 0x77);
  for (int r = 0; r < mc.num_relations; ++r) {
    Eigen::VectorXd row(mc.num_relations);
    for (int c = 0; c < mc.num_relations; ++c) row(c) = prng.uniform() + 0.05;
    prior.row(r) = (row / row.sum()).transpose();
  }
  return Model(mc, std::move(table), prior, seed);
}

// n_c=3 candidate subgraph over a 4-relation KB, with one gold answer
PreparedExample tiny_example() {
  PreparedExample pe;
  pe.qid = 0;
  pe.ex.question = {"what", "is", "the", "capital", "of", "e1"};
  pe.ex.topics = {0};
  pe.ex.answers = {1};
  pe.ex.subgraph.candidates = {0, 1, 2};
  pe.ex.subgraph.topic_entities = {0};
  pe.ex.subgraph.triples = {{0, 0, 1}, {0, 1, 2}, {1, 2, 2}, {2, 3, 0}};
  pe.ex.subgraph.relation_ids = {0, 1, 2, 3};
  pe.ex.subgraph.rebuild_lookup();
  return pe;
}

}  // namespace

TEST_CASE("reasoner: init_candidates identity chain") {
  // P = I, one-hot W_C rows -> each candidate vector is its relation's row
  Matrix prior = Matrix::Identity(3, 3);
  Rng rng(2);
  Matrix v_r = random_matrix(3, 4, rng);
  Matrix wc = Matrix::Zero(2, 3);
  wc(0, 1) = 1.0;
  wc(1, 2) = 1.0;
  Matrix v0 = init_candidates(wc, prior, v_r);
  CHECK((v0.row(0) - v_r.row(1)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((v0.row(1) - v_r.row(2)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("reasoner: zero W_C row gives a zero candidate vector") {
  Matrix prior = Matrix::Identity(2, 2);
  Rng rng(3);
  Matrix v_r = random_matrix(2, 3, rng);
  Matrix wc = Matrix::Zero(1, 2);
  Matrix v0 = init_candidates(wc, prior, v_r);
  CHECK(v0.row(0).norm() == 0.0);
}

TEST_CASE("reasoner: init_candidates matches the naive triple loop") {
  Rng rng(4);
  Matrix wc = random_matrix(3, 4, rng);
  Matrix prior = random_matrix(4, 4, rng);
  Matrix v_r = random_matrix(4, 5, rng);
  Matrix fast = init_candidates(wc, prior, v_r);
  Matrix slow = Matrix::Zero(3, 5);
  for (int i = 0; i < 3; ++i) {
    for (int d = 0; d < 5; ++d) {
      for (int j = 0; j < 4; ++j) {
        for (int k = 0; k < 4; ++k) slow(i, d) += wc(i, j) * prior(j, k) * v_r(k, d);
      }
    }
  }
  CHECK((fast - slow).cwiseAbs().maxCoeff() < 1e-10);
  CHECK_THROWS_AS(init_candidates(Matrix::Zero(2, 3), prior, v_r), StageError);
}

TEST_CASE("reasoner: gold relation distribution") {
  PreparedExample pe = tiny_example();
  bool valid = false;
  // answer 1 touches relation 0 (edge 0-0-1) and relation 2 (edge 1-2-2)
  Eigen::VectorXd dist = gold_relation_distribution(pe.ex.subgraph, {1}, 4, &valid);
  CHECK(valid);
  CHECK(dist(0) == doctest::Approx(0.5));
  CHECK(dist(2) == doctest::Approx(0.5));
  CHECK(dist.sum() == doctest::Approx(1.0));

  // single-relation answer: one-hot
  Eigen::VectorXd one = gold_relation_distribution(pe.ex.subgraph, {}, 4, &valid);
  CHECK_FALSE(valid);  // no answer in the subgraph -> uniform fallback, flagged
  CHECK(one.sum() == doctest::Approx(1.0));
  CHECK(one(0) == doctest::Approx(0.25));
}

TEST_CASE("reasoner: KL identities") {
  Eigen::VectorXd p(3);
  p << 0.2, 0.5, 0.3;
  CHECK(std::abs(kl_divergence(p, p)) <= 1e-9);
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd a(4), b(4);
    for (int i = 0; i < 4; ++i) {
      a(i) = rng.uniform() + 1e-3;
      b(i) = rng.uniform() + 1e-3;
    }
    a /= a.sum();
    b /= b.sum();
    CHECK(kl_divergence(a, b) >= -1e-9);
  }
}

TEST_CASE("reasoner: compute_loss identities") {
  Prediction pred;
  pred.p_c = Eigen::VectorXd(3);
  pred.p_c << 0.6, 0.3, 0.1;
  pred.p_r = Eigen::VectorXd(2);
  pred.p_r << 0.5, 0.5;
  Eigen::VectorXd gold_c(3);
  gold_c << 1.0, 0.0, 0.0;
  Eigen::VectorXd gold_r(2);
  gold_r << 0.25, 0.75;

  // pred == gold -> zero loss
  LossBreakdown same = compute_loss({gold_c, gold_r}, gold_c, gold_r, true, 0.5);
  CHECK(std::abs(same.total) <= 1e-9);

  // lambda = 1 -> total equals L_c to machine precision
  LossBreakdown lc_only = compute_loss(pred, gold_c, gold_r, true, 1.0);
  CHECK(lc_only.total == lc_only.l_c);

  // all-zero gold_c drops the candidate term
  LossBreakdown no_c = compute_loss(pred, Eigen::VectorXd::Zero(3), gold_r, true, 0.7);
  CHECK_FALSE(no_c.has_c);
  CHECK(no_c.total == doctest::Approx(0.3 * no_c.l_r));

  CHECK_THROWS_AS(compute_loss(pred, gold_c, gold_r, true, 0.0), StageError);
}

TEST_CASE("reasoner: predict softmax properties") {
  ModelConfig mc = tiny_config();
  Model model = tiny_model(mc);
  Rng rng(6);

  // n_c = 1 -> p_c = [1.0]
  CandidateState one{random_matrix(1, mc.entity_dim, rng), mc.num_step};
  RelationState rel{Eigen::VectorXd::Zero(mc.num_relations)};
  Prediction p1 = model.predict(one, rel);
  CHECK(p1.p_c.size() == 1);
  CHECK(p1.p_c(0) == doctest::Approx(1.0));

  // equal candidate rows -> uniform p_c
  Matrix rows(3, mc.entity_dim);
  Matrix r = random_matrix(1, mc.entity_dim, rng);
  rows.row(0) = rows.row(1) = rows.row(2) = r.row(0);
  Prediction pu = model.predict({rows, mc.num_step}, rel);
  for (int i = 0; i < 3; ++i) CHECK(pu.p_c(i) == doctest::Approx(1.0 / 3.0));

  // empty candidate set is an error
  CHECK_THROWS_AS(model.predict({Matrix::Zero(0, mc.entity_dim), 1}, rel), StageError);

  // distributions normalize
  CandidateState many{random_matrix(5, mc.entity_dim, rng), mc.num_step};
  RelationState rel2{random_matrix(mc.num_relations, 1, rng).col(0)};
  Prediction pm = model.predict(many, rel2);
  CHECK(pm.p_c.sum() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(pm.p_r.sum() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(pm.p_c.minCoeff() >= 0.0);
}

TEST_CASE("reasoner: zero instruction and zero bias make fusion ignore the gate") {
  ModelConfig mc = tiny_config();
  Model model = tiny_model(mc);
  // zero the fusion bias so the gated term vanishes entirely
  model.params().by_name("step0.fuse.b").value.setZero();
  Rng rng(8);
  Matrix v_prev = random_matrix(3, mc.entity_dim, rng);
  Matrix v_c0_a = random_matrix(3, mc.entity_dim, rng);
  Matrix v_c0_b = random_matrix(3, mc.entity_dim, rng);
  Eigen::VectorXd s_zero = Eigen::VectorXd::Zero(mc.entity_dim);
  Matrix fused_a = model.fuse_candidates(v_prev, s_zero, v_c0_a, 0);
  Matrix fused_b = model.fuse_candidates(v_prev, s_zero, v_c0_b, 0);
  CHECK((fused_a - fused_b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("reasoner: transformer interaction is permutation-equivariant") {
  ModelConfig mc = tiny_config(4, 6, 2, InteractionVariant::transformer);
  mc.heads = 2;
  Model model = tiny_model(mc, 19);
  Rng rng(20);
  int n_c = 4;
  Matrix v_prev = random_matrix(n_c, mc.entity_dim, rng);
  Matrix v_c0 = random_matrix(n_c, mc.entity_dim, rng);
  Eigen::VectorXd s_t = random_matrix(1, mc.entity_dim, rng).row(0).transpose();
  RelationState rel{Eigen::VectorXd::Constant(mc.num_relations, 0.25)};

  auto [next, rel_next] = model.reason_step({v_prev, 0}, s_t, v_c0, rel);

  std::vector<int> perm = {2, 0, 3, 1};
  Matrix v_prev_p(n_c, mc.entity_dim), v_c0_p(n_c, mc.entity_dim);
  for (int i = 0; i < n_c; ++i) {
    v_prev_p.row(i) = v_prev.row(perm[static_cast<size_t>(i)]);
    v_c0_p.row(i) = v_c0.row(perm[static_cast<size_t>(i)]);
  }
  auto [next_p, rel_next_p] = model.reason_step({v_prev_p, 0}, s_t, v_c0_p, rel);
  for (int i = 0; i < n_c; ++i) {
    CHECK((next_p.v.row(i) - next.v.row(perm[static_cast<size_t>(i)])).cwiseAbs().maxCoeff() <
          1e-6);
  }
  // the relation state does not depend on candidate order
  CHECK((rel_next.s_r - rel_next_p.s_r).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("reasoner: linear and recurrent variants run a step") {
  for (auto variant : {InteractionVariant::linear, InteractionVariant::recurrent}) {
    ModelConfig mc = tiny_config(4, 5, 2, variant);
    Model model = tiny_model(mc, 23);
    Rng rng(24);
    Matrix v_prev = random_matrix(3, mc.entity_dim, rng);
    Matrix v_c0 = random_matrix(3, mc.entity_dim, rng);
    Eigen::VectorXd s_t = random_matrix(1, mc.entity_dim, rng).row(0).transpose();
    RelationState rel{Eigen::VectorXd::Constant(mc.num_relations, 0.25)};
    auto [next, rel_next] = model.reason_step({v_prev, 0}, s_t, v_c0, rel);
    CHECK(next.v.rows() == 3);
    CHECK(next.step == 1);
    CHECK(rel_next.s_r.size() == mc.num_relations);
    CHECK(next.v.allFinite());
  }
}

TEST_CASE("reasoner: end-to-end gradients match finite differences") {
  // frozen tiny instance: n_c = 3, n_r = 4, d = 5, T = 2
  ModelConfig mc = tiny_config(4, 5, 2, InteractionVariant::transformer);
  Model model = tiny_model(mc, 29);
  PreparedExample pe = tiny_example();
  TrainingExample te = model.make_training_example(pe);
  REQUIRE(te.gold_c.size() == 3);
  REQUIRE(te.gold_r_valid);

  double lambda = 0.6;
  model.params().zero_grads();
  auto bd = model.forward_backward(te, lambda, nullptr, 1.0);
  CHECK(bd.has_c);
  CHECK(bd.has_r);
  CHECK(std::isfinite(bd.total));

  auto loss_value = [&]() { return model.example_loss(te, lambda); };
  CHECK(std::abs(loss_value() - bd.total) < 1e-12);

  for (size_t i = 0; i < model.params().size(); ++i) {
    auto& p = model.params().at(static_cast<int>(i));
    double err = fd_check(p.value, p.grad, loss_value);
    CAPTURE(p.name);
    CHECK(err <= 1e-4);
  }
}

TEST_CASE("reasoner: per-step supervision averages the step losses") {
  ModelConfig mc = tiny_config(4, 5, 2, InteractionVariant::linear);
  mc.per_step_loss = true;
  Model model = tiny_model(mc, 41);
  PreparedExample pe = tiny_example();
  TrainingExample te = model.make_training_example(pe);
  model.params().zero_grads();
  auto bd = model.forward_backward(te, 0.5, nullptr, 1.0);
  CHECK(std::isfinite(bd.total));
  CHECK(bd.total > 0.0);
}

TEST_CASE("reasoner: training example assembles supervision tensors") {
  ModelConfig mc = tiny_config();
  Model model = tiny_model(mc);
  PreparedExample pe = tiny_example();
  TrainingExample te = model.make_training_example(pe);
  CHECK(te.token_ids.size() == 6);
  CHECK(te.wc_prior.rows() == 3);
  CHECK(te.wc_prior.cols() == 4);
  CHECK(te.s_r0.sum() == doctest::Approx(1.0));
  CHECK(te.gold_c(1) == doctest::Approx(1.0));  // answer at candidate position 1
  CHECK(te.gold_c.sum() == doctest::Approx(1.0));

  // two gold answers -> uniform indicator
  PreparedExample pe2 = tiny_example();
  pe2.ex.answers = {1, 2};
  TrainingExample te2 = model.make_training_example(pe2);
  CHECK(te2.gold_c(1) == doctest::Approx(0.5));
  CHECK(te2.gold_c(2) == doctest::Approx(0.5));

  // no answer among candidates -> empty gold_c
  PreparedExample pe3 = tiny_example();
  pe3.ex.answers = {};
  TrainingExample te3 = model.make_training_example(pe3);
  CHECK(te3.gold_c.size() == 0);
}

TEST_CASE("reasoner: run_example produces normalized confidences") {
  ModelConfig mc = tiny_config();
  Model model = tiny_model(mc);
  PreparedExample pe = tiny_example();
  auto trace = model.run_example(pe.ex);
  CHECK(trace.pred.p_c.size() == 3);
  CHECK(trace.pred.p_c.sum() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(trace.pred.p_r.sum() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(trace.v_final.rows() == 3);
}

TEST_CASE("reasoner: argmax answer is invariant under candidate permutation") {
  ModelConfig mc = tiny_config(4, 6, 2, InteractionVariant::transformer);
  mc.heads = 2;
  Model model = tiny_model(mc, 55);
  PreparedExample pe = tiny_example();
  pe.ex.subgraph.candidates = {0, 1, 2, 3};
  pe.ex.subgraph.triples.push_back({3, 1, 0});
  pe.ex.subgraph.rebuild_lookup();

  auto trace = model.run_example(pe.ex);
  Eigen::Index argmax;
  trace.pred.p_c.maxCoeff(&argmax);
  EntityId best = pe.ex.subgraph.candidates[static_cast<size_t>(argmax)];

  PreparedExample pe_perm = pe;
  pe_perm.ex.subgraph.candidates = {2, 0, 3, 1};
  pe_perm.ex.subgraph.rebuild_lookup();
  auto trace_p = model.run_example(pe_perm.ex);
  Eigen::Index argmax_p;
  trace_p.pred.p_c.maxCoeff(&argmax_p);
  CHECK(pe_perm.ex.subgraph.candidates[static_cast<size_t>(argmax_p)] == best);
}

TEST_CASE("reasoner: epoch-one loss is identical across reruns") {
  ModelConfig mc = tiny_config(4, 5, 2, InteractionVariant::transformer);
  std::vector<PreparedExample> train = {tiny_example()};
  {
    PreparedExample second = tiny_example();
    second.qid = 1;
    second.ex.answers = {2};
    train.push_back(second);
  }
  TrainSettings settings;
  settings.num_epoch = 2;
  settings.batch_size = 2;
  settings.seed = 99;

  Model m1 = tiny_model(mc, 61);
  auto r1 = train_reasoner(m1, train, {}, settings);
  Model m2 = tiny_model(mc, 61);
  auto r2 = train_reasoner(m2, train, {}, settings);
  REQUIRE(r1.history.size() == r2.history.size());
  CHECK(r1.history[0].train_loss == r2.history[0].train_loss);
  CHECK(r1.history[1].train_loss == r2.history[1].train_loss);
  // learning rate decays linearly
  CHECK(r1.history[1].lr < r1.history[0].lr);
}
