#include "doctest.h"

#include <algorithm>
#include <set>

#include "kbqa/retrieval.hpp"
#include "kbqa/rng.hpp"
#include "test_util.hpp"

using namespace kbqa;
using kbqa::testutil::TempDir;

namespace {

KnowledgeBase chain_kb() {
  return KnowledgeBase::from_triples(
      {{"a", "r", "b"}, {"b", "r", "c"}, {"c", "r", "d"}, {"d", "r", "e"}});
}

// Exact personalized PageRank by dense power iteration on the undirected
// multigraph view; the independent oracle for the push algorithm.
std::vector<double> ppr_power_iteration(const KnowledgeBase& kb,
                                        const std::vector<EntityId>& seeds, double alpha,
                                        int iters = 20000) {
  size_t n = static_cast<size_t>(kb.num_entities());
  std::vector<std::vector<EntityId>> adj(n);
  for (const auto& t : kb.triples) {
    adj[static_cast<size_t>(t.head)].push_back(t.tail);
    adj[static_cast<size_t>(t.tail)].push_back(t.head);
  }
  std::vector<double> seed(n, 0.0);
  for (EntityId s : seeds) seed[static_cast<size_t>(s)] += 1.0 / seeds.size();
  std::vector<double> p = seed;
  for (int it = 0; it < iters; ++it) {
    std::vector<double> next(n, 0.0);
    for (size_t u = 0; u < n; ++u) {
      if (adj[u].empty()) {
        next[u] += (1.0 - alpha) * p[u];  // dangling mass stays put
        continue;
      }
      double share = (1.0 - alpha) * p[u] / static_cast<double>(adj[u].size());
      for (EntityId v : adj[u]) next[static_cast<size_t>(v)] += share;
    }
    for (size_t u = 0; u < n; ++u) next[u] += alpha * seed[u];
    double delta = 0.0;
    for (size_t u = 0; u < n; ++u) delta += std::abs(next[u] - p[u]);
    p = std::move(next);
    if (delta < 1e-14) break;
  }
  return p;
}

}  // namespace

TEST_CASE("retrieval: hop bound excludes far entities") {
  KnowledgeBase kb = chain_kb();
  RetrievalConfig cfg;
  cfg.max_hops = 3;
  Subgraph sub = retrieve_subgraph(kb, {0}, cfg);
  std::set<EntityId> got(sub.candidates.begin(), sub.candidates.end());
  CHECK(got == std::set<EntityId>{0, 1, 2, 3});  // e is 4 hops away
  CHECK(sub.triples.size() == 3);                // a-b, b-c, c-d
}

TEST_CASE("retrieval: star graph cap keeps the highest-PPR leaves, ties by id") {
  // hub h with leaves l1..l4; l1/l2 doubly connected so they outrank l3/l4
  KnowledgeBase kb = KnowledgeBase::from_triples({{"h", "r", "l1"},
                                                  {"h", "r", "l1"},
                                                  {"h", "r", "l2"},
                                                  {"h", "r", "l2"},
                                                  {"h", "r", "l3"},
                                                  {"h", "r", "l4"}});
  RetrievalConfig cfg;
  cfg.max_candidates = 3;
  cfg.ppr_epsilon = 1e-9;
  Subgraph sub = retrieve_subgraph(kb, {0}, cfg);

  auto exact = ppr_power_iteration(kb, {0}, cfg.ppr_alpha);
  std::vector<EntityId> order = {0, 1, 2, 3, 4};
  std::sort(order.begin(), order.end(), [&](EntityId a, EntityId b) {
    if (exact[a] != exact[b]) return exact[a] > exact[b];
    return a < b;
  });
  std::vector<EntityId> expected(order.begin(), order.begin() + 3);
  CHECK(sub.candidates == expected);
  // frozen from the oracle: hub first, then the double-edged leaves
  CHECK(sub.candidates == std::vector<EntityId>{0, 1, 2});
}

TEST_CASE("retrieval: push scores agree with power iteration on ranking") {
  Rng rng(7);
  std::vector<std::array<std::string, 3>> rows;
  for (int i = 0; i < 60; ++i) {
    rows.push_back({"e" + std::to_string(rng.uniform_int(18)), "r",
                    "e" + std::to_string(rng.uniform_int(18))});
  }
  KnowledgeBase kb = KnowledgeBase::from_triples(rows);
  auto approx = personalized_pagerank(kb, {0}, 0.15, 1e-7);
  auto exact = ppr_power_iteration(kb, {0}, 0.15);
  // compare on the exact solution's scale: push truncates small residuals
  for (size_t i = 0; i < approx.size(); ++i) {
    CHECK(std::abs(approx[i] - exact[i]) < 2e-4);
  }
}

TEST_CASE("retrieval: isolated topic yields a singleton subgraph") {
  KnowledgeBase kb = KnowledgeBase::from_triples({{"a", "r", "b"}, {"x", "r", "y"}});
  // add an isolated entity by loading it as a head of a self-loop? keep it
  // simple: topic with no edges does not exist in a triple store, so use a
  // node only reachable via its own component and cap hops at 0 distance
  RetrievalConfig cfg;
  Subgraph sub = retrieve_subgraph(kb, {0}, cfg);
  CHECK(sub.candidate_position(0) >= 0);

  // a genuinely isolated node: entity that appears only as its own self-loop
  KnowledgeBase kb2 = KnowledgeBase::from_triples({{"solo", "m", "solo"}, {"a", "r", "b"}});
  Subgraph sub2 = retrieve_subgraph(kb2, {0}, cfg);
  CHECK(sub2.candidates == std::vector<EntityId>{0});
  CHECK(sub2.triples.size() == 1);  // just the self loop
}

TEST_CASE("retrieval: unknown topic is an error naming the entity") {
  KnowledgeBase kb = chain_kb();
  RetrievalConfig cfg;
  try {
    retrieve_subgraph(kb, {42}, cfg);
    FAIL("expected StageError");
  } catch (const StageError& e) {
    CHECK(std::string(e.what()).find("42") != std::string::npos);
  }
}

TEST_CASE("retrieval: growing the cap never drops a previous candidate") {
  Rng rng(21);
  std::vector<std::array<std::string, 3>> rows;
  for (int i = 0; i < 80; ++i) {
    rows.push_back({"e" + std::to_string(rng.uniform_int(30)),
                    "r" + std::to_string(rng.uniform_int(3)),
                    "e" + std::to_string(rng.uniform_int(30))});
  }
  KnowledgeBase kb = KnowledgeBase::from_triples(rows);
  RetrievalConfig small, big;
  small.max_candidates = 5;
  big.max_candidates = 12;
  Subgraph s1 = retrieve_subgraph(kb, {0}, small);
  Subgraph s2 = retrieve_subgraph(kb, {0}, big);
  std::set<EntityId> larger(s2.candidates.begin(), s2.candidates.end());
  for (EntityId c : s1.candidates) CHECK(larger.count(c));
}

TEST_CASE("retrieval: determinism") {
  KnowledgeBase kb = chain_kb();
  RetrievalConfig cfg;
  Subgraph a = retrieve_subgraph(kb, {0}, cfg);
  Subgraph b = retrieve_subgraph(kb, {0}, cfg);
  CHECK(a.candidates == b.candidates);
  CHECK(a.triples.size() == b.triples.size());
}

TEST_CASE("retrieval: initial relation state from topic edges") {
  KnowledgeBase kb = KnowledgeBase::from_triples({{"t", "r1", "a"},
                                                  {"t", "r1", "b"},
                                                  {"c", "r1", "t"},
                                                  {"t", "r2", "d"},
                                                  {"a", "r3", "b"}});
  RetrievalConfig cfg;
  Subgraph sub = retrieve_subgraph(kb, {0}, cfg);
  Eigen::VectorXd s = init_relation_state(sub, {0}, kb.num_relations());
  CHECK(s(0) == doctest::Approx(0.75));  // r1 on 3 topic edges
  CHECK(s(1) == doctest::Approx(0.25));  // r2 on 1
  CHECK(s(2) == doctest::Approx(0.0));   // r3 not incident to the topic
  CHECK(s.sum() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(s.minCoeff() >= 0.0);
}

TEST_CASE("retrieval: one-hot initial state") {
  KnowledgeBase kb = KnowledgeBase::from_triples({{"t", "r5", "a"}, {"a", "r6", "b"}});
  RetrievalConfig cfg;
  cfg.max_hops = 1;
  Subgraph sub = retrieve_subgraph(kb, {0}, cfg);
  Eigen::VectorXd s = init_relation_state(sub, {0}, kb.num_relations());
  CHECK(s(0) == doctest::Approx(1.0));
  CHECK(s(1) == doctest::Approx(0.0));
}

TEST_CASE("retrieval: isolated topic falls back to uniform over subgraph relations") {
  // hand-built subgraph: topic is a candidate but touches nothing
  Subgraph sub;
  sub.candidates = {0, 1, 2};
  sub.topic_entities = {0};
  sub.triples = {{1, 2, 2}, {2, 3, 1}, {1, 4, 2}, {2, 5, 1}};
  sub.relation_ids = {2, 3, 4, 5};
  sub.rebuild_lookup();
  Eigen::VectorXd s = init_relation_state(sub, {0}, 8);
  for (RelationId r : sub.relation_ids) CHECK(s(r) == doctest::Approx(0.25));
  CHECK(s.sum() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("retrieval: subgraph cache round trip with KB hash guard") {
  TempDir dir("cache");
  KnowledgeBase kb = chain_kb();
  RetrievalConfig cfg;
  PreparedExample item;
  item.qid = 0;
  item.ex.question = {"what", "is", "next", "to", "a"};
  item.ex.topics = {0};
  item.ex.answers = {1};
  item.ex.subgraph = retrieve_subgraph(kb, {0}, cfg);
  write_subgraph_cache(dir.file("cache.jsonl"), {item}, kb, cfg);

  auto loaded = load_subgraph_cache(dir.file("cache.jsonl"), kb);
  REQUIRE(loaded.size() == 1);
  CHECK(loaded[0].ex.question == item.ex.question);
  CHECK(loaded[0].ex.subgraph.candidates == item.ex.subgraph.candidates);
  CHECK(loaded[0].ex.subgraph.triples.size() == item.ex.subgraph.triples.size());
  CHECK(loaded[0].ex.subgraph.relation_ids == item.ex.subgraph.relation_ids);

  KnowledgeBase other = KnowledgeBase::from_triples({{"z", "q", "w"}});
  CHECK_THROWS_AS(load_subgraph_cache(dir.file("cache.jsonl"), other), StageError);
}
