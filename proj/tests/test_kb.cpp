#include "doctest.h"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "kbqa/kb.hpp"
#include "kbqa/rng.hpp"
#include "test_util.hpp"

using namespace kbqa;
using kbqa::testutil::TempDir;

namespace {

KnowledgeBase tiny_kb(const std::vector<std::array<std::string, 3>>& rows) {
  return KnowledgeBase::from_triples(rows);
}

Subgraph whole_kb_subgraph(const KnowledgeBase& kb, std::vector<EntityId> topics) {
  Subgraph sub;
  for (EntityId e = 0; e < kb.num_entities(); ++e) sub.candidates.push_back(e);
  sub.triples = kb.triples;
  sub.topic_entities = std::move(topics);
  std::set<RelationId> rels;
  for (const auto& t : sub.triples) rels.insert(t.relation);
  sub.relation_ids.assign(rels.begin(), rels.end());
  sub.rebuild_lookup();
  return sub;
}

}  // namespace

TEST_CASE("kb: load builds dense vocabularies in first-appearance order") {
  TempDir dir("kb_load");
  write_file(dir.file("kb.tsv"), "a\tr1\tb\nb\tr2\tc\na\tr1\tc\n");
  KnowledgeBase kb = KnowledgeBase::load(dir.file("kb.tsv"));
  CHECK(kb.num_entities() == 3);
  CHECK(kb.num_relations() == 2);
  CHECK(kb.entities.name(0) == "a");
  CHECK(kb.entities.name(1) == "b");
  CHECK(kb.entities.name(2) == "c");
  CHECK(kb.relations.name(0) == "r1");
  CHECK(kb.triples.size() == 3);
  CHECK(kb.out_index[0].size() == 2);  // a has two outgoing edges
  CHECK(kb.in_index[2].size() == 2);   // c has two incoming edges
}

TEST_CASE("kb: malformed line reports its line number") {
  TempDir dir("kb_parse");
  write_file(dir.file("kb.tsv"), "a\tr1\tb\na\tr1\n");
  try {
    KnowledgeBase::load(dir.file("kb.tsv"));
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("kb: empty file is an error") {
  TempDir dir("kb_empty");
  write_file(dir.file("kb.tsv"), "");
  CHECK_THROWS_AS(KnowledgeBase::load(dir.file("kb.tsv")), ParseError);
}

TEST_CASE("kb: duplicate triples are kept and round-trip through serialize") {
  TempDir dir("kb_dup");
  std::string content = "a\tr1\tb\na\tr1\tb\nb\tr2\tc\n";
  write_file(dir.file("kb.tsv"), content);
  KnowledgeBase kb = KnowledgeBase::load(dir.file("kb.tsv"));
  CHECK(kb.triples.size() == 3);
  CHECK(kb.out_index[0].size() == 2);  // the duplicate is listed twice

  // round-trip up to line order
  auto sort_lines = [](const std::string& s) {
    std::vector<std::string> lines = split(s, '\n');
    std::sort(lines.begin(), lines.end());
    return lines;
  };
  CHECK(sort_lines(kb.serialize()) == sort_lines(content));
}

TEST_CASE("kb: relation_orient connects relations sharing an entity") {
  // b touches both r1 and r2
  KnowledgeBase kb = tiny_kb({{"a", "r1", "b"}, {"b", "r2", "c"}});
  auto edges = relation_orient(kb);
  REQUIRE(edges.size() == 2);
  CHECK(edges[0].first == 0);
  CHECK(edges[0].second == 1);
  CHECK(edges[0].shared_entities == 1);
  CHECK(edges[1].first == 1);
  CHECK(edges[1].second == 0);
}

TEST_CASE("kb: relation_orient with a single relation is empty") {
  KnowledgeBase kb = tiny_kb({{"a", "r1", "b"}, {"b", "r1", "c"}});
  CHECK(relation_orient(kb).empty());
}

TEST_CASE("kb: relation_orient emits all pairs through a shared entity") {
  KnowledgeBase kb =
      tiny_kb({{"a", "r1", "b"}, {"b", "r2", "c"}, {"d", "r3", "b"}});
  auto edges = relation_orient(kb);
  std::set<std::pair<RelationId, RelationId>> seen;
  for (const auto& e : edges) seen.insert({e.first, e.second});
  CHECK(seen.count({0, 1}));
  CHECK(seen.count({0, 2}));
  CHECK(seen.count({1, 2}));
  CHECK(seen.size() == 6);  // three unordered pairs, both orientations
}

TEST_CASE("kb: relation_orient matches a brute-force incidence oracle") {
  Rng rng(99);
  std::vector<std::array<std::string, 3>> rows;
  for (int i = 0; i < 120; ++i) {
    rows.push_back({"e" + std::to_string(rng.uniform_int(25)),
                    "r" + std::to_string(rng.uniform_int(6)),
                    "e" + std::to_string(rng.uniform_int(25))});
  }
  KnowledgeBase kb = tiny_kb(rows);

  // oracle: pairwise intersection of per-relation incident-entity sets
  std::vector<std::set<EntityId>> touched(static_cast<size_t>(kb.num_relations()));
  for (const auto& t : kb.triples) {
    touched[static_cast<size_t>(t.relation)].insert(t.head);
    touched[static_cast<size_t>(t.relation)].insert(t.tail);
  }
  std::map<std::pair<RelationId, RelationId>, int> expected;
  for (RelationId r1 = 0; r1 < kb.num_relations(); ++r1) {
    for (RelationId r2 = 0; r2 < kb.num_relations(); ++r2) {
      if (r1 == r2) continue;
      std::vector<EntityId> common;
      std::set_intersection(touched[r1].begin(), touched[r1].end(), touched[r2].begin(),
                            touched[r2].end(), std::back_inserter(common));
      if (!common.empty()) expected[{r1, r2}] = static_cast<int>(common.size());
    }
  }
  auto edges = relation_orient(kb);
  CHECK(edges.size() == expected.size());
  for (const auto& e : edges) {
    auto it = expected.find({e.first, e.second});
    REQUIRE(it != expected.end());
    CHECK(it->second == e.shared_entities);
  }
  // symmetry
  std::map<std::pair<RelationId, RelationId>, int> seen;
  for (const auto& e : edges) seen[{e.first, e.second}] = e.shared_entities;
  for (const auto& [key, count] : seen) {
    auto rev = seen.find({key.second, key.first});
    REQUIRE(rev != seen.end());
    CHECK(rev->second == count);
  }
}

TEST_CASE("kb: surrounding relation matrix rows") {
  KnowledgeBase kb = tiny_kb({{"a", "r1", "b"}, {"c", "r1", "b"}, {"b", "r2", "c"},
                              {"x", "r2", "y"}});
  Subgraph sub = whole_kb_subgraph(kb, {kb.entities.find("a").value()});
  Matrix w = surrounding_relation_matrix(sub, kb.num_relations());
  REQUIRE(w.rows() == kb.num_entities());
  REQUIRE(w.cols() == 2);

  // one-hot row: `a` only touches r1
  CHECK(w(0, 0) == doctest::Approx(1.0));
  CHECK(w(0, 1) == doctest::Approx(0.0));

  // count weighting: b touches r1 twice (two in-edges) and r2 once
  int b = kb.entities.find("b").value();
  CHECK(w(b, 0) == doctest::Approx(2.0 / 3.0));
  CHECK(w(b, 1) == doctest::Approx(1.0 / 3.0));

  // nonzero rows are normalized
  for (Eigen::Index r = 0; r < w.rows(); ++r) {
    double s = w.row(r).sum();
    if (s > 0.0) CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("kb: isolated candidate yields a zero row") {
  KnowledgeBase kb = tiny_kb({{"a", "r1", "b"}, {"c", "r2", "d"}});
  Subgraph sub;
  sub.candidates = {kb.entities.find("a").value(), kb.entities.find("b").value(),
                    kb.entities.find("c").value()};
  sub.topic_entities = {sub.candidates[0]};
  sub.triples = {kb.triples[0]};  // only a-r1-b; c is isolated here
  sub.relation_ids = {0};
  sub.rebuild_lookup();
  Matrix w = surrounding_relation_matrix(sub, kb.num_relations());
  CHECK(w.row(2).sum() == 0.0);
}

TEST_CASE("kb: self loop counts both endpoints") {
  KnowledgeBase kb = tiny_kb({{"a", "m", "a"}, {"a", "r", "b"}});
  Subgraph sub = whole_kb_subgraph(kb, {0});
  Matrix w = surrounding_relation_matrix(sub, kb.num_relations());
  CHECK(w(0, 0) == doctest::Approx(2.0 / 3.0));
  CHECK(w(0, 1) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("kb: subgraph validate rejects stray topics and triples") {
  Subgraph sub;
  sub.candidates = {1, 2};
  sub.topic_entities = {3};
  sub.rebuild_lookup();
  CHECK_THROWS_AS(sub.validate(), StageError);
}
