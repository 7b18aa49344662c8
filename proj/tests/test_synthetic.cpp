#include "doctest.h"

#include <set>

#include "kbqa/synthetic.hpp"
#include "test_util.hpp"

using namespace kbqa;
using kbqa::testutil::TempDir;

namespace {

SyntheticSpec small_spec() {
  SyntheticSpec spec;
  spec.num_entities = 60;
  spec.num_relations = 10;  // 4 markers + 6 content
  spec.num_groups = 4;
  spec.num_questions = 40;
  spec.edges_per_relation = 10;
  spec.max_fanout = 2;
  spec.two_hop_fraction = 0.3;
  return spec;
}

std::vector<const SyntheticQuestion*> all_questions(const SyntheticDataset& ds) {
  std::vector<const SyntheticQuestion*> out;
  for (const auto& q : ds.train) out.push_back(&q);
  for (const auto& q : ds.valid) out.push_back(&q);
  for (const auto& q : ds.test) out.push_back(&q);
  return out;
}

}  // namespace

TEST_CASE("synthetic: generation is deterministic byte for byte") {
  SyntheticSpec spec = small_spec();
  auto a = generate_synthetic_kb(spec, 11);
  auto b = generate_synthetic_kb(spec, 11);
  CHECK(a.kb.serialize() == b.kb.serialize());
  REQUIRE(a.train.size() == b.train.size());
  for (size_t i = 0; i < a.train.size(); ++i) {
    CHECK(a.train[i].record.question == b.train[i].record.question);
    CHECK(a.train[i].record.answers == b.train[i].record.answers);
  }
  auto c = generate_synthetic_kb(spec, 12);
  CHECK(a.kb.serialize() != c.kb.serialize());
}

TEST_CASE("synthetic: gold answers match the exhaustive traversal oracle") {
  SyntheticSpec spec = small_spec();
  auto ds = generate_synthetic_kb(spec, 21);
  int one_hop = 0, two_hop = 0;
  for (const auto* q : all_questions(ds)) {
    auto oracle = follow_relation_path(ds.kb, q->topic, q->path);
    CHECK(oracle == q->gold);
    REQUIRE(!q->gold.empty());
    if (q->path.size() == 1) {
      ++one_hop;
    } else {
      ++two_hop;
      // every gold answer of a 2-hop question is exactly 2 directed hops out
      auto direct = follow_relation_path(ds.kb, q->topic, {q->path[0]});
      for (EntityId g : q->gold) {
        CHECK(std::find(direct.begin(), direct.end(), g) == direct.end());
      }
    }
    // answers recorded as surfaces resolve back to the gold ids
    std::vector<EntityId> resolved;
    for (const auto& s : q->record.answers) {
      resolved.push_back(ds.kb.entities.find(s).value());
    }
    CHECK(resolved == q->gold);
  }
  CHECK(one_hop > 0);
  CHECK(two_hop > 0);
}

TEST_CASE("synthetic: questions are answerable by a unique short relation path") {
  SyntheticSpec spec = small_spec();
  auto ds = generate_synthetic_kb(spec, 31);
  // content relations have at least one non-self-loop edge; marker
  // self-loops are identity maps and do not count as reasoning hops
  std::vector<RelationId> content;
  {
    std::set<RelationId> with_real_edge;
    for (const auto& t : ds.kb.triples) {
      if (t.head != t.tail) with_real_edge.insert(t.relation);
    }
    content.assign(with_real_edge.begin(), with_real_edge.end());
  }
  int checked = 0;
  for (const auto* q : all_questions(ds)) {
    if (checked++ > 12) break;  // uniqueness scan is quadratic in relations
    std::set<EntityId> gold(q->gold.begin(), q->gold.end());
    int matches = 0;
    for (RelationId r : content) {
      auto ends = follow_relation_path(ds.kb, q->topic, {r});
      if (!ends.empty() && std::set<EntityId>(ends.begin(), ends.end()) == gold) ++matches;
    }
    for (RelationId r1 : content) {
      for (RelationId r2 : content) {
        auto ends = follow_relation_path(ds.kb, q->topic, {r1, r2});
        if (!ends.empty() && std::set<EntityId>(ends.begin(), ends.end()) == gold) ++matches;
      }
    }
    CHECK(matches == 1);
  }
}

TEST_CASE("synthetic: splits cover the requested counts") {
  SyntheticSpec spec = small_spec();
  auto ds = generate_synthetic_kb(spec, 41);
  CHECK(ds.train.size() + ds.valid.size() + ds.test.size() ==
        static_cast<size_t>(spec.num_questions));
  CHECK(ds.train.size() == 28);  // 0.7 * 40
  CHECK(ds.valid.size() == 4);   // 0.1 * 40
  CHECK(ds.test.size() == 8);
  CHECK(ds.kb.num_entities() == spec.num_entities);
  CHECK(ds.kb.num_relations() == spec.num_relations);
}

TEST_CASE("synthetic: infeasible specs raise errors") {
  SyntheticSpec spec = small_spec();
  spec.num_relations = spec.num_groups;  // no content relations possible
  CHECK_THROWS_AS(generate_synthetic_kb(spec, 5), StageError);

  SyntheticSpec tiny = small_spec();
  tiny.num_entities = 4;  // too few entities for 4 groups of useful size
  CHECK_THROWS_AS(generate_synthetic_kb(tiny, 5), StageError);
}

TEST_CASE("synthetic: questions name their relation keywords") {
  SyntheticSpec spec = small_spec();
  auto ds = generate_synthetic_kb(spec, 51);
  const auto* q = all_questions(ds)[0];
  RelationId last = q->path.back();
  std::string surface = ds.kb.relations.name(last);
  std::string keyword = surface.substr(surface.rfind('.') + 1);
  CHECK(q->record.question.find(keyword) != std::string::npos);
  CHECK(q->record.topics.size() == 1);
}

TEST_CASE("synthetic: dataset files round trip through the loader") {
  TempDir dir("synth");
  SyntheticSpec spec = small_spec();
  auto ds = generate_synthetic_kb(spec, 61);
  write_synthetic_dataset(ds, dir.path());
  KnowledgeBase kb = KnowledgeBase::load(dir.file("kb.tsv"));
  CHECK(kb.serialize() == ds.kb.serialize());
  auto train = load_dataset_file(dir.file("train.jsonl"));
  CHECK(train.size() == ds.train.size());
  auto resolved = resolve_dataset(train, kb);
  CHECK(resolved.size() == train.size());
  CHECK(!resolved[0].topics.empty());
}
