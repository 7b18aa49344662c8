#include "kbqa/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <map>
#include <set>

#include "kbqa/rng.hpp"

namespace kbqa {

namespace {

const std::vector<std::string>& keyword_pool() {
  static const std::vector<std::string> kw = {
      "capital", "language", "mascot",   "leader", "currency",
      "border",  "anthem",   "founder",  "spouse", "author",
      "parent",  "mentor",   "owner",    "director", "champion",
      "climate", "religion", "festival", "harbor", "emblem"};
  return kw;
}

const std::vector<std::string>& domain_pool() {
  static const std::vector<std::string> dom = {"civic", "realm", "guild", "league", "estate"};
  return dom;
}

std::string entity_surface(int idx) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "e%03d", idx);
  return buf;
}

struct ContentRelation {
  RelationId id;
  int src_group;
  int dst_group;
  std::string keyword;
};

}  // namespace

SyntheticSpec SyntheticSpec::from_experiment(const ExperimentConfig& cfg) {
  SyntheticSpec spec;
  spec.num_entities = cfg.synth_entities;
  spec.num_relations = cfg.synth_relations;
  spec.num_questions = cfg.synth_questions;
  spec.num_groups = cfg.synth_groups;
  spec.edges_per_relation = cfg.synth_edges_per_relation;
  spec.max_fanout = cfg.synth_max_fanout;
  spec.two_hop_fraction = cfg.synth_two_hop_fraction;
  spec.train_frac = cfg.synth_train_frac;
  spec.valid_frac = cfg.synth_valid_frac;
  spec.retrieval = cfg.retrieval;
  return spec;
}

std::vector<EntityId> follow_relation_path(const KnowledgeBase& kb, EntityId start,
                                           const std::vector<RelationId>& path) {
  std::set<EntityId> frontier = {start};
  for (RelationId r : path) {
    std::set<EntityId> next;
    for (EntityId e : frontier) {
      for (const auto& [rel, nbr] : kb.out_index[static_cast<size_t>(e)]) {
        if (rel == r) next.insert(nbr);
      }
    }
    frontier = std::move(next);
    if (frontier.empty()) break;
  }
  return {frontier.begin(), frontier.end()};
}

SyntheticDataset generate_synthetic_kb(const SyntheticSpec& spec, uint64_t seed) {
  if (spec.num_groups < 2 || spec.num_relations <= spec.num_groups) {
    throw StageError("synthetic spec: needs >= 2 groups and more relations than groups");
  }
  if (spec.num_entities < spec.num_groups * 2) {
    throw StageError("synthetic spec: too few entities for the requested groups");
  }
  int num_content = spec.num_relations - spec.num_groups;
  if (num_content > static_cast<int>(keyword_pool().size())) {
    throw StageError("synthetic spec: at most " + std::to_string(keyword_pool().size()) +
                     " content relations supported");
  }

  Rng rng(seed);
  Rng schema_rng = rng.fork(0);
  Rng edge_rng = rng.fork(1);
  Rng question_rng = rng.fork(2);
  Rng split_rng = rng.fork(3);

  // entity groups: contiguous blocks
  int base = spec.num_entities / spec.num_groups;
  std::vector<int> group_of(static_cast<size_t>(spec.num_entities));
  std::vector<std::vector<int>> members(static_cast<size_t>(spec.num_groups));
  for (int e = 0; e < spec.num_entities; ++e) {
    int g = std::min(e / base, spec.num_groups - 1);
    group_of[static_cast<size_t>(e)] = g;
    members[static_cast<size_t>(g)].push_back(e);
  }

  // schema: content relation r maps src_group -> dst_group; make sure at
  // least one composable pair exists when two-hop questions are requested
  std::vector<ContentRelation> content;
  for (int attempt = 0; attempt < 64; ++attempt) {
    content.clear();
    for (int i = 0; i < num_content; ++i) {
      int src = static_cast<int>(schema_rng.uniform_int(spec.num_groups));
      int dst = static_cast<int>(schema_rng.uniform_int(spec.num_groups));
      while (dst == src) dst = static_cast<int>(schema_rng.uniform_int(spec.num_groups));
      content.push_back({-1, src, dst, keyword_pool()[static_cast<size_t>(i)]});
    }
    if (spec.two_hop_fraction <= 0.0) break;
    bool composable = false;
    for (const auto& a : content) {
      for (const auto& b : content) {
        if (a.dst_group == b.src_group && a.keyword != b.keyword) composable = true;
      }
    }
    if (composable) break;
    if (attempt == 63) {
      throw StageError("synthetic spec infeasible: no composable relation chains for "
                       "two-hop questions");
    }
  }

  // build triples: self-loop group markers first, then content edges
  std::vector<std::array<std::string, 3>> rows;
  for (int g = 0; g < spec.num_groups; ++g) {
    std::string marker = "meta.cluster.badge" + std::to_string(g);
    for (int e : members[static_cast<size_t>(g)]) {
      rows.push_back({entity_surface(e), marker, entity_surface(e)});
    }
  }
  for (size_t i = 0; i < content.size(); ++i) {
    auto& cr = content[i];
    std::string surface = domain_pool()[i % domain_pool().size()] + ".zone" +
                          std::to_string(cr.dst_group) + "." + cr.keyword;
    const auto& heads = members[static_cast<size_t>(cr.src_group)];
    const auto& tails = members[static_cast<size_t>(cr.dst_group)];
    std::set<std::pair<int, int>> used;
    std::map<int, int> fanout;
    int placed = 0, attempts = 0;
    while (placed < spec.edges_per_relation && attempts < spec.edges_per_relation * 50) {
      ++attempts;
      int h = heads[static_cast<size_t>(edge_rng.uniform_int(static_cast<int64_t>(heads.size())))];
      int t = tails[static_cast<size_t>(edge_rng.uniform_int(static_cast<int64_t>(tails.size())))];
      if (h == t) continue;
      if (fanout[h] >= spec.max_fanout) continue;
      if (!used.insert({h, t}).second) continue;
      fanout[h] += 1;
      rows.push_back({entity_surface(h), surface, entity_surface(t)});
      ++placed;
    }
    if (placed == 0) {
      throw StageError("synthetic spec infeasible: could not place edges for relation " +
                       surface);
    }
  }

  SyntheticDataset ds;
  ds.kb = KnowledgeBase::from_triples(rows);
  for (auto& cr : content) {
    // relation ids follow first-appearance order in the triple rows
    std::string surface;
    for (RelationId r = 0; r < ds.kb.num_relations(); ++r) {
      if (ds.kb.relations.name(r).size() > cr.keyword.size() &&
          ds.kb.relations.name(r).compare(ds.kb.relations.name(r).size() - cr.keyword.size(),
                                          cr.keyword.size(), cr.keyword) == 0) {
        cr.id = r;
        break;
      }
    }
    if (cr.id < 0) throw StageError("synthetic: lost track of relation " + cr.keyword);
  }

  // gather heads per content relation
  std::map<RelationId, std::vector<EntityId>> heads_of;
  for (const auto& t : ds.kb.triples) {
    auto it = std::find_if(content.begin(), content.end(),
                           [&](const ContentRelation& c) { return c.id == t.relation; });
    if (it != content.end()) {
      auto& v = heads_of[t.relation];
      if (std::find(v.begin(), v.end(), t.head) == v.end()) v.push_back(t.head);
    }
  }
  std::vector<std::pair<RelationId, RelationId>> composable;
  for (const auto& a : content) {
    for (const auto& b : content) {
      if (a.dst_group == b.src_group && a.id != b.id) composable.emplace_back(a.id, b.id);
    }
  }

  auto keyword_of = [&](RelationId r) {
    auto it = std::find_if(content.begin(), content.end(),
                           [&](const ContentRelation& c) { return c.id == r; });
    return it->keyword;
  };

  // certified-question generation with rejection sampling
  auto subgraph_tails = [&](const Subgraph& sub, RelationId r) {
    std::set<EntityId> tails;
    for (const auto& t : sub.triples) {
      if (t.relation == r) tails.insert(t.tail);
    }
    return tails;
  };

  // Uniqueness ranges over content relations: marker self-loops are identity
  // maps, so appending one to any path reproduces its endpoint set.
  std::vector<RelationId> content_ids;
  for (const auto& cr : content) content_ids.push_back(cr.id);
  std::sort(content_ids.begin(), content_ids.end());
  auto unique_path_check = [&](EntityId topic, const std::set<EntityId>& gold) {
    int matches = 0;
    for (RelationId r : content_ids) {
      auto ends = follow_relation_path(ds.kb, topic, {r});
      if (!ends.empty() && std::set<EntityId>(ends.begin(), ends.end()) == gold) ++matches;
    }
    for (RelationId r1 : content_ids) {
      for (RelationId r2 : content_ids) {
        auto ends = follow_relation_path(ds.kb, topic, {r1, r2});
        if (!ends.empty() && std::set<EntityId>(ends.begin(), ends.end()) == gold) {
          ++matches;
        }
      }
    }
    return matches == 1;
  };

  std::vector<SyntheticQuestion> questions;
  int max_attempts = spec.num_questions * 400;
  int attempts = 0;
  while (static_cast<int>(questions.size()) < spec.num_questions) {
    if (++attempts > max_attempts) {
      throw StageError(
          "synthetic spec infeasible: exceeded question generation attempts; "
          "graph too dense or hops unrealizable");
    }
    bool two_hop = question_rng.uniform() < spec.two_hop_fraction;
    SyntheticQuestion q;
    if (!two_hop) {
      const auto& cr = content[static_cast<size_t>(
          question_rng.uniform_int(static_cast<int64_t>(content.size())))];
      const auto& heads = heads_of[cr.id];
      if (heads.empty()) continue;
      EntityId topic = heads[static_cast<size_t>(
          question_rng.uniform_int(static_cast<int64_t>(heads.size())))];
      auto gold_vec = follow_relation_path(ds.kb, topic, {cr.id});
      std::set<EntityId> gold(gold_vec.begin(), gold_vec.end());
      if (gold.empty() || gold.count(topic)) continue;
      auto sub = retrieve_subgraph(ds.kb, {topic}, spec.retrieval);
      if (subgraph_tails(sub, cr.id) != gold) continue;
      if (!unique_path_check(topic, gold)) continue;
      q.path = {cr.id};
      q.topic = topic;
      q.gold = gold_vec;
      static const char* templates[3] = {"what is the %s of %s ?",
                                         "who holds the %s of %s ?",
                                         "which %s does %s have ?"};
      int ti = static_cast<int>(question_rng.uniform_int(3));
      char buf[160];
      std::snprintf(buf, sizeof(buf), templates[ti], cr.keyword.c_str(),
                    entity_surface(topic).c_str());
      q.record.question = buf;
    } else {
      if (composable.empty()) {
        throw StageError("synthetic spec infeasible: two-hop questions requested but no "
                         "composable relation chains exist");
      }
      auto [r1, r2] = composable[static_cast<size_t>(
          question_rng.uniform_int(static_cast<int64_t>(composable.size())))];
      const auto& heads = heads_of[r1];
      if (heads.empty()) continue;
      EntityId topic = heads[static_cast<size_t>(
          question_rng.uniform_int(static_cast<int64_t>(heads.size())))];
      auto mids_vec = follow_relation_path(ds.kb, topic, {r1});
      auto gold_vec = follow_relation_path(ds.kb, topic, {r1, r2});
      std::set<EntityId> gold(gold_vec.begin(), gold_vec.end());
      std::set<EntityId> mids(mids_vec.begin(), mids_vec.end());
      if (gold.empty() || gold.count(topic)) continue;
      bool overlap = false;
      for (EntityId m : mids_vec) {
        if (gold.count(m)) overlap = true;
      }
      if (overlap) continue;
      auto sub = retrieve_subgraph(ds.kb, {topic}, spec.retrieval);
      if (subgraph_tails(sub, r2) != gold) continue;
      if (!unique_path_check(topic, gold)) continue;
      q.path = {r1, r2};
      q.topic = topic;
      q.gold = gold_vec;
      static const char* templates[2] = {"what is the %s of the %s of %s ?",
                                         "who holds the %s of the %s of %s ?"};
      int ti = static_cast<int>(question_rng.uniform_int(2));
      char buf[200];
      std::snprintf(buf, sizeof(buf), templates[ti], keyword_of(r2).c_str(),
                    keyword_of(r1).c_str(), entity_surface(topic).c_str());
      q.record.question = buf;
    }
    q.record.topics = {entity_surface(q.topic)};
    for (EntityId g : q.gold) q.record.answers.push_back(entity_surface(g));
    questions.push_back(std::move(q));
  }

  std::vector<size_t> order(questions.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  split_rng.shuffle(order);
  size_t n_train = static_cast<size_t>(spec.train_frac * spec.num_questions + 0.5);
  size_t n_valid = static_cast<size_t>(spec.valid_frac * spec.num_questions + 0.5);
  for (size_t i = 0; i < order.size(); ++i) {
    const auto& q = questions[order[i]];
    if (i < n_train) {
      ds.train.push_back(q);
    } else if (i < n_train + n_valid) {
      ds.valid.push_back(q);
    } else {
      ds.test.push_back(q);
    }
  }
  return ds;
}

void write_synthetic_dataset(const SyntheticDataset& ds, const std::string& dir) {
  ensure_directory(dir);
  write_file(dir + "/kb.tsv", ds.kb.serialize());
  auto dump = [&](const std::vector<SyntheticQuestion>& qs, const std::string& name) {
    std::vector<DatasetRecord> recs;
    recs.reserve(qs.size());
    for (const auto& q : qs) recs.push_back(q.record);
    write_dataset_file(dir + "/" + name, recs);
  };
  dump(ds.train, "train.jsonl");
  dump(ds.valid, "valid.jsonl");
  dump(ds.test, "test.jsonl");
}

}  // namespace kbqa
