#include "kbqa/retrieval.hpp"

#include "json.hpp"

#include <algorithm>
#include <deque>
#include <queue>
#include <set>

namespace kbqa {

using nlohmann::json;

namespace {

// Undirected adjacency with edge multiplicity, in triple order.
std::vector<std::vector<EntityId>> undirected_adjacency(const KnowledgeBase& kb) {
  std::vector<std::vector<EntityId>> adj(static_cast<size_t>(kb.num_entities()));
  for (const auto& t : kb.triples) {
    adj[static_cast<size_t>(t.head)].push_back(t.tail);
    adj[static_cast<size_t>(t.tail)].push_back(t.head);
  }
  return adj;
}

std::vector<int> hop_distances(const std::vector<std::vector<EntityId>>& adj,
                               const std::vector<EntityId>& seeds) {
  std::vector<int> dist(adj.size(), -1);
  std::deque<EntityId> queue;
  for (EntityId s : seeds) {
    if (dist[static_cast<size_t>(s)] < 0) {
      dist[static_cast<size_t>(s)] = 0;
      queue.push_back(s);
    }
  }
  while (!queue.empty()) {
    EntityId u = queue.front();
    queue.pop_front();
    for (EntityId v : adj[static_cast<size_t>(u)]) {
      if (dist[static_cast<size_t>(v)] < 0) {
        dist[static_cast<size_t>(v)] = dist[static_cast<size_t>(u)] + 1;
        queue.push_back(v);
      }
    }
  }
  return dist;
}

}  // namespace

std::vector<double> personalized_pagerank(const KnowledgeBase& kb,
                                          const std::vector<EntityId>& seeds,
                                          double alpha, double epsilon) {
  auto adj = undirected_adjacency(kb);
  size_t n = adj.size();
  std::vector<double> p(n, 0.0), r(n, 0.0);
  std::vector<char> queued(n, 0);
  std::deque<EntityId> queue;
  for (EntityId s : seeds) {
    r[static_cast<size_t>(s)] += 1.0 / static_cast<double>(seeds.size());
  }
  for (EntityId s : seeds) {
    if (!queued[static_cast<size_t>(s)]) {
      queued[static_cast<size_t>(s)] = 1;
      queue.push_back(s);
    }
  }
  while (!queue.empty()) {
    EntityId u = queue.front();
    queue.pop_front();
    queued[static_cast<size_t>(u)] = 0;
    size_t deg = adj[static_cast<size_t>(u)].size();
    double ru = r[static_cast<size_t>(u)];
    if (deg == 0) {
      // dangling node: absorb the residual
      p[static_cast<size_t>(u)] += ru;
      r[static_cast<size_t>(u)] = 0.0;
      continue;
    }
    if (ru < epsilon * static_cast<double>(deg)) continue;
    p[static_cast<size_t>(u)] += alpha * ru;
    r[static_cast<size_t>(u)] = 0.0;
    double share = (1.0 - alpha) * ru / static_cast<double>(deg);
    for (EntityId v : adj[static_cast<size_t>(u)]) {
      r[static_cast<size_t>(v)] += share;
      size_t dv = adj[static_cast<size_t>(v)].size();
      if (!queued[static_cast<size_t>(v)] &&
          r[static_cast<size_t>(v)] >= epsilon * static_cast<double>(dv)) {
        queued[static_cast<size_t>(v)] = 1;
        queue.push_back(v);
      }
    }
  }
  return p;
}

Subgraph retrieve_subgraph(const KnowledgeBase& kb, const std::vector<EntityId>& topics,
                           const RetrievalConfig& cfg) {
  if (topics.empty()) throw StageError("retrieve_subgraph: no topic entities");
  for (EntityId t : topics) {
    if (t < 0 || t >= kb.num_entities()) {
      throw StageError("retrieve_subgraph: unknown topic entity id " + std::to_string(t));
    }
  }
  auto adj = undirected_adjacency(kb);
  auto dist = hop_distances(adj, topics);
  auto scores = personalized_pagerank(kb, topics, cfg.ppr_alpha, cfg.ppr_epsilon);

  std::set<EntityId> topic_set(topics.begin(), topics.end());
  std::vector<EntityId> eligible;
  for (EntityId e = 0; e < kb.num_entities(); ++e) {
    int d = dist[static_cast<size_t>(e)];
    if (d >= 0 && d <= cfg.max_hops) eligible.push_back(e);
  }
  std::sort(eligible.begin(), eligible.end(), [&](EntityId a, EntityId b) {
    double sa = scores[static_cast<size_t>(a)], sb = scores[static_cast<size_t>(b)];
    if (sa != sb) return sa > sb;
    return a < b;
  });

  size_t cap = static_cast<size_t>(std::max<int>(cfg.max_candidates,
                                                 static_cast<int>(topics.size())));
  std::vector<EntityId> chosen;
  chosen.reserve(std::min(cap, eligible.size()));
  if (eligible.size() <= cap) {
    chosen = eligible;
  } else {
    size_t slots = cap;
    // reserve slots for topics falling below the cut
    size_t topics_below = 0;
    {
      std::set<EntityId> head(eligible.begin(), eligible.begin() + static_cast<long>(cap));
      for (EntityId t : topics) {
        if (!head.count(t)) ++topics_below;
      }
    }
    size_t take = slots - topics_below;
    std::set<EntityId> selected;
    for (size_t i = 0; i < eligible.size() && selected.size() < take; ++i) {
      selected.insert(eligible[i]);
    }
    for (EntityId t : topic_set) selected.insert(t);
    for (EntityId e : eligible) {
      if (selected.count(e)) chosen.push_back(e);
    }
  }

  Subgraph sub;
  sub.candidates = std::move(chosen);
  sub.topic_entities = topics;
  sub.rebuild_lookup();
  std::set<RelationId> rels;
  for (const auto& t : kb.triples) {
    if (sub.candidate_position(t.head) >= 0 && sub.candidate_position(t.tail) >= 0) {
      sub.triples.push_back(t);
      rels.insert(t.relation);
    }
  }
  sub.relation_ids.assign(rels.begin(), rels.end());
  sub.validate();
  return sub;
}

Eigen::VectorXd init_relation_state(const Subgraph& sub, const std::vector<EntityId>& topics,
                                    int32_t num_relations) {
  for (EntityId t : topics) {
    if (sub.candidate_position(t) < 0) {
      throw StageError("init_relation_state: topic " + std::to_string(t) +
                       " outside subgraph");
    }
  }
  Eigen::VectorXd s = Eigen::VectorXd::Zero(num_relations);
  std::set<EntityId> topic_set(topics.begin(), topics.end());
  for (const auto& t : sub.triples) {
    if (topic_set.count(t.head) || topic_set.count(t.tail)) s(t.relation) += 1.0;
  }
  double total = s.sum();
  if (total > 0.0) {
    s /= total;
    return s;
  }
  // isolated topics: uniform over the relations present in the subgraph,
  // or over everything if the subgraph has no triples at all
  if (!sub.relation_ids.empty()) {
    double u = 1.0 / static_cast<double>(sub.relation_ids.size());
    for (RelationId r : sub.relation_ids) s(r) = u;
  } else if (num_relations > 0) {
    s.setConstant(1.0 / static_cast<double>(num_relations));
  }
  return s;
}

void write_subgraph_cache(const std::string& path, const std::vector<PreparedExample>& items,
                          const KnowledgeBase& kb, const RetrievalConfig& cfg) {
  std::string out;
  for (const auto& item : items) {
    json j;
    j["qid"] = item.qid;
    j["question"] = item.ex.question;
    j["topics"] = item.ex.topics;
    j["answers"] = item.ex.answers;
    j["candidates"] = item.ex.subgraph.candidates;
    json triples = json::array();
    for (const auto& t : item.ex.subgraph.triples) {
      triples.push_back({t.head, t.relation, t.tail});
    }
    j["triples"] = std::move(triples);
    out += j.dump();
    out += '\n';
  }
  write_file(path, out);

  json meta;
  meta["kb_hash"] = hex64(kb.content_hash());
  meta["num_questions"] = items.size();
  meta["retrieval"] = {{"max_hops", cfg.max_hops},
                       {"max_candidates", cfg.max_candidates},
                       {"ppr_alpha", cfg.ppr_alpha},
                       {"ppr_epsilon", cfg.ppr_epsilon}};
  write_file(path + ".meta.json", meta.dump(2) + "\n");
}

std::vector<PreparedExample> load_subgraph_cache(const std::string& path,
                                                 const KnowledgeBase& kb) {
  std::string meta_path = path + ".meta.json";
  if (file_exists(meta_path)) {
    json meta = json::parse(read_file(meta_path));
    std::string stored = meta.value("kb_hash", "");
    if (!stored.empty() && stored != hex64(kb.content_hash())) {
      throw StageError("subgraph cache " + path + " was built against a different KB");
    }
  }
  auto lines = read_lines(path);
  std::vector<PreparedExample> out;
  out.reserve(lines.size());
  for (size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    json j;
    try {
      j = json::parse(lines[i]);
    } catch (const json::parse_error& e) {
      throw ParseError(path + ": line " + std::to_string(i + 1) + ": " + e.what());
    }
    PreparedExample item;
    item.qid = j.at("qid").get<int>();
    item.ex.question = j.at("question").get<std::vector<std::string>>();
    item.ex.topics = j.at("topics").get<std::vector<EntityId>>();
    item.ex.answers = j.at("answers").get<std::vector<EntityId>>();
    item.ex.subgraph.candidates = j.at("candidates").get<std::vector<EntityId>>();
    std::set<RelationId> rels;
    for (const auto& t : j.at("triples")) {
      Triple tr{t.at(0).get<EntityId>(), t.at(1).get<RelationId>(), t.at(2).get<EntityId>()};
      item.ex.subgraph.triples.push_back(tr);
      rels.insert(tr.relation);
    }
    item.ex.subgraph.relation_ids.assign(rels.begin(), rels.end());
    item.ex.subgraph.topic_entities = item.ex.topics;
    item.ex.subgraph.rebuild_lookup();
    item.ex.subgraph.validate();
    out.push_back(std::move(item));
  }
  return out;
}

}  // namespace kbqa
