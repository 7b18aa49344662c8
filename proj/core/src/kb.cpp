#include "kbqa/kb.hpp"

#include <algorithm>
#include <array>
#include <map>
#include <set>

namespace kbqa {

int32_t Vocab::get_or_add(const std::string& name) {
  auto it = index_.find(name);
  if (it != index_.end()) return it->second;
  int32_t id = static_cast<int32_t>(names_.size());
  names_.push_back(name);
  index_[name] = id;
  return id;
}

std::optional<int32_t> Vocab::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

uint64_t Vocab::content_hash() const {
  uint64_t h = fnv1a("vocab");
  for (const auto& n : names_) {
    h = fnv1a(n, h);
    h = fnv1a("\x1f", h);
  }
  return h;
}

KnowledgeBase KnowledgeBase::load(const std::string& path) {
  auto lines = read_lines(path);
  std::vector<std::array<std::string, 3>> rows;
  rows.reserve(lines.size());
  for (size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    auto fields = split(lines[i], '\t');
    if (fields.size() != 3) {
      throw ParseError(path + ": line " + std::to_string(i + 1) +
                       ": expected 3 tab-separated fields, got " +
                       std::to_string(fields.size()));
    }
    rows.push_back({fields[0], fields[1], fields[2]});
  }
  if (rows.empty()) throw ParseError(path + ": empty knowledge base file");
  return from_triples(rows);
}

KnowledgeBase KnowledgeBase::from_triples(
    const std::vector<std::array<std::string, 3>>& rows) {
  KnowledgeBase kb;
  kb.triples.reserve(rows.size());
  for (const auto& row : rows) {
    EntityId h = kb.entities.get_or_add(row[0]);
    RelationId r = kb.relations.get_or_add(row[1]);
    EntityId t = kb.entities.get_or_add(row[2]);
    kb.triples.push_back({h, r, t});
  }
  kb.build_indexes();
  return kb;
}

void KnowledgeBase::build_indexes() {
  out_index.assign(static_cast<size_t>(entities.size()), {});
  in_index.assign(static_cast<size_t>(entities.size()), {});
  for (const auto& t : triples) {
    out_index[static_cast<size_t>(t.head)].emplace_back(t.relation, t.tail);
    in_index[static_cast<size_t>(t.tail)].emplace_back(t.relation, t.head);
  }
}

std::string KnowledgeBase::serialize() const {
  std::string out;
  for (const auto& t : triples) {
    out += entities.name(t.head);
    out += '\t';
    out += relations.name(t.relation);
    out += '\t';
    out += entities.name(t.tail);
    out += '\n';
  }
  return out;
}

uint64_t KnowledgeBase::content_hash() const {
  uint64_t h = fnv1a("kb");
  h ^= entities.content_hash();
  h = fnv1a(hex64(relations.content_hash()), h);
  for (const auto& t : triples) {
    h = fnv1a(std::to_string(t.head) + "," + std::to_string(t.relation) + "," +
                  std::to_string(t.tail) + ";",
              h);
  }
  return h;
}

int Subgraph::candidate_position(EntityId e) const {
  auto it = lookup_.find(e);
  return it == lookup_.end() ? -1 : it->second;
}

void Subgraph::rebuild_lookup() {
  lookup_.clear();
  lookup_.reserve(candidates.size());
  for (size_t i = 0; i < candidates.size(); ++i) {
    lookup_[candidates[i]] = static_cast<int>(i);
  }
}

void Subgraph::validate() const {
  for (EntityId t : topic_entities) {
    if (candidate_position(t) < 0) {
      throw StageError("subgraph: topic entity " + std::to_string(t) +
                       " is not a candidate");
    }
  }
  for (const auto& tr : triples) {
    if (candidate_position(tr.head) < 0 || candidate_position(tr.tail) < 0) {
      throw StageError("subgraph: triple endpoint outside candidate set");
    }
  }
}

std::vector<RelationEdge> relation_orient(const KnowledgeBase& kb) {
  if (kb.triples.empty()) throw StageError("relation_orient: empty knowledge base");
  // per-entity set of distinct incident relations
  std::vector<std::set<RelationId>> incident(static_cast<size_t>(kb.num_entities()));
  for (const auto& t : kb.triples) {
    incident[static_cast<size_t>(t.head)].insert(t.relation);
    incident[static_cast<size_t>(t.tail)].insert(t.relation);
  }
  std::map<std::pair<RelationId, RelationId>, int> counts;
  for (const auto& rels : incident) {
    for (auto it = rels.begin(); it != rels.end(); ++it) {
      for (auto jt = std::next(it); jt != rels.end(); ++jt) {
        counts[{*it, *jt}] += 1;
      }
    }
  }
  std::vector<RelationEdge> edges;
  edges.reserve(counts.size() * 2);
  for (const auto& [pair, c] : counts) {
    edges.push_back({pair.first, pair.second, c});
    edges.push_back({pair.second, pair.first, c});
  }
  std::sort(edges.begin(), edges.end(), [](const RelationEdge& a, const RelationEdge& b) {
    return std::tie(a.first, a.second) < std::tie(b.first, b.second);
  });
  return edges;
}

Eigen::MatrixXd surrounding_relation_matrix(const Subgraph& sub, int32_t num_relations) {
  Eigen::MatrixXd w =
      Eigen::MatrixXd::Zero(sub.num_candidates(), static_cast<Eigen::Index>(num_relations));
  for (const auto& t : sub.triples) {
    int hp = sub.candidate_position(t.head);
    int tp = sub.candidate_position(t.tail);
    if (hp >= 0) w(hp, t.relation) += 1.0;
    if (tp >= 0) w(tp, t.relation) += 1.0;
  }
  for (Eigen::Index r = 0; r < w.rows(); ++r) {
    double s = w.row(r).sum();
    if (s > 0.0) w.row(r) /= s;
  }
  return w;
}

}  // namespace kbqa
