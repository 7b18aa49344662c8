#pragma once

#include <Eigen/Dense>
#include <array>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "kbqa/util.hpp"

namespace kbqa {

using Matrix = Eigen::MatrixXd;

// Dense id vocabulary, ids assigned in first-appearance order.
class Vocab {
 public:
  int32_t get_or_add(const std::string& name);
  std::optional<int32_t> find(const std::string& name) const;
  const std::string& name(int32_t id) const { return names_.at(static_cast<size_t>(id)); }
  int32_t size() const { return static_cast<int32_t>(names_.size()); }
  const std::vector<std::string>& names() const { return names_; }
  uint64_t content_hash() const;

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int32_t> index_;
};

struct Triple {
  EntityId head;
  RelationId relation;
  EntityId tail;
  bool operator==(const Triple&) const = default;
};

// Directed labeled multigraph over dense entity/relation ids. Immutable
// after construction; safe to share across threads.
struct KnowledgeBase {
  Vocab entities;
  Vocab relations;
  std::vector<Triple> triples;
  // entity -> (relation, neighbor); exact inversions of the triple multiset
  std::vector<std::vector<std::pair<RelationId, EntityId>>> out_index;
  std::vector<std::vector<std::pair<RelationId, EntityId>>> in_index;

  int32_t num_entities() const { return entities.size(); }
  int32_t num_relations() const { return relations.size(); }

  // Tab-separated `head<TAB>relation<TAB>tail`, one triple per line.
  static KnowledgeBase load(const std::string& path);
  static KnowledgeBase from_triples(const std::vector<std::array<std::string, 3>>& rows);
  std::string serialize() const;
  uint64_t content_hash() const;

  void build_indexes();
};

struct Subgraph {
  std::vector<EntityId> candidates;  // ordered; order is the candidate axis
  std::vector<Triple> triples;       // both endpoints are candidates
  std::vector<EntityId> topic_entities;
  std::vector<RelationId> relation_ids;  // sorted unique relations present

  int32_t num_candidates() const { return static_cast<int32_t>(candidates.size()); }
  int candidate_position(EntityId e) const;  // -1 if absent
  void rebuild_lookup();
  void validate() const;  // topic/candidate containment invariants

 private:
  std::unordered_map<EntityId, int> lookup_;
};

struct QAExample {
  std::vector<std::string> question;  // lowercase tokens
  std::vector<EntityId> topics;
  std::vector<EntityId> answers;  // may be empty on test splits
  Subgraph subgraph;
};

struct RelationEdge {
  RelationId first;
  RelationId second;
  int shared_entities;
};

// Relation-oriented view: relations are connected iff some entity touches
// both (as head or tail). Emits both orientations, no self loops.
std::vector<RelationEdge> relation_orient(const KnowledgeBase& kb);

// Candidate-by-relation incidence, counted per triple endpoint (a self loop
// counts twice); rows with any incidence are L1-normalized.
Eigen::MatrixXd surrounding_relation_matrix(const Subgraph& sub, int32_t num_relations);

}  // namespace kbqa
