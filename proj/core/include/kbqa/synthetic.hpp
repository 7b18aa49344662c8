#pragma once

#include <string>
#include <vector>

#include "kbqa/config.hpp"
#include "kbqa/dataset.hpp"
#include "kbqa/kb.hpp"
#include "kbqa/retrieval.hpp"

namespace kbqa {

// Specification for the synthetic benchmark. Entities are partitioned into
// groups carrying a self-loop marker relation; content relations connect a
// fixed source group to a fixed destination group, and questions name a
// relation path from a topic entity via keyword templates.
struct SyntheticSpec {
  int num_entities = 200;
  int num_relations = 20;  // group markers + content relations
  int num_questions = 500;
  int num_groups = 5;
  int edges_per_relation = 20;
  int max_fanout = 2;           // per (head, relation)
  double two_hop_fraction = 0.3;
  double train_frac = 0.7;
  double valid_frac = 0.1;
  RetrievalConfig retrieval;    // used to certify questions are solvable

  static SyntheticSpec from_experiment(const ExperimentConfig& cfg);
};

struct SyntheticQuestion {
  DatasetRecord record;
  std::vector<RelationId> path;  // relation ids, in traversal order
  EntityId topic;
  std::vector<EntityId> gold;    // oracle answers, sorted
};

struct SyntheticDataset {
  KnowledgeBase kb;
  std::vector<SyntheticQuestion> train;
  std::vector<SyntheticQuestion> valid;
  std::vector<SyntheticQuestion> test;
};

// Every question is answerable by a unique relation path of the recorded
// length; gold answers come from exhaustive traversal. Throws StageError
// when the spec is infeasible (e.g. requested hops cannot be realized).
SyntheticDataset generate_synthetic_kb(const SyntheticSpec& spec, uint64_t seed);

// Exhaustive traversal oracle: entities reached from `start` by following
// exactly the given relation sequence.
std::vector<EntityId> follow_relation_path(const KnowledgeBase& kb, EntityId start,
                                           const std::vector<RelationId>& path);

// write kb.tsv / train.jsonl / valid.jsonl / test.jsonl under dir
void write_synthetic_dataset(const SyntheticDataset& ds, const std::string& dir);

}  // namespace kbqa
