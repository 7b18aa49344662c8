#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "kbqa/dataset.hpp"
#include "kbqa/kb.hpp"

namespace kbqa {

struct RetrievalConfig {
  int max_hops = 3;
  int max_candidates = 2000;
  double ppr_alpha = 0.15;    // teleport probability
  double ppr_epsilon = 1e-4;  // push tolerance
};

// Approximate personalized PageRank seeded uniformly on the given entities,
// computed with the push algorithm on the undirected multigraph view.
// Deterministic: FIFO push order over adjacency lists in triple order.
std::vector<double> personalized_pagerank(const KnowledgeBase& kb,
                                          const std::vector<EntityId>& seeds,
                                          double alpha, double epsilon);

// Candidates are the top max_candidates entities by PPR score within
// max_hops of some topic (ties by ascending entity id); topics are always
// kept. Triples are the KB triples with both endpoints among candidates.
Subgraph retrieve_subgraph(const KnowledgeBase& kb, const std::vector<EntityId>& topics,
                           const RetrievalConfig& cfg);

// Distribution over relations incident to the topic entities inside the
// subgraph (counted per edge, normalized to sum 1). Falls back to a uniform
// distribution over the subgraph's relations when the topics touch nothing.
Eigen::VectorXd init_relation_state(const Subgraph& sub, const std::vector<EntityId>& topics,
                                    int32_t num_relations);

// ---- subgraph cache (the `prepare` stage artifact) ----

struct PreparedExample {
  int qid = 0;
  QAExample ex;
};

// One JSON record per question; a sidecar `<path>.meta.json` carries the KB
// hash and retrieval settings for auditability.
void write_subgraph_cache(const std::string& path, const std::vector<PreparedExample>& items,
                          const KnowledgeBase& kb, const RetrievalConfig& cfg);
std::vector<PreparedExample> load_subgraph_cache(const std::string& path,
                                                 const KnowledgeBase& kb);

}  // namespace kbqa
