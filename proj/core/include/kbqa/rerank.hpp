#pragma once

#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "kbqa/kb.hpp"
#include "kbqa/metrics.hpp"

namespace kbqa {

// Stem index over relation surface strings, built once per KB.
struct RelationTrie {
  std::unordered_map<std::string, std::vector<RelationId>> stem_to_relations;
  std::vector<std::vector<std::string>> relation_stems;  // per relation, deduped
  int empty_surfaces = 0;  // relations that contributed no stems
};

// Split a relation surface on '.', '_', '-' and camelCase boundaries.
std::vector<std::string> relation_surface_tokens(const std::string& surface);

RelationTrie build_relation_trie(const Vocab& relations);

struct StemPool {
  std::vector<std::string> stems;  // lowercase, stopword-free, deduped, in order
  bool contains(const std::string& s) const;
};

StemPool extract_stems(const std::vector<std::string>& tokens,
                       const std::unordered_set<std::string>& stopwords);

struct RerankConfig {
  double h1 = 1.5;  // full pseudo-fact boost
  double h2 = 1.2;  // partial pseudo-fact boost
  int min_stem_matches = 1;
};

struct RerankResult {
  std::vector<EntityId> candidates;
  std::vector<double> confidences;
  std::vector<BoostRecord> boosts;
  std::vector<RelationId> matched_relations;
  bool changed = false;  // false => outputs are bit-identical to the inputs
};

// Boost candidates supported by question-matched relations, renormalize and
// re-sort (ties keep the original rank). h1 applies when (topic, r, candidate)
// exists as a subgraph triple in either direction, otherwise h2 when the
// candidate or a topic touches r; at most one boost per candidate. With no
// matches the input comes back unchanged.
RerankResult rerank(const std::vector<std::string>& question_tokens,
                    const std::vector<EntityId>& candidates,
                    const std::vector<double>& confidences, const Subgraph& sub,
                    const RelationTrie& trie,
                    const std::unordered_set<std::string>& stopwords,
                    const RerankConfig& cfg);

const std::unordered_set<std::string>& default_stopwords();
std::unordered_set<std::string> load_stopwords(const std::string& path);

}  // namespace kbqa
