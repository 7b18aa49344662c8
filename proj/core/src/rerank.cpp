#include "kbqa/rerank.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <numeric>
#include <set>

#include "kbqa/stem.hpp"

namespace kbqa {

std::vector<std::string> relation_surface_tokens(const std::string& surface) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&]() {
    if (!cur.empty()) {
      tokens.push_back(cur);
      cur.clear();
    }
  };
  for (size_t i = 0; i < surface.size(); ++i) {
    char c = surface[i];
    if (c == '.' || c == '_' || c == '-' || std::isspace(static_cast<unsigned char>(c))) {
      flush();
      continue;
    }
    if (std::isupper(static_cast<unsigned char>(c)) && !cur.empty() &&
        std::islower(static_cast<unsigned char>(cur.back()))) {
      flush();  // camelCase boundary
    }
    cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  flush();
  return tokens;
}

RelationTrie build_relation_trie(const Vocab& relations) {
  if (relations.size() == 0) {
    throw StageError("build_relation_trie: empty relation vocabulary");
  }
  RelationTrie trie;
  trie.relation_stems.resize(static_cast<size_t>(relations.size()));
  for (RelationId r = 0; r < relations.size(); ++r) {
    auto tokens = relation_surface_tokens(relations.name(r));
    if (tokens.empty()) {
      ++trie.empty_surfaces;
      continue;
    }
    std::set<std::string> seen;
    for (const auto& tok : tokens) {
      std::string stem = porter_stem(tok);
      if (stem.empty() || !seen.insert(stem).second) continue;
      trie.relation_stems[static_cast<size_t>(r)].push_back(stem);
      trie.stem_to_relations[stem].push_back(r);
    }
  }
  return trie;
}

bool StemPool::contains(const std::string& s) const {
  return std::find(stems.begin(), stems.end(), s) != stems.end();
}

StemPool extract_stems(const std::vector<std::string>& tokens,
                       const std::unordered_set<std::string>& stopwords) {
  StemPool pool;
  std::set<std::string> seen;
  for (const auto& raw : tokens) {
    std::string tok = to_lower(raw);
    if (tok.empty() || stopwords.count(tok)) continue;
    std::string stem = porter_stem(tok);
    if (stem.empty() || stopwords.count(stem)) continue;
    if (seen.insert(stem).second) pool.stems.push_back(stem);
  }
  return pool;
}

RerankResult rerank(const std::vector<std::string>& question_tokens,
                    const std::vector<EntityId>& candidates,
                    const std::vector<double>& confidences, const Subgraph& sub,
                    const RelationTrie& trie,
                    const std::unordered_set<std::string>& stopwords,
                    const RerankConfig& cfg) {
  if (candidates.size() != confidences.size()) {
    throw StageError("rerank: candidates/confidences length mismatch");
  }
  RerankResult out;
  out.candidates = candidates;
  out.confidences = confidences;

  StemPool pool = extract_stems(question_tokens, stopwords);

  // matched relations: >= min_stem_matches distinct stems hit in the pool
  std::map<RelationId, int> hit_counts;
  for (const auto& stem : pool.stems) {
    auto it = trie.stem_to_relations.find(stem);
    if (it == trie.stem_to_relations.end()) continue;
    for (RelationId r : it->second) hit_counts[r] += 1;
  }
  for (const auto& [r, count] : hit_counts) {
    if (count >= cfg.min_stem_matches) out.matched_relations.push_back(r);
  }
  if (out.matched_relations.empty()) return out;

  // subgraph lookups restricted to the matched relations
  std::set<RelationId> matched(out.matched_relations.begin(), out.matched_relations.end());
  std::set<EntityId> topics(sub.topic_entities.begin(), sub.topic_entities.end());
  // full facts: (topic, r, x) or (x, r, topic); partial: any incidence
  std::map<RelationId, std::set<EntityId>> full_partner;
  std::map<RelationId, std::set<EntityId>> incident;
  std::set<RelationId> topic_incident;
  for (const auto& t : sub.triples) {
    if (!matched.count(t.relation)) continue;
    incident[t.relation].insert(t.head);
    incident[t.relation].insert(t.tail);
    if (topics.count(t.head)) {
      full_partner[t.relation].insert(t.tail);
      topic_incident.insert(t.relation);
    }
    if (topics.count(t.tail)) {
      full_partner[t.relation].insert(t.head);
      topic_incident.insert(t.relation);
    }
  }

  bool any_boost = false;
  for (size_t i = 0; i < out.candidates.size(); ++i) {
    EntityId c = out.candidates[i];
    RelationId full_rel = -1, partial_rel = -1;
    for (RelationId r : out.matched_relations) {
      auto fp = full_partner.find(r);
      if (fp != full_partner.end() && fp->second.count(c)) {
        full_rel = r;
        break;
      }
      if (partial_rel < 0) {
        auto in = incident.find(r);
        bool candidate_touches = in != incident.end() && in->second.count(c);
        if (candidate_touches || topic_incident.count(r)) partial_rel = r;
      }
    }
    if (full_rel >= 0) {
      out.confidences[i] *= cfg.h1;
      out.boosts.push_back({c, "h1", full_rel});
      any_boost = true;
    } else if (partial_rel >= 0) {
      out.confidences[i] *= cfg.h2;
      out.boosts.push_back({c, "h2", partial_rel});
      any_boost = true;
    }
  }
  if (!any_boost) return out;

  double total = std::accumulate(out.confidences.begin(), out.confidences.end(), 0.0);
  if (total > 0.0) {
    for (auto& v : out.confidences) v /= total;
  }
  auto order = ranked_order(out.confidences);
  std::vector<EntityId> sorted_c(out.candidates.size());
  std::vector<double> sorted_p(out.confidences.size());
  for (size_t r = 0; r < order.size(); ++r) {
    sorted_c[r] = out.candidates[order[r]];
    sorted_p[r] = out.confidences[order[r]];
  }
  out.candidates = std::move(sorted_c);
  out.confidences = std::move(sorted_p);
  out.changed = true;
  return out;
}

const std::unordered_set<std::string>& default_stopwords() {
  static const std::unordered_set<std::string> words = {
      "a",    "an",    "and",  "are",   "as",    "at",    "be",    "by",   "did",
      "do",   "does",  "for",  "from",  "had",   "has",   "have",  "he",   "her",
      "his",  "how",   "i",    "in",    "is",    "it",    "its",   "of",   "on",
      "or",   "s",     "she",  "that",  "the",   "their", "them",  "then", "there",
      "these", "they", "this", "those", "to",    "was",   "we",    "were", "what",
      "when", "where", "which", "who",  "whom",  "whose", "why",   "will", "with",
      "you",  "your",  "name", "list",  "give",  "show",  "many",  "much", "hold",
      "holds"};
  return words;
}

std::unordered_set<std::string> load_stopwords(const std::string& path) {
  std::unordered_set<std::string> words;
  for (const auto& line : read_lines(path)) {
    std::string w = trim(line);
    if (!w.empty()) words.insert(to_lower(w));
  }
  return words;
}

}  // namespace kbqa
