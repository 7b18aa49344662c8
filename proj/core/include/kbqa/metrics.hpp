#pragma once

#include <string>
#include <vector>

#include "kbqa/util.hpp"

namespace kbqa {

// One boost applied by the re-ranker, kept for provenance.
struct BoostRecord {
  EntityId candidate = -1;
  std::string factor;  // "h1" or "h2"
  RelationId relation = -1;
};

struct PredictionRecord {
  int qid = 0;
  std::vector<EntityId> candidates;
  std::vector<double> confidences;
  bool serr_applied = false;
  std::vector<BoostRecord> boosts;
};

void write_predictions(const std::string& path, const std::vector<PredictionRecord>& records);
std::vector<PredictionRecord> load_predictions(const std::string& path);

struct QuestionResult {
  int qid = 0;
  std::vector<EntityId> gold;
  std::vector<EntityId> predicted_set;
  int best_gold_rank = -1;  // 1-based rank of the best-ranked gold answer
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool top1_hit = false;
  bool scored = false;  // questions with empty gold are excluded from metrics
};

struct EvalReport {
  double hits_at_1 = 0.0;
  double f1 = 0.0;  // macro average over scored questions
  int num_questions = 0;
  int num_scored = 0;
  std::vector<QuestionResult> per_question;
};

// Ranked by confidence (ties keep the original candidate order). The answer
// set for F1 is every candidate with confidence >= rho * max confidence.
// Gold sets are aligned by qid; a missing qid is an error. Questions with
// empty gold are excluded from both metrics (documented convention).
EvalReport evaluate(const std::vector<PredictionRecord>& predictions,
                    const std::vector<std::pair<int, std::vector<EntityId>>>& gold_sets,
                    double rho);

// ranking order used everywhere: confidence descending, ties by input order
std::vector<size_t> ranked_order(const std::vector<double>& confidences);

}  // namespace kbqa
