#include "kbqa/metrics.hpp"

#include "json.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>

namespace kbqa {

using nlohmann::json;

void write_predictions(const std::string& path, const std::vector<PredictionRecord>& records) {
  std::string out;
  for (const auto& rec : records) {
    json j;
    j["qid"] = rec.qid;
    j["candidates"] = rec.candidates;
    j["confidences"] = rec.confidences;
    j["serr_applied"] = rec.serr_applied;
    if (!rec.boosts.empty()) {
      json boosts = json::array();
      for (const auto& b : rec.boosts) {
        boosts.push_back(
            {{"candidate", b.candidate}, {"factor", b.factor}, {"relation", b.relation}});
      }
      j["boosts"] = std::move(boosts);
    }
    out += j.dump();
    out += '\n';
  }
  write_file(path, out);
}

std::vector<PredictionRecord> load_predictions(const std::string& path) {
  auto lines = read_lines(path);
  std::vector<PredictionRecord> out;
  for (size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    json j;
    try {
      j = json::parse(lines[i]);
    } catch (const json::parse_error& e) {
      throw ParseError(path + ": line " + std::to_string(i + 1) + ": " + e.what());
    }
    PredictionRecord rec;
    rec.qid = j.at("qid").get<int>();
    rec.candidates = j.at("candidates").get<std::vector<EntityId>>();
    rec.confidences = j.at("confidences").get<std::vector<double>>();
    rec.serr_applied = j.value("serr_applied", false);
    if (j.contains("boosts")) {
      for (const auto& b : j["boosts"]) {
        rec.boosts.push_back({b.at("candidate").get<EntityId>(),
                              b.at("factor").get<std::string>(),
                              b.at("relation").get<RelationId>()});
      }
    }
    if (rec.candidates.size() != rec.confidences.size()) {
      throw ParseError(path + ": line " + std::to_string(i + 1) +
                       ": candidates/confidences length mismatch");
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<size_t> ranked_order(const std::vector<double>& confidences) {
  std::vector<size_t> order(confidences.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return confidences[a] > confidences[b]; });
  return order;
}

EvalReport evaluate(const std::vector<PredictionRecord>& predictions,
                    const std::vector<std::pair<int, std::vector<EntityId>>>& gold_sets,
                    double rho) {
  std::map<int, const std::vector<EntityId>*> gold_by_qid;
  for (const auto& [qid, gold] : gold_sets) gold_by_qid[qid] = &gold;

  EvalReport report;
  report.num_questions = static_cast<int>(predictions.size());
  double hits = 0.0, f1_sum = 0.0;
  int scored = 0;
  for (const auto& pred : predictions) {
    auto it = gold_by_qid.find(pred.qid);
    if (it == gold_by_qid.end()) {
      throw StageError("evaluate: no gold set for question id " + std::to_string(pred.qid));
    }
    QuestionResult qr;
    qr.qid = pred.qid;
    qr.gold = *it->second;
    std::set<EntityId> gold(qr.gold.begin(), qr.gold.end());
    if (gold.empty() || pred.candidates.empty()) {
      qr.scored = false;
      report.per_question.push_back(std::move(qr));
      continue;
    }
    qr.scored = true;
    ++scored;
    auto order = ranked_order(pred.confidences);
    qr.top1_hit = gold.count(pred.candidates[order[0]]) > 0;
    for (size_t r = 0; r < order.size(); ++r) {
      if (gold.count(pred.candidates[order[r]])) {
        qr.best_gold_rank = static_cast<int>(r) + 1;
        break;
      }
    }
    double max_conf = *std::max_element(pred.confidences.begin(), pred.confidences.end());
    double threshold = rho * max_conf;
    int in_gold = 0;
    for (size_t i = 0; i < pred.candidates.size(); ++i) {
      if (pred.confidences[i] >= threshold) {
        qr.predicted_set.push_back(pred.candidates[i]);
        if (gold.count(pred.candidates[i])) ++in_gold;
      }
    }
    if (!qr.predicted_set.empty()) {
      qr.precision = static_cast<double>(in_gold) / static_cast<double>(qr.predicted_set.size());
      qr.recall = static_cast<double>(in_gold) / static_cast<double>(gold.size());
      qr.f1 = (qr.precision + qr.recall) > 0.0
                  ? 2.0 * qr.precision * qr.recall / (qr.precision + qr.recall)
                  : 0.0;
    }
    hits += qr.top1_hit ? 1.0 : 0.0;
    f1_sum += qr.f1;
    report.per_question.push_back(std::move(qr));
  }
  report.num_scored = scored;
  if (scored > 0) {
    report.hits_at_1 = hits / static_cast<double>(scored);
    report.f1 = f1_sum / static_cast<double>(scored);
  }
  return report;
}

}  // namespace kbqa
