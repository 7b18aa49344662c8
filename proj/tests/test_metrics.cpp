#include "doctest.h"

#include "kbqa/metrics.hpp"
#include "test_util.hpp"

using namespace kbqa;
using kbqa::testutil::TempDir;

namespace {

PredictionRecord make_pred(int qid, std::vector<EntityId> cands, std::vector<double> conf) {
  PredictionRecord rec;
  rec.qid = qid;
  rec.candidates = std::move(cands);
  rec.confidences = std::move(conf);
  return rec;
}

}  // namespace

TEST_CASE("metrics: hits@1 counts top-ranked gold answers") {
  std::vector<PredictionRecord> preds = {
      make_pred(0, {1, 2}, {0.9, 0.1}),  // hit
      make_pred(1, {3, 4}, {0.2, 0.8}),  // hit (4 ranked first)
      make_pred(2, {5, 6}, {0.7, 0.3}),  // miss
      make_pred(3, {7, 8}, {0.6, 0.4}),  // hit
  };
  std::vector<std::pair<int, std::vector<EntityId>>> gold = {
      {0, {1}}, {1, {4}}, {2, {6}}, {3, {7}}};
  EvalReport report = evaluate(preds, gold, 0.5);
  CHECK(report.hits_at_1 == doctest::Approx(0.75));
  CHECK(report.num_scored == 4);
}

TEST_CASE("metrics: F1 of predicted answer set vs gold") {
  // predicted set at rho=0.5: {a, b} (0.5 >= 0.5*0.5); gold {a}
  std::vector<PredictionRecord> preds = {make_pred(0, {10, 11, 12}, {0.5, 0.3, 0.2})};
  std::vector<std::pair<int, std::vector<EntityId>>> gold = {{0, {10}}};
  EvalReport report = evaluate(preds, gold, 0.5);
  REQUIRE(report.per_question.size() == 1);
  const auto& qr = report.per_question[0];
  CHECK(qr.predicted_set == std::vector<EntityId>{10, 11});
  CHECK(qr.precision == doctest::Approx(0.5));
  CHECK(qr.recall == doctest::Approx(1.0));
  CHECK(qr.f1 == doctest::Approx(2.0 / 3.0));
  CHECK(qr.best_gold_rank == 1);
}

TEST_CASE("metrics: exact set match gives F1 of one") {
  std::vector<PredictionRecord> preds = {make_pred(0, {1, 2, 3}, {0.5, 0.45, 0.05})};
  std::vector<std::pair<int, std::vector<EntityId>>> gold = {{0, {1, 2}}};
  EvalReport report = evaluate(preds, gold, 0.5);
  CHECK(report.per_question[0].f1 == doctest::Approx(1.0));
  CHECK(report.f1 == doctest::Approx(1.0));
}

TEST_CASE("metrics: empty gold questions are excluded from both metrics") {
  std::vector<PredictionRecord> preds = {
      make_pred(0, {1}, {1.0}),
      make_pred(1, {2}, {1.0}),
  };
  std::vector<std::pair<int, std::vector<EntityId>>> gold = {{0, {1}}, {1, {}}};
  EvalReport report = evaluate(preds, gold, 0.5);
  CHECK(report.num_scored == 1);
  CHECK(report.hits_at_1 == doctest::Approx(1.0));
  CHECK_FALSE(report.per_question[1].scored);
}

TEST_CASE("metrics: missing qid is an error") {
  std::vector<PredictionRecord> preds = {make_pred(7, {1}, {1.0})};
  std::vector<std::pair<int, std::vector<EntityId>>> gold = {{0, {1}}};
  CHECK_THROWS_AS(evaluate(preds, gold, 0.5), StageError);
}

TEST_CASE("metrics: ranking breaks ties by input order") {
  auto order = ranked_order({0.3, 0.5, 0.3, 0.5});
  CHECK(order == std::vector<size_t>{1, 3, 0, 2});
}

TEST_CASE("metrics: predictions JSONL round trip") {
  TempDir dir("preds");
  std::vector<PredictionRecord> preds = {make_pred(0, {4, 5}, {0.75, 0.25})};
  preds[0].serr_applied = true;
  preds[0].boosts.push_back({4, "h1", 2});
  write_predictions(dir.file("p.jsonl"), preds);
  auto loaded = load_predictions(dir.file("p.jsonl"));
  REQUIRE(loaded.size() == 1);
  CHECK(loaded[0].qid == 0);
  CHECK(loaded[0].candidates == preds[0].candidates);
  CHECK(loaded[0].confidences == preds[0].confidences);
  CHECK(loaded[0].serr_applied);
  REQUIRE(loaded[0].boosts.size() == 1);
  CHECK(loaded[0].boosts[0].factor == "h1");
  CHECK(loaded[0].boosts[0].relation == 2);

  // byte-identical rewrite (determinism of the serializer)
  write_predictions(dir.file("p2.jsonl"), loaded);
  CHECK(read_file(dir.file("p.jsonl")) == read_file(dir.file("p2.jsonl")));
}

TEST_CASE("metrics: rho threshold shapes the answer set") {
  std::vector<PredictionRecord> preds = {make_pred(0, {1, 2, 3}, {0.6, 0.35, 0.05})};
  std::vector<std::pair<int, std::vector<EntityId>>> gold = {{0, {1, 2}}};
  EvalReport strict = evaluate(preds, gold, 1.0);  // only the max survives
  CHECK(strict.per_question[0].predicted_set == std::vector<EntityId>{1});
  EvalReport loose = evaluate(preds, gold, 0.05);
  CHECK(loose.per_question[0].predicted_set.size() == 3);
}
