#include "doctest.h"

#include "kbqa/config.hpp"
#include "test_util.hpp"

using namespace kbqa;
using kbqa::testutil::TempDir;

TEST_CASE("config: defaults carry the reference hyper-parameters") {
  ExperimentConfig cfg;
  CHECK(cfg.learning_rate == doctest::Approx(8e-4));
  CHECK(cfg.batch_size == 40);
  CHECK(cfg.dropout == doctest::Approx(0.30));
  CHECK(cfg.num_step == 3);
  CHECK(cfg.entity_dim == 50);
  CHECK(cfg.word_dim == 300);
  CHECK(cfg.num_epoch == 200);
  CHECK(cfg.adam_beta2 == doctest::Approx(0.95));
  CHECK(cfg.retrieval.max_candidates == 2000);
  CHECK(cfg.retrieval.max_hops == 3);
  CHECK(cfg.vgae_tau == 2000);
  CHECK(cfg.serr_h1 > cfg.serr_h2);
  CHECK(cfg.serr_h2 > 1.0);
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("config: text round trip") {
  ExperimentConfig cfg;
  cfg.seed = 123;
  cfg.lambda = 0.1;
  cfg.kb_path = "data/kb.tsv";
  cfg.variant = "linear";
  std::string text = cfg.to_text();
  ExperimentConfig back = ExperimentConfig::from_map(parse_config_text(text, "inline"));
  CHECK(back.seed == 123);
  CHECK(back.lambda == doctest::Approx(0.1));
  CHECK(back.kb_path == "data/kb.tsv");
  CHECK(back.variant == "linear");
  CHECK(back.to_text() == text);
}

TEST_CASE("config: file loading with comments") {
  TempDir dir("cfg");
  write_file(dir.file("c.txt"),
             "# experiment\nseed = 9\nlambda = 0.4\n\nmax_hops = 2  # short chains\n");
  ExperimentConfig cfg = ExperimentConfig::load(dir.file("c.txt"));
  CHECK(cfg.seed == 9);
  CHECK(cfg.lambda == doctest::Approx(0.4));
  CHECK(cfg.retrieval.max_hops == 2);
}

TEST_CASE("config: unknown keys and malformed lines are errors") {
  CHECK_THROWS_AS(ExperimentConfig::from_map({{"no_such_key", "1"}}), StageError);
  CHECK_THROWS_AS(parse_config_text("seed 9\n", "inline"), ParseError);
  CHECK_THROWS_AS(ExperimentConfig::from_map({{"seed", "abc"}}), StageError);
}

TEST_CASE("config: validation rejects inconsistent values") {
  ExperimentConfig cfg;
  cfg.lambda = 0.0;
  CHECK_THROWS_AS(cfg.validate(), StageError);
  cfg = ExperimentConfig{};
  cfg.serr_h1 = 1.1;
  cfg.serr_h2 = 1.2;  // must be h1 > h2 > 1
  CHECK_THROWS_AS(cfg.validate(), StageError);
  cfg = ExperimentConfig{};
  cfg.variant = "quantum";
  CHECK_THROWS_AS(cfg.validate(), StageError);
  cfg = ExperimentConfig{};
  cfg.heads = 7;  // must divide entity_dim = 50
  CHECK_THROWS_AS(cfg.validate(), StageError);
  cfg = ExperimentConfig{};
  cfg.retrieval.ppr_alpha = 1.5;
  CHECK_THROWS_AS(cfg.validate(), StageError);
}
