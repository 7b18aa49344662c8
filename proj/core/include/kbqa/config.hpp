#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "kbqa/retrieval.hpp"
#include "kbqa/vgae.hpp"

namespace kbqa {

// Every knob of the pipeline, serialized as flat `key = value` text.
// A snapshot is written next to every artifact a stage produces.
struct ExperimentConfig {
  // general
  uint64_t seed = 17;
  std::string out_dir = "out";

  // file paths (empty = not set)
  std::string kb_path;
  std::string train_path, valid_path, test_path;
  std::string train_cache, valid_cache, test_cache;
  std::string prior_path;
  std::string vgae_params_path;
  std::string checkpoint_path;
  std::string predictions_path;
  std::string stopwords_path;
  std::string word_vectors_path;

  // retrieval
  RetrievalConfig retrieval;

  // relation-graph auto-encoder
  int vgae_tau = 2000;
  VgaeTrainConfig vgae;

  // encoder / reasoner dimensions and variants
  int word_dim = 300;
  int entity_dim = 50;
  int num_step = 3;
  int heads = 2;
  std::string variant = "transformer";   // linear | recurrent | transformer
  std::string score_fn = "bilinear";     // bilinear | dot
  std::string gate_source = "v0";        // v0 | prev
  bool per_step_loss = false;
  double dropout = 0.30;

  // reasoner training
  double learning_rate = 8e-4;
  int batch_size = 40;
  int num_epoch = 200;
  double lambda = 0.5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.95;
  double adam_eps = 1e-8;
  double grad_clip = 0.0;  // 0 = off

  // evaluation
  double f1_rho = 0.5;  // answer set = confidences >= rho * max

  // re-ranking
  double serr_h1 = 1.5;
  double serr_h2 = 1.2;
  int serr_min_stem_matches = 1;

  // lambda sweep
  int sweep_num_epoch = 12;

  // synthetic benchmark
  int synth_entities = 200;
  int synth_relations = 20;
  int synth_questions = 500;
  int synth_groups = 5;
  int synth_edges_per_relation = 20;
  int synth_max_fanout = 2;
  double synth_two_hop_fraction = 0.3;
  double synth_train_frac = 0.7;
  double synth_valid_frac = 0.1;

  void validate() const;  // throws StageError on inconsistent values

  static ExperimentConfig load(const std::string& path);
  static ExperimentConfig from_map(const std::map<std::string, std::string>& kv);
  std::map<std::string, std::string> to_map() const;
  std::string to_text() const;  // canonical key order
  void apply_overrides(const std::map<std::string, std::string>& kv);
};

// flat `key = value` file; '#' starts a comment; unknown keys are an error
std::map<std::string, std::string> parse_config_text(const std::string& text,
                                                     const std::string& origin);

}  // namespace kbqa
