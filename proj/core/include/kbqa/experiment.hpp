#pragma once

#include <string>
#include <vector>

#include "kbqa/checkpoint.hpp"
#include "kbqa/config.hpp"
#include "kbqa/metrics.hpp"
#include "kbqa/reasoner.hpp"
#include "kbqa/rerank.hpp"
#include "kbqa/synthetic.hpp"

namespace kbqa {

// Resolved default artifact locations under cfg.out_dir.
std::string default_path(const ExperimentConfig& cfg, const std::string& name);

// prepare: retrieve subgraphs for every configured split and write caches.
void run_prepare(const ExperimentConfig& cfg);

// train-vgae: build the relation graph, train, persist prior + weights.
struct VgaeStageOutputs {
  Matrix prior;
  std::vector<double> loss_history;
};
VgaeStageOutputs run_train_vgae(const ExperimentConfig& cfg);

// train: reasoner training from caches + prior; persists the best checkpoint
// and one metrics record per epoch.
ReasonerTrainResult run_train(const ExperimentConfig& cfg);

// eval: score a checkpoint on a cache (writes predictions + metrics), or
// score an existing predictions file when cfg.predictions_path is set.
struct EvalStageOutputs {
  EvalReport report;
  std::vector<PredictionRecord> predictions;
};
EvalStageOutputs run_eval(const ExperimentConfig& cfg);

// rerank: stem-extraction re-ranking over a predictions file. Refuses
// records whose serr_applied flag is already set.
struct RerankStageOutputs {
  std::vector<PredictionRecord> predictions;
  int boosted_records = 0;
};
RerankStageOutputs run_rerank(const ExperimentConfig& cfg);

void run_export_embeddings(const ExperimentConfig& cfg, const std::string& source,
                           const std::string& out_path);

struct ReportRow {
  std::string label;
  double hits_at_1 = 0.0;
  double f1 = 0.0;
  double hits_at_1_pre_serr = 0.0;
  double f1_pre_serr = 0.0;
};

struct ExperimentReport {
  std::vector<ReportRow> rows;
};

// Full pipeline: (synthesize if no KB configured) -> prepare -> train-vgae ->
// train -> eval -> rerank -> eval again. Ablation labels: no_vgae (uniform
// prior), no_multitask (lambda = 1), no_serr (skip re-ranking). Any stage
// failure raises StageError naming the stage.
ExperimentReport run_experiment(ExperimentConfig cfg, const std::vector<std::string>& ablations);

struct SweepRow {
  double lambda = 0.0;
  double hits_at_1 = 0.0;
  double f1 = 0.0;
};

// Trains once per lambda in {0.1, ..., 1.0} (sweep_num_epoch epochs each)
// and reports test metrics before re-ranking.
std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg);

// Unimodality with plateau tolerance: no rise after the first descent beyond
// `tolerance` below the running peak.
bool is_single_peaked(const std::vector<double>& values, double tolerance);

// text lines: `relation_surface v1 ... vd`
void write_embedding_file(const std::string& path, const std::vector<std::string>& names,
                          const Matrix& vectors);
Matrix load_embedding_file(const std::string& path, std::vector<std::string>* names = nullptr);

}  // namespace kbqa
