#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "kbqa/config.hpp"
#include "kbqa/encoder.hpp"
#include "kbqa/kb.hpp"
#include "kbqa/metrics.hpp"
#include "kbqa/nn.hpp"
#include "kbqa/retrieval.hpp"

namespace kbqa {

enum class InteractionVariant { linear, recurrent, transformer };
enum class GateSource { v0, prev };

struct ModelConfig {
  int word_dim = 300;
  int entity_dim = 50;
  int num_step = 3;
  int heads = 2;
  int num_relations = 0;
  InteractionVariant variant = InteractionVariant::transformer;
  GateSource gate_source = GateSource::v0;
  ScoreFn score_fn = ScoreFn::bilinear;
  double dropout = 0.30;
  bool per_step_loss = false;

  static ModelConfig from_experiment(const ExperimentConfig& cfg, int32_t num_relations);
};

struct CandidateState {
  Matrix v;  // n_c x d
  int step = 0;
};

struct RelationState {
  Eigen::VectorXd s_r;  // n_r
};

struct Prediction {
  Eigen::VectorXd p_c;  // over candidates
  Eigen::VectorXd p_r;  // over relations
};

// V_C0 = W_C * P * V_R; shapes must agree.
Matrix init_candidates(const Matrix& wc, const Matrix& prior, const Matrix& v_r);

// Distribution over relations on edges incident to gold answers inside the
// subgraph. When no gold answer touches the subgraph the result is uniform
// over the subgraph's relations and *valid is set false (excluded from the
// auxiliary loss).
Eigen::VectorXd gold_relation_distribution(const Subgraph& sub,
                                           const std::vector<EntityId>& answers,
                                           int32_t num_relations, bool* valid = nullptr);

// sum over target>0 of t * (log t - log(p + eps))
double kl_divergence(const Eigen::VectorXd& target, const Eigen::VectorXd& pred,
                     double eps = 1e-12);

struct LossBreakdown {
  double total = 0.0;
  double l_c = 0.0;
  double l_r = 0.0;
  bool has_c = false;
  bool has_r = false;
};

// total = lambda * L_c + (1 - lambda) * L_r over the terms that apply;
// an all-zero gold_c drops the L_c term (reported via has_c).
LossBreakdown compute_loss(const Prediction& pred, const Eigen::VectorXd& gold_c,
                           const Eigen::VectorXd& gold_r, bool gold_r_valid, double lambda);

// Per-example tensors precomputed once for the training loop.
struct TrainingExample {
  const PreparedExample* src = nullptr;
  std::vector<int> token_ids;
  Matrix wc_prior;           // W_C * P, n_c x n_r
  Eigen::VectorXd s_r0;      // initial relation state
  Eigen::VectorXd gold_c;    // over candidates; empty when no answer is a candidate
  Eigen::VectorXd gold_r;
  bool gold_r_valid = false;
};

// Multi-step reasoner with QA-VGAE-enhanced candidate representations and
// the auxiliary surrounding-relation head. Owns every trainable parameter.
class Model {
 public:
  Model(ModelConfig cfg, EmbeddingTable table, Matrix relation_prior, uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  const Matrix& relation_prior() const { return prior_; }
  const EmbeddingTable& embedding_table() const { return table_; }
  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }
  const QuestionEncoder& encoder() const { return encoder_; }
  Matrix relation_vectors() const;  // current V_R
  Matrix current_embeddings() const;

  // spec-level operations (inference path)
  QuestionEncoding encode_question(const Matrix& embedded) const;
  InstructionState initial_instruction() const;
  InstructionState instruction_step(const InstructionState& prev,
                                    const QuestionEncoding& enc) const;
  std::pair<CandidateState, RelationState> reason_step(const CandidateState& cand,
                                                       const Eigen::VectorXd& s_t,
                                                       const Matrix& v_c0,
                                                       const RelationState& rel) const;
  Prediction predict(const CandidateState& cand, const RelationState& rel) const;
  // pre-interaction fusion, exposed for verification
  Matrix fuse_candidates(const Matrix& v_prev, const Eigen::VectorXd& s_t,
                         const Matrix& v_c0, int step) const;

  TrainingExample make_training_example(const PreparedExample& pe) const;

  struct Trace {
    Prediction pred;
    Matrix v_final;
    Eigen::VectorXd s_r_final;
  };
  Trace run_example(const QAExample& ex) const;
  Trace run_training_example(const TrainingExample& te) const;

  // forward + backward for one example; gradients are accumulated into the
  // store scaled by grad_scale. Dropout is active iff dropout_rng != nullptr.
  LossBreakdown forward_backward(const TrainingExample& te, double lambda,
                                 Rng* dropout_rng, double grad_scale);
  double example_loss(const TrainingExample& te, double lambda) const;

  std::vector<Matrix> snapshot_params() const;
  void restore_params(const std::vector<Matrix>& values);

 private:
  struct ForwardOutputs {
    ad::Var p_c;
    ad::Var p_r;
    ad::Var v_final;
    ad::Var s_r_final;
    std::vector<ad::Var> step_p_c;
    std::vector<ad::Var> step_p_r;
  };
  ForwardOutputs forward(ad::Tape& t, const nn::BoundParams& bound,
                         const std::vector<int>& token_ids, const Matrix& wc_prior,
                         const Eigen::VectorXd& s_r0, Rng* dropout_rng) const;
  ad::Var interaction(ad::Tape& t, const nn::BoundParams& bound, ad::Var x) const;
  ad::Var fuse(ad::Tape& t, const nn::BoundParams& bound, ad::Var v_prev, ad::Var s_t,
               ad::Var v_c0, int step) const;

  ModelConfig cfg_;
  EmbeddingTable table_;
  Matrix prior_;
  QuestionEncoder encoder_;
  nn::ParamStore store_;

  // parameter indices
  int emb_ = -1;
  int v_r_ = -1;
  int gate_ = -1;
  std::vector<int> fuse_w_, fuse_b_;
  std::vector<int> rel_w_, rel_b_;
  std::vector<int> head_c_, head_r_;
  // interaction (one variant registered per model)
  int int_w_ = -1, int_b_ = -1;
  std::vector<int> tf_wq_, tf_wk_, tf_wv_;
  int tf_wo_ = -1, tf_bo_ = -1;
  int tf_ln1_g_ = -1, tf_ln1_b_ = -1, tf_ln2_g_ = -1, tf_ln2_b_ = -1;
  int tf_ffn_w1_ = -1, tf_ffn_b1_ = -1, tf_ffn_w2_ = -1, tf_ffn_b2_ = -1;
  int rec_wx_[4] = {-1, -1, -1, -1};
  int rec_wh_[4] = {-1, -1, -1, -1};
  int rec_b_[4] = {-1, -1, -1, -1};
};

struct TrainSettings {
  double learning_rate = 8e-4;
  int batch_size = 40;
  int num_epoch = 200;
  double lambda = 0.5;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double grad_clip = 0.0;
  double f1_rho = 0.5;
  uint64_t seed = 17;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double loss_c = 0.0;
  double loss_r = 0.0;
  double lr = 0.0;
  double valid_hits = 0.0;
  double valid_f1 = 0.0;
  int skipped = 0;  // examples with no usable supervision
  bool best = false;
};

struct ReasonerTrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = -1;
  double best_valid_hits = -1.0;
  std::vector<Matrix> best_params;
};

// Mini-batch training with linearly decayed learning rate; evaluates on the
// validation set each epoch and snapshots the best parameters by Hits@1.
ReasonerTrainResult train_reasoner(Model& model, const std::vector<PreparedExample>& train,
                                   const std::vector<PreparedExample>& valid,
                                   const TrainSettings& settings);

std::vector<PredictionRecord> predict_dataset(const Model& model,
                                              const std::vector<PreparedExample>& items);

}  // namespace kbqa
