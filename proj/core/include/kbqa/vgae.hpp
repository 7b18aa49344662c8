#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "kbqa/kb.hpp"
#include "kbqa/rng.hpp"

namespace kbqa {

using Matrix = Eigen::MatrixXd;

// Relation co-occurrence graph. adjacency is binary and symmetric with unit
// diagonal (self loops added for message passing); features holds clamped
// shared-entity counts, with relation degrees (clamped) on the diagonal.
struct RelationGraph {
  Matrix adjacency;
  Matrix features;
  int tau = 2000;

  int32_t size() const { return static_cast<int32_t>(adjacency.rows()); }
};

RelationGraph build_relation_graph(const KnowledgeBase& kb, int tau);

// Two-layer GCN encoder weights; the first layer is shared by the mean and
// log-std heads.
struct VgaeParams {
  Matrix w0;       // in -> hidden
  Matrix w_mu;     // hidden -> latent
  Matrix w_sigma;  // hidden -> latent
  int latent_dim() const { return static_cast<int>(w_mu.cols()); }
};

enum class VgaeCompound { sample, concat };

struct VgaeTrainConfig {
  int hidden_dim = 64;
  int latent_dim = 32;
  double learning_rate = 0.01;
  int epochs = 200;
  double kl_weight = 0.05;
  VgaeCompound compound = VgaeCompound::sample;
};

struct VgaeTrainResult {
  VgaeParams params;
  std::vector<double> loss_history;  // total loss per epoch
};

// Symmetric-normalized message passing, reparameterized latent samples,
// inner-product decoder with a logistic link; the reconstruction loss
// reweights the negative class by the positive/negative edge ratio.
// Aborts with diagnostics if the loss turns non-finite.
VgaeTrainResult train_qa_vgae(const RelationGraph& graph, const VgaeTrainConfig& cfg,
                              uint64_t seed);

// Deterministic encoder output (mean head only, no sampling).
Matrix vgae_embed(const VgaeParams& params, const RelationGraph& graph);

// Row-stochastic relation prior: row-wise softmax of Z * Z^T over the mean
// embeddings.
Matrix compute_relation_prior(const VgaeParams& params, const RelationGraph& graph);

// Decoder-score AUC over held-out pairs; ties count one half.
double link_prediction_auc(const VgaeParams& params, const RelationGraph& graph,
                           const std::vector<std::pair<int, int>>& positives,
                           const std::vector<std::pair<int, int>>& negatives);

// Analytic gradients of the training loss at fixed reparameterization noise,
// for gradient verification. Returns (loss, d w0, d w_mu, d w_sigma).
struct VgaeLossGrads {
  double loss;
  Matrix d_w0;
  Matrix d_w_mu;
  Matrix d_w_sigma;
};
VgaeLossGrads vgae_loss_gradients(const VgaeParams& params, const RelationGraph& graph,
                                  const Matrix& noise, double kl_weight);
double vgae_loss_value(const VgaeParams& params, const RelationGraph& graph,
                       const Matrix& noise, double kl_weight);

// ---- relation prior persistence ----
// Binary layout: magic "RPM1", uint32 n_r, uint32 float width (4), then
// row-major float32 data. Rows are renormalized on load to restore exact
// stochasticity after the float32 round trip.
void write_relation_prior(const std::string& path, const Matrix& prior);
Matrix load_relation_prior(const std::string& path);
void write_relation_prior_json(const std::string& path, const Matrix& prior);

uint64_t matrix_content_hash(const Matrix& m);

}  // namespace kbqa
