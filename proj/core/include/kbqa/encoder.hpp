#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "kbqa/kb.hpp"
#include "kbqa/nn.hpp"
#include "kbqa/rng.hpp"

namespace kbqa {

// Token embedding table. Out-of-vocabulary tokens map to a frozen zero
// vector; they never receive gradient.
struct EmbeddingTable {
  Vocab vocab;
  Matrix vectors;  // |vocab| x word_dim

  int word_dim() const { return static_cast<int>(vectors.cols()); }
  int token_index(const std::string& token) const;  // -1 when OOV

  static EmbeddingTable random_init(const std::vector<std::string>& tokens, int dim,
                                    Rng& rng);
  // text format: `token v1 v2 ... v<dim>` per line
  static EmbeddingTable load_text(const std::string& path, int dim);
};

// Row j is the vector of token j; OOV rows are zero.
Matrix embed_question(const std::vector<std::string>& tokens, const EmbeddingTable& table);

struct QuestionEncoding {
  Eigen::VectorXd h_last;  // d
  Matrix token_states;     // n x d
};

struct InstructionState {
  Eigen::VectorXd s;  // d
  int step = 0;
  Eigen::VectorXd attention;  // weights over tokens from the producing step
};

enum class ScoreFn { bilinear, dot };

// Recurrent question encoder plus the per-step instruction attention.
// Parameters live in an external ParamStore so the reasoner can share one
// optimizer across the whole model.
class QuestionEncoder {
 public:
  QuestionEncoder(int word_dim, int d, int num_step, ScoreFn score_fn);
  void register_params(nn::ParamStore& store, Rng& rng);

  struct TapeEncoding {
    ad::Var h_last;        // 1 x d
    ad::Var token_states;  // n x d
  };
  TapeEncoding encode(ad::Tape& t, const nn::BoundParams& bound, ad::Var embedded) const;
  // returns (s_t, attention weights), both 1 x n-or-d row vars
  std::pair<ad::Var, ad::Var> instruction(ad::Tape& t, const nn::BoundParams& bound,
                                          ad::Var s_prev, const TapeEncoding& enc,
                                          int step) const;
  ad::Var initial_instruction(ad::Tape& t, const nn::BoundParams& bound) const;

  // plain inference wrappers over the tape path
  QuestionEncoding encode_question(const Matrix& embedded, const nn::ParamStore& store) const;
  InstructionState instruction_step(const InstructionState& prev, const QuestionEncoding& enc,
                                    const nn::ParamStore& store) const;
  InstructionState initial_state(const nn::ParamStore& store) const;

  int d() const { return d_; }
  int num_step() const { return num_step_; }

 private:
  int word_dim_;
  int d_;
  int num_step_;
  ScoreFn score_fn_;
  // parameter indices
  int lstm_wx_[4] = {-1, -1, -1, -1};
  int lstm_wh_[4] = {-1, -1, -1, -1};
  int lstm_b_[4] = {-1, -1, -1, -1};
  int proj_w_ = -1, proj_b_ = -1;
  int s0_ = -1;
  std::vector<int> mlp_w1_, mlp_b1_, mlp_w2_, mlp_b2_;  // per step
  std::vector<int> score_w_;                            // per step (bilinear only)
};

}  // namespace kbqa
