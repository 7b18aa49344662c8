#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "kbqa/rng.hpp"

namespace kbqa::ad {

using Matrix = Eigen::MatrixXd;

// Handle into a Tape. Cheap to copy; only valid for the tape that made it.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape over dense double matrices. Nodes are appended in
// topological order, so backward() is a single reverse sweep. One tape per
// forward pass; not thread safe, but independent tapes may run in parallel.
class Tape {
 public:
  Var input(Matrix value, bool needs_grad = false);
  Var constant(Matrix value) { return input(std::move(value), false); }
  Var scalar(double v);

  const Matrix& value(Var v) const;
  // Gradient accumulated by backward(); zero matrix if the node was never
  // touched by the sweep.
  Matrix grad(Var v) const;

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var neg(Var a);
  Var cmul(Var a, Var b);            // elementwise product, same shape
  Var scale(Var a, double s);
  Var add_scalar(Var a, double s);
  Var matmul(Var a, Var b);
  Var transpose(Var a);
  Var concat_cols(Var a, Var b);
  Var concat_rows(Var a, Var b);
  Var gather_rows(Var a, std::vector<int> rows);  // row id -1 yields a zero row
  Var row_scale(Var a, Var v);       // scale each row of a by the 1xC vector v
  Var add_row_vector(Var a, Var v);  // broadcast 1xC down the rows
  Var sub_col_vector(Var a, Var v);  // broadcast Nx1 across the columns
  Var div_col_vector(Var a, Var v);
  Var row_sum(Var a);                // Nx1
  Var total_sum(Var a);              // 1x1
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var exp(Var a);
  Var log(Var a);                    // argument must stay positive
  Var sqrt(Var a);
  Var square(Var a);
  Var softmax_rows(Var a);
  // Inverted dropout: scales kept entries by 1/(1-rate). rate <= 0 is identity.
  Var dropout(Var a, double rate, Rng& rng);

  // sum over entries with target > 0 of t * (log t - log(p + eps)); 1x1
  Var kl_to_target(Var pred, const Matrix& target, double eps = 1e-12);
  // norm * sum_ij w_ij * bce(logit_ij, t_ij), w = t + negative_weight*(1-t); 1x1
  Var bce_with_logits(Var logits, const Matrix& targets, double negative_weight,
                      double norm);
  // scale * sum 0.5*(exp(2*ls) + mu^2 - 1 - 2*ls); 1x1
  Var gaussian_kl(Var mu, Var log_sigma, double scale);

  void backward(Var root);  // root must be 1x1
  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool grad_init = false;
    std::function<void(Tape&, const Matrix&)> pull;  // propagate grad to parents
  };
  std::vector<Node> nodes_;

  Var emplace(Matrix value, std::function<void(Tape&, const Matrix&)> pull);
  void accumulate(int id, const Matrix& g);
  const Matrix& val(int id) const { return nodes_[static_cast<size_t>(id)].value; }
};

// x*w then broadcast-add b when b is valid
Var linear(Tape& t, Var x, Var w, Var b);
// per-row normalization with learned gain/bias (both 1xC)
Var layer_norm(Tape& t, Var x, Var gain, Var bias, double eps = 1e-5);

}  // namespace kbqa::ad
