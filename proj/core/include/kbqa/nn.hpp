#pragma once

#include <Eigen/Dense>
#include <string>
#include <unordered_map>
#include <vector>

#include "kbqa/autodiff.hpp"
#include "kbqa/rng.hpp"

namespace kbqa::nn {

using Matrix = Eigen::MatrixXd;

struct Param {
  std::string name;
  Matrix value;
  Matrix grad;  // accumulated across a mini-batch
  Matrix m;     // Adam first moment
  Matrix v;     // Adam second moment
};

class ParamStore {
 public:
  int add(const std::string& name, Matrix init);
  Param& at(int idx) { return params_[static_cast<size_t>(idx)]; }
  const Param& at(int idx) const { return params_[static_cast<size_t>(idx)]; }
  int index_of(const std::string& name) const;  // -1 if absent
  Param& by_name(const std::string& name);
  const Param& by_name(const std::string& name) const;
  size_t size() const { return params_.size(); }
  std::vector<Param>& all() { return params_; }
  const std::vector<Param>& all() const { return params_; }
  void zero_grads();
  size_t num_scalars() const;

 private:
  std::vector<Param> params_;
  std::unordered_map<std::string, int> index_;
};

Matrix glorot_init(int rows, int cols, Rng& rng);
Matrix normal_init(int rows, int cols, double stddev, Rng& rng);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
};

// Adam with bias correction; the learning rate is passed per step so the
// caller owns the decay schedule.
class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}
  void step(ParamStore& params, double lr);
  int64_t steps_taken() const { return t_; }

 private:
  AdamConfig cfg_;
  int64_t t_ = 0;
};

// Leaf vars for every parameter of a store, in store order.
struct BoundParams {
  std::vector<ad::Var> vars;
  ad::Var operator[](int idx) const { return vars[static_cast<size_t>(idx)]; }
  static BoundParams bind(ad::Tape& tape, const ParamStore& store);
};

// grad += tape gradient * scale, for every parameter
void accumulate_grads(const ad::Tape& tape, const BoundParams& bound, ParamStore& store,
                      double scale);

// Scales gradients so their global L2 norm is at most max_norm (no-op when
// max_norm <= 0). Returns the pre-clip norm.
double clip_global_norm(ParamStore& store, double max_norm);

}  // namespace kbqa::nn
