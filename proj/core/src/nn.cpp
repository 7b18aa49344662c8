#include "kbqa/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace kbqa::nn {

int ParamStore::add(const std::string& name, Matrix init) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
  Param p;
  p.name = name;
  p.grad = Matrix::Zero(init.rows(), init.cols());
  p.m = Matrix::Zero(init.rows(), init.cols());
  p.v = Matrix::Zero(init.rows(), init.cols());
  p.value = std::move(init);
  params_.push_back(std::move(p));
  int idx = static_cast<int>(params_.size()) - 1;
  index_[name] = idx;
  return idx;
}

int ParamStore::index_of(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? -1 : it->second;
}

Param& ParamStore::by_name(const std::string& name) {
  int idx = index_of(name);
  if (idx < 0) throw std::out_of_range("no parameter named " + name);
  return params_[static_cast<size_t>(idx)];
}

const Param& ParamStore::by_name(const std::string& name) const {
  int idx = index_of(name);
  if (idx < 0) throw std::out_of_range("no parameter named " + name);
  return params_[static_cast<size_t>(idx)];
}

void ParamStore::zero_grads() {
  for (auto& p : params_) p.grad.setZero();
}

size_t ParamStore::num_scalars() const {
  size_t n = 0;
  for (const auto& p : params_) n += static_cast<size_t>(p.value.size());
  return n;
}

Matrix glorot_init(int rows, int cols, Rng& rng) {
  double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = (rng.uniform() * 2.0 - 1.0) * limit;
  }
  return m;
}

Matrix normal_init(int rows, int cols, double stddev, Rng& rng) {
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = rng.normal(0.0, stddev);
  }
  return m;
}

void Adam::step(ParamStore& params, double lr) {
  ++t_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto& p : params.all()) {
    p.m = cfg_.beta1 * p.m + (1.0 - cfg_.beta1) * p.grad;
    p.v = cfg_.beta2 * p.v.array().matrix() +
          (1.0 - cfg_.beta2) * p.grad.array().square().matrix();
    Eigen::ArrayXXd mhat = p.m.array() / bc1;
    Eigen::ArrayXXd vhat = p.v.array() / bc2;
    p.value.array() -= lr * mhat / (vhat.sqrt() + cfg_.eps);
  }
}

BoundParams BoundParams::bind(ad::Tape& tape, const ParamStore& store) {
  BoundParams b;
  b.vars.reserve(store.size());
  for (const auto& p : store.all()) b.vars.push_back(tape.input(p.value, true));
  return b;
}

void accumulate_grads(const ad::Tape& tape, const BoundParams& bound, ParamStore& store,
                      double scale) {
  for (size_t i = 0; i < store.size(); ++i) {
    store.at(static_cast<int>(i)).grad +=
        tape.grad(bound.vars[i]) * scale;
  }
}

double clip_global_norm(ParamStore& store, double max_norm) {
  double sq = 0.0;
  for (const auto& p : store.all()) sq += p.grad.squaredNorm();
  double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm && norm > 0.0) {
    double f = max_norm / norm;
    for (auto& p : store.all()) p.grad *= f;
  }
  return norm;
}

}  // namespace kbqa::nn
