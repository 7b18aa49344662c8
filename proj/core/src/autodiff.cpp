#include "kbqa/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace kbqa::ad {

namespace {

void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch (" +
                                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
  }
}

}  // namespace

Var Tape::emplace(Matrix value, std::function<void(Tape&, const Matrix&)> pull) {
  Node n;
  n.value = std::move(value);
  n.pull = std::move(pull);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::input(Matrix value, bool /*needs_grad*/) {
  return emplace(std::move(value), nullptr);
}

Var Tape::scalar(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return constant(std::move(m));
}

const Matrix& Tape::value(Var v) const { return nodes_.at(static_cast<size_t>(v.id)).value; }

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_.at(static_cast<size_t>(v.id));
  if (n.grad_init) return n.grad;
  return Matrix::Zero(n.value.rows(), n.value.cols());
}

void Tape::accumulate(int id, const Matrix& g) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (!n.grad_init) {
    n.grad = g;
    n.grad_init = true;
  } else {
    n.grad += g;
  }
}

void Tape::backward(Var root) {
  Node& r = nodes_.at(static_cast<size_t>(root.id));
  if (r.value.rows() != 1 || r.value.cols() != 1) {
    throw std::invalid_argument("backward: root must be 1x1");
  }
  accumulate(root.id, Matrix::Ones(1, 1));
  for (int id = root.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad_init && n.pull) n.pull(*this, n.grad);
  }
}

Var Tape::add(Var a, Var b) {
  check_same_shape(val(a.id), val(b.id), "add");
  Matrix out = val(a.id) + val(b.id);
  int ia = a.id, ib = b.id;
  return emplace(std::move(out), [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

Var Tape::sub(Var a, Var b) {
  check_same_shape(val(a.id), val(b.id), "sub");
  Matrix out = val(a.id) - val(b.id);
  int ia = a.id, ib = b.id;
  return emplace(std::move(out), [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, -g);
  });
}

Var Tape::neg(Var a) {
  Matrix out = -val(a.id);
  int ia = a.id;
  return emplace(std::move(out), [ia](Tape& t, const Matrix& g) { t.accumulate(ia, -g); });
}

Var Tape::cmul(Var a, Var b) {
  check_same_shape(val(a.id), val(b.id), "cmul");
  Matrix out = val(a.id).cwiseProduct(val(b.id));
  int ia = a.id, ib = b.id;
  return emplace(std::move(out), [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g.cwiseProduct(t.val(ib)));
    t.accumulate(ib, g.cwiseProduct(t.val(ia)));
  });
}

Var Tape::scale(Var a, double s) {
  Matrix out = val(a.id) * s;
  int ia = a.id;
  return emplace(std::move(out), [ia, s](Tape& t, const Matrix& g) { t.accumulate(ia, g * s); });
}

Var Tape::add_scalar(Var a, double s) {
  Matrix out = val(a.id).array() + s;
  int ia = a.id;
  return emplace(std::move(out), [ia](Tape& t, const Matrix& g) { t.accumulate(ia, g); });
}

Var Tape::matmul(Var a, Var b) {
  if (val(a.id).cols() != val(b.id).rows()) {
    throw std::invalid_argument("matmul: inner dimensions differ");
  }
  Matrix out = val(a.id) * val(b.id);
  int ia = a.id, ib = b.id;
  return emplace(std::move(out), [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g * t.val(ib).transpose());
    t.accumulate(ib, t.val(ia).transpose() * g);
  });
}

Var Tape::transpose(Var a) {
  Matrix out = val(a.id).transpose();
  int ia = a.id;
  return emplace(std::move(out),
                 [ia](Tape& t, const Matrix& g) { t.accumulate(ia, g.transpose()); });
}

Var Tape::concat_cols(Var a, Var b) {
  const Matrix& ma = val(a.id);
  const Matrix& mb = val(b.id);
  if (ma.rows() != mb.rows()) throw std::invalid_argument("concat_cols: row mismatch");
  Matrix out(ma.rows(), ma.cols() + mb.cols());
  out.leftCols(ma.cols()) = ma;
  out.rightCols(mb.cols()) = mb;
  int ia = a.id, ib = b.id;
  Eigen::Index ca = ma.cols(), cb = mb.cols();
  return emplace(std::move(out), [ia, ib, ca, cb](Tape& t, const Matrix& g) {
    t.accumulate(ia, g.leftCols(ca));
    t.accumulate(ib, g.rightCols(cb));
  });
}

Var Tape::concat_rows(Var a, Var b) {
  const Matrix& ma = val(a.id);
  const Matrix& mb = val(b.id);
  if (ma.cols() != mb.cols()) throw std::invalid_argument("concat_rows: col mismatch");
  Matrix out(ma.rows() + mb.rows(), ma.cols());
  out.topRows(ma.rows()) = ma;
  out.bottomRows(mb.rows()) = mb;
  int ia = a.id, ib = b.id;
  Eigen::Index ra = ma.rows(), rb = mb.rows();
  return emplace(std::move(out), [ia, ib, ra, rb](Tape& t, const Matrix& g) {
    t.accumulate(ia, g.topRows(ra));
    t.accumulate(ib, g.bottomRows(rb));
  });
}

Var Tape::gather_rows(Var a, std::vector<int> rows) {
  const Matrix& ma = val(a.id);
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(rows.size()), ma.cols());
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= 0) out.row(static_cast<Eigen::Index>(i)) = ma.row(rows[i]);
  }
  int ia = a.id;
  return emplace(std::move(out), [ia, rows = std::move(rows)](Tape& t, const Matrix& g) {
    Matrix da = Matrix::Zero(t.val(ia).rows(), t.val(ia).cols());
    for (size_t i = 0; i < rows.size(); ++i) {
      if (rows[i] >= 0) da.row(rows[i]) += g.row(static_cast<Eigen::Index>(i));
    }
    t.accumulate(ia, da);
  });
}

Var Tape::row_scale(Var a, Var v) {
  const Matrix& ma = val(a.id);
  const Matrix& mv = val(v.id);
  if (mv.rows() != 1 || mv.cols() != ma.cols()) {
    throw std::invalid_argument("row_scale: v must be 1 x cols(a)");
  }
  Matrix out = ma.array().rowwise() * mv.row(0).array();
  int ia = a.id, iv = v.id;
  return emplace(std::move(out), [ia, iv](Tape& t, const Matrix& g) {
    t.accumulate(ia, g.array().rowwise() * t.val(iv).row(0).array());
    Matrix dv = (g.cwiseProduct(t.val(ia))).colwise().sum();
    t.accumulate(iv, dv);
  });
}

Var Tape::add_row_vector(Var a, Var v) {
  const Matrix& ma = val(a.id);
  const Matrix& mv = val(v.id);
  if (mv.rows() != 1 || mv.cols() != ma.cols()) {
    throw std::invalid_argument("add_row_vector: v must be 1 x cols(a)");
  }
  Matrix out = ma.array().rowwise() + mv.row(0).array();
  int ia = a.id, iv = v.id;
  return emplace(std::move(out), [ia, iv](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(iv, g.colwise().sum());
  });
}

Var Tape::sub_col_vector(Var a, Var v) {
  const Matrix& ma = val(a.id);
  const Matrix& mv = val(v.id);
  if (mv.cols() != 1 || mv.rows() != ma.rows()) {
    throw std::invalid_argument("sub_col_vector: v must be rows(a) x 1");
  }
  Matrix out = ma.array().colwise() - mv.col(0).array();
  int ia = a.id, iv = v.id;
  return emplace(std::move(out), [ia, iv](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(iv, -g.rowwise().sum());
  });
}

Var Tape::div_col_vector(Var a, Var v) {
  const Matrix& ma = val(a.id);
  const Matrix& mv = val(v.id);
  if (mv.cols() != 1 || mv.rows() != ma.rows()) {
    throw std::invalid_argument("div_col_vector: v must be rows(a) x 1");
  }
  Matrix out = ma.array().colwise() / mv.col(0).array();
  int ia = a.id, iv = v.id;
  return emplace(std::move(out), [ia, iv](Tape& t, const Matrix& g) {
    const Matrix& av = t.val(ia);
    const Matrix& vv = t.val(iv);
    t.accumulate(ia, g.array().colwise() / vv.col(0).array());
    Matrix dv = -(g.cwiseProduct(av)).rowwise().sum();
    dv.array() /= (vv.col(0).array() * vv.col(0).array());
    t.accumulate(iv, dv);
  });
}

Var Tape::row_sum(Var a) {
  Matrix out = val(a.id).rowwise().sum();
  int ia = a.id;
  return emplace(std::move(out), [ia](Tape& t, const Matrix& g) {
    const Matrix& av = t.val(ia);
    Matrix da = g.col(0).replicate(1, av.cols());
    t.accumulate(ia, da);
  });
}

Var Tape::total_sum(Var a) {
  Matrix out(1, 1);
  out(0, 0) = val(a.id).sum();
  int ia = a.id;
  return emplace(std::move(out), [ia](Tape& t, const Matrix& g) {
    const Matrix& av = t.val(ia);
    t.accumulate(ia, Matrix::Constant(av.rows(), av.cols(), g(0, 0)));
  });
}

Var Tape::tanh(Var a) {
  Matrix out = val(a.id).array().tanh();
  int ia = a.id;
  Var res = emplace(std::move(out), nullptr);
  int ir = res.id;
  nodes_[static_cast<size_t>(ir)].pull = [ia, ir](Tape& t, const Matrix& g) {
    const Matrix& y = t.val(ir);
    t.accumulate(ia, (g.array() * (1.0 - y.array().square())).matrix());
  };
  return res;
}

Var Tape::sigmoid(Var a) {
  Matrix out = (1.0 / (1.0 + (-val(a.id).array()).exp())).matrix();
  int ia = a.id;
  Var res = emplace(std::move(out), nullptr);
  int ir = res.id;
  nodes_[static_cast<size_t>(ir)].pull = [ia, ir](Tape& t, const Matrix& g) {
    const Matrix& y = t.val(ir);
    t.accumulate(ia, (g.array() * y.array() * (1.0 - y.array())).matrix());
  };
  return res;
}

Var Tape::exp(Var a) {
  Matrix out = val(a.id).array().exp();
  int ia = a.id;
  Var res = emplace(std::move(out), nullptr);
  int ir = res.id;
  nodes_[static_cast<size_t>(ir)].pull = [ia, ir](Tape& t, const Matrix& g) {
    t.accumulate(ia, g.cwiseProduct(t.val(ir)));
  };
  return res;
}

Var Tape::log(Var a) {
  Matrix out = val(a.id).array().log();
  int ia = a.id;
  return emplace(std::move(out), [ia](Tape& t, const Matrix& g) {
    t.accumulate(ia, (g.array() / t.val(ia).array()).matrix());
  });
}

Var Tape::sqrt(Var a) {
  Matrix out = val(a.id).array().sqrt();
  int ia = a.id;
  Var res = emplace(std::move(out), nullptr);
  int ir = res.id;
  nodes_[static_cast<size_t>(ir)].pull = [ia, ir](Tape& t, const Matrix& g) {
    t.accumulate(ia, (g.array() * 0.5 / t.val(ir).array()).matrix());
  };
  return res;
}

Var Tape::square(Var a) {
  Matrix out = val(a.id).array().square();
  int ia = a.id;
  return emplace(std::move(out), [ia](Tape& t, const Matrix& g) {
    t.accumulate(ia, (g.array() * 2.0 * t.val(ia).array()).matrix());
  });
}

Var Tape::softmax_rows(Var a) {
  const Matrix& ma = val(a.id);
  Matrix out(ma.rows(), ma.cols());
  for (Eigen::Index r = 0; r < ma.rows(); ++r) {
    double mx = ma.row(r).maxCoeff();
    Eigen::ArrayXd e = (ma.row(r).array() - mx).exp();
    out.row(r) = (e / e.sum()).matrix();
  }
  int ia = a.id;
  Var res = emplace(std::move(out), nullptr);
  int ir = res.id;
  nodes_[static_cast<size_t>(ir)].pull = [ia, ir](Tape& t, const Matrix& g) {
    const Matrix& y = t.val(ir);
    Matrix da(y.rows(), y.cols());
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      double dot = g.row(r).dot(y.row(r));
      da.row(r) = (y.row(r).array() * (g.row(r).array() - dot)).matrix();
    }
    t.accumulate(ia, da);
  };
  return res;
}

Var Tape::dropout(Var a, double rate, Rng& rng) {
  if (rate <= 0.0) return a;
  if (rate >= 1.0) throw std::invalid_argument("dropout: rate must be < 1");
  const Matrix& ma = val(a.id);
  Matrix mask(ma.rows(), ma.cols());
  double keep_scale = 1.0 / (1.0 - rate);
  for (Eigen::Index r = 0; r < ma.rows(); ++r) {
    for (Eigen::Index c = 0; c < ma.cols(); ++c) {
      mask(r, c) = rng.uniform() < rate ? 0.0 : keep_scale;
    }
  }
  Matrix out = ma.cwiseProduct(mask);
  int ia = a.id;
  return emplace(std::move(out), [ia, mask = std::move(mask)](Tape& t, const Matrix& g) {
    t.accumulate(ia, g.cwiseProduct(mask));
  });
}

Var Tape::kl_to_target(Var pred, const Matrix& target, double eps) {
  const Matrix& p = val(pred.id);
  check_same_shape(p, target, "kl_to_target");
  double acc = 0.0;
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
      double tv = target(r, c);
      if (tv > 0.0) acc += tv * (std::log(tv) - std::log(p(r, c) + eps));
    }
  }
  Matrix out(1, 1);
  out(0, 0) = acc;
  int ip = pred.id;
  return emplace(std::move(out), [ip, target, eps](Tape& t, const Matrix& g) {
    const Matrix& pv = t.val(ip);
    Matrix dp = Matrix::Zero(pv.rows(), pv.cols());
    for (Eigen::Index r = 0; r < pv.rows(); ++r) {
      for (Eigen::Index c = 0; c < pv.cols(); ++c) {
        double tv = target(r, c);
        if (tv > 0.0) dp(r, c) = -tv / (pv(r, c) + eps);
      }
    }
    t.accumulate(ip, dp * g(0, 0));
  });
}

Var Tape::bce_with_logits(Var logits, const Matrix& targets, double negative_weight,
                          double norm) {
  const Matrix& x = val(logits.id);
  check_same_shape(x, targets, "bce_with_logits");
  double acc = 0.0;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      double xv = x(r, c), tv = targets(r, c);
      double w = tv + negative_weight * (1.0 - tv);
      double bce = std::max(xv, 0.0) - xv * tv + std::log1p(std::exp(-std::abs(xv)));
      acc += w * bce;
    }
  }
  Matrix out(1, 1);
  out(0, 0) = acc * norm;
  int ix = logits.id;
  return emplace(std::move(out),
                 [ix, targets, negative_weight, norm](Tape& t, const Matrix& g) {
                   const Matrix& xv = t.val(ix);
                   Matrix dx(xv.rows(), xv.cols());
                   for (Eigen::Index r = 0; r < xv.rows(); ++r) {
                     for (Eigen::Index c = 0; c < xv.cols(); ++c) {
                       double s = 1.0 / (1.0 + std::exp(-xv(r, c)));
                       double tv = targets(r, c);
                       double w = tv + negative_weight * (1.0 - tv);
                       dx(r, c) = w * (s - tv);
                     }
                   }
                   t.accumulate(ix, dx * (norm * g(0, 0)));
                 });
}

Var Tape::gaussian_kl(Var mu, Var log_sigma, double scale) {
  const Matrix& m = val(mu.id);
  const Matrix& ls = val(log_sigma.id);
  check_same_shape(m, ls, "gaussian_kl");
  double acc = 0.5 * ((2.0 * ls.array()).exp() + m.array().square() - 1.0 -
                      2.0 * ls.array())
                         .sum();
  Matrix out(1, 1);
  out(0, 0) = acc * scale;
  int im = mu.id, il = log_sigma.id;
  return emplace(std::move(out), [im, il, scale](Tape& t, const Matrix& g) {
    double f = scale * g(0, 0);
    t.accumulate(im, t.val(im) * f);
    t.accumulate(il, (((2.0 * t.val(il).array()).exp() - 1.0) * f).matrix());
  });
}

Var linear(Tape& t, Var x, Var w, Var b) {
  Var y = t.matmul(x, w);
  if (b.valid()) y = t.add_row_vector(y, b);
  return y;
}

Var layer_norm(Tape& t, Var x, Var gain, Var bias, double eps) {
  double cols = static_cast<double>(t.value(x).cols());
  Var mean = t.scale(t.row_sum(x), 1.0 / cols);
  Var centered = t.sub_col_vector(x, mean);
  Var var = t.scale(t.row_sum(t.square(centered)), 1.0 / cols);
  Var sd = t.sqrt(t.add_scalar(var, eps));
  Var normed = t.div_col_vector(centered, sd);
  return t.add_row_vector(t.row_scale(normed, gain), bias);
}

}  // namespace kbqa::ad
