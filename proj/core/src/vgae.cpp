#include "kbqa/vgae.hpp"

#include "json.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "kbqa/autodiff.hpp"
#include "kbqa/nn.hpp"

namespace kbqa {

using nlohmann::json;

RelationGraph build_relation_graph(const KnowledgeBase& kb, int tau) {
  if (tau <= 0) throw StageError("build_relation_graph: tau must be positive");
  int32_t n = kb.num_relations();
  RelationGraph g;
  g.tau = tau;
  g.adjacency = Matrix::Identity(n, n);
  g.features = Matrix::Zero(n, n);
  for (const auto& e : relation_orient(kb)) {
    g.adjacency(e.first, e.second) = 1.0;
    g.features(e.first, e.second) =
        std::min<double>(static_cast<double>(e.shared_entities), static_cast<double>(tau));
  }
  std::vector<int> degree(static_cast<size_t>(n), 0);
  for (const auto& t : kb.triples) degree[static_cast<size_t>(t.relation)] += 1;
  for (int32_t i = 0; i < n; ++i) {
    g.features(i, i) = std::min<double>(static_cast<double>(degree[static_cast<size_t>(i)]),
                                        static_cast<double>(tau));
  }
  return g;
}

namespace {

Matrix normalized_adjacency(const Matrix& a) {
  Eigen::VectorXd deg = a.rowwise().sum();
  Eigen::VectorXd inv_sqrt = deg.array().rsqrt();
  return inv_sqrt.asDiagonal() * a * inv_sqrt.asDiagonal();
}

struct LossPieces {
  ad::Var loss;
  ad::Var mu;
  ad::Var log_sigma;
};

LossPieces build_vgae_loss(ad::Tape& t, ad::Var w0, ad::Var w_mu, ad::Var w_sigma,
                           const RelationGraph& g, const Matrix& noise, double kl_weight,
                           VgaeCompound compound) {
  double n = static_cast<double>(g.size());
  Matrix ahat = normalized_adjacency(g.adjacency);
  ad::Var ax = t.constant(ahat * g.features);
  ad::Var h = t.tanh(t.matmul(ax, w0));
  ad::Var ah = t.matmul(t.constant(ahat), h);
  ad::Var mu = t.matmul(ah, w_mu);
  ad::Var log_sigma = t.matmul(ah, w_sigma);

  ad::Var z;
  if (compound == VgaeCompound::sample) {
    z = t.add(mu, t.cmul(t.exp(log_sigma), t.constant(noise)));
  } else {
    z = t.concat_cols(mu, t.exp(log_sigma));
  }
  ad::Var logits = t.matmul(z, t.transpose(z));

  double n_pos = g.adjacency.sum();
  double n_neg = n * n - n_pos;
  double w_neg = n_neg > 0.0 ? n_pos / n_neg : 0.0;
  double norm = 1.0 / (n_pos + w_neg * n_neg);
  ad::Var rec = t.bce_with_logits(logits, g.adjacency, w_neg, norm);
  ad::Var kl = t.gaussian_kl(mu, log_sigma, kl_weight / n);
  return {t.add(rec, kl), mu, log_sigma};
}

}  // namespace

VgaeTrainResult train_qa_vgae(const RelationGraph& graph, const VgaeTrainConfig& cfg,
                              uint64_t seed) {
  if (cfg.latent_dim < 2) throw StageError("train_qa_vgae: latent_dim must be >= 2");
  int32_t n = graph.size();
  Rng rng(seed);
  Rng init_rng = rng.fork(0);
  Rng noise_rng = rng.fork(1);

  nn::ParamStore store;
  // zero-init output heads: an untrained encoder emits the zero embedding,
  // so its decoder scores carry no signal (AUC 0.5 by the tie convention)
  int i_w0 = store.add("vgae.w0", nn::glorot_init(n, cfg.hidden_dim, init_rng));
  int i_mu = store.add("vgae.w_mu", Matrix::Zero(cfg.hidden_dim, cfg.latent_dim));
  int i_sig = store.add("vgae.w_sigma", Matrix::Zero(cfg.hidden_dim, cfg.latent_dim));

  nn::Adam adam({0.9, 0.999, 1e-8});
  std::vector<double> history;
  history.reserve(static_cast<size_t>(cfg.epochs));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Matrix noise = nn::normal_init(n, cfg.latent_dim, 1.0, noise_rng);
    ad::Tape tape;
    auto bound = nn::BoundParams::bind(tape, store);
    auto pieces = build_vgae_loss(tape, bound[i_w0], bound[i_mu], bound[i_sig], graph, noise,
                                  cfg.kl_weight, cfg.compound);
    double loss = tape.value(pieces.loss)(0, 0);
    if (!std::isfinite(loss)) {
      throw StageError("train_qa_vgae: non-finite loss at epoch " + std::to_string(epoch) +
                       " (learning_rate=" + format_double(cfg.learning_rate) + ")");
    }
    history.push_back(loss);
    tape.backward(pieces.loss);
    store.zero_grads();
    nn::accumulate_grads(tape, bound, store, 1.0);
    adam.step(store, cfg.learning_rate);
  }

  VgaeTrainResult result;
  result.params.w0 = store.at(i_w0).value;
  result.params.w_mu = store.at(i_mu).value;
  result.params.w_sigma = store.at(i_sig).value;
  result.loss_history = std::move(history);
  return result;
}

Matrix vgae_embed(const VgaeParams& params, const RelationGraph& graph) {
  Matrix ahat = normalized_adjacency(graph.adjacency);
  Matrix h = (ahat * graph.features * params.w0).array().tanh();
  return ahat * h * params.w_mu;
}

Matrix compute_relation_prior(const VgaeParams& params, const RelationGraph& graph) {
  Matrix z = vgae_embed(params, graph);
  Matrix logits = z * z.transpose();
  Matrix p(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    double mx = logits.row(r).maxCoeff();
    Eigen::ArrayXd e = (logits.row(r).array() - mx).exp();
    p.row(r) = (e / e.sum()).matrix();
  }
  return p;
}

double link_prediction_auc(const VgaeParams& params, const RelationGraph& graph,
                           const std::vector<std::pair<int, int>>& positives,
                           const std::vector<std::pair<int, int>>& negatives) {
  if (positives.empty() || negatives.empty()) {
    throw StageError("link_prediction_auc: empty evaluation pair set");
  }
  Matrix z = vgae_embed(params, graph);
  auto score = [&](const std::pair<int, int>& p) {
    double dot = z.row(p.first).dot(z.row(p.second));
    return 1.0 / (1.0 + std::exp(-dot));
  };
  double wins = 0.0;
  for (const auto& p : positives) {
    double sp = score(p);
    for (const auto& q : negatives) {
      double sn = score(q);
      if (sp > sn) {
        wins += 1.0;
      } else if (sp == sn) {
        wins += 0.5;
      }
    }
  }
  return wins / (static_cast<double>(positives.size()) * static_cast<double>(negatives.size()));
}

double vgae_loss_value(const VgaeParams& params, const RelationGraph& graph,
                       const Matrix& noise, double kl_weight) {
  ad::Tape tape;
  ad::Var w0 = tape.input(params.w0, true);
  ad::Var w_mu = tape.input(params.w_mu, true);
  ad::Var w_sig = tape.input(params.w_sigma, true);
  auto pieces =
      build_vgae_loss(tape, w0, w_mu, w_sig, graph, noise, kl_weight, VgaeCompound::sample);
  return tape.value(pieces.loss)(0, 0);
}

VgaeLossGrads vgae_loss_gradients(const VgaeParams& params, const RelationGraph& graph,
                                  const Matrix& noise, double kl_weight) {
  ad::Tape tape;
  ad::Var w0 = tape.input(params.w0, true);
  ad::Var w_mu = tape.input(params.w_mu, true);
  ad::Var w_sig = tape.input(params.w_sigma, true);
  auto pieces =
      build_vgae_loss(tape, w0, w_mu, w_sig, graph, noise, kl_weight, VgaeCompound::sample);
  tape.backward(pieces.loss);
  VgaeLossGrads out;
  out.loss = tape.value(pieces.loss)(0, 0);
  out.d_w0 = tape.grad(w0);
  out.d_w_mu = tape.grad(w_mu);
  out.d_w_sigma = tape.grad(w_sig);
  return out;
}

void write_relation_prior(const std::string& path, const Matrix& prior) {
  if (prior.rows() != prior.cols()) {
    throw StageError("write_relation_prior: matrix must be square");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw StageError("cannot write relation prior: " + path);
  const char magic[4] = {'R', 'P', 'M', '1'};
  uint32_t n = static_cast<uint32_t>(prior.rows());
  uint32_t width = 4;
  out.write(magic, 4);
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  out.write(reinterpret_cast<const char*>(&width), sizeof(width));
  for (Eigen::Index r = 0; r < prior.rows(); ++r) {
    for (Eigen::Index c = 0; c < prior.cols(); ++c) {
      float v = static_cast<float>(prior(r, c));
      out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
  }
}

Matrix load_relation_prior(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StageError("cannot open relation prior: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "RPM1", 4) != 0) {
    throw ParseError(path + ": not a relation prior file (bad magic)");
  }
  uint32_t n = 0, width = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  in.read(reinterpret_cast<char*>(&width), sizeof(width));
  if (!in || width != 4) throw ParseError(path + ": unsupported float width");
  Matrix p(n, n);
  for (uint32_t r = 0; r < n; ++r) {
    for (uint32_t c = 0; c < n; ++c) {
      float v;
      in.read(reinterpret_cast<char*>(&v), sizeof(v));
      if (!in) throw ParseError(path + ": truncated relation prior data");
      p(r, c) = static_cast<double>(v);
    }
  }
  // restore exact row-stochasticity lost to the float32 round trip
  for (uint32_t r = 0; r < n; ++r) {
    double s = p.row(r).sum();
    if (s > 0.0) p.row(r) /= s;
  }
  return p;
}

void write_relation_prior_json(const std::string& path, const Matrix& prior) {
  json j;
  j["n_r"] = prior.rows();
  json rows = json::array();
  for (Eigen::Index r = 0; r < prior.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < prior.cols(); ++c) row.push_back(prior(r, c));
    rows.push_back(std::move(row));
  }
  j["rows"] = std::move(rows);
  write_file(path, j.dump() + "\n");
}

uint64_t matrix_content_hash(const Matrix& m) {
  uint64_t h = fnv1a("matrix");
  h = fnv1a(std::to_string(m.rows()) + "x" + std::to_string(m.cols()), h);
  h = fnv1a(std::string_view(reinterpret_cast<const char*>(m.data()),
                             static_cast<size_t>(m.size()) * sizeof(double)),
            h);
  return h;
}

}  // namespace kbqa
