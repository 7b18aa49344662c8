#include "kbqa/reasoner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace kbqa {

ModelConfig ModelConfig::from_experiment(const ExperimentConfig& cfg, int32_t num_relations) {
  ModelConfig mc;
  mc.word_dim = cfg.word_dim;
  mc.entity_dim = cfg.entity_dim;
  mc.num_step = cfg.num_step;
  mc.heads = cfg.heads;
  mc.num_relations = num_relations;
  if (cfg.variant == "linear") {
    mc.variant = InteractionVariant::linear;
  } else if (cfg.variant == "recurrent") {
    mc.variant = InteractionVariant::recurrent;
  } else if (cfg.variant == "transformer") {
    mc.variant = InteractionVariant::transformer;
  } else {
    throw StageError("unknown interaction variant: " + cfg.variant);
  }
  mc.gate_source = cfg.gate_source == "prev" ? GateSource::prev : GateSource::v0;
  mc.score_fn = cfg.score_fn == "dot" ? ScoreFn::dot : ScoreFn::bilinear;
  mc.dropout = cfg.dropout;
  mc.per_step_loss = cfg.per_step_loss;
  return mc;
}

Matrix init_candidates(const Matrix& wc, const Matrix& prior, const Matrix& v_r) {
  if (wc.cols() != prior.rows() || prior.cols() != v_r.rows()) {
    throw StageError("init_candidates: shape mismatch (" + std::to_string(wc.rows()) + "x" +
                     std::to_string(wc.cols()) + ") * (" + std::to_string(prior.rows()) +
                     "x" + std::to_string(prior.cols()) + ") * (" +
                     std::to_string(v_r.rows()) + "x" + std::to_string(v_r.cols()) + ")");
  }
  return wc * prior * v_r;
}

Eigen::VectorXd gold_relation_distribution(const Subgraph& sub,
                                           const std::vector<EntityId>& answers,
                                           int32_t num_relations, bool* valid) {
  Eigen::VectorXd dist = Eigen::VectorXd::Zero(num_relations);
  std::set<EntityId> gold(answers.begin(), answers.end());
  for (const auto& t : sub.triples) {
    if (gold.count(t.head) || gold.count(t.tail)) dist(t.relation) += 1.0;
  }
  double total = dist.sum();
  if (total > 0.0) {
    dist /= total;
    if (valid) *valid = true;
    return dist;
  }
  if (valid) *valid = false;
  if (!sub.relation_ids.empty()) {
    double u = 1.0 / static_cast<double>(sub.relation_ids.size());
    for (RelationId r : sub.relation_ids) dist(r) = u;
  } else if (num_relations > 0) {
    dist.setConstant(1.0 / static_cast<double>(num_relations));
  }
  return dist;
}

double kl_divergence(const Eigen::VectorXd& target, const Eigen::VectorXd& pred, double eps) {
  if (target.size() != pred.size()) throw StageError("kl_divergence: size mismatch");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < target.size(); ++i) {
    double t = target(i);
    if (t > 0.0) acc += t * (std::log(t) - std::log(pred(i) + eps));
  }
  return acc;
}

LossBreakdown compute_loss(const Prediction& pred, const Eigen::VectorXd& gold_c,
                           const Eigen::VectorXd& gold_r, bool gold_r_valid, double lambda) {
  if (lambda <= 0.0 || lambda > 1.0) {
    throw StageError("compute_loss: lambda must be in (0,1]");
  }
  LossBreakdown out;
  out.has_c = gold_c.size() > 0 && gold_c.sum() > 0.0;
  out.has_r = gold_r_valid && gold_r.size() > 0;
  if (out.has_c) out.l_c = kl_divergence(gold_c, pred.p_c);
  if (out.has_r) out.l_r = kl_divergence(gold_r, pred.p_r);
  out.total = lambda * out.l_c + (1.0 - lambda) * out.l_r;
  return out;
}

Model::Model(ModelConfig cfg, EmbeddingTable table, Matrix relation_prior, uint64_t seed)
    : cfg_(cfg),
      table_(std::move(table)),
      prior_(std::move(relation_prior)),
      encoder_(cfg.word_dim, cfg.entity_dim, cfg.num_step, cfg.score_fn) {
  if (prior_.rows() != cfg_.num_relations || prior_.cols() != cfg_.num_relations) {
    throw StageError("model: relation prior shape does not match num_relations");
  }
  if (table_.word_dim() != cfg_.word_dim) {
    throw StageError("model: embedding table dimension does not match word_dim");
  }
  Rng rng(seed);
  int d = cfg_.entity_dim;
  int n_r = cfg_.num_relations;

  emb_ = store_.add("emb.table", table_.vectors);
  encoder_.register_params(store_, rng);
  v_r_ = store_.add("rel.v_r", nn::normal_init(n_r, d, 0.1, rng));
  gate_ = store_.add("rel.gate", nn::normal_init(1, d, 0.1, rng));
  for (int t = 0; t < cfg_.num_step; ++t) {
    std::string p = "step" + std::to_string(t) + ".";
    fuse_w_.push_back(store_.add(p + "fuse.w", nn::glorot_init(2 * d, d, rng)));
    fuse_b_.push_back(store_.add(p + "fuse.b", Matrix::Zero(1, d)));
    rel_w_.push_back(store_.add(p + "rel.w", nn::glorot_init(2 * n_r, n_r, rng)));
    rel_b_.push_back(store_.add(p + "rel.b", Matrix::Zero(1, n_r)));
    head_c_.push_back(store_.add(p + "head_c", nn::glorot_init(d, 1, rng)));
    head_r_.push_back(store_.add(p + "head_r", nn::glorot_init(n_r, n_r, rng)));
  }
  switch (cfg_.variant) {
    case InteractionVariant::linear:
      int_w_ = store_.add("int.linear.w", nn::glorot_init(d, d, rng));
      int_b_ = store_.add("int.linear.b", Matrix::Zero(1, d));
      break;
    case InteractionVariant::recurrent: {
      static const char* gate_names[4] = {"i", "f", "o", "g"};
      for (int g = 0; g < 4; ++g) {
        rec_wx_[g] = store_.add(std::string("int.rec.wx_") + gate_names[g],
                                nn::glorot_init(d, d, rng));
        rec_wh_[g] = store_.add(std::string("int.rec.wh_") + gate_names[g],
                                nn::glorot_init(d, d, rng));
        rec_b_[g] = store_.add(std::string("int.rec.b_") + gate_names[g], Matrix::Zero(1, d));
      }
      break;
    }
    case InteractionVariant::transformer: {
      if (d % cfg_.heads != 0) throw StageError("model: heads must divide entity_dim");
      int dk = d / cfg_.heads;
      for (int h = 0; h < cfg_.heads; ++h) {
        std::string p = "int.tf.h" + std::to_string(h) + ".";
        tf_wq_.push_back(store_.add(p + "wq", nn::glorot_init(d, dk, rng)));
        tf_wk_.push_back(store_.add(p + "wk", nn::glorot_init(d, dk, rng)));
        tf_wv_.push_back(store_.add(p + "wv", nn::glorot_init(d, dk, rng)));
      }
      tf_wo_ = store_.add("int.tf.wo", nn::glorot_init(d, d, rng));
      tf_bo_ = store_.add("int.tf.bo", Matrix::Zero(1, d));
      tf_ln1_g_ = store_.add("int.tf.ln1.g", Matrix::Ones(1, d));
      tf_ln1_b_ = store_.add("int.tf.ln1.b", Matrix::Zero(1, d));
      tf_ffn_w1_ = store_.add("int.tf.ffn.w1", nn::glorot_init(d, 2 * d, rng));
      tf_ffn_b1_ = store_.add("int.tf.ffn.b1", Matrix::Zero(1, 2 * d));
      tf_ffn_w2_ = store_.add("int.tf.ffn.w2", nn::glorot_init(2 * d, d, rng));
      tf_ffn_b2_ = store_.add("int.tf.ffn.b2", Matrix::Zero(1, d));
      tf_ln2_g_ = store_.add("int.tf.ln2.g", Matrix::Ones(1, d));
      tf_ln2_b_ = store_.add("int.tf.ln2.b", Matrix::Zero(1, d));
      break;
    }
  }
}

Matrix Model::relation_vectors() const { return store_.at(v_r_).value; }

Matrix Model::current_embeddings() const { return store_.at(emb_).value; }

ad::Var Model::interaction(ad::Tape& t, const nn::BoundParams& bound, ad::Var x) const {
  switch (cfg_.variant) {
    case InteractionVariant::linear:
      return ad::linear(t, x, bound[int_w_], bound[int_b_]);
    case InteractionVariant::recurrent: {
      Eigen::Index n = t.value(x).rows();
      ad::Var h = t.constant(Matrix::Zero(1, cfg_.entity_dim));
      ad::Var c = t.constant(Matrix::Zero(1, cfg_.entity_dim));
      ad::Var stacked;
      for (Eigen::Index i = 0; i < n; ++i) {
        ad::Var xi = t.gather_rows(x, {static_cast<int>(i)});
        auto gate = [&](int g) {
          return t.add(
              t.add(t.matmul(xi, bound[rec_wx_[g]]), t.matmul(h, bound[rec_wh_[g]])),
              bound[rec_b_[g]]);
        };
        ad::Var ig = t.sigmoid(gate(0));
        ad::Var fg = t.sigmoid(gate(1));
        ad::Var og = t.sigmoid(gate(2));
        ad::Var cand = t.tanh(gate(3));
        c = t.add(t.cmul(fg, c), t.cmul(ig, cand));
        h = t.cmul(og, t.tanh(c));
        stacked = (i == 0) ? h : t.concat_rows(stacked, h);
      }
      return stacked;
    }
    case InteractionVariant::transformer: {
      int dk = cfg_.entity_dim / cfg_.heads;
      ad::Var heads_out;
      for (int h = 0; h < cfg_.heads; ++h) {
        ad::Var q = t.matmul(x, bound[tf_wq_[static_cast<size_t>(h)]]);
        ad::Var k = t.matmul(x, bound[tf_wk_[static_cast<size_t>(h)]]);
        ad::Var v = t.matmul(x, bound[tf_wv_[static_cast<size_t>(h)]]);
        ad::Var scores = t.scale(t.matmul(q, t.transpose(k)), 1.0 / std::sqrt(double(dk)));
        ad::Var attn = t.softmax_rows(scores);
        ad::Var head = t.matmul(attn, v);
        heads_out = (h == 0) ? head : t.concat_cols(heads_out, head);
      }
      ad::Var projected = ad::linear(t, heads_out, bound[tf_wo_], bound[tf_bo_]);
      ad::Var y = ad::layer_norm(t, t.add(x, projected), bound[tf_ln1_g_], bound[tf_ln1_b_]);
      ad::Var ffn = ad::linear(t, t.tanh(ad::linear(t, y, bound[tf_ffn_w1_], bound[tf_ffn_b1_])),
                               bound[tf_ffn_w2_], bound[tf_ffn_b2_]);
      return ad::layer_norm(t, t.add(y, ffn), bound[tf_ln2_g_], bound[tf_ln2_b_]);
    }
  }
  throw StageError("model: unknown interaction variant");
}

ad::Var Model::fuse(ad::Tape& t, const nn::BoundParams& bound, ad::Var v_prev, ad::Var s_t,
                    ad::Var v_c0, int step) const {
  ad::Var gate = t.cmul(s_t, bound[gate_]);
  ad::Var base = cfg_.gate_source == GateSource::v0 ? v_c0 : v_prev;
  ad::Var gated = t.row_scale(base, gate);
  ad::Var joint = t.concat_cols(v_prev, gated);
  return ad::linear(t, joint, bound[fuse_w_[static_cast<size_t>(step)]],
                    bound[fuse_b_[static_cast<size_t>(step)]]);
}

Model::ForwardOutputs Model::forward(ad::Tape& t, const nn::BoundParams& bound,
                                     const std::vector<int>& token_ids,
                                     const Matrix& wc_prior, const Eigen::VectorXd& s_r0,
                                     Rng* dropout_rng) const {
  if (token_ids.empty()) throw StageError("model forward: empty question");
  if (wc_prior.rows() < 1) throw StageError("model forward: empty candidate set");
  double rate = dropout_rng ? cfg_.dropout : 0.0;

  ad::Var emb = t.gather_rows(bound[emb_], token_ids);
  if (rate > 0.0) emb = t.dropout(emb, rate, *dropout_rng);
  auto enc = encoder_.encode(t, bound, emb);

  ad::Var v_c0 = t.matmul(t.constant(wc_prior), bound[v_r_]);
  ad::Var v = v_c0;
  ad::Var s_r = t.constant(s_r0.transpose());
  ad::Var s = encoder_.initial_instruction(t, bound);

  ForwardOutputs out;
  for (int step = 0; step < cfg_.num_step; ++step) {
    auto [s_new, attn] = encoder_.instruction(t, bound, s, enc, step);
    s = s_new;

    ad::Var fused = fuse(t, bound, v, s, v_c0, step);
    if (rate > 0.0) fused = t.dropout(fused, rate, *dropout_rng);
    v = interaction(t, bound, fused);

    ad::Var srel = t.matmul(s, t.transpose(bound[v_r_]));
    s_r = ad::linear(t, t.concat_cols(srel, s_r), bound[rel_w_[static_cast<size_t>(step)]],
                     bound[rel_b_[static_cast<size_t>(step)]]);

    if (cfg_.per_step_loss || step == cfg_.num_step - 1) {
      ad::Var logits_c = t.transpose(t.matmul(v, bound[head_c_[static_cast<size_t>(step)]]));
      ad::Var p_c = t.softmax_rows(logits_c);
      ad::Var p_r =
          t.softmax_rows(t.matmul(s_r, bound[head_r_[static_cast<size_t>(step)]]));
      out.step_p_c.push_back(p_c);
      out.step_p_r.push_back(p_r);
      if (step == cfg_.num_step - 1) {
        out.p_c = p_c;
        out.p_r = p_r;
      }
    }
  }
  out.v_final = v;
  out.s_r_final = s_r;
  return out;
}

QuestionEncoding Model::encode_question(const Matrix& embedded) const {
  return encoder_.encode_question(embedded, store_);
}

InstructionState Model::initial_instruction() const { return encoder_.initial_state(store_); }

InstructionState Model::instruction_step(const InstructionState& prev,
                                         const QuestionEncoding& enc) const {
  return encoder_.instruction_step(prev, enc, store_);
}

std::pair<CandidateState, RelationState> Model::reason_step(const CandidateState& cand,
                                                            const Eigen::VectorXd& s_t,
                                                            const Matrix& v_c0,
                                                            const RelationState& rel) const {
  if (cand.step >= cfg_.num_step) {
    throw StageError("reason_step: step " + std::to_string(cand.step) + " exceeds num_step");
  }
  ad::Tape t;
  auto bound = nn::BoundParams::bind(t, store_);
  ad::Var v_prev = t.constant(cand.v);
  ad::Var s = t.constant(s_t.transpose());
  ad::Var v0 = t.constant(v_c0);
  ad::Var s_r = t.constant(rel.s_r.transpose());

  ad::Var fused = fuse(t, bound, v_prev, s, v0, cand.step);
  ad::Var v_new = interaction(t, bound, fused);
  ad::Var srel = t.matmul(s, t.transpose(bound[v_r_]));
  ad::Var s_r_new =
      ad::linear(t, t.concat_cols(srel, s_r), bound[rel_w_[static_cast<size_t>(cand.step)]],
                 bound[rel_b_[static_cast<size_t>(cand.step)]]);

  CandidateState next{t.value(v_new), cand.step + 1};
  RelationState rel_next{t.value(s_r_new).row(0).transpose()};
  return {next, rel_next};
}

Prediction Model::predict(const CandidateState& cand, const RelationState& rel) const {
  if (cand.v.rows() == 0) throw StageError("predict: empty candidate set");
  int head = std::min(std::max(cand.step - 1, 0), cfg_.num_step - 1);
  ad::Tape t;
  auto bound = nn::BoundParams::bind(t, store_);
  ad::Var v = t.constant(cand.v);
  ad::Var s_r = t.constant(rel.s_r.transpose());
  ad::Var p_c =
      t.softmax_rows(t.transpose(t.matmul(v, bound[head_c_[static_cast<size_t>(head)]])));
  ad::Var p_r = t.softmax_rows(t.matmul(s_r, bound[head_r_[static_cast<size_t>(head)]]));
  Prediction out;
  out.p_c = t.value(p_c).row(0).transpose();
  out.p_r = t.value(p_r).row(0).transpose();
  return out;
}

Matrix Model::fuse_candidates(const Matrix& v_prev, const Eigen::VectorXd& s_t,
                              const Matrix& v_c0, int step) const {
  ad::Tape t;
  auto bound = nn::BoundParams::bind(t, store_);
  ad::Var fused = fuse(t, bound, t.constant(v_prev), t.constant(s_t.transpose()),
                       t.constant(v_c0), step);
  return t.value(fused);
}

TrainingExample Model::make_training_example(const PreparedExample& pe) const {
  TrainingExample te;
  te.src = &pe;
  te.token_ids.reserve(pe.ex.question.size());
  for (const auto& tok : pe.ex.question) te.token_ids.push_back(table_.token_index(tok));
  Matrix wc = surrounding_relation_matrix(pe.ex.subgraph, cfg_.num_relations);
  te.wc_prior = wc * prior_;
  te.s_r0 = init_relation_state(pe.ex.subgraph, pe.ex.topics, cfg_.num_relations);
  const auto& cands = pe.ex.subgraph.candidates;
  std::set<EntityId> gold(pe.ex.answers.begin(), pe.ex.answers.end());
  std::vector<int> positions;
  for (size_t i = 0; i < cands.size(); ++i) {
    if (gold.count(cands[i])) positions.push_back(static_cast<int>(i));
  }
  if (!positions.empty()) {
    te.gold_c = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cands.size()));
    double u = 1.0 / static_cast<double>(positions.size());
    for (int p : positions) te.gold_c(p) = u;
  }
  te.gold_r = gold_relation_distribution(pe.ex.subgraph, pe.ex.answers, cfg_.num_relations,
                                         &te.gold_r_valid);
  return te;
}

Model::Trace Model::run_training_example(const TrainingExample& te) const {
  ad::Tape t;
  auto bound = nn::BoundParams::bind(t, store_);
  auto out = forward(t, bound, te.token_ids, te.wc_prior, te.s_r0, nullptr);
  Trace trace;
  trace.pred.p_c = t.value(out.p_c).row(0).transpose();
  trace.pred.p_r = t.value(out.p_r).row(0).transpose();
  trace.v_final = t.value(out.v_final);
  trace.s_r_final = t.value(out.s_r_final).row(0).transpose();
  return trace;
}

Model::Trace Model::run_example(const QAExample& ex) const {
  PreparedExample pe;
  pe.ex = ex;
  TrainingExample te = make_training_example(pe);
  // keep the tensors alive for the forward pass below
  return run_training_example(te);
}

namespace {

ad::Var combine_losses(ad::Tape& t, const std::vector<ad::Var>& terms) {
  ad::Var total = terms[0];
  for (size_t i = 1; i < terms.size(); ++i) total = t.add(total, terms[i]);
  return t.scale(total, 1.0 / static_cast<double>(terms.size()));
}

}  // namespace

LossBreakdown Model::forward_backward(const TrainingExample& te, double lambda,
                                      Rng* dropout_rng, double grad_scale) {
  LossBreakdown bd;
  bd.has_c = te.gold_c.size() > 0;
  bd.has_r = te.gold_r_valid;
  if (!bd.has_c && !bd.has_r) return bd;

  ad::Tape t;
  auto bound = nn::BoundParams::bind(t, store_);
  auto out = forward(t, bound, te.token_ids, te.wc_prior, te.s_r0, dropout_rng);

  std::vector<ad::Var> loss_terms;
  ad::Var l_c, l_r;
  if (bd.has_c) {
    std::vector<ad::Var> terms;
    for (ad::Var p : out.step_p_c) terms.push_back(t.kl_to_target(p, te.gold_c.transpose()));
    l_c = combine_losses(t, terms);
    bd.l_c = t.value(l_c)(0, 0);
    loss_terms.push_back(t.scale(l_c, lambda));
  }
  if (bd.has_r) {
    std::vector<ad::Var> terms;
    for (ad::Var p : out.step_p_r) terms.push_back(t.kl_to_target(p, te.gold_r.transpose()));
    l_r = combine_losses(t, terms);
    bd.l_r = t.value(l_r)(0, 0);
    loss_terms.push_back(t.scale(l_r, 1.0 - lambda));
  }
  ad::Var total = loss_terms[0];
  for (size_t i = 1; i < loss_terms.size(); ++i) total = t.add(total, loss_terms[i]);
  bd.total = t.value(total)(0, 0);
  if (!std::isfinite(bd.total)) {
    throw StageError("reasoner: non-finite loss on question id " +
                     std::to_string(te.src ? te.src->qid : -1));
  }
  t.backward(total);
  nn::accumulate_grads(t, bound, store_, grad_scale);
  return bd;
}

double Model::example_loss(const TrainingExample& te, double lambda) const {
  Trace trace = run_training_example(te);
  Eigen::VectorXd gold_c = te.gold_c;
  if (cfg_.per_step_loss) {
    // value check path only supports final-step supervision
    throw StageError("example_loss: per-step loss values not supported here");
  }
  LossBreakdown bd =
      compute_loss(trace.pred, gold_c.size() ? gold_c : Eigen::VectorXd::Zero(0), te.gold_r,
                   te.gold_r_valid, lambda);
  return bd.total;
}

std::vector<Matrix> Model::snapshot_params() const {
  std::vector<Matrix> out;
  out.reserve(store_.size());
  for (const auto& p : store_.all()) out.push_back(p.value);
  return out;
}

void Model::restore_params(const std::vector<Matrix>& values) {
  if (values.size() != store_.size()) throw StageError("restore_params: size mismatch");
  for (size_t i = 0; i < values.size(); ++i) {
    store_.at(static_cast<int>(i)).value = values[i];
  }
}

ReasonerTrainResult train_reasoner(Model& model, const std::vector<PreparedExample>& train,
                                   const std::vector<PreparedExample>& valid,
                                   const TrainSettings& settings) {
  if (train.empty()) throw StageError("train_reasoner: empty training set");
  std::vector<TrainingExample> train_ex;
  train_ex.reserve(train.size());
  for (const auto& pe : train) train_ex.push_back(model.make_training_example(pe));

  std::vector<std::pair<int, std::vector<EntityId>>> valid_gold;
  for (const auto& pe : valid) valid_gold.emplace_back(pe.qid, pe.ex.answers);

  Rng rng(settings.seed);
  Rng shuffle_rng = rng.fork(1);
  Rng dropout_rng = rng.fork(2);

  nn::Adam adam({settings.beta1, settings.beta2, settings.eps});
  int batches_per_epoch =
      static_cast<int>((train_ex.size() + static_cast<size_t>(settings.batch_size) - 1) /
                       static_cast<size_t>(settings.batch_size));
  int64_t total_steps = static_cast<int64_t>(batches_per_epoch) * settings.num_epoch;
  int64_t step_idx = 0;

  ReasonerTrainResult result;
  std::vector<size_t> order(train_ex.size());
  std::iota(order.begin(), order.end(), size_t{0});

  for (int epoch = 0; epoch < settings.num_epoch; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0, lc_sum = 0.0, lr_sum = 0.0;
    int counted = 0, skipped = 0;
    double last_lr = settings.learning_rate;
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(settings.batch_size)) {
      size_t end = std::min(order.size(), start + static_cast<size_t>(settings.batch_size));
      model.params().zero_grads();
      int used = 0;
      for (size_t i = start; i < end; ++i) {
        const TrainingExample& te = train_ex[order[i]];
        if (te.gold_c.size() == 0 && !te.gold_r_valid) {
          ++skipped;
          continue;
        }
        ++used;
      }
      if (used == 0) {
        ++step_idx;
        continue;
      }
      double scale = 1.0 / static_cast<double>(used);
      for (size_t i = start; i < end; ++i) {
        const TrainingExample& te = train_ex[order[i]];
        if (te.gold_c.size() == 0 && !te.gold_r_valid) continue;
        auto bd = model.forward_backward(te, settings.lambda, &dropout_rng, scale);
        loss_sum += bd.total;
        lc_sum += bd.l_c;
        lr_sum += bd.l_r;
        ++counted;
      }
      nn::clip_global_norm(model.params(), settings.grad_clip);
      double frac = total_steps > 1
                        ? static_cast<double>(step_idx) / static_cast<double>(total_steps)
                        : 0.0;
      last_lr = settings.learning_rate * (1.0 - frac);
      adam.step(model.params(), last_lr);
      ++step_idx;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = counted ? loss_sum / counted : 0.0;
    rec.loss_c = counted ? lc_sum / counted : 0.0;
    rec.loss_r = counted ? lr_sum / counted : 0.0;
    rec.lr = last_lr;
    rec.skipped = skipped;
    if (!valid.empty()) {
      auto preds = predict_dataset(model, valid);
      auto report = evaluate(preds, valid_gold, settings.f1_rho);
      rec.valid_hits = report.hits_at_1;
      rec.valid_f1 = report.f1;
    }
    if (rec.valid_hits > result.best_valid_hits) {
      result.best_valid_hits = rec.valid_hits;
      result.best_epoch = epoch;
      result.best_params = model.snapshot_params();
      rec.best = true;
    }
    result.history.push_back(rec);
  }
  if (result.best_params.empty()) result.best_params = model.snapshot_params();
  return result;
}

std::vector<PredictionRecord> predict_dataset(const Model& model,
                                              const std::vector<PreparedExample>& items) {
  std::vector<PredictionRecord> records(items.size());
  parallel_for(items.size(), [&](size_t i) {
    const auto& pe = items[i];
    TrainingExample te = model.make_training_example(pe);
    auto trace = model.run_training_example(te);
    PredictionRecord rec;
    rec.qid = pe.qid;
    rec.candidates = pe.ex.subgraph.candidates;
    rec.confidences.resize(static_cast<size_t>(trace.pred.p_c.size()));
    for (Eigen::Index c = 0; c < trace.pred.p_c.size(); ++c) {
      rec.confidences[static_cast<size_t>(c)] = trace.pred.p_c(c);
    }
    rec.serr_applied = false;
    records[i] = std::move(rec);
  });
  return records;
}

}  // namespace kbqa
