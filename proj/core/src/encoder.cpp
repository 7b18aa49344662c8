#include "kbqa/encoder.hpp"

#include <cmath>

namespace kbqa {

int EmbeddingTable::token_index(const std::string& token) const {
  auto id = vocab.find(token);
  return id ? *id : -1;
}

EmbeddingTable EmbeddingTable::random_init(const std::vector<std::string>& tokens, int dim,
                                           Rng& rng) {
  EmbeddingTable table;
  for (const auto& t : tokens) table.vocab.get_or_add(t);
  table.vectors = nn::normal_init(table.vocab.size(), dim, 0.1, rng);
  return table;
}

EmbeddingTable EmbeddingTable::load_text(const std::string& path, int dim) {
  EmbeddingTable table;
  auto lines = read_lines(path);
  std::vector<Eigen::VectorXd> rows;
  for (size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    auto fields = split(lines[i], ' ');
    if (static_cast<int>(fields.size()) != dim + 1) {
      throw ParseError(path + ": line " + std::to_string(i + 1) + ": expected " +
                       std::to_string(dim + 1) + " fields, got " +
                       std::to_string(fields.size()));
    }
    int32_t id = table.vocab.get_or_add(fields[0]);
    if (id != static_cast<int32_t>(rows.size())) {
      throw ParseError(path + ": line " + std::to_string(i + 1) + ": duplicate token '" +
                       fields[0] + "'");
    }
    Eigen::VectorXd v(dim);
    for (int d = 0; d < dim; ++d) v(d) = std::stod(fields[static_cast<size_t>(d) + 1]);
    rows.push_back(std::move(v));
  }
  table.vectors.resize(static_cast<Eigen::Index>(rows.size()), dim);
  for (size_t r = 0; r < rows.size(); ++r) table.vectors.row(static_cast<Eigen::Index>(r)) = rows[r];
  return table;
}

Matrix embed_question(const std::vector<std::string>& tokens, const EmbeddingTable& table) {
  if (tokens.empty()) throw StageError("embed_question: empty token list");
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(tokens.size()), table.word_dim());
  for (size_t i = 0; i < tokens.size(); ++i) {
    int idx = table.token_index(tokens[i]);
    if (idx >= 0) out.row(static_cast<Eigen::Index>(i)) = table.vectors.row(idx);
  }
  return out;
}

QuestionEncoder::QuestionEncoder(int word_dim, int d, int num_step, ScoreFn score_fn)
    : word_dim_(word_dim), d_(d), num_step_(num_step), score_fn_(score_fn) {}

void QuestionEncoder::register_params(nn::ParamStore& store, Rng& rng) {
  static const char* gate_names[4] = {"i", "f", "o", "g"};
  for (int g = 0; g < 4; ++g) {
    lstm_wx_[g] = store.add(std::string("enc.lstm.wx_") + gate_names[g],
                            nn::glorot_init(word_dim_, d_, rng));
    lstm_wh_[g] = store.add(std::string("enc.lstm.wh_") + gate_names[g],
                            nn::glorot_init(d_, d_, rng));
    lstm_b_[g] =
        store.add(std::string("enc.lstm.b_") + gate_names[g], Matrix::Zero(1, d_));
  }
  proj_w_ = store.add("enc.proj.w", nn::glorot_init(d_, d_, rng));
  proj_b_ = store.add("enc.proj.b", Matrix::Zero(1, d_));
  s0_ = store.add("ins.s0", nn::normal_init(1, d_, 0.02, rng));
  for (int t = 0; t < num_step_; ++t) {
    std::string p = "ins.step" + std::to_string(t) + ".";
    mlp_w1_.push_back(store.add(p + "w1", nn::glorot_init(2 * d_, d_, rng)));
    mlp_b1_.push_back(store.add(p + "b1", Matrix::Zero(1, d_)));
    mlp_w2_.push_back(store.add(p + "w2", nn::glorot_init(d_, d_, rng)));
    mlp_b2_.push_back(store.add(p + "b2", Matrix::Zero(1, d_)));
    if (score_fn_ == ScoreFn::bilinear) {
      score_w_.push_back(store.add(p + "score", nn::glorot_init(d_, d_, rng)));
    }
  }
}

QuestionEncoder::TapeEncoding QuestionEncoder::encode(ad::Tape& t,
                                                      const nn::BoundParams& bound,
                                                      ad::Var embedded) const {
  Eigen::Index n = t.value(embedded).rows();
  ad::Var h = t.constant(Matrix::Zero(1, d_));
  ad::Var c = t.constant(Matrix::Zero(1, d_));
  std::vector<ad::Var> states;
  states.reserve(static_cast<size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j) {
    ad::Var x = t.gather_rows(embedded, {static_cast<int>(j)});
    auto gate = [&](int g) {
      return t.add(t.add(t.matmul(x, bound[lstm_wx_[g]]), t.matmul(h, bound[lstm_wh_[g]])),
                   bound[lstm_b_[g]]);
    };
    ad::Var in_gate = t.sigmoid(gate(0));
    ad::Var forget_gate = t.sigmoid(gate(1));
    ad::Var out_gate = t.sigmoid(gate(2));
    ad::Var cand = t.tanh(gate(3));
    c = t.add(t.cmul(forget_gate, c), t.cmul(in_gate, cand));
    h = t.cmul(out_gate, t.tanh(c));
    states.push_back(h);
  }
  ad::Var stacked = states[0];
  for (size_t j = 1; j < states.size(); ++j) stacked = t.concat_rows(stacked, states[j]);
  ad::Var token_states = ad::linear(t, stacked, bound[proj_w_], bound[proj_b_]);
  ad::Var h_last = ad::linear(t, h, bound[proj_w_], bound[proj_b_]);
  return {h_last, token_states};
}

std::pair<ad::Var, ad::Var> QuestionEncoder::instruction(ad::Tape& t,
                                                         const nn::BoundParams& bound,
                                                         ad::Var s_prev,
                                                         const TapeEncoding& enc,
                                                         int step) const {
  if (step < 0 || step >= num_step_) {
    throw StageError("instruction step " + std::to_string(step) + " out of range");
  }
  ad::Var joint = t.concat_cols(s_prev, enc.h_last);
  ad::Var hidden = t.tanh(ad::linear(t, joint, bound[mlp_w1_[static_cast<size_t>(step)]],
                                     bound[mlp_b1_[static_cast<size_t>(step)]]));
  ad::Var q = ad::linear(t, hidden, bound[mlp_w2_[static_cast<size_t>(step)]],
                         bound[mlp_b2_[static_cast<size_t>(step)]]);
  ad::Var scores;
  if (score_fn_ == ScoreFn::bilinear) {
    ad::Var qb = t.matmul(q, bound[score_w_[static_cast<size_t>(step)]]);
    scores = t.matmul(qb, t.transpose(enc.token_states));
  } else {
    scores =
        t.scale(t.matmul(q, t.transpose(enc.token_states)), 1.0 / std::sqrt(double(d_)));
  }
  ad::Var attn = t.softmax_rows(scores);          // 1 x n
  ad::Var s_new = t.matmul(attn, enc.token_states);  // 1 x d
  return {s_new, attn};
}

ad::Var QuestionEncoder::initial_instruction(ad::Tape& /*t*/,
                                             const nn::BoundParams& bound) const {
  return bound[s0_];
}

QuestionEncoding QuestionEncoder::encode_question(const Matrix& embedded,
                                                  const nn::ParamStore& store) const {
  if (embedded.rows() < 1) throw StageError("encode_question: need at least one token");
  ad::Tape t;
  auto bound = nn::BoundParams::bind(t, store);
  ad::Var emb = t.constant(embedded);
  auto enc = encode(t, bound, emb);
  QuestionEncoding out;
  out.h_last = t.value(enc.h_last).row(0).transpose();
  out.token_states = t.value(enc.token_states);
  return out;
}

InstructionState QuestionEncoder::initial_state(const nn::ParamStore& store) const {
  InstructionState st;
  st.s = store.at(s0_).value.row(0).transpose();
  st.step = 0;
  return st;
}

InstructionState QuestionEncoder::instruction_step(const InstructionState& prev,
                                                   const QuestionEncoding& enc,
                                                   const nn::ParamStore& store) const {
  if (prev.step >= num_step_) {
    throw StageError("instruction_step: step " + std::to_string(prev.step) +
                     " exceeds num_step");
  }
  ad::Tape t;
  auto bound = nn::BoundParams::bind(t, store);
  ad::Var s_prev = t.constant(prev.s.transpose());
  TapeEncoding tenc{t.constant(enc.h_last.transpose()), t.constant(enc.token_states)};
  auto [s_new, attn] = instruction(t, bound, s_prev, tenc, prev.step);
  InstructionState out;
  out.s = t.value(s_new).row(0).transpose();
  out.step = prev.step + 1;
  out.attention = t.value(attn).row(0).transpose();
  return out;
}

}  // namespace kbqa
