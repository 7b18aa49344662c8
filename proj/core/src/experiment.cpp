#include "kbqa/experiment.hpp"

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <iostream>
#include <map>
#include <set>

namespace kbqa {

using nlohmann::json;

std::string default_path(const ExperimentConfig& cfg, const std::string& name) {
  return cfg.out_dir + "/" + name;
}

namespace {

std::string path_or_default(const std::string& configured, const ExperimentConfig& cfg,
                            const std::string& name) {
  return configured.empty() ? default_path(cfg, name) : configured;
}

void write_stage_config(const ExperimentConfig& cfg, const std::string& stage) {
  ensure_directory(cfg.out_dir);
  write_file(default_path(cfg, stage + "_config.txt"), cfg.to_text());
}

std::unordered_set<std::string> stopwords_for(const ExperimentConfig& cfg) {
  if (!cfg.stopwords_path.empty()) return load_stopwords(cfg.stopwords_path);
  return default_stopwords();
}

EmbeddingTable build_embedding_table(const ExperimentConfig& cfg,
                                     const std::vector<PreparedExample>& train_items,
                                     Rng& rng) {
  if (!cfg.word_vectors_path.empty()) {
    return EmbeddingTable::load_text(cfg.word_vectors_path, cfg.word_dim);
  }
  std::vector<std::string> tokens;
  std::set<std::string> seen;
  for (const auto& item : train_items) {
    for (const auto& tok : item.ex.question) {
      if (seen.insert(tok).second) tokens.push_back(tok);
    }
  }
  return EmbeddingTable::random_init(tokens, cfg.word_dim, rng);
}

void write_eval_files(const ExperimentConfig& cfg, const std::string& prefix,
                      const EvalReport& report) {
  json summary;
  summary["hits_at_1"] = report.hits_at_1;
  summary["f1"] = report.f1;
  summary["num_questions"] = report.num_questions;
  summary["num_scored"] = report.num_scored;
  write_file(default_path(cfg, prefix + "_metrics.jsonl"), summary.dump() + "\n");

  std::string detail;
  for (const auto& qr : report.per_question) {
    json j;
    j["qid"] = qr.qid;
    j["gold"] = qr.gold;
    j["predicted_set"] = qr.predicted_set;
    j["best_gold_rank"] = qr.best_gold_rank;
    j["precision"] = qr.precision;
    j["recall"] = qr.recall;
    j["f1"] = qr.f1;
    j["top1_hit"] = qr.top1_hit;
    j["scored"] = qr.scored;
    detail += j.dump();
    detail += '\n';
  }
  write_file(default_path(cfg, prefix + "_per_question.jsonl"), detail);
}

std::vector<std::pair<int, std::vector<EntityId>>> gold_from_cache(
    const std::vector<PreparedExample>& items) {
  std::vector<std::pair<int, std::vector<EntityId>>> gold;
  gold.reserve(items.size());
  for (const auto& item : items) gold.emplace_back(item.qid, item.ex.answers);
  return gold;
}

}  // namespace

void run_prepare(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.kb_path.empty()) throw StageError("prepare: kb path not configured");
  write_stage_config(cfg, "prepare");
  KnowledgeBase kb = KnowledgeBase::load(cfg.kb_path);

  struct SplitSpec {
    std::string dataset;
    std::string cache;
  };
  std::vector<SplitSpec> splits;
  if (!cfg.train_path.empty()) {
    splits.push_back({cfg.train_path, path_or_default(cfg.train_cache, cfg, "cache_train.jsonl")});
  }
  if (!cfg.valid_path.empty()) {
    splits.push_back({cfg.valid_path, path_or_default(cfg.valid_cache, cfg, "cache_valid.jsonl")});
  }
  if (!cfg.test_path.empty()) {
    splits.push_back({cfg.test_path, path_or_default(cfg.test_cache, cfg, "cache_test.jsonl")});
  }
  if (splits.empty()) throw StageError("prepare: no dataset paths configured");

  for (const auto& split : splits) {
    auto records = load_dataset_file(split.dataset);
    auto examples = resolve_dataset(records, kb);
    std::vector<PreparedExample> items(examples.size());
    parallel_for(examples.size(), [&](size_t i) {
      PreparedExample item;
      item.qid = static_cast<int>(i);
      item.ex = std::move(examples[i]);
      item.ex.subgraph = retrieve_subgraph(kb, item.ex.topics, cfg.retrieval);
      items[i] = std::move(item);
    });
    write_subgraph_cache(split.cache, items, kb, cfg.retrieval);
    std::cerr << "prepare: " << split.dataset << " -> " << split.cache << " ("
              << items.size() << " questions)\n";
  }
}

VgaeStageOutputs run_train_vgae(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.kb_path.empty()) throw StageError("train-vgae: kb path not configured");
  write_stage_config(cfg, "train_vgae");
  KnowledgeBase kb = KnowledgeBase::load(cfg.kb_path);
  RelationGraph graph = build_relation_graph(kb, cfg.vgae_tau);
  auto result = train_qa_vgae(graph, cfg.vgae, cfg.seed);
  Matrix prior = compute_relation_prior(result.params, graph);

  std::string prior_path = path_or_default(cfg.prior_path, cfg, "prior.bin");
  write_relation_prior(prior_path, prior);
  write_relation_prior_json(prior_path + ".json", prior);

  std::string params_path = path_or_default(cfg.vgae_params_path, cfg, "vgae_params.bin");
  std::map<std::string, std::string> fields;
  fields["kb_hash"] = hex64(kb.content_hash());
  fields["tau"] = std::to_string(cfg.vgae_tau);
  save_tensors(params_path,
               {{"w0", result.params.w0},
                {"w_mu", result.params.w_mu},
                {"w_sigma", result.params.w_sigma}},
               fields);

  std::string loss_lines;
  for (size_t i = 0; i < result.loss_history.size(); ++i) {
    json j;
    j["epoch"] = i;
    j["loss"] = result.loss_history[i];
    loss_lines += j.dump();
    loss_lines += '\n';
  }
  write_file(default_path(cfg, "vgae_loss.jsonl"), loss_lines);
  std::cerr << "train-vgae: " << result.loss_history.size() << " epochs, final loss "
            << (result.loss_history.empty() ? 0.0 : result.loss_history.back()) << "\n";
  return {std::move(prior), std::move(result.loss_history)};
}

ReasonerTrainResult run_train(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.kb_path.empty()) throw StageError("train: kb path not configured");
  write_stage_config(cfg, "train");
  KnowledgeBase kb = KnowledgeBase::load(cfg.kb_path);
  Matrix prior = load_relation_prior(path_or_default(cfg.prior_path, cfg, "prior.bin"));

  auto train_items =
      load_subgraph_cache(path_or_default(cfg.train_cache, cfg, "cache_train.jsonl"), kb);
  std::vector<PreparedExample> valid_items;
  std::string valid_cache = path_or_default(cfg.valid_cache, cfg, "cache_valid.jsonl");
  if (file_exists(valid_cache)) valid_items = load_subgraph_cache(valid_cache, kb);

  Rng rng(cfg.seed);
  Rng table_rng = rng.fork(7);
  EmbeddingTable table = build_embedding_table(cfg, train_items, table_rng);

  ModelConfig mc = ModelConfig::from_experiment(cfg, kb.num_relations());
  Model model(mc, std::move(table), prior, cfg.seed);

  TrainSettings settings;
  settings.learning_rate = cfg.learning_rate;
  settings.batch_size = cfg.batch_size;
  settings.num_epoch = cfg.num_epoch;
  settings.lambda = cfg.lambda;
  settings.beta1 = cfg.adam_beta1;
  settings.beta2 = cfg.adam_beta2;
  settings.eps = cfg.adam_eps;
  settings.grad_clip = cfg.grad_clip;
  settings.f1_rho = cfg.f1_rho;
  settings.seed = cfg.seed;

  auto result = train_reasoner(model, train_items, valid_items, settings);
  model.restore_params(result.best_params);

  std::string metrics_lines;
  for (const auto& rec : result.history) {
    json j;
    j["epoch"] = rec.epoch;
    j["train_loss"] = rec.train_loss;
    j["loss_c"] = rec.loss_c;
    j["loss_r"] = rec.loss_r;
    j["lr"] = rec.lr;
    j["valid_hits_at_1"] = rec.valid_hits;
    j["valid_f1"] = rec.valid_f1;
    j["skipped"] = rec.skipped;
    j["best"] = rec.best;
    metrics_lines += j.dump();
    metrics_lines += '\n';
  }
  write_file(default_path(cfg, "train_metrics.jsonl"), metrics_lines);

  std::string ckpt_path = path_or_default(cfg.checkpoint_path, cfg, "checkpoint.bin");
  save_checkpoint(ckpt_path, model, cfg.to_map(), kb);
  std::cerr << "train: best valid Hits@1 " << result.best_valid_hits << " at epoch "
            << result.best_epoch << " -> " << ckpt_path << "\n";
  return result;
}

EvalStageOutputs run_eval(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.kb_path.empty()) throw StageError("eval: kb path not configured");
  write_stage_config(cfg, "eval");
  KnowledgeBase kb = KnowledgeBase::load(cfg.kb_path);
  std::string cache_path = path_or_default(cfg.test_cache, cfg, "cache_test.jsonl");
  auto items = load_subgraph_cache(cache_path, kb);
  auto gold = gold_from_cache(items);

  EvalStageOutputs out;
  if (!cfg.predictions_path.empty()) {
    out.predictions = load_predictions(cfg.predictions_path);
    out.report = evaluate(out.predictions, gold, cfg.f1_rho);
    write_eval_files(cfg, "eval_rerank", out.report);
  } else {
    Matrix prior = load_relation_prior(path_or_default(cfg.prior_path, cfg, "prior.bin"));
    auto model =
        load_checkpoint(path_or_default(cfg.checkpoint_path, cfg, "checkpoint.bin"), kb, prior);
    out.predictions = predict_dataset(*model, items);
    out.report = evaluate(out.predictions, gold, cfg.f1_rho);
    write_predictions(default_path(cfg, "predictions.jsonl"), out.predictions);
    write_eval_files(cfg, "eval", out.report);
  }
  std::cerr << "eval: Hits@1 " << out.report.hits_at_1 << " F1 " << out.report.f1 << " over "
            << out.report.num_scored << " scored questions\n";
  return out;
}

RerankStageOutputs run_rerank(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.kb_path.empty()) throw StageError("rerank: kb path not configured");
  write_stage_config(cfg, "rerank");
  KnowledgeBase kb = KnowledgeBase::load(cfg.kb_path);
  std::string cache_path = path_or_default(cfg.test_cache, cfg, "cache_test.jsonl");
  auto items = load_subgraph_cache(cache_path, kb);
  std::map<int, const PreparedExample*> by_qid;
  for (const auto& item : items) by_qid[item.qid] = &item;

  auto predictions =
      load_predictions(path_or_default(cfg.predictions_path, cfg, "predictions.jsonl"));
  RelationTrie trie = build_relation_trie(kb.relations);
  auto stopwords = stopwords_for(cfg);
  RerankConfig rcfg{cfg.serr_h1, cfg.serr_h2, cfg.serr_min_stem_matches};

  RerankStageOutputs out;
  out.predictions.resize(predictions.size());
  std::atomic<int> boosted{0};
  parallel_for(predictions.size(), [&](size_t i) {
    const auto& pred = predictions[i];
    if (pred.serr_applied) {
      throw StageError("rerank: question id " + std::to_string(pred.qid) +
                       " was already re-ranked (serr_applied is set)");
    }
    auto it = by_qid.find(pred.qid);
    if (it == by_qid.end()) {
      throw StageError("rerank: no cached subgraph for question id " +
                       std::to_string(pred.qid));
    }
    const PreparedExample& pe = *it->second;
    auto result = rerank(pe.ex.question, pred.candidates, pred.confidences, pe.ex.subgraph,
                         trie, stopwords, rcfg);
    PredictionRecord rec;
    rec.qid = pred.qid;
    rec.candidates = std::move(result.candidates);
    rec.confidences = std::move(result.confidences);
    rec.serr_applied = true;
    rec.boosts = std::move(result.boosts);
    if (result.changed) boosted.fetch_add(1);
    out.predictions[i] = std::move(rec);
  });
  out.boosted_records = boosted.load();
  write_predictions(default_path(cfg, "predictions_serr.jsonl"), out.predictions);
  std::cerr << "rerank: boosted " << out.boosted_records << " of " << predictions.size()
            << " records\n";
  return out;
}

void run_export_embeddings(const ExperimentConfig& cfg, const std::string& source,
                           const std::string& out_path) {
  cfg.validate();
  if (cfg.kb_path.empty()) throw StageError("export-embeddings: kb path not configured");
  KnowledgeBase kb = KnowledgeBase::load(cfg.kb_path);
  Matrix vectors;
  if (source == "vgae") {
    std::map<std::string, std::string> fields;
    auto tensors =
        load_tensors(path_or_default(cfg.vgae_params_path, cfg, "vgae_params.bin"), &fields);
    if (fields.count("kb_hash") && fields["kb_hash"] != hex64(kb.content_hash())) {
      throw StageError("export-embeddings: VGAE weights were trained on a different KB");
    }
    int tau = fields.count("tau") ? std::stoi(fields["tau"]) : cfg.vgae_tau;
    VgaeParams params;
    for (auto& [name, m] : tensors) {
      if (name == "w0") params.w0 = m;
      if (name == "w_mu") params.w_mu = m;
      if (name == "w_sigma") params.w_sigma = m;
    }
    RelationGraph graph = build_relation_graph(kb, tau);
    vectors = vgae_embed(params, graph);
  } else if (source == "reasoner") {
    Matrix prior = load_relation_prior(path_or_default(cfg.prior_path, cfg, "prior.bin"));
    auto model =
        load_checkpoint(path_or_default(cfg.checkpoint_path, cfg, "checkpoint.bin"), kb, prior);
    vectors = model->relation_vectors();
  } else {
    throw StageError("export-embeddings: source must be vgae or reasoner");
  }
  write_embedding_file(out_path, kb.relations.names(), vectors);
  std::cerr << "export-embeddings: wrote " << vectors.rows() << " vectors of dim "
            << vectors.cols() << " to " << out_path << "\n";
}

void write_embedding_file(const std::string& path, const std::vector<std::string>& names,
                          const Matrix& vectors) {
  if (static_cast<Eigen::Index>(names.size()) != vectors.rows()) {
    throw StageError("write_embedding_file: name/vector count mismatch");
  }
  std::string out;
  for (Eigen::Index r = 0; r < vectors.rows(); ++r) {
    out += names[static_cast<size_t>(r)];
    for (Eigen::Index c = 0; c < vectors.cols(); ++c) {
      out += ' ';
      out += format_double(vectors(r, c));
    }
    out += '\n';
  }
  write_file(path, out);
}

Matrix load_embedding_file(const std::string& path, std::vector<std::string>* names) {
  auto lines = read_lines(path);
  std::vector<std::vector<double>> rows;
  std::vector<std::string> row_names;
  for (const auto& line : lines) {
    if (trim(line).empty()) continue;
    auto fields = split(line, ' ');
    row_names.push_back(fields[0]);
    std::vector<double> row;
    for (size_t i = 1; i < fields.size(); ++i) row.push_back(std::stod(fields[i]));
    rows.push_back(std::move(row));
  }
  Matrix m(static_cast<Eigen::Index>(rows.size()),
           rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
  for (size_t r = 0; r < rows.size(); ++r) {
    for (size_t c = 0; c < rows[r].size(); ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
  if (names) *names = std::move(row_names);
  return m;
}

bool is_single_peaked(const std::vector<double>& values, double tolerance) {
  if (values.size() <= 2) return true;
  size_t peak = 0;
  for (size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[peak]) peak = i;
  }
  for (size_t i = 1; i <= peak; ++i) {
    if (values[i] < values[i - 1] - tolerance) return false;
  }
  for (size_t i = peak + 1; i < values.size(); ++i) {
    if (values[i] > values[i - 1] + tolerance) return false;
  }
  return true;
}

namespace {

struct PipelineArtifacts {
  EvalReport pre_serr;
  EvalReport post_serr;
};

// train -> eval -> rerank -> eval-again on the shared caches
PipelineArtifacts run_model_pipeline(ExperimentConfig cfg, bool apply_serr) {
  PipelineArtifacts out;
  ReasonerTrainResult train_result;
  try {
    train_result = run_train(cfg);
  } catch (const StageError& e) {
    throw StageError(std::string("stage train: ") + e.what());
  }
  EvalStageOutputs eval_out;
  try {
    cfg.predictions_path.clear();
    eval_out = run_eval(cfg);
  } catch (const StageError& e) {
    throw StageError(std::string("stage eval: ") + e.what());
  }
  out.pre_serr = eval_out.report;
  if (!apply_serr) {
    out.post_serr = out.pre_serr;
    return out;
  }
  try {
    ExperimentConfig rcfg = cfg;
    rcfg.predictions_path = default_path(cfg, "predictions.jsonl");
    auto rer = run_rerank(rcfg);
    ExperimentConfig ecfg = cfg;
    ecfg.predictions_path = default_path(cfg, "predictions_serr.jsonl");
    auto post = run_eval(ecfg);
    out.post_serr = post.report;
  } catch (const StageError& e) {
    throw StageError(std::string("stage rerank: ") + e.what());
  }
  return out;
}

}  // namespace

ExperimentReport run_experiment(ExperimentConfig cfg, const std::vector<std::string>& ablations) {
  cfg.validate();
  ensure_directory(cfg.out_dir);

  if (cfg.kb_path.empty()) {
    try {
      SyntheticSpec spec = SyntheticSpec::from_experiment(cfg);
      auto ds = generate_synthetic_kb(spec, cfg.seed);
      std::string data_dir = default_path(cfg, "data");
      write_synthetic_dataset(ds, data_dir);
      cfg.kb_path = data_dir + "/kb.tsv";
      cfg.train_path = data_dir + "/train.jsonl";
      cfg.valid_path = data_dir + "/valid.jsonl";
      cfg.test_path = data_dir + "/test.jsonl";
      std::cerr << "experiment: synthesized dataset under " << data_dir << "\n";
    } catch (const StageError& e) {
      throw StageError(std::string("stage synthesize: ") + e.what());
    }
  }

  try {
    run_prepare(cfg);
  } catch (const StageError& e) {
    throw StageError(std::string("stage prepare: ") + e.what());
  }

  Matrix trained_prior;
  try {
    auto vout = run_train_vgae(cfg);
    trained_prior = vout.prior;
  } catch (const StageError& e) {
    throw StageError(std::string("stage train-vgae: ") + e.what());
  }

  ExperimentReport report;
  auto add_row = [&](const std::string& label, const PipelineArtifacts& art) {
    ReportRow row;
    row.label = label;
    row.hits_at_1 = art.post_serr.hits_at_1;
    row.f1 = art.post_serr.f1;
    row.hits_at_1_pre_serr = art.pre_serr.hits_at_1;
    row.f1_pre_serr = art.pre_serr.f1;
    report.rows.push_back(row);
  };

  auto full = run_model_pipeline(cfg, true);
  add_row("full", full);

  for (const auto& ablation : ablations) {
    if (ablation == "no_serr") {
      PipelineArtifacts art;
      art.pre_serr = full.pre_serr;
      art.post_serr = full.pre_serr;  // pipeline without the re-ranking stage
      add_row("no_serr", art);
    } else if (ablation == "no_vgae") {
      ExperimentConfig acfg = cfg;
      acfg.out_dir = cfg.out_dir + "/no_vgae";
      ensure_directory(acfg.out_dir);
      int n_r = static_cast<int>(trained_prior.rows());
      Matrix uniform =
          Matrix::Constant(n_r, n_r, 1.0 / static_cast<double>(std::max(1, n_r)));
      acfg.prior_path = default_path(acfg, "prior.bin");
      write_relation_prior(acfg.prior_path, uniform);
      acfg.train_cache = path_or_default(cfg.train_cache, cfg, "cache_train.jsonl");
      acfg.valid_cache = path_or_default(cfg.valid_cache, cfg, "cache_valid.jsonl");
      acfg.test_cache = path_or_default(cfg.test_cache, cfg, "cache_test.jsonl");
      add_row("no_vgae", run_model_pipeline(acfg, true));
    } else if (ablation == "no_multitask") {
      ExperimentConfig acfg = cfg;
      acfg.out_dir = cfg.out_dir + "/no_multitask";
      ensure_directory(acfg.out_dir);
      acfg.lambda = 1.0;
      acfg.prior_path = path_or_default(cfg.prior_path, cfg, "prior.bin");
      acfg.train_cache = path_or_default(cfg.train_cache, cfg, "cache_train.jsonl");
      acfg.valid_cache = path_or_default(cfg.valid_cache, cfg, "cache_valid.jsonl");
      acfg.test_cache = path_or_default(cfg.test_cache, cfg, "cache_test.jsonl");
      add_row("no_multitask", run_model_pipeline(acfg, true));
    } else {
      throw StageError("unknown ablation: " + ablation +
                       " (expected no_vgae, no_multitask or no_serr)");
    }
  }

  std::string lines;
  for (const auto& row : report.rows) {
    json j;
    j["label"] = row.label;
    j["hits_at_1"] = row.hits_at_1;
    j["f1"] = row.f1;
    j["hits_at_1_pre_serr"] = row.hits_at_1_pre_serr;
    j["f1_pre_serr"] = row.f1_pre_serr;
    j["serr_delta_f1"] = row.f1 - row.f1_pre_serr;
    lines += j.dump();
    lines += '\n';
  }
  write_file(default_path(cfg, "report.jsonl"), lines);
  return report;
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg_in) {
  ExperimentConfig cfg = cfg_in;
  cfg.validate();
  ensure_directory(cfg.out_dir);
  write_stage_config(cfg, "sweep");

  std::vector<SweepRow> rows;
  for (int i = 1; i <= 10; ++i) {
    double lambda = static_cast<double>(i) / 10.0;
    ExperimentConfig scfg = cfg;
    scfg.out_dir = cfg.out_dir + "/lambda_" + std::to_string(i);
    ensure_directory(scfg.out_dir);
    scfg.lambda = lambda;
    scfg.num_epoch = cfg.sweep_num_epoch;
    scfg.train_cache = path_or_default(cfg.train_cache, cfg, "cache_train.jsonl");
    scfg.valid_cache = path_or_default(cfg.valid_cache, cfg, "cache_valid.jsonl");
    scfg.test_cache = path_or_default(cfg.test_cache, cfg, "cache_test.jsonl");
    scfg.prior_path = path_or_default(cfg.prior_path, cfg, "prior.bin");
    run_train(scfg);
    scfg.predictions_path.clear();
    auto eval_out = run_eval(scfg);
    rows.push_back({lambda, eval_out.report.hits_at_1, eval_out.report.f1});
  }

  std::string lines;
  for (const auto& row : rows) {
    json j;
    j["lambda"] = row.lambda;
    j["hits_at_1"] = row.hits_at_1;
    j["f1"] = row.f1;
    lines += j.dump();
    lines += '\n';
  }
  write_file(default_path(cfg, "sweep.jsonl"), lines);

  std::vector<double> f1s, hits;
  for (const auto& row : rows) {
    f1s.push_back(row.f1);
    hits.push_back(row.hits_at_1);
  }
  json summary;
  summary["single_peaked_f1"] = is_single_peaked(f1s, 0.02);
  summary["single_peaked_hits_at_1"] = is_single_peaked(hits, 0.02);
  write_file(default_path(cfg, "sweep_summary.jsonl"), summary.dump() + "\n");
  return rows;
}

}  // namespace kbqa
