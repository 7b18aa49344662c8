// kbqa: multi-hop KBQA pipeline driver.
//
// Stages: prepare -> train-vgae -> train -> eval -> rerank, plus the
// synthetic end-to-end `demo`, a lambda `sweep`, and vector export.

#include "CLI11.hpp"

#include <cstdio>
#include <iostream>

#include "kbqa/experiment.hpp"

namespace {

struct GlobalArgs {
  std::string config_path;
  int64_t seed = -1;
  std::string out_dir;
  std::map<std::string, std::string> overrides;
};

kbqa::ExperimentConfig resolve_config(const GlobalArgs& args) {
  kbqa::ExperimentConfig cfg;
  if (!args.config_path.empty()) cfg = kbqa::ExperimentConfig::load(args.config_path);
  cfg.apply_overrides(args.overrides);
  if (args.seed >= 0) cfg.seed = static_cast<uint64_t>(args.seed);
  if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
  cfg.validate();
  return cfg;
}

void add_override_option(CLI::App* cmd, GlobalArgs& args) {
  cmd->add_option_function<std::vector<std::string>>(
      "--set",
      [&args](const std::vector<std::string>& pairs) {
        for (const auto& p : pairs) {
          auto eq = p.find('=');
          if (eq == std::string::npos) {
            throw CLI::ValidationError("--set expects key=value, got '" + p + "'");
          }
          args.overrides[kbqa::trim(p.substr(0, eq))] = kbqa::trim(p.substr(eq + 1));
        }
      },
      "Override a config key (key=value); may be repeated");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"relation-enhanced multi-hop KBQA pipeline"};
  app.require_subcommand(1);

  GlobalArgs args;
  app.add_option("--config", args.config_path, "Config file (flat key = value text)");
  app.add_option("--seed", args.seed, "Random seed (overrides the config)");
  app.add_option("--out", args.out_dir, "Output directory (overrides the config)");

  auto* prepare = app.add_subcommand("prepare", "Retrieve and cache per-question subgraphs");
  add_override_option(prepare, args);

  auto* train_vgae =
      app.add_subcommand("train-vgae", "Train the relation-graph auto-encoder and emit the "
                                       "relation prior matrix");
  add_override_option(train_vgae, args);

  auto* train = app.add_subcommand("train", "Train the multi-step reasoner");
  add_override_option(train, args);

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint (or a predictions file)");
  add_override_option(eval, args);

  auto* rerank = app.add_subcommand("rerank", "Stem-extraction re-ranking of predictions");
  add_override_option(rerank, args);

  auto* sweep = app.add_subcommand("sweep", "Train/eval across lambda in {0.1,...,1.0}");
  add_override_option(sweep, args);

  auto* demo = app.add_subcommand(
      "demo", "End-to-end pipeline on a synthetic benchmark (or configured data)");
  bool demo_ablations = false;
  demo->add_flag("--ablations", demo_ablations,
                 "Also run the no_vgae / no_multitask / no_serr variants");
  add_override_option(demo, args);

  auto* export_cmd = app.add_subcommand("export-embeddings", "Export relation vectors");
  std::string export_source = "vgae";
  std::string export_path;
  export_cmd->add_option("--source", export_source, "vgae (default) or reasoner");
  export_cmd->add_option("--vectors-out", export_path, "Output text file");
  add_override_option(export_cmd, args);

  CLI11_PARSE(app, argc, argv);

  try {
    kbqa::ExperimentConfig cfg = resolve_config(args);
    if (prepare->parsed()) {
      kbqa::run_prepare(cfg);
    } else if (train_vgae->parsed()) {
      kbqa::run_train_vgae(cfg);
    } else if (train->parsed()) {
      kbqa::run_train(cfg);
    } else if (eval->parsed()) {
      auto out = kbqa::run_eval(cfg);
      std::printf("hits_at_1 %.6f\nf1 %.6f\n", out.report.hits_at_1, out.report.f1);
    } else if (rerank->parsed()) {
      kbqa::run_rerank(cfg);
    } else if (sweep->parsed()) {
      auto rows = kbqa::run_sweep(cfg);
      for (const auto& row : rows) {
        std::printf("lambda %.1f hits_at_1 %.6f f1 %.6f\n", row.lambda, row.hits_at_1, row.f1);
      }
    } else if (demo->parsed()) {
      std::vector<std::string> ablations;
      if (demo_ablations) ablations = {"no_vgae", "no_multitask", "no_serr"};
      auto report = kbqa::run_experiment(cfg, ablations);
      for (const auto& row : report.rows) {
        std::printf("%-14s hits_at_1 %.6f f1 %.6f (pre-serr hits %.6f f1 %.6f)\n",
                    row.label.c_str(), row.hits_at_1, row.f1, row.hits_at_1_pre_serr,
                    row.f1_pre_serr);
      }
    } else if (export_cmd->parsed()) {
      if (export_path.empty()) export_path = kbqa::default_path(cfg, "relation_vectors.txt");
      kbqa::run_export_embeddings(cfg, export_source, export_path);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
