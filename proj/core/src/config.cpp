#include "kbqa/config.hpp"

#include <charconv>
#include <functional>
#include <sstream>
#include <vector>

namespace kbqa {

namespace {

// Field table drives parsing, serialization and unknown-key detection.
struct FieldBinding {
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

int64_t parse_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    int64_t x = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw StageError("config: key '" + key + "' expects an integer, got '" + v + "'");
  }
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw StageError("config: key '" + key + "' expects a number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw StageError("config: key '" + key + "' expects true/false, got '" + v + "'");
}

std::vector<FieldBinding> make_bindings() {
  std::vector<FieldBinding> f;
  auto add_str = [&](const std::string& key, std::string ExperimentConfig::* member) {
    f.push_back({key, [member](const ExperimentConfig& c) { return c.*member; },
                 [member](ExperimentConfig& c, const std::string& v) { c.*member = v; }});
  };
  auto add_int = [&](const std::string& key, int ExperimentConfig::* member) {
    f.push_back({key,
                 [member](const ExperimentConfig& c) { return std::to_string(c.*member); },
                 [member, key](ExperimentConfig& c, const std::string& v) {
                   c.*member = static_cast<int>(parse_int(key, v));
                 }});
  };
  auto add_real = [&](const std::string& key, double ExperimentConfig::* member) {
    f.push_back({key, [member](const ExperimentConfig& c) { return format_double(c.*member); },
                 [member, key](ExperimentConfig& c, const std::string& v) {
                   c.*member = parse_real(key, v);
                 }});
  };
  auto add_bool = [&](const std::string& key, bool ExperimentConfig::* member) {
    f.push_back({key,
                 [member](const ExperimentConfig& c) { return c.*member ? "true" : "false"; },
                 [member, key](ExperimentConfig& c, const std::string& v) {
                   c.*member = parse_bool(key, v);
                 }});
  };

  f.push_back({"seed",
               [](const ExperimentConfig& c) { return std::to_string(c.seed); },
               [](ExperimentConfig& c, const std::string& v) {
                 c.seed = static_cast<uint64_t>(parse_int("seed", v));
               }});
  add_str("out_dir", &ExperimentConfig::out_dir);
  add_str("kb", &ExperimentConfig::kb_path);
  add_str("train", &ExperimentConfig::train_path);
  add_str("valid", &ExperimentConfig::valid_path);
  add_str("test", &ExperimentConfig::test_path);
  add_str("train_cache", &ExperimentConfig::train_cache);
  add_str("valid_cache", &ExperimentConfig::valid_cache);
  add_str("test_cache", &ExperimentConfig::test_cache);
  add_str("prior", &ExperimentConfig::prior_path);
  add_str("vgae_params", &ExperimentConfig::vgae_params_path);
  add_str("checkpoint", &ExperimentConfig::checkpoint_path);
  add_str("predictions", &ExperimentConfig::predictions_path);
  add_str("stopwords", &ExperimentConfig::stopwords_path);
  add_str("word_vectors", &ExperimentConfig::word_vectors_path);

  f.push_back({"max_hops",
               [](const ExperimentConfig& c) { return std::to_string(c.retrieval.max_hops); },
               [](ExperimentConfig& c, const std::string& v) {
                 c.retrieval.max_hops = static_cast<int>(parse_int("max_hops", v));
               }});
  f.push_back({"max_candidates",
               [](const ExperimentConfig& c) {
                 return std::to_string(c.retrieval.max_candidates);
               },
               [](ExperimentConfig& c, const std::string& v) {
                 c.retrieval.max_candidates = static_cast<int>(parse_int("max_candidates", v));
               }});
  f.push_back({"ppr_alpha",
               [](const ExperimentConfig& c) { return format_double(c.retrieval.ppr_alpha); },
               [](ExperimentConfig& c, const std::string& v) {
                 c.retrieval.ppr_alpha = parse_real("ppr_alpha", v);
               }});
  f.push_back({"ppr_epsilon",
               [](const ExperimentConfig& c) { return format_double(c.retrieval.ppr_epsilon); },
               [](ExperimentConfig& c, const std::string& v) {
                 c.retrieval.ppr_epsilon = parse_real("ppr_epsilon", v);
               }});

  add_int("vgae_tau", &ExperimentConfig::vgae_tau);
  f.push_back({"vgae_hidden",
               [](const ExperimentConfig& c) { return std::to_string(c.vgae.hidden_dim); },
               [](ExperimentConfig& c, const std::string& v) {
                 c.vgae.hidden_dim = static_cast<int>(parse_int("vgae_hidden", v));
               }});
  f.push_back({"vgae_latent",
               [](const ExperimentConfig& c) { return std::to_string(c.vgae.latent_dim); },
               [](ExperimentConfig& c, const std::string& v) {
                 c.vgae.latent_dim = static_cast<int>(parse_int("vgae_latent", v));
               }});
  f.push_back({"vgae_lr",
               [](const ExperimentConfig& c) { return format_double(c.vgae.learning_rate); },
               [](ExperimentConfig& c, const std::string& v) {
                 c.vgae.learning_rate = parse_real("vgae_lr", v);
               }});
  f.push_back({"vgae_epochs",
               [](const ExperimentConfig& c) { return std::to_string(c.vgae.epochs); },
               [](ExperimentConfig& c, const std::string& v) {
                 c.vgae.epochs = static_cast<int>(parse_int("vgae_epochs", v));
               }});
  f.push_back({"vgae_kl_weight",
               [](const ExperimentConfig& c) { return format_double(c.vgae.kl_weight); },
               [](ExperimentConfig& c, const std::string& v) {
                 c.vgae.kl_weight = parse_real("vgae_kl_weight", v);
               }});
  f.push_back({"vgae_compound",
               [](const ExperimentConfig& c) {
                 return c.vgae.compound == VgaeCompound::sample ? "sample" : "concat";
               },
               [](ExperimentConfig& c, const std::string& v) {
                 if (v == "sample") {
                   c.vgae.compound = VgaeCompound::sample;
                 } else if (v == "concat") {
                   c.vgae.compound = VgaeCompound::concat;
                 } else {
                   throw StageError("config: vgae_compound must be sample or concat");
                 }
               }});

  add_int("word_dim", &ExperimentConfig::word_dim);
  add_int("entity_dim", &ExperimentConfig::entity_dim);
  add_int("num_step", &ExperimentConfig::num_step);
  add_int("heads", &ExperimentConfig::heads);
  add_str("variant", &ExperimentConfig::variant);
  add_str("score_fn", &ExperimentConfig::score_fn);
  add_str("gate_source", &ExperimentConfig::gate_source);
  add_bool("per_step_loss", &ExperimentConfig::per_step_loss);
  add_real("dropout", &ExperimentConfig::dropout);

  add_real("learning_rate", &ExperimentConfig::learning_rate);
  add_int("batch_size", &ExperimentConfig::batch_size);
  add_int("num_epoch", &ExperimentConfig::num_epoch);
  add_real("lambda", &ExperimentConfig::lambda);
  add_real("adam_beta1", &ExperimentConfig::adam_beta1);
  add_real("adam_beta2", &ExperimentConfig::adam_beta2);
  add_real("adam_eps", &ExperimentConfig::adam_eps);
  add_real("grad_clip", &ExperimentConfig::grad_clip);

  add_real("f1_rho", &ExperimentConfig::f1_rho);

  add_real("serr_h1", &ExperimentConfig::serr_h1);
  add_real("serr_h2", &ExperimentConfig::serr_h2);
  add_int("serr_min_stem_matches", &ExperimentConfig::serr_min_stem_matches);

  add_int("sweep_num_epoch", &ExperimentConfig::sweep_num_epoch);

  add_int("synth_entities", &ExperimentConfig::synth_entities);
  add_int("synth_relations", &ExperimentConfig::synth_relations);
  add_int("synth_questions", &ExperimentConfig::synth_questions);
  add_int("synth_groups", &ExperimentConfig::synth_groups);
  add_int("synth_edges_per_relation", &ExperimentConfig::synth_edges_per_relation);
  add_int("synth_max_fanout", &ExperimentConfig::synth_max_fanout);
  add_real("synth_two_hop_fraction", &ExperimentConfig::synth_two_hop_fraction);
  add_real("synth_train_frac", &ExperimentConfig::synth_train_frac);
  add_real("synth_valid_frac", &ExperimentConfig::synth_valid_frac);
  return f;
}

const std::vector<FieldBinding>& bindings() {
  static const std::vector<FieldBinding> f = make_bindings();
  return f;
}

}  // namespace

std::map<std::string, std::string> parse_config_text(const std::string& text,
                                                     const std::string& origin) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::string t = trim(line);
    if (t.empty()) continue;
    auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ParseError(origin + ": line " + std::to_string(lineno) +
                       ": expected 'key = value'");
    }
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty()) {
      throw ParseError(origin + ": line " + std::to_string(lineno) + ": empty key");
    }
    kv[key] = value;
  }
  return kv;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  return from_map(parse_config_text(read_file(path), path));
}

ExperimentConfig ExperimentConfig::from_map(const std::map<std::string, std::string>& kv) {
  ExperimentConfig cfg;
  cfg.apply_overrides(kv);
  return cfg;
}

void ExperimentConfig::apply_overrides(const std::map<std::string, std::string>& kv) {
  for (const auto& [key, value] : kv) {
    bool found = false;
    for (const auto& b : bindings()) {
      if (b.key == key) {
        b.set(*this, value);
        found = true;
        break;
      }
    }
    if (!found) throw StageError("config: unknown key '" + key + "'");
  }
}

std::map<std::string, std::string> ExperimentConfig::to_map() const {
  std::map<std::string, std::string> kv;
  for (const auto& b : bindings()) kv[b.key] = b.get(*this);
  return kv;
}

std::string ExperimentConfig::to_text() const {
  std::string out;
  for (const auto& b : bindings()) {
    out += b.key;
    out += " = ";
    out += b.get(*this);
    out += '\n';
  }
  return out;
}

void ExperimentConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw StageError("config: " + msg);
  };
  require(retrieval.max_hops >= 1, "max_hops must be >= 1");
  require(retrieval.max_candidates >= 1, "max_candidates must be >= 1");
  require(retrieval.ppr_alpha > 0.0 && retrieval.ppr_alpha < 1.0,
          "ppr_alpha must be in (0,1)");
  require(retrieval.ppr_epsilon > 0.0, "ppr_epsilon must be > 0");
  require(vgae_tau > 0, "vgae_tau must be > 0");
  require(vgae.latent_dim >= 2, "vgae_latent must be >= 2");
  require(vgae.hidden_dim >= 1, "vgae_hidden must be >= 1");
  require(word_dim >= 1 && entity_dim >= 1, "word_dim/entity_dim must be >= 1");
  require(num_step >= 1, "num_step must be >= 1");
  require(heads >= 1 && entity_dim % heads == 0, "heads must divide entity_dim");
  require(variant == "linear" || variant == "recurrent" || variant == "transformer",
          "variant must be linear, recurrent or transformer");
  require(score_fn == "bilinear" || score_fn == "dot", "score_fn must be bilinear or dot");
  require(gate_source == "v0" || gate_source == "prev", "gate_source must be v0 or prev");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must be in [0,1)");
  require(lambda > 0.0 && lambda <= 1.0, "lambda must be in (0,1]");
  require(learning_rate > 0.0, "learning_rate must be > 0");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(num_epoch >= 1, "num_epoch must be >= 1");
  require(f1_rho > 0.0 && f1_rho <= 1.0, "f1_rho must be in (0,1]");
  require(serr_h1 > serr_h2 && serr_h2 > 1.0, "boost factors must satisfy h1 > h2 > 1");
  require(serr_min_stem_matches >= 1, "serr_min_stem_matches must be >= 1");
  require(synth_groups >= 2 && synth_relations > synth_groups,
          "synthetic spec needs at least 2 groups and more relations than groups");
  require(synth_two_hop_fraction >= 0.0 && synth_two_hop_fraction <= 1.0,
          "synth_two_hop_fraction must be in [0,1]");
  require(synth_train_frac > 0.0 && synth_valid_frac >= 0.0 &&
              synth_train_frac + synth_valid_frac < 1.0,
          "synthetic split fractions must leave room for a test split");
}

}  // namespace kbqa
