#include "kbqa/checkpoint.hpp"

#include "json.hpp"

#include <cstring>
#include <fstream>

#include "kbqa/vgae.hpp"

namespace kbqa {

using nlohmann::json;

namespace {
constexpr char kMagic[8] = {'K', 'B', 'Q', 'A', 'T', 'N', 'S', '1'};
}

void save_tensors(const std::string& path,
                  const std::vector<std::pair<std::string, Matrix>>& tensors,
                  const std::map<std::string, std::string>& header_fields) {
  json header;
  header["version"] = 1;
  for (const auto& [k, v] : header_fields) header["fields"][k] = v;
  json dir = json::array();
  for (const auto& [name, m] : tensors) {
    dir.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
  }
  header["tensors"] = std::move(dir);
  std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw StageError("cannot write tensor file: " + path);
  out.write(kMagic, sizeof(kMagic));
  uint64_t len = header_str.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const auto& [name, m] : tensors) {
    // row-major on disk
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        double v = m(r, c);
        out.write(reinterpret_cast<const char*>(&v), sizeof(v));
      }
    }
  }
}

std::vector<std::pair<std::string, Matrix>> load_tensors(
    const std::string& path, std::map<std::string, std::string>* header_fields) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StageError("cannot open tensor file: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ParseError(path + ": not a tensor container (bad magic)");
  }
  uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string header_str(len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(len));
  if (!in) throw ParseError(path + ": truncated header");
  json header = json::parse(header_str);
  if (header.value("version", 0) != 1) {
    throw ParseError(path + ": unsupported container version");
  }
  if (header_fields && header.contains("fields")) {
    for (auto& [k, v] : header["fields"].items()) {
      (*header_fields)[k] = v.get<std::string>();
    }
  }
  std::vector<std::pair<std::string, Matrix>> tensors;
  for (const auto& t : header["tensors"]) {
    std::string name = t.at("name").get<std::string>();
    Eigen::Index rows = t.at("rows").get<Eigen::Index>();
    Eigen::Index cols = t.at("cols").get<Eigen::Index>();
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        double v;
        in.read(reinterpret_cast<char*>(&v), sizeof(v));
        if (!in) throw ParseError(path + ": truncated tensor data for " + name);
        m(r, c) = v;
      }
    }
    tensors.emplace_back(std::move(name), std::move(m));
  }
  return tensors;
}

void save_checkpoint(const std::string& path, const Model& model,
                     const std::map<std::string, std::string>& config_snapshot,
                     const KnowledgeBase& kb) {
  std::map<std::string, std::string> fields;
  json cfg_json(config_snapshot);
  fields["config"] = cfg_json.dump();
  json vocab_json(model.embedding_table().vocab.names());
  fields["word_vocab"] = vocab_json.dump();
  fields["entity_vocab_hash"] = hex64(kb.entities.content_hash());
  fields["relation_vocab_hash"] = hex64(kb.relations.content_hash());
  fields["prior_hash"] = hex64(matrix_content_hash(model.relation_prior()));

  std::vector<std::pair<std::string, Matrix>> tensors;
  for (const auto& p : model.params().all()) tensors.emplace_back(p.name, p.value);
  save_tensors(path, tensors, fields);
}

std::map<std::string, std::string> checkpoint_config(const std::string& path) {
  std::map<std::string, std::string> fields;
  load_tensors(path, &fields);
  auto it = fields.find("config");
  if (it == fields.end()) throw ParseError(path + ": checkpoint has no config snapshot");
  std::map<std::string, std::string> cfg;
  json parsed = json::parse(it->second);
  for (auto& [k, v] : parsed.items()) cfg[k] = v.get<std::string>();
  return cfg;
}

std::unique_ptr<Model> load_checkpoint(const std::string& path, const KnowledgeBase& kb,
                                       const Matrix& prior) {
  std::map<std::string, std::string> fields;
  auto tensors = load_tensors(path, &fields);

  if (fields.at("entity_vocab_hash") != hex64(kb.entities.content_hash()) ||
      fields.at("relation_vocab_hash") != hex64(kb.relations.content_hash())) {
    throw StageError("checkpoint " + path + " was trained against a different KB");
  }
  if (fields.at("prior_hash") != hex64(matrix_content_hash(prior))) {
    throw StageError("checkpoint " + path + " was trained with a different relation prior");
  }

  std::map<std::string, std::string> cfg_map;
  json parsed_cfg = json::parse(fields.at("config"));
  for (auto& [k, v] : parsed_cfg.items()) {
    cfg_map[k] = v.get<std::string>();
  }
  ExperimentConfig cfg = ExperimentConfig::from_map(cfg_map);
  ModelConfig mc = ModelConfig::from_experiment(cfg, kb.num_relations());

  EmbeddingTable table;
  for (const auto& tok : json::parse(fields.at("word_vocab"))) {
    table.vocab.get_or_add(tok.get<std::string>());
  }
  for (const auto& [name, m] : tensors) {
    if (name == "emb.table") table.vectors = m;
  }
  if (table.vectors.rows() != table.vocab.size()) {
    throw ParseError(path + ": embedding tensor does not match stored vocabulary");
  }

  auto model = std::make_unique<Model>(mc, std::move(table), prior, cfg.seed);
  for (const auto& [name, m] : tensors) {
    int idx = model->params().index_of(name);
    if (idx < 0) throw ParseError(path + ": unexpected tensor '" + name + "'");
    auto& p = model->params().at(idx);
    if (p.value.rows() != m.rows() || p.value.cols() != m.cols()) {
      throw ParseError(path + ": tensor shape mismatch for '" + name + "'");
    }
    p.value = m;
  }
  if (tensors.size() != model->params().size()) {
    throw ParseError(path + ": checkpoint tensor count differs from model");
  }
  return model;
}

}  // namespace kbqa
