#include "kbqa/dataset.hpp"

#include "json.hpp"

#include <fstream>

namespace kbqa {

using nlohmann::json;

std::vector<DatasetRecord> load_dataset_file(const std::string& path) {
  auto lines = read_lines(path);
  std::vector<DatasetRecord> out;
  out.reserve(lines.size());
  for (size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    json j;
    try {
      j = json::parse(lines[i]);
    } catch (const json::parse_error& e) {
      throw ParseError(path + ": line " + std::to_string(i + 1) + ": " + e.what());
    }
    DatasetRecord rec;
    if (!j.contains("question") || !j["question"].is_string()) {
      throw ParseError(path + ": line " + std::to_string(i + 1) +
                       ": missing string field 'question'");
    }
    rec.question = j["question"].get<std::string>();
    for (const auto& t : j.value("topics", json::array())) {
      rec.topics.push_back(t.get<std::string>());
    }
    for (const auto& a : j.value("answers", json::array())) {
      rec.answers.push_back(a.get<std::string>());
    }
    out.push_back(std::move(rec));
  }
  return out;
}

void write_dataset_file(const std::string& path, const std::vector<DatasetRecord>& records) {
  std::string out;
  for (const auto& rec : records) {
    json j;
    j["question"] = rec.question;
    j["topics"] = rec.topics;
    j["answers"] = rec.answers;
    out += j.dump();
    out += '\n';
  }
  write_file(path, out);
}

std::vector<QAExample> resolve_dataset(const std::vector<DatasetRecord>& records,
                                        const KnowledgeBase& kb, int* dropped_answers) {
  std::vector<QAExample> out;
  out.reserve(records.size());
  int dropped = 0;
  for (const auto& rec : records) {
    QAExample ex;
    ex.question = tokenize_question(rec.question);
    for (const auto& t : rec.topics) {
      auto id = kb.entities.find(t);
      if (!id) throw StageError("unknown topic entity: " + t);
      ex.topics.push_back(*id);
    }
    for (const auto& a : rec.answers) {
      auto id = kb.entities.find(a);
      if (id) {
        ex.answers.push_back(*id);
      } else {
        ++dropped;
      }
    }
    out.push_back(std::move(ex));
  }
  if (dropped_answers) *dropped_answers = dropped;
  return out;
}

}  // namespace kbqa
