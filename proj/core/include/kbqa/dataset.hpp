#pragma once

#include <string>
#include <vector>

#include "kbqa/kb.hpp"

namespace kbqa {

// One question as stored on disk: JSON object per line with fields
// `question` (string), `topics` (string list), `answers` (string list).
struct DatasetRecord {
  std::string question;
  std::vector<std::string> topics;
  std::vector<std::string> answers;
};

std::vector<DatasetRecord> load_dataset_file(const std::string& path);
void write_dataset_file(const std::string& path, const std::vector<DatasetRecord>& records);

// Resolves surfaces against the KB vocabularies and tokenizes the question.
// Unknown topic surfaces are an error; unknown answer surfaces are dropped
// (reported via dropped_answers when non-null).
std::vector<QAExample> resolve_dataset(const std::vector<DatasetRecord>& records,
                                        const KnowledgeBase& kb,
                                        int* dropped_answers = nullptr);

}  // namespace kbqa
