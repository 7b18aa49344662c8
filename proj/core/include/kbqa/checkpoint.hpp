#pragma once

#include <map>
#include <memory>
#include <string>

#include "kbqa/reasoner.hpp"

namespace kbqa {

// Versioned binary container: magic + JSON header (config snapshot, word
// vocabulary, vocabulary/prior hashes, tensor directory) + raw row-major
// float64 tensor data. Loads refuse mismatched vocabularies or priors.
void save_checkpoint(const std::string& path, const Model& model,
                     const std::map<std::string, std::string>& config_snapshot,
                     const KnowledgeBase& kb);

std::unique_ptr<Model> load_checkpoint(const std::string& path, const KnowledgeBase& kb,
                                       const Matrix& prior);

// config snapshot stored in the checkpoint header
std::map<std::string, std::string> checkpoint_config(const std::string& path);

// ---- generic named-tensor container (also used for the VGAE weights) ----
void save_tensors(const std::string& path,
                  const std::vector<std::pair<std::string, Matrix>>& tensors,
                  const std::map<std::string, std::string>& header_fields);
std::vector<std::pair<std::string, Matrix>> load_tensors(
    const std::string& path, std::map<std::string, std::string>* header_fields = nullptr);

}  // namespace kbqa
