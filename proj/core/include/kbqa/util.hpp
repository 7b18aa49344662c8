#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace kbqa {

using EntityId = int32_t;
using RelationId = int32_t;

// Thrown on malformed input files; carries file/line context in the message.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Thrown when a pipeline stage cannot proceed (bad config, missing file, ...).
class StageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

// Lowercase a question string and split it into alphanumeric tokens
// (apostrophes kept, everything else is a separator).
std::vector<std::string> tokenize_question(std::string_view text);

std::string read_file(const std::string& path);
std::vector<std::string> read_lines(const std::string& path);
void write_file(const std::string& path, std::string_view content);
bool file_exists(const std::string& path);
void ensure_directory(const std::string& path);

uint64_t fnv1a(std::string_view data, uint64_t seed = 1469598103934665603ull);
std::string hex64(uint64_t value);

// Deterministic parallel map: out[i] = fn(i). Results land in index order,
// so downstream aggregation does not depend on the thread count.
void parallel_for(size_t count, const std::function<void(size_t)>& fn,
                  unsigned threads = 0);

std::string format_double(double v);  // shortest round-trip decimal

}  // namespace kbqa
