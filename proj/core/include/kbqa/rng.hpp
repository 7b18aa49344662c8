#pragma once

#include <cstdint>
#include <vector>

namespace kbqa {

// Deterministic random source. Gaussian draws go through an explicit
// Box-Muller transform so sequences are reproducible bit-for-bit across
// standard library implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64();
  double uniform();                 // [0, 1)
  double normal();                  // N(0, 1)
  double normal(double mean, double stddev);
  int64_t uniform_int(int64_t n);   // [0, n), n > 0

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(static_cast<int64_t>(i)));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Independent child stream, e.g. one per pipeline stage or per seed index.
  Rng fork(uint64_t stream) const;

 private:
  uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace kbqa
