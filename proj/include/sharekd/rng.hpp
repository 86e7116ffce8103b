#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace sharekd {

// Derives an independent seed for a named stage so that changing one stage's
// configuration never perturbs another stage's sampling.
std::uint64_t derive_seed(std::uint64_t base, std::string_view stage);

// mt19937_64 with distribution code written out explicitly, so streams are
// identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // Uniform in [0, 1).
  double uniform();
  // Uniform integer in [0, n).
  std::size_t below(std::size_t n);
  double normal(double mean = 0.0, double stddev = 1.0);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[below(i)]);
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace sharekd
