#pragma once

#include <cstdint>
#include <random>

#include "imse/linalg.hpp"

namespace imse {

// One independent generator per (seed, stream, index). Results never depend on
// which worker thread draws them.
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  Vec normal_vec(Eigen::Index dim);
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

namespace streams {
constexpr std::uint64_t channel = 1;
constexpr std::uint64_t particle = 2;
constexpr std::uint64_t plant = 3;
constexpr std::uint64_t instances = 4;
}  // namespace streams

}  // namespace imse
