#pragma once

#include <cstdint>
#include <random>

#include "coxhoa/types.hpp"

namespace coxhoa {

// Mixes (seed, index) into a child seed with the splitmix64 finalizer. Used
// for nested stream derivation: (master, dataset) -> dataset seed, then
// (dataset seed, trial) -> trial stream.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

// Reproducible random stream identified by (seed, index). Each stream owns a
// Mersenne Twister seeded from derive_seed(seed, index).
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t index);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t index() const { return index_; }

  // Uniform on the open interval (0, 1), 53 bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double exponential(double rate);
  double normal();
  // Uniform on {0, ..., n - 1}.
  Index uniform_index(Index n);

 private:
  std::uint64_t seed_;
  std::uint64_t index_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

}  // namespace coxhoa
