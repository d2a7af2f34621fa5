#include "coxhoa/rng.hpp"

#include <cmath>

#include "coxhoa/error.hpp"

namespace coxhoa {

namespace {

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t index)
    : seed_(seed), index_(index), engine_(derive_seed(seed, index)) {}

double RngStream::uniform() {
  return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::exponential(double rate) {
  if (!(rate > 0.0) || !std::isfinite(rate)) {
    throw NumericalError("exponential rate must be positive and finite");
  }
  return -std::log(uniform()) / rate;
}

double RngStream::normal() { return normal_(engine_); }

Index RngStream::uniform_index(Index n) {
  std::uniform_int_distribution<Index> dist(0, n - 1);
  return dist(engine_);
}

}  // namespace coxhoa
