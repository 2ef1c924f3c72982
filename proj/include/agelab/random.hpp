#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace agelab {

using Rng = std::mt19937_64;

// splitmix64 finalizer (Steele, Lea, Flood 2014).
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Seed of repetition `rep`; depends only on (base, rep), never on scheduling.
inline std::uint64_t rep_seed(std::uint64_t base, std::uint64_t rep) {
  return splitmix64(splitmix64(base) ^ (rep * 0xD1B54A32D192ED03ULL + 1));
}

inline Eigen::MatrixXd standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> nd;
  Eigen::MatrixXd out(rows, cols);
  // row-major fill so a prefix of rows does not depend on `rows`
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = nd(rng);
  return out;
}

}  // namespace agelab
