#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace rorl {

/// Every stochastic routine takes one of these by reference; there is no
/// global generator anywhere in the library.
using Rng = std::mt19937_64;

/// Derives an independent stream from a master seed. Streams are keyed by a
/// fixed offset so worker/episode ordering never depends on scheduling.
inline Rng make_stream(std::uint64_t seed, std::uint64_t offset) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(offset), static_cast<std::uint32_t>(offset >> 32),
                    0x5eedu};
  return Rng(seq);
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> uniform_matrix(Eigen::Index rows,
                                                                     Eigen::Index cols,
                                                                     Scalar lo, Scalar hi,
                                                                     Rng& rng) {
  std::uniform_real_distribution<Scalar> dist(lo, hi);
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out(rows, cols);
  // Column-major fill order is part of the reproducibility contract.
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) out(r, c) = dist(rng);
  return out;
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> normal_matrix(Eigen::Index rows,
                                                                    Eigen::Index cols,
                                                                    Rng& rng) {
  std::normal_distribution<Scalar> dist(Scalar(0), Scalar(1));
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) out(r, c) = dist(rng);
  return out;
}

}  // namespace rorl
