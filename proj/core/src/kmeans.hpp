#pragma once

#include <vector>

#include "cwsynth/matrix.hpp"
#include "cwsynth/random.hpp"

namespace cwsynth::detail {

/// k-means++ seeding: row indices of the k initial centers.
std::vector<std::size_t> kmeanspp_centers(const Matrix& x, std::size_t k, Rng& rng);

/// Index of the nearest center (squared Euclidean); ties go to the lowest index.
std::size_t nearest_center(std::span<const double> row, const Matrix& centers);

struct KMeansResult {
  Matrix centers;
  std::vector<std::size_t> assignment;
  std::size_t iterations = 0;
};

/// Lloyd iterations from k-means++ seeds. Empty clusters keep their previous center.
KMeansResult kmeans(const Matrix& x, std::size_t k, std::size_t max_iters, Rng& rng);

}  // namespace cwsynth::detail
