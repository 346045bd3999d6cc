#pragma once

#include <vector>

#include "cwsynth/matrix.hpp"

namespace cwsynth {

struct PcaResult {
  Matrix projection;  // n x k scores of the centered data
  Matrix loadings;    // d x k, unit columns
  std::vector<double> eigenvalues;  // k covariance eigenvalues, nonincreasing
  std::vector<double> mean;
};

/// Projects rows onto the top-k covariance eigenvectors (k clipped to d).
/// Each eigenvector is signed so that its largest-magnitude loading is positive.
PcaResult pca_project(const Matrix& x, std::size_t k = 2);

}  // namespace cwsynth
