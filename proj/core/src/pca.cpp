#include "cwsynth/pca.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "cwsynth/error.hpp"

namespace cwsynth {

PcaResult pca_project(const Matrix& x, std::size_t k) {
  const std::size_t n = x.rows(), d = x.cols();
  if (n == 0 || d == 0) throw ShapeError("pca: empty input");
  if (k == 0) throw ConfigError("pca: need at least one component");
  k = std::min(k, d);

  PcaResult r;
  r.mean = column_means(x);
  Eigen::MatrixXd c(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) c(i, j) = x(i, j) - r.mean[j];
  const Eigen::MatrixXd cov = (c.transpose() * c) / static_cast<double>(std::max<std::size_t>(n - 1, 1));
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw NumericError("pca: eigen-decomposition failed");

  r.loadings = Matrix(d, k);
  for (std::size_t a = 0; a < k; ++a) {
    // Eigen sorts ascending.
    const Eigen::Index src = static_cast<Eigen::Index>(d - 1 - a);
    Eigen::VectorXd v = eig.eigenvectors().col(src);
    Eigen::Index big = 0;
    for (Eigen::Index j = 1; j < v.size(); ++j)
      if (std::abs(v(j)) > std::abs(v(big))) big = j;
    if (v(big) < 0.0) v = -v;
    for (std::size_t j = 0; j < d; ++j) r.loadings(j, a) = v(static_cast<Eigen::Index>(j));
    r.eigenvalues.push_back(std::max(eig.eigenvalues()(src), 0.0));
  }
  r.projection = Matrix(n, k);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < k; ++a) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += c(i, j) * r.loadings(j, a);
      r.projection(i, a) = s;
    }
  return r;
}

}  // namespace cwsynth
