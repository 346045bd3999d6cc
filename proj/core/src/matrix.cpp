#include "cwsynth/matrix.hpp"

#include <algorithm>
#include <string>

#include "cwsynth/error.hpp"

namespace cwsynth {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
  if (data_.size() != rows * cols) {
    throw ShapeError("matrix value count " + std::to_string(data_.size()) +
                     " does not match shape " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

namespace {

void require(bool ok, const char* op, const Matrix& a, const Matrix& b) {
  if (!ok) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " and " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), "matmul", a, b);
  Matrix out(a.rows(), b.cols());
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  for (std::size_t i = 0; i < n; ++i) {
    double* o = out.data() + i * m;
    const double* ai = a.data() + i * k;
    for (std::size_t t = 0; t < k; ++t) {
      const double av = ai[t];
      if (av == 0.0) continue;
      const double* bt = b.data() + t * m;
      for (std::size_t j = 0; j < m; ++j) o[j] += av * bt[j];
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows(), "matmul_tn", a, b);
  Matrix out(a.cols(), b.cols());
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  for (std::size_t r = 0; r < n; ++r) {
    const double* ar = a.data() + r * k;
    const double* br = b.data() + r * m;
    for (std::size_t i = 0; i < k; ++i) {
      const double av = ar[i];
      if (av == 0.0) continue;
      double* o = out.data() + i * m;
      for (std::size_t j = 0; j < m; ++j) o[j] += av * br[j];
    }
  }
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.cols(), "matmul_nt", a, b);
  Matrix out(a.rows(), b.rows());
  const std::size_t k = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* ai = a.data() + i * k;
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* bj = b.data() + j * k;
      double s = 0.0;
      for (std::size_t t = 0; t < k; ++t) s += ai[t] * bj[t];
      out(i, j) = s;
    }
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Matrix gather_rows(const Matrix& a, std::span<const std::size_t> indices) {
  Matrix out(indices.size(), a.cols());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= a.rows()) throw ShapeError("gather_rows: index out of range");
    std::copy_n(a.row(indices[r]).data(), a.cols(), out.row(r).data());
  }
  return out;
}

std::vector<double> column_means(const Matrix& a) {
  std::vector<double> mean(a.cols(), 0.0);
  if (a.rows() == 0) return mean;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) mean[j] += a(i, j);
  for (double& m : mean) m /= static_cast<double>(a.rows());
  return mean;
}

}  // namespace cwsynth
