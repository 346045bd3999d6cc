#pragma once

// Independent reference computations and random generators shared by the tests.

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "cwsynth/data.hpp"
#include "cwsynth/matrix.hpp"

namespace oracle {

using cwsynth::CategoricalDataset;
using cwsynth::Column;
using cwsynth::DatasetSchema;
using cwsynth::Matrix;
using cwsynth::SchemaPtr;

inline SchemaPtr make_schema(const std::vector<std::size_t>& levels) {
  std::vector<Column> cols;
  for (std::size_t j = 0; j < levels.size(); ++j) {
    Column c{"c" + std::to_string(j), {}, false};
    for (std::size_t l = 0; l < levels[j]; ++l) c.levels.push_back("l" + std::to_string(l));
    cols.push_back(std::move(c));
  }
  return std::make_shared<const DatasetSchema>(std::move(cols));
}

inline CategoricalDataset random_dataset(const SchemaPtr& schema, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::uint32_t> codes(n * schema->num_columns());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < schema->num_columns(); ++j) {
      std::uniform_int_distribution<std::uint32_t> u(0, static_cast<std::uint32_t>(schema->levels(j) - 1));
      codes[i * schema->num_columns() + j] = u(rng);
    }
  return CategoricalDataset(schema, std::move(codes));
}

inline CategoricalDataset from_codes(const SchemaPtr& schema, std::vector<std::uint32_t> codes) {
  return CategoricalDataset(schema, std::move(codes));
}

inline Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, scale);
  Matrix m(r, c);
  for (double& v : m.values()) v = nd(rng);
  return m;
}

/// Composite Simpson rule on [a, b] with an even number of panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, std::size_t panels) {
  if (panels % 2) ++panels;
  const double h = (b - a) / static_cast<double>(panels);
  double s = f(a) + f(b);
  for (std::size_t k = 1; k < panels; ++k) s += f(a + h * static_cast<double>(k)) * (k % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

/// Sphere average of exp(-s (v.e1)^2) for v uniform on S^{p-1}, by quadrature over the polar angle.
inline double phi_quadrature(double s, std::size_t p) {
  const double dp = static_cast<double>(p);
  const double log_norm = std::lgamma(dp / 2.0) - std::lgamma(0.5) - std::lgamma((dp - 1.0) / 2.0);
  const auto f = [&](double t) {
    const double c = std::cos(t), sn = std::sin(t);
    if (sn <= 0.0) return p == 2 ? std::exp(-s * c * c) : 0.0;
    return std::exp(-s * c * c + (dp - 2.0) * std::log(sn));
  };
  return std::exp(log_norm) * simpson(f, 0.0, std::numbers::pi, 20000);
}

/// O(n^2) Kendall tau-b by explicit pair enumeration.
inline double kendall_brute(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b) {
  long long conc = 0, disc = 0, ties_a = 0, ties_b = 0, n0 = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      ++n0;
      const int da = (a[i] > a[j]) - (a[i] < a[j]);
      const int db = (b[i] > b[j]) - (b[i] < b[j]);
      if (da == 0) ++ties_a;
      if (db == 0) ++ties_b;
      if (da * db > 0) ++conc;
      if (da * db < 0) ++disc;
    }
  return static_cast<double>(conc - disc) /
         std::sqrt(static_cast<double>(n0 - ties_a) * static_cast<double>(n0 - ties_b));
}

/// Gaussian density in one dimension.
inline double normal_pdf(double x, double mean, double var) {
  return std::exp(-0.5 * (x - mean) * (x - mean) / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

}  // namespace oracle
