#include "kmeans.hpp"

#include <algorithm>
#include <limits>

namespace cwsynth::detail {

namespace {

double squared_distance(const double* a, const double* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t t = 0; t < d; ++t) {
    const double diff = a[t] - b[t];
    s += diff * diff;
  }
  return s;
}

std::size_t uniform_index(Rng& rng, std::size_t n) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  return std::min(n - 1, static_cast<std::size_t>(unif(rng) * static_cast<double>(n)));
}

}  // namespace

std::vector<std::size_t> kmeanspp_centers(const Matrix& x, std::size_t k, Rng& rng) {
  const std::size_t n = x.rows(), d = x.cols();
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<std::size_t> centers{uniform_index(rng, n)};
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  while (centers.size() < k) {
    const double* c = x.row(centers.back()).data();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(x.row(i).data(), c, d));
      total += d2[i];
    }
    if (total <= 0.0) {
      centers.push_back(uniform_index(rng, n));
      continue;
    }
    const double u = unif(rng) * total;
    double acc = 0.0;
    std::size_t pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      acc += d2[i];
      if (u < acc) {
        pick = i;
        break;
      }
    }
    centers.push_back(pick);
  }
  return centers;
}

std::size_t nearest_center(std::span<const double> row, const Matrix& centers) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < centers.rows(); ++k) {
    const double s = squared_distance(row.data(), centers.row(k).data(), row.size());
    if (s < best_d) {
      best_d = s;
      best = k;
    }
  }
  return best;
}

KMeansResult kmeans(const Matrix& x, std::size_t k, std::size_t max_iters, Rng& rng) {
  const std::size_t n = x.rows(), d = x.cols();
  KMeansResult r;
  r.centers = gather_rows(x, kmeanspp_centers(x, k, rng));
  r.assignment.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) r.assignment[i] = nearest_center(x.row(i), r.centers);
  for (std::size_t it = 0; it < max_iters; ++it) {
    Matrix sums(k, d);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = r.assignment[i];
      ++counts[c];
      for (std::size_t t = 0; t < d; ++t) sums(c, t) += x(i, t);
    }
    for (std::size_t c = 0; c < k; ++c)
      if (counts[c] > 0)
        for (std::size_t t = 0; t < d; ++t)
          r.centers(c, t) = sums(c, t) / static_cast<double>(counts[c]);
    r.iterations = it + 1;
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = nearest_center(x.row(i), r.centers);
      changed |= c != r.assignment[i];
      r.assignment[i] = c;
    }
    if (!changed) break;
  }
  return r;
}

}  // namespace cwsynth::detail
