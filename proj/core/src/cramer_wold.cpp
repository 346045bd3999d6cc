#include "cwsynth/cramer_wold.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/QR>

#include "cwsynth/error.hpp"
#include "cwsynth/random.hpp"
#include "fast_exp.hpp"

namespace cwsynth {

const char* to_string(KernelMode m) noexcept {
  switch (m) {
    case KernelMode::exact_series: return "exact_series";
    case KernelMode::asymptotic: return "asymptotic";
    case KernelMode::automatic: break;
  }
  return "auto";
}

KernelMode parse_kernel_mode(std::string_view name) {
  if (name == "exact_series" || name == "exact") return KernelMode::exact_series;
  if (name == "asymptotic") return KernelMode::asymptotic;
  if (name == "auto" || name == "automatic") return KernelMode::automatic;
  throw ConfigError("unknown kernel mode '" + std::string(name) + "'");
}

void CwConfig::validate() const {
  if (kappa && !(*kappa > 0.0)) throw ConfigError("cw kappa must be positive");
  if (mc_projections < 1) throw ConfigError("cw mc_projections must be at least 1");
}

double hyp1f1_neg(double a, double b, double s) {
  if (!(a > 0.0 && b > 0.0)) throw NumericError("hyp1f1_neg: a and b must be positive");
  if (!(s >= 0.0)) throw NumericError("hyp1f1_neg: argument must be nonnegative");
  if (b < a) throw NumericError("hyp1f1_neg: requires b >= a");
  if (s == 0.0) return 1.0;
  // Kummer: 1F1(a; b; -s) = e^{-s} 1F1(b - a; b; s), a series of nonnegative terms.
  const double c = b - a;
  double term = 1.0, sum = 1.0, log_scale = 0.0;
  for (std::size_t k = 0; k < 1000000; ++k) {
    const double kd = static_cast<double>(k);
    term *= (c + kd) / (b + kd) * s / (kd + 1.0);
    sum += term;
    if (sum > 1e200) {
      sum *= 1e-200;
      term *= 1e-200;
      log_scale += 200.0 * std::numbers::ln10;
    }
    if (kd + 1.0 > s && std::abs(term) <= 1e-17 * std::abs(sum)) break;
  }
  return std::exp(std::log(sum) + log_scale - s);
}

namespace {

bool use_exact(std::size_t p, KernelMode mode, std::size_t switch_dim) {
  if (mode == KernelMode::exact_series) return true;
  if (mode == KernelMode::asymptotic) {
    if (p < 2) throw ConfigError("asymptotic kernel requires dimension >= 2");
    return false;
  }
  return p < switch_dim || p < 2;
}

}  // namespace

double phi_kernel(double s, std::size_t p, KernelMode mode, std::size_t switch_dim) {
  if (!(s >= 0.0)) throw NumericError("phi_kernel: s must be nonnegative");
  if (p == 0) throw ConfigError("phi_kernel: dimension must be positive");
  const double pd = static_cast<double>(p);
  if (use_exact(p, mode, switch_dim)) return hyp1f1_neg(0.5, 0.5 * pd, s);
  return 1.0 / std::sqrt(1.0 + 4.0 * s / (2.0 * pd - 3.0));
}

double phi_kernel_derivative(double s, std::size_t p, KernelMode mode, std::size_t switch_dim) {
  if (!(s >= 0.0)) throw NumericError("phi_kernel_derivative: s must be nonnegative");
  if (p == 0) throw ConfigError("phi_kernel_derivative: dimension must be positive");
  const double pd = static_cast<double>(p);
  if (use_exact(p, mode, switch_dim)) return -(1.0 / pd) * hyp1f1_neg(1.5, 0.5 * pd + 1.0, s);
  const double c = 4.0 / (2.0 * pd - 3.0);
  const double base = 1.0 + c * s;
  return -0.5 * c / (base * std::sqrt(base));
}

double auto_bandwidth(std::size_t n, std::size_t m) {
  const double k = static_cast<double>(std::max<std::size_t>(1, std::min(n, m)));
  return std::pow(4.0 / (3.0 * k), 0.4);
}

namespace {

void check_pair(const Matrix& x, const Matrix& y) {
  if (x.cols() != y.cols())
    throw ShapeError("cw_distance: width mismatch (" + std::to_string(x.cols()) + " vs " +
                     std::to_string(y.cols()) + ")");
  if (x.rows() == 0 || y.rows() == 0) throw ShapeError("cw_distance: empty point set");
  if (x.cols() == 0) throw ShapeError("cw_distance: zero-width points");
}

double resolve_kappa(const CwConfig& cfg, std::size_t n, std::size_t m) {
  cfg.validate();
  return cfg.kappa ? *cfg.kappa : auto_bandwidth(n, m);
}

// Total order on matrices used to evaluate (x, y) and (y, x) along the same path.
bool precedes(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) return a.rows() < b.rows();
  return std::lexicographical_compare(a.values().begin(), a.values().end(), b.values().begin(),
                                      b.values().end());
}

double sq_dist(const double* a, const double* b, std::size_t p) {
  double s = 0.0;
  for (std::size_t k = 0; k < p; ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return s;
}

struct Kernel {
  std::size_t p;
  KernelMode mode;
  std::size_t switch_dim;
  double inv4k;
  double value(double d2) const { return phi_kernel(d2 * inv4k, p, mode, switch_dim); }
  double deriv(double d2) const { return phi_kernel_derivative(d2 * inv4k, p, mode, switch_dim); }
};

// Sum over all ordered pairs (i, i') of phi, diagonal included.
double self_sum(const Matrix& x, const Kernel& k) {
  const std::size_t n = x.rows(), p = x.cols();
  double off = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) off += k.value(sq_dist(x.row(i).data(), x.row(j).data(), p));
  return 2.0 * off + static_cast<double>(n) * k.value(0.0);
}

double cross_sum(const Matrix& x, const Matrix& y, const Kernel& k) {
  const std::size_t p = x.cols();
  double s = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < y.rows(); ++j) s += k.value(sq_dist(x.row(i).data(), y.row(j).data(), p));
  return s;
}

double closed_form(const Matrix& x, const Matrix& y, double kappa, const CwConfig& cfg) {
  const Kernel k{x.cols(), cfg.kernel_mode, cfg.switch_dim, 1.0 / (4.0 * kappa)};
  const double n = static_cast<double>(x.rows()), m = static_cast<double>(y.rows());
  const double sxx = self_sum(x, k), syy = self_sum(y, k), sxy = cross_sum(x, y, k);
  const double pref = 1.0 / (2.0 * std::sqrt(std::numbers::pi * kappa));
  return pref * (sxx / (n * n) + syy / (m * m) - 2.0 * sxy / (n * m));
}

// d/dx_i of the closed form; `other` is y. Returns n x p.
Matrix gradient_first(const Matrix& x, const Matrix& y, double kappa, const CwConfig& cfg) {
  const Kernel k{x.cols(), cfg.kernel_mode, cfg.switch_dim, 1.0 / (4.0 * kappa)};
  const std::size_t n = x.rows(), m = y.rows(), p = x.cols();
  const double nd = static_cast<double>(n), md = static_cast<double>(m);
  const double pref = 1.0 / (2.0 * std::sqrt(std::numbers::pi * kappa));
  // d phi(|a-b|^2 / 4k) / da = phi'(s) * (a - b) / (2k)
  const double self_coef = pref * 2.0 / (nd * nd) / (2.0 * kappa);
  const double cross_coef = -pref * 2.0 / (nd * md) / (2.0 * kappa);
  Matrix g(n, p);
  for (std::size_t i = 0; i < n; ++i) {
    const double* xi = x.row(i).data();
    double* gi = g.row(i).data();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double* xj = x.row(j).data();
      const double w = self_coef * k.deriv(sq_dist(xi, xj, p));
      for (std::size_t c = 0; c < p; ++c) gi[c] += w * (xi[c] - xj[c]);
    }
    for (std::size_t j = 0; j < m; ++j) {
      const double* yj = y.row(j).data();
      const double w = cross_coef * k.deriv(sq_dist(xi, yj, p));
      for (std::size_t c = 0; c < p; ++c) gi[c] += w * (xi[c] - yj[c]);
    }
  }
  return g;
}

}  // namespace

double cw_distance(const Matrix& x, const Matrix& y, const CwConfig& cfg) {
  check_pair(x, y);
  const double kappa = resolve_kappa(cfg, x.rows(), y.rows());
  return precedes(y, x) ? closed_form(y, x, kappa, cfg) : closed_form(x, y, kappa, cfg);
}

Var cw_distance(Tape& tape, Var x, Var y, const CwConfig& cfg) {
  const Matrix& xv = tape.value(x);
  const Matrix& yv = tape.value(y);
  check_pair(xv, yv);
  const double kappa = resolve_kappa(cfg, xv.rows(), yv.rows());
  const double value = cw_distance(xv, yv, cfg);
  return tape.record({x, y}, Matrix(1, 1, value), [x, y, kappa, cfg](Tape& tp, const Matrix& g) {
    const double s = g(0, 0);
    if (tp.requires_grad(x)) {
      Matrix gx = gradient_first(tp.value(x), tp.value(y), kappa, cfg);
      for (double& v : gx.values()) v *= s;
      tp.accumulate(x, gx);
    }
    if (tp.requires_grad(y)) {
      Matrix gy = gradient_first(tp.value(y), tp.value(x), kappa, cfg);
      for (double& v : gy.values()) v *= s;
      tp.accumulate(y, gy);
    }
  });
}

// ---------------------------------------------------------------------------
// Monte-Carlo slicing

namespace {

// sum_{i != j} exp(-(r_i - r_j)^2 * c) over unordered pairs, doubled, plus n.
__attribute__((target_clones("avx512f", "avx2", "default")))
double projected_self_sum(const double* r, std::size_t n, double c) {
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double ri = r[i];
    double acc = 0.0;
#pragma omp simd reduction(+ : acc)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = ri - r[j];
      acc += detail::exp_nonpositive(-d * d * c);
    }
    total += acc;
  }
  return 2.0 * total + static_cast<double>(n);
}

__attribute__((target_clones("avx512f", "avx2", "default")))
double projected_cross_sum(const double* r, std::size_t n, const double* q, std::size_t m, double c) {
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double ri = r[i];
    double acc = 0.0;
#pragma omp simd reduction(+ : acc)
    for (std::size_t j = 0; j < m; ++j) {
      const double d = ri - q[j];
      acc += detail::exp_nonpositive(-d * d * c);
    }
    total += acc;
  }
  return total;
}

}  // namespace

std::vector<double> cw_slices_mc(const Matrix& x, const Matrix& y, const CwConfig& cfg) {
  check_pair(x, y);
  const double kappa = resolve_kappa(cfg, x.rows(), y.rows());
  const std::size_t p = x.cols(), n = x.rows(), m = y.rows();
  const double nd = static_cast<double>(n), md = static_cast<double>(m);
  const double c = 1.0 / (4.0 * kappa);
  // Integral of N(t; a, k) N(t; b, k) dt = exp(-(a - b)^2 / 4k) / sqrt(4 pi k).
  const double pref = 1.0 / (2.0 * std::sqrt(std::numbers::pi * kappa));

  Rng rng = make_rng(cfg.seed, 0xC3);
  std::normal_distribution<double> normal(0.0, 1.0);
  // Directions come in Haar-random orthonormal frames: each is uniform on the sphere,
  // and a full frame integrates the quadratic part of the slice functional exactly.
  const Eigen::Index pe = static_cast<Eigen::Index>(p);
  Eigen::MatrixXd frame(pe, pe);
  Eigen::Index used = pe;
  auto next_direction = [&](double* out) {
    if (used == pe) {
      Eigen::MatrixXd g(pe, pe);
      for (Eigen::Index c = 0; c < pe; ++c)
        for (Eigen::Index r = 0; r < pe; ++r) g(r, c) = normal(rng);
      const Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
      frame = qr.householderQ();
      const auto& packed = qr.matrixQR();
      for (Eigen::Index c = 0; c < pe; ++c)
        if (packed(c, c) < 0.0) frame.col(c) = -frame.col(c);
      used = 0;
    }
    for (Eigen::Index r = 0; r < pe; ++r) out[r] = frame(r, used);
    ++used;
  };

  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const RowMajor> xm(x.data(), static_cast<Eigen::Index>(n), pe);
  const Eigen::Map<const RowMajor> ym(y.data(), static_cast<Eigen::Index>(m), pe);
  std::vector<double> slices;
  slices.reserve(cfg.mc_projections);
  constexpr std::size_t chunk = 128;
  for (std::size_t done = 0; done < cfg.mc_projections; done += chunk) {
    const std::size_t b = std::min(chunk, cfg.mc_projections - done);
    RowMajor v(static_cast<Eigen::Index>(b), pe);
    for (std::size_t k = 0; k < b; ++k) next_direction(v.row(static_cast<Eigen::Index>(k)).data());
    const RowMajor rx = v * xm.transpose();
    const RowMajor ry = v * ym.transpose();
    for (std::size_t k = 0; k < b; ++k) {
      const double* r = rx.row(static_cast<Eigen::Index>(k)).data();
      const double* q = ry.row(static_cast<Eigen::Index>(k)).data();
      const double sxx = projected_self_sum(r, n, c);
      const double syy = projected_self_sum(q, m, c);
      const double sxy = projected_cross_sum(r, n, q, m, c);
      slices.push_back(pref * (sxx / (nd * nd) + syy / (md * md) - 2.0 * sxy / (nd * md)));
    }
  }
  return slices;
}

double cw_distance_mc(const Matrix& x, const Matrix& y, const CwConfig& cfg) {
  const std::vector<double> s = cw_slices_mc(x, y, cfg);
  double total = 0.0;
  for (double v : s) total += v;
  return total / static_cast<double>(s.size());
}

}  // namespace cwsynth
