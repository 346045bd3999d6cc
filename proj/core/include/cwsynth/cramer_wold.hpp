#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>

#include "cwsynth/autodiff.hpp"
#include "cwsynth/matrix.hpp"

namespace cwsynth {

enum class KernelMode { exact_series, asymptotic, automatic };

const char* to_string(KernelMode m) noexcept;
KernelMode parse_kernel_mode(std::string_view name);

struct CwConfig {
  /// Smoothing variance; nullopt selects auto_bandwidth(n, m) per call.
  std::optional<double> kappa;
  KernelMode kernel_mode = KernelMode::automatic;
  /// In automatic mode, dimensions below this use the exact series.
  std::size_t switch_dim = 20;
  std::size_t mc_projections = 10000;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Confluent hypergeometric 1F1(a; b; -s) for a, b > 0, s >= 0.
/// Requires b >= a. Evaluated as exp(-s) * 1F1(b - a; b; s), a nonnegative series.
double hyp1f1_neg(double a, double b, double s);

/// phi_p(s) = 1F1(1/2; p/2; -s), the sphere average of exp(-s (v.u)^2) for unit u.
double phi_kernel(double s, std::size_t p, KernelMode mode = KernelMode::automatic,
                  std::size_t switch_dim = 20);
double phi_kernel_derivative(double s, std::size_t p, KernelMode mode = KernelMode::automatic,
                             std::size_t switch_dim = 20);

/// (4 / (3 min(n, m)))^(2/5).
double auto_bandwidth(std::size_t n, std::size_t m);

/// Closed-form Cramer-Wold distance between the rows of x and the rows of y:
///   1/(2 sqrt(pi k)) [ mean phi(|x-x'|^2/4k) + mean phi(|y-y'|^2/4k) - 2 mean phi(|x-y|^2/4k) ].
/// Symmetric in its arguments bit-for-bit.
double cw_distance(const Matrix& x, const Matrix& y, const CwConfig& cfg = {});

/// Differentiable form; gradients flow into whichever of x, y require them.
Var cw_distance(Tape& tape, Var x, Var y, const CwConfig& cfg = {});

/// Monte-Carlo slice average of the smoothed 1-d L2 distance over cfg.mc_projections
/// directions drawn uniformly on the sphere, taken p at a time from random orthonormal
/// frames; each slice integral is closed form.
double cw_distance_mc(const Matrix& x, const Matrix& y, const CwConfig& cfg = {});

/// Per-projection values from the Monte-Carlo estimator. Values within one frame are
/// correlated, so an iid standard error computed from them is conservative.
std::vector<double> cw_slices_mc(const Matrix& x, const Matrix& y, const CwConfig& cfg);

}  // namespace cwsynth
