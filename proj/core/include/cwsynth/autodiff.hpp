#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cwsynth/matrix.hpp"

namespace cwsynth {

/// A named rows x cols window into a ParamStore's flat vector.
struct Slice {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t size() const noexcept { return rows * cols; }

  friend bool operator==(const Slice&, const Slice&) = default;
};

enum class Init { glorot_uniform, zeros };

/// Flat parameter vector partitioned into disjoint named slices.
/// Slices are appended in order and never resized.
class ParamStore {
 public:
  const Slice& add(std::string name, std::size_t rows, std::size_t cols,
                   Init init = Init::glorot_uniform);

  const Slice& slice(std::string_view name) const;
  const Slice* find(std::string_view name) const noexcept;
  const std::vector<Slice>& slices() const noexcept { return slices_; }

  std::size_t size() const noexcept { return values_.size(); }
  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  Matrix matrix(std::string_view name) const;
  void assign(std::string_view name, const Matrix& m);

  /// Weight slices draw from U(-a, a), a = sqrt(6 / (rows + cols)); zero slices stay zero.
  void initialize(std::uint64_t seed);

  friend bool operator==(const ParamStore& a, const ParamStore& b) {
    return a.slices_ == b.slices_ && a.values_ == b.values_;
  }

 private:
  std::vector<Slice> slices_;
  std::vector<Init> inits_;
  std::vector<double> values_;
};

/// Handle to a node recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

class Tape;

/// Backward callback: receives the node's upstream gradient and pushes
/// contributions to inputs via Tape::accumulate.
using BackwardFn = std::function<void(Tape&, const Matrix& upstream)>;

/// Reverse-mode recording of a computation over matrices. Single-threaded.
class Tape {
 public:
  Var constant(Matrix value);
  /// Leaf bound to a ParamStore slice; backward scatters its gradient there.
  Var parameter(const ParamStore& store, std::string_view name);
  /// Records a node computed outside the built-in op set.
  Var record(std::vector<Var> inputs, Matrix value, BackwardFn backward);

  const Matrix& value(Var v) const { return nodes_.at(v.id).value; }
  double scalar(Var v) const;
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  void accumulate(Var v, const Matrix& g);

  /// Gradient of a 1x1 output with respect to every parameter, aligned with `store`.
  std::vector<double> backward(Var output, const ParamStore& store);
  /// Gradient of a 1x1 output with respect to an arbitrary recorded node.
  Matrix gradient_of(Var output, Var wrt);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    std::optional<std::size_t> param_offset;
    bool requires_grad = false;
    bool is_leaf_variable = false;
  };
  void run_backward(Var output);
  std::vector<Node> nodes_;
};

namespace ad {

Var matmul(Tape& t, Var a, Var b);
/// x * w + b, with b a 1 x cols row broadcast over rows.
Var dense(Tape& t, Var x, Var w, Var b);
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double k);
Var add_row(Tape& t, Var a, Var row);

Var relu(Tape& t, Var a);
Var tanh(Tape& t, Var a);
Var softplus(Tape& t, Var a);
/// Exponent inputs are capped at 30.
Var exp(Tape& t, Var a);
/// Arguments are floored at 1e-12.
Var log(Tape& t, Var a);
Var sqrt(Tape& t, Var a);
Var square(Tape& t, Var a);
/// max(a, floor); gradient passes only where a > floor.
Var clamp_min(Tape& t, Var a, double floor);

/// Row-wise log-softmax applied independently to consecutive column blocks.
Var block_log_softmax(Tape& t, Var a, std::span<const std::size_t> blocks);

Var slice_cols(Tape& t, Var a, std::size_t begin, std::size_t count);
Var sum(Tape& t, Var a);
Var mean(Tape& t, Var a);

}  // namespace ad

/// Plain-value block log-softmax, same numerics as ad::block_log_softmax.
Matrix block_log_softmax(const Matrix& a, std::span<const std::size_t> blocks);
double softplus(double x) noexcept;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  bool passed(double tol) const noexcept { return max_rel_error <= tol; }
};

/// Relative error with an absolute floor: |a - b| / max(|a|, |b|, floor).
double relative_error(double a, double b, double floor = 1e-4) noexcept;

/// Compares `analytic` to central differences of `loss` around `point`, coordinate-wise.
/// When max_coords < point.size() a seeded subset of coordinates is checked.
GradCheckReport grad_check(const std::function<double(std::span<const double>)>& loss,
                           std::span<const double> point, std::span<const double> analytic,
                           double h = 1e-5, std::size_t max_coords = 0, std::uint64_t seed = 0);

/// Builds the graph with `build`, takes the reverse-mode gradient, and checks it
/// against central differences over the store's values.
GradCheckReport grad_check(const ParamStore& store,
                           const std::function<Var(Tape&, const ParamStore&)>& build,
                           double h = 1e-5, std::size_t max_coords = 0, std::uint64_t seed = 0);

/// Adaptive-moment optimizer over a flat parameter vector.
class Adam {
 public:
  Adam(std::size_t size, double learning_rate = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
       double epsilon = 1e-8);
  void step(std::span<double> params, std::span<const double> grad);
  std::size_t steps() const noexcept { return t_; }

 private:
  double lr_, b1_, b2_, eps_;
  std::size_t t_ = 0;
  std::vector<double> m_, v_;
};

}  // namespace cwsynth
