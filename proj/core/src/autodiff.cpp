#include "cwsynth/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cwsynth/error.hpp"
#include "cwsynth/random.hpp"

namespace cwsynth {

// ---------------------------------------------------------------------------
// ParamStore

const Slice& ParamStore::add(std::string name, std::size_t rows, std::size_t cols, Init init) {
  if (find(name)) throw ConfigError("duplicate parameter slice '" + name + "'");
  if (rows == 0 || cols == 0) throw ShapeError("parameter slice '" + name + "' is empty");
  slices_.push_back({std::move(name), values_.size(), rows, cols});
  inits_.push_back(init);
  values_.resize(values_.size() + rows * cols, 0.0);
  return slices_.back();
}

const Slice* ParamStore::find(std::string_view name) const noexcept {
  for (const Slice& s : slices_)
    if (s.name == name) return &s;
  return nullptr;
}

const Slice& ParamStore::slice(std::string_view name) const {
  if (const Slice* s = find(name)) return *s;
  throw ConfigError("unknown parameter slice '" + std::string(name) + "'");
}

Matrix ParamStore::matrix(std::string_view name) const {
  const Slice& s = slice(name);
  return Matrix(s.rows, s.cols,
                std::vector<double>(values_.begin() + static_cast<std::ptrdiff_t>(s.offset),
                                    values_.begin() + static_cast<std::ptrdiff_t>(s.offset + s.size())));
}

void ParamStore::assign(std::string_view name, const Matrix& m) {
  const Slice& s = slice(name);
  if (m.rows() != s.rows || m.cols() != s.cols)
    throw ShapeError("assign: shape mismatch for slice '" + s.name + "'");
  std::copy(m.values().begin(), m.values().end(), values_.begin() + static_cast<std::ptrdiff_t>(s.offset));
}

void ParamStore::initialize(std::uint64_t seed) {
  Rng rng = make_rng(seed, 0xA11);
  for (std::size_t k = 0; k < slices_.size(); ++k) {
    const Slice& s = slices_[k];
    auto first = values_.begin() + static_cast<std::ptrdiff_t>(s.offset);
    if (inits_[k] == Init::zeros) {
      std::fill(first, first + static_cast<std::ptrdiff_t>(s.size()), 0.0);
      continue;
    }
    const double a = std::sqrt(6.0 / static_cast<double>(s.rows + s.cols));
    std::uniform_real_distribution<double> unif(-a, a);
    for (std::size_t i = 0; i < s.size(); ++i) first[static_cast<std::ptrdiff_t>(i)] = unif(rng);
  }
}

// ---------------------------------------------------------------------------
// Tape

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, std::nullopt, false, false});
  return {nodes_.size() - 1};
}

Var Tape::parameter(const ParamStore& store, std::string_view name) {
  const Slice& s = store.slice(name);
  nodes_.push_back(Node{store.matrix(name), {}, {}, {}, s.offset, true, true});
  return {nodes_.size() - 1};
}

Var Tape::record(std::vector<Var> inputs, Matrix value, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  n.backward = std::move(backward);
  for (Var v : inputs) {
    if (v.id >= nodes_.size()) throw ShapeError("tape: input refers to an unrecorded node");
    n.inputs.push_back(v.id);
    n.requires_grad = n.requires_grad || nodes_[v.id].requires_grad;
  }
  if (!n.requires_grad) n.backward = nullptr;
  nodes_.push_back(std::move(n));
  return {nodes_.size() - 1};
}

double Tape::scalar(Var v) const {
  const Matrix& m = value(v);
  if (m.rows() != 1 || m.cols() != 1) throw ShapeError("tape: node is not a scalar");
  return m(0, 0);
}

void Tape::accumulate(Var v, const Matrix& g) {
  Node& n = nodes_.at(v.id);
  if (!n.requires_grad) return;
  if (!g.same_shape(n.value)) throw ShapeError("tape: gradient shape does not match node value");
  if (n.grad.empty()) {
    n.grad = g;
    return;
  }
  double* dst = n.grad.data();
  const double* src = g.data();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += src[i];
}

void Tape::run_backward(Var output) {
  Node& out = nodes_.at(output.id);
  if (out.value.rows() != 1 || out.value.cols() != 1)
    throw ShapeError("backward: output must be a 1x1 scalar");
  for (Node& n : nodes_) n.grad = Matrix();
  if (!out.requires_grad) return;
  out.grad = Matrix(1, 1, 1.0);
  for (std::size_t id = output.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.grad.empty() || !n.backward) continue;
    // Inputs always precede their consumer, so n.grad is not touched by the callback.
    n.backward(*this, n.grad);
  }
}

std::vector<double> Tape::backward(Var output, const ParamStore& store) {
  run_backward(output);
  std::vector<double> grad(store.size(), 0.0);
  for (const Node& n : nodes_) {
    if (!n.param_offset || n.grad.empty()) continue;
    if (*n.param_offset + n.grad.size() > grad.size())
      throw ShapeError("backward: parameter node does not belong to this store");
    for (std::size_t i = 0; i < n.grad.size(); ++i) grad[*n.param_offset + i] += n.grad.data()[i];
  }
  return grad;
}

Matrix Tape::gradient_of(Var output, Var wrt) {
  run_backward(output);
  const Node& n = nodes_.at(wrt.id);
  if (n.grad.empty()) return Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

// ---------------------------------------------------------------------------
// Ops

double softplus(double x) noexcept {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

Matrix block_log_softmax(const Matrix& a, std::span<const std::size_t> blocks) {
  const std::size_t width = std::accumulate(blocks.begin(), blocks.end(), std::size_t{0});
  if (width != a.cols()) throw ShapeError("block_log_softmax: blocks do not cover the columns");
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* x = a.row(i).data();
    double* y = out.row(i).data();
    std::size_t off = 0;
    for (std::size_t b : blocks) {
      double mx = x[off];
      for (std::size_t l = 1; l < b; ++l) mx = std::max(mx, x[off + l]);
      double s = 0.0;
      for (std::size_t l = 0; l < b; ++l) s += std::exp(x[off + l] - mx);
      const double lse = mx + std::log(s);
      for (std::size_t l = 0; l < b; ++l) y[off + l] = x[off + l] - lse;
      off += b;
    }
  }
  return out;
}

namespace ad {

namespace {

void require_same(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) throw ShapeError(std::string(op) + ": operand shapes differ");
}

template <typename F, typename D>
Var unary(Tape& t, Var a, F f, D dfdx) {
  const Matrix& x = t.value(a);
  Matrix y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) y.data()[i] = f(x.data()[i]);
  return t.record({a}, std::move(y), [a, dfdx](Tape& tp, const Matrix& g) {
    const Matrix& x = tp.value(a);
    Matrix d(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.size(); ++i) d.data()[i] = g.data()[i] * dfdx(x.data()[i]);
    tp.accumulate(a, d);
  });
}

}  // namespace

Var matmul(Tape& t, Var a, Var b) {
  Matrix y = cwsynth::matmul(t.value(a), t.value(b));
  return t.record({a, b}, std::move(y), [a, b](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, matmul_nt(g, tp.value(b)));
    if (tp.requires_grad(b)) tp.accumulate(b, matmul_tn(tp.value(a), g));
  });
}

Var add_row(Tape& t, Var a, Var row) {
  const Matrix& x = t.value(a);
  const Matrix& r = t.value(row);
  if (r.rows() != 1 || r.cols() != x.cols()) throw ShapeError("add_row: bias shape mismatch");
  Matrix y = x;
  for (std::size_t i = 0; i < y.rows(); ++i)
    for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) += r(0, j);
  return t.record({a, row}, std::move(y), [a, row](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    if (tp.requires_grad(row)) {
      Matrix db(1, g.cols());
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) db(0, j) += g(i, j);
      tp.accumulate(row, db);
    }
  });
}

Var dense(Tape& t, Var x, Var w, Var b) { return add_row(t, matmul(t, x, w), b); }

Var add(Tape& t, Var a, Var b) {
  require_same(t.value(a), t.value(b), "add");
  Matrix y = t.value(a);
  for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] += t.value(b).data()[i];
  return t.record({a, b}, std::move(y), [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

Var sub(Tape& t, Var a, Var b) {
  require_same(t.value(a), t.value(b), "sub");
  Matrix y = t.value(a);
  for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] -= t.value(b).data()[i];
  return t.record({a, b}, std::move(y), [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    if (tp.requires_grad(b)) {
      Matrix d = g;
      for (double& v : d.values()) v = -v;
      tp.accumulate(b, d);
    }
  });
}

Var mul(Tape& t, Var a, Var b) {
  require_same(t.value(a), t.value(b), "mul");
  Matrix y = t.value(a);
  for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] *= t.value(b).data()[i];
  return t.record({a, b}, std::move(y), [a, b](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(a)) {
      Matrix d = g;
      for (std::size_t i = 0; i < d.size(); ++i) d.data()[i] *= tp.value(b).data()[i];
      tp.accumulate(a, d);
    }
    if (tp.requires_grad(b)) {
      Matrix d = g;
      for (std::size_t i = 0; i < d.size(); ++i) d.data()[i] *= tp.value(a).data()[i];
      tp.accumulate(b, d);
    }
  });
}

Var scale(Tape& t, Var a, double k) {
  return unary(t, a, [k](double x) { return k * x; }, [k](double) { return k; });
}

Var relu(Tape& t, Var a) {
  return unary(t, a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Var tanh(Tape& t, Var a) {
  return unary(t, a, [](double x) { return std::tanh(x); },
               [](double x) {
                 const double th = std::tanh(x);
                 return 1.0 - th * th;
               });
}

Var softplus(Tape& t, Var a) {
  return unary(t, a, [](double x) { return cwsynth::softplus(x); },
               [](double x) { return 1.0 / (1.0 + std::exp(-x)); });
}

Var exp(Tape& t, Var a) {
  static constexpr double cap = 30.0;
  return unary(t, a, [](double x) { return std::exp(std::min(x, cap)); },
               [](double x) { return x < cap ? std::exp(x) : 0.0; });
}

Var log(Tape& t, Var a) {
  static constexpr double floor = 1e-12;
  return unary(t, a, [](double x) { return std::log(std::max(x, floor)); },
               [](double x) { return x > floor ? 1.0 / x : 0.0; });
}

Var sqrt(Tape& t, Var a) {
  return unary(t, a, [](double x) { return std::sqrt(x); },
               [](double x) { return x > 0.0 ? 0.5 / std::sqrt(x) : 0.0; });
}

Var square(Tape& t, Var a) {
  return unary(t, a, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

Var clamp_min(Tape& t, Var a, double floor) {
  return unary(t, a, [floor](double x) { return std::max(x, floor); },
               [floor](double x) { return x > floor ? 1.0 : 0.0; });
}

Var block_log_softmax(Tape& t, Var a, std::span<const std::size_t> blocks) {
  std::vector<std::size_t> bl(blocks.begin(), blocks.end());
  Matrix y = cwsynth::block_log_softmax(t.value(a), bl);
  Matrix probs = y;
  for (double& v : probs.values()) v = std::exp(v);
  return t.record({a}, std::move(y),
                  [a, bl = std::move(bl), probs = std::move(probs)](Tape& tp, const Matrix& g) {
                    // d/dx_k = g_k - softmax_k * sum_block(g)
                    Matrix d(g.rows(), g.cols());
                    for (std::size_t i = 0; i < g.rows(); ++i) {
                      std::size_t off = 0;
                      for (std::size_t b : bl) {
                        double gs = 0.0;
                        for (std::size_t l = 0; l < b; ++l) gs += g(i, off + l);
                        for (std::size_t l = 0; l < b; ++l)
                          d(i, off + l) = g(i, off + l) - probs(i, off + l) * gs;
                        off += b;
                      }
                    }
                    tp.accumulate(a, d);
                  });
}

Var slice_cols(Tape& t, Var a, std::size_t begin, std::size_t count) {
  const Matrix& x = t.value(a);
  if (begin + count > x.cols()) throw ShapeError("slice_cols: range out of bounds");
  Matrix y(x.rows(), count);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < count; ++j) y(i, j) = x(i, begin + j);
  return t.record({a}, std::move(y), [a, begin, count](Tape& tp, const Matrix& g) {
    const Matrix& x = tp.value(a);
    Matrix d(x.rows(), x.cols());
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < count; ++j) d(i, begin + j) = g(i, j);
    tp.accumulate(a, d);
  });
}

Var sum(Tape& t, Var a) {
  const Matrix& x = t.value(a);
  double s = 0.0;
  for (double v : x.values()) s += v;
  return t.record({a}, Matrix(1, 1, s), [a](Tape& tp, const Matrix& g) {
    const Matrix& x = tp.value(a);
    tp.accumulate(a, Matrix(x.rows(), x.cols(), g(0, 0)));
  });
}

Var mean(Tape& t, Var a) {
  const double n = static_cast<double>(t.value(a).size());
  return scale(t, sum(t, a), 1.0 / n);
}

}  // namespace ad

// ---------------------------------------------------------------------------
// Gradient checking

double relative_error(double a, double b, double floor) noexcept {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

GradCheckReport grad_check(const std::function<double(std::span<const double>)>& loss,
                           std::span<const double> point, std::span<const double> analytic,
                           double h, std::size_t max_coords, std::uint64_t seed) {
  if (point.size() != analytic.size()) throw ShapeError("grad_check: size mismatch");
  std::vector<std::size_t> coords(point.size());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (max_coords > 0 && max_coords < coords.size()) {
    Rng rng = make_rng(seed, 0x6C);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(max_coords);
    std::sort(coords.begin(), coords.end());
  }
  std::vector<double> x(point.begin(), point.end());
  GradCheckReport report;
  for (std::size_t i : coords) {
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = loss(x);
    x[i] = orig - h;
    const double fm = loss(x);
    x[i] = orig;
    const double numeric = (fp - fm) / (2.0 * h);
    double err = relative_error(analytic[i], numeric);
    if (std::isnan(err)) err = INFINITY;
    if (report.checked == 0 || err > report.max_rel_error) {
      report.max_rel_error = err;
      report.worst_index = i;
      report.analytic_at_worst = analytic[i];
      report.numeric_at_worst = numeric;
    }
    ++report.checked;
  }
  return report;
}

GradCheckReport grad_check(const ParamStore& store,
                           const std::function<Var(Tape&, const ParamStore&)>& build, double h,
                           std::size_t max_coords, std::uint64_t seed) {
  Tape tape;
  const Var out = build(tape, store);
  const std::vector<double> analytic = tape.backward(out, store);
  ParamStore probe = store;
  auto loss = [&](std::span<const double> x) {
    std::copy(x.begin(), x.end(), probe.values().begin());
    Tape t;
    return t.scalar(build(t, probe));
  };
  return grad_check(loss, store.values(), analytic, h, max_coords, seed);
}

// ---------------------------------------------------------------------------
// Adam

Adam::Adam(std::size_t size, double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), b1_(beta1), b2_(beta2), eps_(epsilon), m_(size, 0.0), v_(size, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grad) {
  if (params.size() != m_.size() || grad.size() != m_.size())
    throw ShapeError("Adam: size mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = b1_ * m_[i] + (1.0 - b1_) * grad[i];
    v_[i] = b2_ * v_[i] + (1.0 - b2_) * grad[i] * grad[i];
    params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

}  // namespace cwsynth
