#pragma once

// Dense 2-D arrays, a reverse-mode tape over a fixed set of primitives, MLP
// helpers, Adam, finite-difference checking and the SKF1 array container.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "error.hpp"
#include "rng.hpp"

namespace csf {

/// Row-major matrix of doubles. Batches live along the row dimension.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix row_vector(std::span<const double> values);
  static Matrix scalar(double v) { return Matrix(1, 1, v); }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  /// Value of a 1x1 matrix.
  double item() const;
  bool all_finite() const noexcept;
  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  void fill(double v);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

std::string shape_string(const Matrix& m);
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix hconcat(std::initializer_list<const Matrix*> parts);
Matrix select_rows(const Matrix& m, std::span<const std::size_t> rows);

/// Ordered collection of named arrays: one network's weights, or the
/// entries of a checkpoint file.
class ParamSet {
 public:
  void add(std::string name, Matrix value);
  std::size_t size() const noexcept { return values_.size(); }
  std::size_t num_scalars() const noexcept;

  const std::string& name(std::size_t i) const { return names_[i]; }
  Matrix& operator[](std::size_t i) { return values_[i]; }
  const Matrix& operator[](std::size_t i) const { return values_[i]; }

  bool contains(std::string_view name) const noexcept;
  Matrix& at(std::string_view name);
  const Matrix& at(std::string_view name) const;

  const std::vector<std::string>& names() const noexcept { return names_; }
  std::vector<Matrix>& values() noexcept { return values_; }
  const std::vector<Matrix>& values() const noexcept { return values_; }

  friend bool operator==(const ParamSet&, const ParamSet&) = default;

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
};

using Gradients = std::vector<Matrix>;

struct Var {
  std::size_t id = 0;
};

enum class Activation { relu, tanh };

/// Record of one forward computation. Nodes are appended in evaluation
/// order, so the node list is already a topological order and backward is a
/// single reverse sweep. A tape may be swept once.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  Var constant(Matrix value);
  Var leaf(Matrix value);
  /// One leaf per entry of `params`; untrainable leaves behave as constants.
  std::vector<Var> bind(const ParamSet& params, bool trainable = true);

  // Binary elementwise ops broadcast `b` when it is 1x1, 1xC or Rx1.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var matmul(Var a, Var b);
  Var scale(Var a, double c);
  Var add_scalar(Var a, double c);

  Var relu(Var a);
  Var tanh(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var square(Var a);
  Var abs(Var a);
  /// log(cosh(x)) evaluated without overflow.
  Var log_cosh(Var a);
  Var clamp(Var a, double lo, double hi);

  /// Sum of all entries, 1x1.
  Var sum(Var a);
  Var mean(Var a);
  /// Per-row sum, Rx1.
  Var row_sum(Var a);
  /// Per-row log-sum-exp, Rx1, shifted by the row max before exponentiating.
  Var row_logsumexp(Var a);
  Var broadcast_rows(Var a, std::size_t rows);
  Var broadcast_cols(Var a, std::size_t cols);
  Var concat_cols(std::initializer_list<Var> parts);
  Var slice_cols(Var a, std::size_t begin, std::size_t end);
  Var transpose(Var a);

  const Matrix& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  void backward(Var output, const Matrix& output_adjoint);
  /// Scalar outputs: seeds the adjoint with 1.
  void backward(Var output);
  const Matrix& adjoint(Var v) const;
  Gradients gradients(std::span<const Var> leaves) const;

  bool consumed() const noexcept { return consumed_; }
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  enum class Op {
    leaf, matmul, add, sub, mul, scale, add_scalar, relu, tanh, exp, log,
    square, abs, log_cosh, clamp, sum, row_sum, row_logsumexp, broadcast_rows,
    broadcast_cols, concat_cols, slice_cols, transpose,
  };
  struct Node {
    Op op = Op::leaf;
    std::vector<std::size_t> inputs;
    Matrix value;
    double c0 = 0.0;
    double c1 = 0.0;
    std::size_t i0 = 0;
    bool requires_grad = false;
  };

  Var push(Op op, std::vector<std::size_t> inputs, Matrix value, double c0 = 0.0,
           double c1 = 0.0, std::size_t i0 = 0);
  Var binary(Op op, Var a, Var b);
  void accumulate_broadcast(std::size_t target, const Matrix& full);

  std::vector<Node> nodes_;
  std::vector<Matrix> adjoints_;
  bool consumed_ = false;
};

// ---------------------------------------------------------------------------
// Multi-layer perceptrons. Parameters are named "<net>.l<i>.w" (in x out) and
// "<net>.l<i>.b" (1 x out); hidden layers apply the activation, the output
// layer is linear.

struct MlpShape {
  std::size_t input = 0;
  std::size_t hidden = 0;
  std::size_t output = 0;
  std::size_t hidden_layers = 2;
};

/// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init, seeded from `seed` and the name.
ParamSet init_mlp(const std::string& name, const MlpShape& shape, std::uint64_t seed);
std::size_t mlp_input_dim(const ParamSet& params);
std::size_t mlp_output_dim(const ParamSet& params);

Var mlp(Tape& tape, std::span<const Var> params, Var input, Activation act);
/// Tape-free evaluation for rollouts.
Matrix mlp_forward(const ParamSet& params, const Matrix& input, Activation act);

struct MlpForward {
  Matrix output;
  Tape tape;
  std::vector<Var> params;
  Var out;
};
MlpForward forward_mlp(const ParamSet& params, const Matrix& input, Activation act);
Gradients backward(MlpForward& forward, const Matrix& output_adjoint);

// ---------------------------------------------------------------------------
// Optimization.

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::int64_t step = 0;
  std::vector<Matrix> m;
  std::vector<Matrix> v;

  static AdamState for_params(const ParamSet& params, AdamConfig config = {});
};

/// Bias-corrected Adam. Non-finite gradients throw before anything is touched.
void adam_step(ParamSet& params, const Gradients& grads, AdamState& state);

/// Scales `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_global_norm(Gradients& grads, double max_norm);

// ---------------------------------------------------------------------------
// Finite-difference checking.

using LossFn = std::function<Var(Tape&, std::span<const Var>)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
  bool passed = false;
};

/// Central differences with step `h` against the tape gradient, on every
/// entry or on a random subset of 10k entries for larger sets. Relative error
/// is |g - fd| / max(|g|, |fd|, abs_floor).
GradCheckReport grad_check(ParamSet& params, const LossFn& loss_fn, double tolerance,
                           std::uint64_t seed = 0, double h = 1e-5,
                           double abs_floor = 1e-6);

// ---------------------------------------------------------------------------
// SKF1 container: "SKF1", u32 version, u32 entry count, then per entry
// u32 name length, name bytes, u32 rows, u32 cols, rows*cols f64.
// All integers and floats little-endian.

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_arrays(const ParamSet& arrays);
ParamSet decode_arrays(std::string_view bytes);
void save_arrays(const std::string& path, const ParamSet& arrays);
ParamSet load_arrays(const std::string& path);

}  // namespace csf
