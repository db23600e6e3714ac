#include "autodiff.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace csf {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

ConstMap view(const Matrix& m) {
  return ConstMap(m.data(), static_cast<Eigen::Index>(m.rows()),
                  static_cast<Eigen::Index>(m.cols()));
}
MutMap view(Matrix& m) {
  return MutMap(m.data(), static_cast<Eigen::Index>(m.rows()),
                static_cast<Eigen::Index>(m.cols()));
}

enum class Broadcast { same, scalar, row, col };

Broadcast broadcast_kind(const Matrix& a, const Matrix& b) {
  if (a.same_shape(b)) return Broadcast::same;
  if (b.rows() == 1 && b.cols() == 1) return Broadcast::scalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::row;
  if (b.cols() == 1 && b.rows() == a.rows()) return Broadcast::col;
  fail(ErrorCode::dimension,
       "cannot broadcast " + shape_string(b) + " onto " + shape_string(a));
}

inline double bval(const Matrix& b, Broadcast k, std::size_t r, std::size_t c) {
  switch (k) {
    case Broadcast::same: return b(r, c);
    case Broadcast::scalar: return b[0];
    case Broadcast::row: return b(0, c);
    case Broadcast::col: return b(r, 0);
  }
  return 0.0;
}

double log_cosh_value(double x) {
  const double ax = std::abs(x);
  return ax + std::log1p(std::exp(-2.0 * ax)) - std::log(2.0);
}

}  // namespace

// ---------------------------------------------------------------------------
// Matrix

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  require(data_.size() == rows * cols, ErrorCode::dimension,
          "data length " + std::to_string(data_.size()) + " does not match " +
              std::to_string(rows) + "x" + std::to_string(cols));
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    require(row.size() == c, ErrorCode::dimension, "ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

Matrix Matrix::row_vector(std::span<const double> values) {
  return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

double Matrix::item() const {
  require(size() == 1, ErrorCode::dimension, "item() on " + shape_string(*this));
  return data_[0];
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string shape_string(const Matrix& m) {
  return "(" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")";
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), ErrorCode::dimension,
          "matmul " + shape_string(a) + " by " + shape_string(b));
  Matrix out(a.rows(), b.cols());
  view(out).noalias() = view(a) * view(b);
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  view(out) = view(a).transpose();
  return out;
}

Matrix hconcat(std::initializer_list<const Matrix*> parts) {
  std::size_t rows = (*parts.begin())->rows();
  std::size_t cols = 0;
  for (const Matrix* p : parts) {
    require(p->rows() == rows, ErrorCode::dimension, "hconcat row mismatch");
    cols += p->cols();
  }
  Matrix out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t c0 = 0;
    for (const Matrix* p : parts) {
      std::copy_n(p->row(r).data(), p->cols(), out.row(r).data() + c0);
      c0 += p->cols();
    }
  }
  return out;
}

Matrix select_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(m.row(rows[i]).data(), m.cols(), out.row(i).data());
  return out;
}

// ---------------------------------------------------------------------------
// ParamSet

void ParamSet::add(std::string name, Matrix value) {
  require(!contains(name), ErrorCode::invalid_argument, "duplicate array name " + name);
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
}

std::size_t ParamSet::num_scalars() const noexcept {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

bool ParamSet::contains(std::string_view name) const noexcept {
  return std::find(names_.begin(), names_.end(), name) != names_.end();
}

Matrix& ParamSet::at(std::string_view name) {
  auto it = std::find(names_.begin(), names_.end(), name);
  require(it != names_.end(), ErrorCode::invalid_argument,
          "no array named " + std::string(name));
  return values_[static_cast<std::size_t>(it - names_.begin())];
}

const Matrix& ParamSet::at(std::string_view name) const {
  return const_cast<ParamSet*>(this)->at(name);
}

// ---------------------------------------------------------------------------
// Tape

Var Tape::push(Op op, std::vector<std::size_t> inputs, Matrix value, double c0, double c1,
               std::size_t i0) {
  require(!consumed_, ErrorCode::usage, "tape already consumed");
  Node node;
  node.op = op;
  node.requires_grad = false;
  for (std::size_t in : inputs) node.requires_grad = node.requires_grad || nodes_[in].requires_grad;
  node.inputs = std::move(inputs);
  node.value = std::move(value);
  node.c0 = c0;
  node.c1 = c1;
  node.i0 = i0;
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Var Tape::constant(Matrix value) { return push(Op::leaf, {}, std::move(value)); }

Var Tape::leaf(Matrix value) {
  Var v = push(Op::leaf, {}, std::move(value));
  nodes_[v.id].requires_grad = true;
  return v;
}

std::vector<Var> Tape::bind(const ParamSet& params, bool trainable) {
  std::vector<Var> out;
  out.reserve(params.size());
  for (const auto& m : params.values()) out.push_back(trainable ? leaf(m) : constant(m));
  return out;
}

Var Tape::binary(Op op, Var a, Var b) {
  const Matrix& x = nodes_[a.id].value;
  const Matrix& y = nodes_[b.id].value;
  const Broadcast k = broadcast_kind(x, y);
  Matrix out(x.rows(), x.cols());
  if (k == Broadcast::same) {
    auto ov = view(out);
    switch (op) {
      case Op::add: ov = view(x) + view(y); break;
      case Op::sub: ov = view(x) - view(y); break;
      default: ov = view(x).cwiseProduct(view(y)); break;
    }
  } else {
    for (std::size_t r = 0; r < x.rows(); ++r)
      for (std::size_t c = 0; c < x.cols(); ++c) {
        const double yv = bval(y, k, r, c);
        out(r, c) = op == Op::add ? x(r, c) + yv : op == Op::sub ? x(r, c) - yv : x(r, c) * yv;
      }
  }
  return push(op, {a.id, b.id}, std::move(out));
}

Var Tape::add(Var a, Var b) { return binary(Op::add, a, b); }
Var Tape::sub(Var a, Var b) { return binary(Op::sub, a, b); }
Var Tape::mul(Var a, Var b) { return binary(Op::mul, a, b); }

Var Tape::matmul(Var a, Var b) {
  return push(Op::matmul, {a.id, b.id}, csf::matmul(nodes_[a.id].value, nodes_[b.id].value));
}

Var Tape::scale(Var a, double c) {
  Matrix out = nodes_[a.id].value;
  view(out) *= c;
  return push(Op::scale, {a.id}, std::move(out), c);
}

Var Tape::add_scalar(Var a, double c) {
  Matrix out = nodes_[a.id].value;
  view(out).array() += c;
  return push(Op::add_scalar, {a.id}, std::move(out), c);
}

namespace {
template <class F>
Matrix map_values(const Matrix& in, F f) {
  Matrix out(in.rows(), in.cols());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return out;
}
}  // namespace

Var Tape::relu(Var a) {
  return push(Op::relu, {a.id}, map_values(nodes_[a.id].value, [](double x) { return x > 0.0 ? x : 0.0; }));
}
Var Tape::tanh(Var a) {
  return push(Op::tanh, {a.id}, map_values(nodes_[a.id].value, [](double x) { return std::tanh(x); }));
}
Var Tape::exp(Var a) {
  return push(Op::exp, {a.id}, map_values(nodes_[a.id].value, [](double x) { return std::exp(x); }));
}
Var Tape::log(Var a) {
  return push(Op::log, {a.id}, map_values(nodes_[a.id].value, [](double x) { return std::log(x); }));
}
Var Tape::square(Var a) {
  return push(Op::square, {a.id}, map_values(nodes_[a.id].value, [](double x) { return x * x; }));
}
Var Tape::abs(Var a) {
  return push(Op::abs, {a.id}, map_values(nodes_[a.id].value, [](double x) { return std::abs(x); }));
}
Var Tape::log_cosh(Var a) {
  return push(Op::log_cosh, {a.id}, map_values(nodes_[a.id].value, log_cosh_value));
}
Var Tape::clamp(Var a, double lo, double hi) {
  return push(Op::clamp, {a.id},
              map_values(nodes_[a.id].value, [=](double x) { return std::clamp(x, lo, hi); }),
              lo, hi);
}

Var Tape::sum(Var a) {
  return push(Op::sum, {a.id}, Matrix::scalar(view(nodes_[a.id].value).sum()));
}

Var Tape::mean(Var a) {
  const double n = static_cast<double>(nodes_[a.id].value.size());
  return scale(sum(a), 1.0 / n);
}

Var Tape::row_sum(Var a) {
  const Matrix& x = nodes_[a.id].value;
  Matrix out(x.rows(), 1);
  view(out) = view(x).rowwise().sum();
  return push(Op::row_sum, {a.id}, std::move(out));
}

Var Tape::row_logsumexp(Var a) {
  const Matrix& x = nodes_[a.id].value;
  require(x.cols() > 0, ErrorCode::dimension, "logsumexp over empty rows");
  Matrix out(x.rows(), 1);
  const auto xv = view(x).array();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto row = xv.row(static_cast<Eigen::Index>(r));
    const double m = row.maxCoeff();
    out(r, 0) = m + std::log((row - m).exp().sum());
  }
  return push(Op::row_logsumexp, {a.id}, std::move(out));
}

Var Tape::broadcast_rows(Var a, std::size_t rows) {
  const Matrix& x = nodes_[a.id].value;
  require(x.rows() == 1, ErrorCode::dimension, "broadcast_rows needs 1xC, got " + shape_string(x));
  Matrix out(rows, x.cols());
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(x.data(), x.cols(), out.row(r).data());
  return push(Op::broadcast_rows, {a.id}, std::move(out));
}

Var Tape::broadcast_cols(Var a, std::size_t cols) {
  const Matrix& x = nodes_[a.id].value;
  require(x.cols() == 1, ErrorCode::dimension, "broadcast_cols needs Rx1, got " + shape_string(x));
  Matrix out(x.rows(), cols);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < cols; ++c) out(r, c) = x(r, 0);
  return push(Op::broadcast_cols, {a.id}, std::move(out));
}

Var Tape::concat_cols(std::initializer_list<Var> parts) {
  require(parts.size() > 0, ErrorCode::dimension, "concat of nothing");
  const std::size_t rows = nodes_[parts.begin()->id].value.rows();
  std::size_t cols = 0;
  std::vector<std::size_t> ids;
  for (Var p : parts) {
    require(nodes_[p.id].value.rows() == rows, ErrorCode::dimension,
            "concat_cols row mismatch: " + shape_string(nodes_[p.id].value));
    cols += nodes_[p.id].value.cols();
    ids.push_back(p.id);
  }
  Matrix out(rows, cols);
  std::size_t c0 = 0;
  for (std::size_t id : ids) {
    const Matrix& x = nodes_[id].value;
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(x.row(r).data(), x.cols(), out.row(r).data() + c0);
    c0 += x.cols();
  }
  return push(Op::concat_cols, std::move(ids), std::move(out));
}

Var Tape::slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Matrix& x = nodes_[a.id].value;
  require(begin < end && end <= x.cols(), ErrorCode::dimension, "slice_cols out of range");
  Matrix out(x.rows(), end - begin);
  for (std::size_t r = 0; r < x.rows(); ++r)
    std::copy_n(x.row(r).data() + begin, end - begin, out.row(r).data());
  return push(Op::slice_cols, {a.id}, std::move(out), 0.0, 0.0, begin);
}

Var Tape::transpose(Var a) {
  return push(Op::transpose, {a.id}, csf::transpose(nodes_[a.id].value));
}

void Tape::backward(Var output) {
  require(nodes_.at(output.id).value.size() == 1, ErrorCode::dimension,
          "backward() without adjoint needs a scalar output");
  backward(output, Matrix::scalar(1.0));
}

void Tape::accumulate_broadcast(std::size_t target, const Matrix& full) {
  Matrix& adj = adjoints_[target];
  const Broadcast k = broadcast_kind(full, adj);
  switch (k) {
    case Broadcast::same: view(adj) += view(full); break;
    case Broadcast::scalar: adj[0] += view(full).sum(); break;
    case Broadcast::row: view(adj) += view(full).colwise().sum(); break;
    case Broadcast::col: view(adj) += view(full).rowwise().sum(); break;
  }
}

void Tape::backward(Var output, const Matrix& output_adjoint) {
  require(!consumed_, ErrorCode::usage, "tape already consumed");
  require(output.id < nodes_.size(), ErrorCode::usage, "output not on this tape");
  require(output_adjoint.same_shape(nodes_[output.id].value), ErrorCode::dimension,
          "output adjoint " + shape_string(output_adjoint) + " vs output " +
              shape_string(nodes_[output.id].value));
  consumed_ = true;
  adjoints_.resize(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].requires_grad) adjoints_[i] = Matrix(nodes_[i].value.rows(), nodes_[i].value.cols());
  if (!nodes_[output.id].requires_grad) return;
  view(adjoints_[output.id]) += view(output_adjoint);

  for (std::size_t idx = output.id + 1; idx-- > 0;) {
    const Node& n = nodes_[idx];
    if (!n.requires_grad || n.op == Op::leaf) continue;
    const Matrix& g = adjoints_[idx];
    auto needs = [&](std::size_t k) { return nodes_[n.inputs[k]].requires_grad; };
    const std::size_t a = n.inputs[0];
    switch (n.op) {
      case Op::leaf: break;
      case Op::add:
        if (needs(0)) view(adjoints_[a]) += view(g);
        if (needs(1)) accumulate_broadcast(n.inputs[1], g);
        break;
      case Op::sub:
        if (needs(0)) view(adjoints_[a]) += view(g);
        if (needs(1)) {
          Matrix neg = g;
          view(neg) *= -1.0;
          accumulate_broadcast(n.inputs[1], neg);
        }
        break;
      case Op::mul: {
        const Matrix& x = nodes_[a].value;
        const Matrix& y = nodes_[n.inputs[1]].value;
        const Broadcast k = broadcast_kind(x, y);
        if (needs(0)) {
          Matrix& ax = adjoints_[a];
          for (std::size_t r = 0; r < x.rows(); ++r)
            for (std::size_t c = 0; c < x.cols(); ++c) ax(r, c) += g(r, c) * bval(y, k, r, c);
        }
        if (needs(1)) {
          Matrix full = g;
          view(full) = view(full).cwiseProduct(view(x));
          accumulate_broadcast(n.inputs[1], full);
        }
        break;
      }
      case Op::matmul: {
        const std::size_t b = n.inputs[1];
        if (needs(0)) view(adjoints_[a]).noalias() += view(g) * view(nodes_[b].value).transpose();
        if (needs(1)) view(adjoints_[b]).noalias() += view(nodes_[a].value).transpose() * view(g);
        break;
      }
      case Op::scale: view(adjoints_[a]) += n.c0 * view(g); break;
      case Op::add_scalar: view(adjoints_[a]) += view(g); break;
      case Op::relu: {
        const Matrix& x = nodes_[a].value;
        Matrix& ax = adjoints_[a];
        for (std::size_t i = 0; i < x.size(); ++i)
          if (x[i] > 0.0) ax[i] += g[i];
        break;
      }
      case Op::tanh: {
        Matrix& ax = adjoints_[a];
        for (std::size_t i = 0; i < g.size(); ++i) ax[i] += g[i] * (1.0 - n.value[i] * n.value[i]);
        break;
      }
      case Op::exp: view(adjoints_[a]) += view(g).cwiseProduct(view(n.value)); break;
      case Op::log: view(adjoints_[a]) += view(g).cwiseQuotient(view(nodes_[a].value)); break;
      case Op::square: view(adjoints_[a]) += 2.0 * view(g).cwiseProduct(view(nodes_[a].value)); break;
      case Op::abs: {
        const Matrix& x = nodes_[a].value;
        Matrix& ax = adjoints_[a];
        for (std::size_t i = 0; i < x.size(); ++i) ax[i] += g[i] * (x[i] > 0.0 ? 1.0 : x[i] < 0.0 ? -1.0 : 0.0);
        break;
      }
      case Op::log_cosh: {
        const Matrix& x = nodes_[a].value;
        Matrix& ax = adjoints_[a];
        for (std::size_t i = 0; i < x.size(); ++i) ax[i] += g[i] * std::tanh(x[i]);
        break;
      }
      case Op::clamp: {
        const Matrix& x = nodes_[a].value;
        Matrix& ax = adjoints_[a];
        for (std::size_t i = 0; i < x.size(); ++i)
          if (x[i] >= n.c0 && x[i] <= n.c1) ax[i] += g[i];
        break;
      }
      case Op::sum: view(adjoints_[a]).array() += g[0]; break;
      case Op::row_sum: {
        Matrix& ax = adjoints_[a];
        for (std::size_t r = 0; r < ax.rows(); ++r)
          for (std::size_t c = 0; c < ax.cols(); ++c) ax(r, c) += g(r, 0);
        break;
      }
      case Op::row_logsumexp: {
        const Matrix& x = nodes_[a].value;
        Matrix& ax = adjoints_[a];
        for (std::size_t r = 0; r < x.rows(); ++r) {
          const auto i = static_cast<Eigen::Index>(r);
          view(ax).row(i).array() += g(r, 0) * (view(x).row(i).array() - n.value(r, 0)).exp();
        }
        break;
      }
      case Op::broadcast_rows: view(adjoints_[a]) += view(g).colwise().sum(); break;
      case Op::broadcast_cols: view(adjoints_[a]) += view(g).rowwise().sum(); break;
      case Op::concat_cols: {
        std::size_t c0 = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          const std::size_t in = n.inputs[k];
          const std::size_t w = nodes_[in].value.cols();
          if (nodes_[in].requires_grad) {
            Matrix& ax = adjoints_[in];
            for (std::size_t r = 0; r < g.rows(); ++r)
              for (std::size_t c = 0; c < w; ++c) ax(r, c) += g(r, c0 + c);
          }
          c0 += w;
        }
        break;
      }
      case Op::slice_cols: {
        Matrix& ax = adjoints_[a];
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < g.cols(); ++c) ax(r, n.i0 + c) += g(r, c);
        break;
      }
      case Op::transpose: view(adjoints_[a]) += view(g).transpose(); break;
    }
  }
}

const Matrix& Tape::adjoint(Var v) const {
  require(consumed_, ErrorCode::usage, "adjoint requested before backward");
  const Node& n = nodes_.at(v.id);
  require(n.requires_grad, ErrorCode::usage, "adjoint of a constant");
  return adjoints_[v.id];
}

Gradients Tape::gradients(std::span<const Var> leaves) const {
  require(consumed_, ErrorCode::usage, "gradients requested before backward");
  Gradients out;
  out.reserve(leaves.size());
  for (Var v : leaves) {
    const Node& n = nodes_.at(v.id);
    if (n.requires_grad)
      out.push_back(adjoints_[v.id]);
    else
      out.emplace_back(n.value.rows(), n.value.cols());
  }
  return out;
}

// ---------------------------------------------------------------------------
// MLP

ParamSet init_mlp(const std::string& name, const MlpShape& shape, std::uint64_t seed) {
  require(shape.input > 0 && shape.output > 0, ErrorCode::dimension, "empty MLP shape");
  std::vector<std::size_t> dims{shape.input};
  for (std::size_t i = 0; i < shape.hidden_layers; ++i) dims.push_back(shape.hidden);
  dims.push_back(shape.output);
  Rng rng(seed ^ hash_name(name));
  ParamSet params;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims[l]));
    Matrix w(dims[l], dims[l + 1]);
    Matrix b(1, dims[l + 1]);
    for (double& x : w.values()) x = rng.uniform(-bound, bound);
    for (double& x : b.values()) x = rng.uniform(-bound, bound);
    params.add(name + ".l" + std::to_string(l) + ".w", std::move(w));
    params.add(name + ".l" + std::to_string(l) + ".b", std::move(b));
  }
  return params;
}

std::size_t mlp_input_dim(const ParamSet& params) {
  require(params.size() >= 2, ErrorCode::dimension, "MLP without layers");
  return params[0].rows();
}

std::size_t mlp_output_dim(const ParamSet& params) {
  require(params.size() >= 2, ErrorCode::dimension, "MLP without layers");
  return params[params.size() - 1].cols();
}

namespace {
void check_layer(const Matrix& in, const Matrix& w, const Matrix& b, std::size_t layer) {
  if (in.cols() != w.rows() || b.rows() != 1 || b.cols() != w.cols())
    fail(ErrorCode::dimension, "layer " + std::to_string(layer) + ": input " + shape_string(in) +
                                   ", weight " + shape_string(w) + ", bias " + shape_string(b));
}
}  // namespace

Var mlp(Tape& tape, std::span<const Var> params, Var input, Activation act) {
  require(params.size() >= 2 && params.size() % 2 == 0, ErrorCode::dimension,
          "MLP parameter list must hold (weight, bias) pairs");
  Var h = input;
  const std::size_t layers = params.size() / 2;
  for (std::size_t l = 0; l < layers; ++l) {
    check_layer(tape.value(h), tape.value(params[2 * l]), tape.value(params[2 * l + 1]), l);
    h = tape.add(tape.matmul(h, params[2 * l]), params[2 * l + 1]);
    if (l + 1 < layers) h = act == Activation::relu ? tape.relu(h) : tape.tanh(h);
  }
  return h;
}

Matrix mlp_forward(const ParamSet& params, const Matrix& input, Activation act) {
  require(params.size() >= 2 && params.size() % 2 == 0, ErrorCode::dimension,
          "MLP parameter list must hold (weight, bias) pairs");
  Matrix h = input;
  const std::size_t layers = params.size() / 2;
  for (std::size_t l = 0; l < layers; ++l) {
    const Matrix& w = params[2 * l];
    const Matrix& b = params[2 * l + 1];
    check_layer(h, w, b, l);
    Matrix next(h.rows(), w.cols());
    auto nv = view(next);
    nv.noalias() = view(h) * view(w);
    nv.rowwise() += view(b).row(0);
    if (l + 1 < layers) {
      if (act == Activation::relu)
        nv = nv.cwiseMax(0.0);
      else
        for (double& x : next.values()) x = std::tanh(x);
    }
    h = std::move(next);
  }
  return h;
}

MlpForward forward_mlp(const ParamSet& params, const Matrix& input, Activation act) {
  MlpForward f;
  f.params = f.tape.bind(params);
  Var x = f.tape.constant(input);
  f.out = mlp(f.tape, f.params, x, act);
  f.output = f.tape.value(f.out);
  return f;
}

Gradients backward(MlpForward& forward, const Matrix& output_adjoint) {
  forward.tape.backward(forward.out, output_adjoint);
  return forward.tape.gradients(forward.params);
}

// ---------------------------------------------------------------------------
// Adam

AdamState AdamState::for_params(const ParamSet& params, AdamConfig config) {
  AdamState s;
  s.config = config;
  for (const auto& p : params.values()) {
    s.m.emplace_back(p.rows(), p.cols());
    s.v.emplace_back(p.rows(), p.cols());
  }
  return s;
}

void adam_step(ParamSet& params, const Gradients& grads, AdamState& state) {
  require(grads.size() == params.size() && state.m.size() == params.size(),
          ErrorCode::dimension, "gradient/parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(grads[i].same_shape(params[i]) && state.m[i].same_shape(params[i]),
            ErrorCode::dimension, "gradient shape mismatch for " + params.name(i));
    if (!grads[i].all_finite())
      fail(ErrorCode::numerical, "training diverged: non-finite gradient for " + params.name(i));
  }
  const AdamConfig& c = state.config;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& p = params[i];
    Matrix& m = state.m[i];
    Matrix& v = state.v[i];
    const Matrix& g = grads[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
      v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      p[k] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
}

double clip_global_norm(Gradients& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) sq += view(g).squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& g : grads) view(g) *= s;
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Gradient check

GradCheckReport grad_check(ParamSet& params, const LossFn& loss_fn, double tolerance,
                           std::uint64_t seed, double h, double abs_floor) {
  auto evaluate = [&]() {
    Tape tape;
    auto vars = tape.bind(params);
    return tape.value(loss_fn(tape, vars)).item();
  };
  Gradients analytic;
  {
    Tape tape;
    auto vars = tape.bind(params);
    Var loss = loss_fn(tape, vars);
    tape.backward(loss);
    analytic = tape.gradients(vars);
  }

  std::vector<std::pair<std::size_t, std::size_t>> entries;
  for (std::size_t i = 0; i < params.size(); ++i)
    for (std::size_t k = 0; k < params[i].size(); ++k) entries.emplace_back(i, k);
  constexpr std::size_t kMaxEntries = 10000;
  if (entries.size() > kMaxEntries) {
    Rng rng(seed);
    std::shuffle(entries.begin(), entries.end(), rng.engine());
    entries.resize(kMaxEntries);
  }

  GradCheckReport report;
  for (auto [i, k] : entries) {
    double& x = params[i][k];
    const double saved = x;
    x = saved + h;
    const double up = evaluate();
    x = saved - h;
    const double down = evaluate();
    x = saved;
    const double fd = (up - down) / (2.0 * h);
    const double g = analytic[i][k];
    const double abs_err = std::abs(g - fd);
    const double denom = std::max({std::abs(g), std::abs(fd), abs_floor});
    report.max_abs_error = std::max(report.max_abs_error, abs_err);
    report.max_rel_error = std::max(report.max_rel_error, abs_err / denom);
    ++report.checked;
  }
  report.passed = report.max_rel_error < tolerance;
  return report;
}

// ---------------------------------------------------------------------------
// SKF1 container

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void put_f64(std::string& out, double d) {
  const auto bits = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::string_view take(std::size_t n) {
    require(pos_ + n <= bytes_.size(), ErrorCode::io, "checkpoint truncated");
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32() {
    auto s = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[i])) << (8 * i);
    return v;
  }
  double f64() {
    auto s = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[i])) << (8 * i);
    return std::bit_cast<double>(v);
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_arrays(const ParamSet& arrays) {
  std::string out = "SKF1";
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(arrays.size()));
  for (std::size_t i = 0; i < arrays.size(); ++i) {
    const std::string& name = arrays.name(i);
    const Matrix& m = arrays[i];
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(m.rows()));
    put_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (double d : m.values()) put_f64(out, d);
  }
  return out;
}

ParamSet decode_arrays(std::string_view bytes) {
  Reader in(bytes);
  require(bytes.size() >= 4 && in.take(4) == "SKF1", ErrorCode::io, "not an SKF1 checkpoint (bad magic)");
  const std::uint32_t version = in.u32();
  require(version == kCheckpointVersion, ErrorCode::version,
          "unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t count = in.u32();
  ParamSet out;
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::uint32_t len = in.u32();
    std::string name(in.take(len));
    const std::uint32_t rows = in.u32();
    const std::uint32_t cols = in.u32();
    const std::uint64_t n = static_cast<std::uint64_t>(rows) * cols;
    require(n * 8 <= bytes.size(), ErrorCode::io, "checkpoint entry larger than file");
    std::vector<double> data(n);
    for (auto& d : data) d = in.f64();
    out.add(std::move(name), Matrix(rows, cols, std::move(data)));
  }
  require(in.done(), ErrorCode::io, "trailing bytes after checkpoint entries");
  return out;
}

void save_arrays(const std::string& path, const ParamSet& arrays) {
  const std::string bytes = encode_arrays(arrays);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(f), ErrorCode::io, "cannot write " + path);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(f), ErrorCode::io, "short write to " + path);
}

ParamSet load_arrays(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorCode::io, "cannot read " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return decode_arrays(ss.str());
}

}  // namespace csf
