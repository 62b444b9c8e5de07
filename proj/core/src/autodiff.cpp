#include "advdiff/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "advdiff/error.hpp"

namespace advdiff::ad {
namespace {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

ConstMap as_matrix(const Tensor& t) {
  return ConstMap(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                  static_cast<Eigen::Index>(t.cols()));
}

void require_matrix(const Tensor& t, OpKind kind) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op_name(kind)) + " requires a matrix, got " +
                     to_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, OpKind kind) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op_name(kind)) + ": shape mismatch " +
                     to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

template <typename F>
Tensor map_unary(const Tensor& a, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

template <typename F>
Tensor map_binary(const Tensor& a, const Tensor& b, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

}  // namespace

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kParameter: return "parameter";
    case OpKind::kInput: return "input";
    case OpKind::kConstant: return "constant";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kDiv: return "div";
    case OpKind::kNeg: return "neg";
    case OpKind::kScale: return "scale";
    case OpKind::kAddScalar: return "add_scalar";
    case OpKind::kRelu: return "relu";
    case OpKind::kTanh: return "tanh";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kExp: return "exp";
    case OpKind::kLog: return "log";
    case OpKind::kSqrt: return "sqrt";
    case OpKind::kSquare: return "square";
    case OpKind::kClamp: return "clamp";
    case OpKind::kMask: return "mask";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kAddBias: return "add_bias";
    case OpKind::kSumRows: return "sum_rows";
    case OpKind::kSumCols: return "sum_cols";
    case OpKind::kRepeatRows: return "repeat_rows";
    case OpKind::kRepeatCols: return "repeat_cols";
    case OpKind::kSumAll: return "sum";
    case OpKind::kFill: return "fill";
    case OpKind::kConcat: return "concat";
    case OpKind::kSlice: return "slice";
    case OpKind::kPadCols: return "pad_cols";
  }
  return "unknown";
}

const Tensor& Var::value() const {
  if (graph_ == nullptr) throw std::logic_error("value() on an unbound Var");
  return graph_->value(*this);
}

Var Graph::parameter(Tensor value) { return leaf(OpKind::kParameter, std::move(value)); }
Var Graph::input(Tensor value) { return leaf(OpKind::kInput, std::move(value)); }
Var Graph::constant(Tensor value) { return leaf(OpKind::kConstant, std::move(value)); }

bool Graph::is_leaf(Var v) const { return nodes_.at(v.id()).arity == 0; }

Var Graph::leaf(OpKind kind, Tensor value) {
  if (!value.all_finite()) {
    throw NumericError("non-finite value bound to " + std::string(op_name(kind)));
  }
  Node node;
  node.kind = kind;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Graph::check_owner(Var v) const {
  if (v.graph() != this || v.id() >= nodes_.size()) {
    throw std::logic_error("Var does not belong to this graph");
  }
}

void Graph::set_leaf(Var leaf_var, Tensor value) {
  check_owner(leaf_var);
  Node& node = nodes_[leaf_var.id()];
  if (node.arity != 0) throw std::logic_error("set_leaf on a non-leaf node");
  if (node.value.shape() != value.shape()) {
    throw ShapeError("set_leaf: shape " + to_string(value.shape()) +
                     " does not match " + to_string(node.value.shape()));
  }
  if (!value.all_finite()) throw NumericError("non-finite value bound to leaf");
  node.value = std::move(value);
}

void Graph::forward() {
  for (auto& node : nodes_) {
    if (node.arity == 0) continue;
    Tensor value = evaluate(node);
    if (!value.all_finite()) {
      throw NumericError("non-finite value produced by " +
                         std::string(op_name(node.kind)));
    }
    node.value = std::move(value);
  }
}

void Graph::forward(const std::unordered_map<std::size_t, Tensor>& leaf_values) {
  for (const auto& [id, value] : leaf_values) set_leaf(Var(this, id), value);
  forward();
}

Var Graph::push(Node node) {
  node.value = evaluate(node);
  if (!node.value.all_finite()) {
    throw NumericError("non-finite value produced by " +
                       std::string(op_name(node.kind)));
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Graph::apply(OpKind kind, Var a) {
  check_owner(a);
  Node node;
  node.kind = kind;
  node.arity = 1;
  node.in0 = a.id();
  return push(std::move(node));
}

Var Graph::apply(OpKind kind, Var a, Var b) {
  check_owner(a);
  check_owner(b);
  Node node;
  node.kind = kind;
  node.arity = 2;
  node.in0 = a.id();
  node.in1 = b.id();
  return push(std::move(node));
}

Var Graph::apply_scalar(OpKind kind, Var a, double c0, double c1) {
  check_owner(a);
  Node node;
  node.kind = kind;
  node.arity = 1;
  node.in0 = a.id();
  node.c0 = c0;
  node.c1 = c1;
  return push(std::move(node));
}

Var Graph::apply_index(OpKind kind, Var a, std::size_t i0, std::size_t i1) {
  check_owner(a);
  Node node;
  node.kind = kind;
  node.arity = 1;
  node.in0 = a.id();
  node.i0 = i0;
  node.i1 = i1;
  return push(std::move(node));
}

Tensor Graph::evaluate(const Node& node) const {
  const Tensor& a = nodes_[node.in0].value;
  switch (node.kind) {
    case OpKind::kParameter:
    case OpKind::kInput:
    case OpKind::kConstant:
      return node.value;
    case OpKind::kAdd: {
      const Tensor& b = nodes_[node.in1].value;
      require_same_shape(a, b, node.kind);
      return map_binary(a, b, [](double x, double y) { return x + y; });
    }
    case OpKind::kSub: {
      const Tensor& b = nodes_[node.in1].value;
      require_same_shape(a, b, node.kind);
      return map_binary(a, b, [](double x, double y) { return x - y; });
    }
    case OpKind::kMul: {
      const Tensor& b = nodes_[node.in1].value;
      require_same_shape(a, b, node.kind);
      return map_binary(a, b, [](double x, double y) { return x * y; });
    }
    case OpKind::kDiv: {
      const Tensor& b = nodes_[node.in1].value;
      require_same_shape(a, b, node.kind);
      return map_binary(a, b, [](double x, double y) { return x / y; });
    }
    case OpKind::kNeg:
      return map_unary(a, [](double x) { return -x; });
    case OpKind::kScale: {
      const double c = node.c0;
      return map_unary(a, [c](double x) { return c * x; });
    }
    case OpKind::kAddScalar: {
      const double c = node.c0;
      return map_unary(a, [c](double x) { return x + c; });
    }
    case OpKind::kRelu:
      return map_unary(a, [](double x) { return x > 0.0 ? x : 0.0; });
    case OpKind::kTanh:
      return map_unary(a, [](double x) { return std::tanh(x); });
    case OpKind::kSigmoid:
      return map_unary(a, [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      });
    case OpKind::kExp:
      return map_unary(a, [](double x) { return std::exp(x); });
    case OpKind::kLog:
      return map_unary(a, [](double x) { return std::log(x); });
    case OpKind::kSqrt:
      return map_unary(a, [](double x) { return std::sqrt(x); });
    case OpKind::kSquare:
      return map_unary(a, [](double x) { return x * x; });
    case OpKind::kClamp: {
      const double lo = node.c0;
      const double hi = node.c1;
      return map_unary(a, [lo, hi](double x) { return std::clamp(x, lo, hi); });
    }
    case OpKind::kMask: {
      const double lo = node.c0;
      const double hi = node.c1;
      return map_unary(a, [lo, hi](double x) { return (x > lo && x < hi) ? 1.0 : 0.0; });
    }
    case OpKind::kMatMul: {
      const Tensor& b = nodes_[node.in1].value;
      require_matrix(a, node.kind);
      require_matrix(b, node.kind);
      if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner dimensions differ " + to_string(a.shape()) +
                         " * " + to_string(b.shape()));
      }
      Tensor out({a.rows(), b.cols()});
      MutMap(out.data().data(), static_cast<Eigen::Index>(a.rows()),
             static_cast<Eigen::Index>(b.cols()))
          .noalias() = as_matrix(a) * as_matrix(b);
      return out;
    }
    case OpKind::kTranspose: {
      require_matrix(a, node.kind);
      Tensor out({a.cols(), a.rows()});
      MutMap(out.data().data(), static_cast<Eigen::Index>(a.cols()),
             static_cast<Eigen::Index>(a.rows())) = as_matrix(a).transpose();
      return out;
    }
    case OpKind::kAddBias: {
      const Tensor& b = nodes_[node.in1].value;
      require_matrix(a, node.kind);
      require_matrix(b, node.kind);
      if (b.rows() != 1 || b.cols() != a.cols()) {
        throw ShapeError("add_bias: bias " + to_string(b.shape()) +
                         " does not broadcast over " + to_string(a.shape()));
      }
      Tensor out = a;
      const std::size_t n = a.cols();
      for (std::size_t r = 0; r < a.rows(); ++r) {
        for (std::size_t c = 0; c < n; ++c) out[r * n + c] += b[c];
      }
      return out;
    }
    case OpKind::kSumRows: {
      require_matrix(a, node.kind);
      Tensor out({1, a.cols()});
      const std::size_t n = a.cols();
      for (std::size_t r = 0; r < a.rows(); ++r) {
        for (std::size_t c = 0; c < n; ++c) out[c] += a[r * n + c];
      }
      return out;
    }
    case OpKind::kSumCols: {
      require_matrix(a, node.kind);
      Tensor out({a.rows(), 1});
      const std::size_t n = a.cols();
      for (std::size_t r = 0; r < a.rows(); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < n; ++c) s += a[r * n + c];
        out[r] = s;
      }
      return out;
    }
    case OpKind::kRepeatRows: {
      require_matrix(a, node.kind);
      if (a.rows() != 1) throw ShapeError("repeat_rows expects a single row");
      Tensor out({node.i0, a.cols()});
      for (std::size_t r = 0; r < node.i0; ++r) {
        std::copy(a.data().begin(), a.data().end(), out.row_span(r).begin());
      }
      return out;
    }
    case OpKind::kRepeatCols: {
      require_matrix(a, node.kind);
      if (a.cols() != 1) throw ShapeError("repeat_cols expects a single column");
      Tensor out({a.rows(), node.i0});
      for (std::size_t r = 0; r < a.rows(); ++r) {
        auto row = out.row_span(r);
        std::fill(row.begin(), row.end(), a[r]);
      }
      return out;
    }
    case OpKind::kSumAll: {
      // Accumulating in (|x|, x) order makes the total independent of the
      // element order, so a shuffled batch reduces to the same bits.
      std::vector<double> sorted(a.data().begin(), a.data().end());
      std::sort(sorted.begin(), sorted.end(), [](double x, double y) {
        const double ax = std::abs(x), ay = std::abs(y);
        return ax < ay || (ax == ay && x < y);
      });
      double s = 0.0;
      for (double x : sorted) s += x;
      return Tensor::scalar(s);
    }
    case OpKind::kFill: {
      if (a.size() != 1) throw ShapeError("fill expects a single-element source");
      // target shape is encoded as (rows, cols) in i0/i1
      return Tensor({node.i0, node.i1}, a[0]);
    }
    case OpKind::kConcat: {
      const Tensor& b = nodes_[node.in1].value;
      require_matrix(a, node.kind);
      require_matrix(b, node.kind);
      if (a.rows() != b.rows()) {
        throw ShapeError("concat: row counts differ " + to_string(a.shape()) +
                         " vs " + to_string(b.shape()));
      }
      const std::size_t ca = a.cols();
      const std::size_t cb = b.cols();
      Tensor out({a.rows(), ca + cb});
      for (std::size_t r = 0; r < a.rows(); ++r) {
        auto dst = out.row_span(r);
        std::copy_n(a.row_span(r).begin(), ca, dst.begin());
        std::copy_n(b.row_span(r).begin(), cb, dst.begin() + static_cast<std::ptrdiff_t>(ca));
      }
      return out;
    }
    case OpKind::kSlice: {
      require_matrix(a, node.kind);
      if (node.i0 > node.i1 || node.i1 > a.cols()) {
        throw ShapeError("slice [" + std::to_string(node.i0) + ", " +
                         std::to_string(node.i1) + ") out of range for " +
                         to_string(a.shape()));
      }
      const std::size_t k = node.i1 - node.i0;
      Tensor out({a.rows(), k});
      for (std::size_t r = 0; r < a.rows(); ++r) {
        auto src = a.row_span(r).subspan(node.i0, k);
        std::copy(src.begin(), src.end(), out.row_span(r).begin());
      }
      return out;
    }
    case OpKind::kPadCols: {
      require_matrix(a, node.kind);
      if (node.i1 + a.cols() > node.i0) {
        throw ShapeError("pad_cols: block does not fit in target width");
      }
      Tensor out({a.rows(), node.i0});
      for (std::size_t r = 0; r < a.rows(); ++r) {
        auto src = a.row_span(r);
        std::copy(src.begin(), src.end(),
                  out.row_span(r).begin() + static_cast<std::ptrdiff_t>(node.i1));
      }
      return out;
    }
  }
  throw std::logic_error("unhandled op");
}

Var Graph::vjp(std::size_t id, int which, Var g) {
  const OpKind kind = nodes_[id].kind;
  const Var out(this, id);
  const Var a(this, nodes_[id].in0);
  const Var b(this, nodes_[id].in1);
  switch (kind) {
    case OpKind::kAdd:
      return g;
    case OpKind::kSub:
      return which == 0 ? g : -g;
    case OpKind::kMul:
      return which == 0 ? g * b : g * a;
    case OpKind::kDiv:
      return which == 0 ? g / b : -((g * out) / b);
    case OpKind::kNeg:
      return -g;
    case OpKind::kScale:
      return nodes_[id].c0 * g;
    case OpKind::kAddScalar:
      return g;
    case OpKind::kRelu:
      // subgradient at exactly zero is zero
      return g * mask(a, 0.0, std::numeric_limits<double>::infinity());
    case OpKind::kTanh:
      return g * (1.0 - square(out));
    case OpKind::kSigmoid:
      return g * (out * (1.0 - out));
    case OpKind::kExp:
      return g * out;
    case OpKind::kLog:
      return g / a;
    case OpKind::kSqrt:
      return (0.5 * g) / out;
    case OpKind::kSquare:
      return g * (2.0 * a);
    case OpKind::kClamp: {
      const double lo = nodes_[id].c0;
      const double hi = nodes_[id].c1;
      return g * mask(a, lo, hi);
    }
    case OpKind::kMatMul:
      return which == 0 ? matmul(g, transpose(b)) : matmul(transpose(a), g);
    case OpKind::kTranspose:
      return transpose(g);
    case OpKind::kAddBias:
      return which == 0 ? g : sum_rows(g);
    case OpKind::kSumRows:
      return repeat_rows(g, nodes_[a.id()].value.rows());
    case OpKind::kSumCols:
      return repeat_cols(g, nodes_[a.id()].value.cols());
    case OpKind::kRepeatRows:
      return sum_rows(g);
    case OpKind::kRepeatCols:
      return sum_cols(g);
    case OpKind::kSumAll:
      return fill(g, nodes_[a.id()].value.shape());
    case OpKind::kFill:
      return sum(g);
    case OpKind::kConcat: {
      const std::size_t ca = nodes_[a.id()].value.cols();
      const std::size_t cb = nodes_[b.id()].value.cols();
      return which == 0 ? slice(g, 0, ca) : slice(g, ca, ca + cb);
    }
    case OpKind::kSlice: {
      const std::size_t total = nodes_[a.id()].value.cols();
      return pad_cols(g, total, nodes_[id].i0);
    }
    case OpKind::kPadCols: {
      const std::size_t offset = nodes_[id].i1;
      const std::size_t k = nodes_[a.id()].value.cols();
      return slice(g, offset, offset + k);
    }
    case OpKind::kMask:
    case OpKind::kParameter:
    case OpKind::kInput:
    case OpKind::kConstant:
      break;
  }
  throw std::logic_error("vjp requested for non-differentiable op " +
                         std::string(op_name(kind)));
}

std::vector<Var> Graph::gradient(Var output, std::span<const Var> wrt) {
  check_owner(output);
  if (nodes_[output.id()].value.size() != 1) {
    throw ShapeError("gradient() requires a scalar output, got " +
                     to_string(nodes_[output.id()].value.shape()));
  }
  const std::size_t n = output.id() + 1;
  std::vector<char> depends(n, 0);
  for (Var w : wrt) {
    check_owner(w);
    if (w.id() < n) depends[w.id()] = 1;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Node& node = nodes_[i];
    if (node.arity == 0 || node.kind == OpKind::kMask) continue;
    if (depends[node.in0] || (node.arity == 2 && depends[node.in1])) depends[i] = 1;
  }

  std::vector<Var> adjoint(n);
  if (depends[output.id()]) {
    adjoint[output.id()] = constant(Tensor(nodes_[output.id()].value.shape(), 1.0));
  }
  for (std::size_t i = n; i-- > 0;) {
    if (!adjoint[i].valid() || !depends[i]) continue;
    const std::uint8_t arity = nodes_[i].arity;
    for (int which = 0; which < arity; ++which) {
      const std::size_t input = which == 0 ? nodes_[i].in0 : nodes_[i].in1;
      if (!depends[input]) continue;
      const Var contribution = vjp(i, which, adjoint[i]);
      adjoint[input] = adjoint[input].valid() ? adjoint[input] + contribution
                                              : contribution;
    }
  }

  std::vector<Var> result;
  result.reserve(wrt.size());
  for (Var w : wrt) {
    if (w.id() < n && adjoint[w.id()].valid()) {
      result.push_back(adjoint[w.id()]);
    } else {
      result.push_back(constant(Tensor(nodes_[w.id()].value.shape(), 0.0)));
    }
  }
  return result;
}

Var Graph::gradient(Var output, Var wrt) {
  const Var list[] = {wrt};
  return gradient(output, list).front();
}

Var Graph::grad_norm_sq(Var output, Var wrt_input) {
  check_owner(wrt_input);
  if (nodes_[wrt_input.id()].kind != OpKind::kInput) {
    throw std::invalid_argument("grad_norm_sq: wrt must be a data input leaf");
  }
  return sum(square(gradient(output, wrt_input)));
}

namespace {
Graph& owner(Var v) {
  if (!v.valid()) throw std::logic_error("operation on an unbound Var");
  return *v.graph();
}
}  // namespace

Var operator+(Var a, Var b) { return owner(a).apply(OpKind::kAdd, a, b); }
Var operator-(Var a, Var b) { return owner(a).apply(OpKind::kSub, a, b); }
Var operator*(Var a, Var b) { return owner(a).apply(OpKind::kMul, a, b); }
Var operator/(Var a, Var b) { return owner(a).apply(OpKind::kDiv, a, b); }
Var operator-(Var a) { return owner(a).apply(OpKind::kNeg, a); }
Var operator*(double c, Var a) { return owner(a).apply_scalar(OpKind::kScale, a, c); }
Var operator*(Var a, double c) { return c * a; }
Var operator+(Var a, double c) { return owner(a).apply_scalar(OpKind::kAddScalar, a, c); }
Var operator+(double c, Var a) { return a + c; }
Var operator-(Var a, double c) { return a + (-c); }
Var operator-(double c, Var a) { return (-a) + c; }

Var matmul(Var a, Var b) { return owner(a).apply(OpKind::kMatMul, a, b); }
Var transpose(Var a) { return owner(a).apply(OpKind::kTranspose, a); }
Var add_bias(Var x, Var bias) { return owner(x).apply(OpKind::kAddBias, x, bias); }
Var sum_rows(Var x) { return owner(x).apply(OpKind::kSumRows, x); }
Var sum_cols(Var x) { return owner(x).apply(OpKind::kSumCols, x); }
Var repeat_rows(Var x, std::size_t rows) {
  return owner(x).apply_index(OpKind::kRepeatRows, x, rows, 0);
}
Var repeat_cols(Var x, std::size_t cols) {
  return owner(x).apply_index(OpKind::kRepeatCols, x, cols, 0);
}
Var sum(Var x) { return owner(x).apply(OpKind::kSumAll, x); }
Var mean(Var x) { return (1.0 / static_cast<double>(x.value().size())) * sum(x); }
Var fill(Var scalar, const Shape& shape) {
  if (shape.size() != 2) throw ShapeError("fill target must be a matrix shape");
  return owner(scalar).apply_index(OpKind::kFill, scalar, shape[0], shape[1]);
}
Var relu(Var x) { return owner(x).apply(OpKind::kRelu, x); }
Var tanh(Var x) { return owner(x).apply(OpKind::kTanh, x); }
Var sigmoid(Var x) { return owner(x).apply(OpKind::kSigmoid, x); }
Var exp(Var x) { return owner(x).apply(OpKind::kExp, x); }
Var log(Var x) { return owner(x).apply(OpKind::kLog, x); }
Var sqrt(Var x) { return owner(x).apply(OpKind::kSqrt, x); }
Var square(Var x) { return owner(x).apply(OpKind::kSquare, x); }
Var clamp(Var x, double lo, double hi) {
  return owner(x).apply_scalar(OpKind::kClamp, x, lo, hi);
}
Var log_sigmoid(Var x) {
  const Var abs_x = relu(x) + relu(-x);
  return -(relu(-x) + log(1.0 + exp(-abs_x)));
}
Var mask(Var x, double lo, double hi) {
  return owner(x).apply_scalar(OpKind::kMask, x, lo, hi);
}
Var concat(Var a, Var b) { return owner(a).apply(OpKind::kConcat, a, b); }
Var slice(Var x, std::size_t begin, std::size_t end) {
  return owner(x).apply_index(OpKind::kSlice, x, begin, end);
}
Var pad_cols(Var x, std::size_t total_cols, std::size_t offset) {
  return owner(x).apply_index(OpKind::kPadCols, x, total_cols, offset);
}

}  // namespace advdiff::ad
