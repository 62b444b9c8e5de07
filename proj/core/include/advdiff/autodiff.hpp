#ifndef ADVDIFF_AUTODIFF_HPP_
#define ADVDIFF_AUTODIFF_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "advdiff/tensor.hpp"

namespace advdiff::ad {

enum class OpKind : std::uint8_t {
  // leaves
  kParameter,
  kInput,
  kConstant,
  // elementwise binary (identical shapes)
  kAdd,
  kSub,
  kMul,
  kDiv,
  // elementwise unary
  kNeg,
  kScale,      // c * x
  kAddScalar,  // x + c
  kRelu,
  kTanh,
  kSigmoid,
  kExp,
  kLog,
  kSqrt,
  kSquare,
  kClamp,  // clamp(x, lo, hi)
  kMask,   // 1 where lo < x < hi, else 0; not differentiable
  // matrix
  kMatMul,
  kTranspose,
  kAddBias,     // (B x n) + (1 x n) broadcast over rows
  kSumRows,     // (B x n) -> (1 x n)
  kSumCols,     // (B x n) -> (B x 1)
  kRepeatRows,  // (1 x n) -> (B x n)
  kRepeatCols,  // (B x 1) -> (B x n)
  kSumAll,      // any -> (1 x 1)
  kFill,        // (1 x 1) -> any shape
  kConcat,      // column concatenation of two matrices
  kSlice,       // columns [begin, end)
  kPadCols,     // embed (B x k) into zeros (B x n) at a column offset
};

std::string_view op_name(OpKind kind);

class Graph;

// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;

  Graph* graph() const noexcept { return graph_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return graph_ != nullptr; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Graph;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

// Topologically ordered record of primitive ops with eagerly computed values.
//
// Every node is evaluated when it is appended, so the graph doubles as a tape.
// gradient() appends the reverse sweep as ordinary nodes; the returned
// gradients can therefore be combined and differentiated again, which is what
// input-gradient penalties need.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var parameter(Tensor value);
  Var input(Tensor value);
  Var constant(Tensor value);

  std::size_t size() const noexcept { return nodes_.size(); }
  const Tensor& value(Var v) const { return nodes_.at(v.id()).value; }
  OpKind kind(Var v) const { return nodes_.at(v.id()).kind; }
  bool is_leaf(Var v) const;

  // Rebinds a leaf. Shapes must match; call forward() to refresh dependents.
  void set_leaf(Var leaf, Tensor value);

  // Re-evaluates every non-leaf node in order from the current leaf values.
  void forward();
  // Rebinds the given leaves, then re-evaluates.
  void forward(const std::unordered_map<std::size_t, Tensor>& leaf_values);

  // d output / d wrt for each requested node. `output` must hold exactly one
  // element. Nodes that do not influence `output` get an all-zero constant.
  std::vector<Var> gradient(Var output, std::span<const Var> wrt);
  Var gradient(Var output, Var wrt);

  // ||d output / d input||^2 as a new scalar node that stays differentiable
  // with respect to every other leaf.
  Var grad_norm_sq(Var output, Var wrt_input);

  Var apply(OpKind kind, Var a);
  Var apply(OpKind kind, Var a, Var b);
  Var apply_scalar(OpKind kind, Var a, double c0, double c1 = 0.0);
  Var apply_index(OpKind kind, Var a, std::size_t i0, std::size_t i1);

 private:
  struct Node {
    OpKind kind;
    std::uint8_t arity = 0;
    std::size_t in0 = 0;
    std::size_t in1 = 0;
    double c0 = 0.0;
    double c1 = 0.0;
    std::size_t i0 = 0;
    std::size_t i1 = 0;
    Tensor value;
  };

  Var leaf(OpKind kind, Tensor value);
  Var push(Node node);
  Tensor evaluate(const Node& node) const;
  // Appends the vector-Jacobian product for input `which` of node `id`.
  Var vjp(std::size_t id, int which, Var upstream);
  void check_owner(Var v) const;

  std::vector<Node> nodes_;
};

// Free-function op builders. Operands must belong to the same graph.
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator-(Var a);
Var operator*(double c, Var a);
Var operator*(Var a, double c);
Var operator+(Var a, double c);
Var operator+(double c, Var a);
Var operator-(Var a, double c);
Var operator-(double c, Var a);

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add_bias(Var x, Var bias);
Var sum_rows(Var x);
Var sum_cols(Var x);
Var repeat_rows(Var x, std::size_t rows);
Var repeat_cols(Var x, std::size_t cols);
Var sum(Var x);
Var mean(Var x);
Var fill(Var scalar, const Shape& shape);
Var relu(Var x);
Var tanh(Var x);
Var sigmoid(Var x);
Var exp(Var x);
Var log(Var x);
Var sqrt(Var x);
Var square(Var x);
Var clamp(Var x, double lo, double hi);
// log(sigmoid(x)) without overflow, built from relu/exp/log.
Var log_sigmoid(Var x);
Var mask(Var x, double lo, double hi);
Var concat(Var a, Var b);
Var slice(Var x, std::size_t begin, std::size_t end);
Var pad_cols(Var x, std::size_t total_cols, std::size_t offset);

}  // namespace advdiff::ad

#endif  // ADVDIFF_AUTODIFF_HPP_
