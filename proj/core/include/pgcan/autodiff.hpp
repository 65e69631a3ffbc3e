#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// matrices, plus "jet" operations that carry input-space directional
// derivatives (first and pure second order) through a network as extra row
// blocks. Parameter gradients of losses that contain input derivatives are
// then ordinary reverse sweeps over the jet graph.

#include <Eigen/Core>

#include <deque>
#include <functional>
#include <memory>
#include <vector>

namespace pgcan::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
struct Var {
  Graph* graph = nullptr;
  int id = -1;

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  bool valid() const { return graph != nullptr && id >= 0; }
};

/// Tape of matrix-valued nodes. Not copyable: Vars point back into it.
class Graph {
 public:
  using Backward = std::function<void(Graph&, const Matrix& out_grad)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var leaf(Matrix value, bool requires_grad = true);
  Var constant(Matrix value) { return leaf(std::move(value), false); }

  /// Appends an operation node. `backward` is dropped when no input needs a
  /// gradient.
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  /// Reverse sweep from a 1x1 root. Gradients from an earlier sweep are
  /// discarded first, so one forward graph can serve several roots.
  void backward(Var root);

  /// Gradient of the last sweep's root w.r.t. `v`; zeros if `v` was not
  /// reached.
  Matrix gradient(Var v) const;

  /// Adds `delta` into the gradient slot of `v` (used by backward closures).
  template <typename Derived>
  void accumulate(Var v, const Eigen::MatrixBase<Derived>& delta) {
    Node& n = nodes_[v.id];
    if (!n.requires_grad) return;
    if (!n.has_grad) {
      n.grad = delta;
      n.has_grad = true;
    } else {
      n.grad += delta;
    }
  }

  /// Returns the gradient slot of `v`, zero-initialised on first touch.
  /// Nullptr when `v` does not require a gradient.
  Matrix* grad_slot(Var v);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool has_grad = false;
    Backward backward;
  };
  std::deque<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Elementwise and linear-algebra primitives.

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var add_constant(Var a, const Matrix& c);
Var matmul(Var a, Var b);
Var rows(Var a, Index start, Index count);
Var cols(Var a, Index start, Index count);
Var square(Var a);
Var sum(Var a);
Var mean(Var a);
Var mean_square(Var a);
/// Row-wise sum over columns: (n x m) -> (n x 1).
Var row_sum(Var a);

enum class Activation { Tanh, Sigmoid, Sin, Identity };

/// Elementwise activation without jet structure.
Var activate(Var a, Activation act);

// ---------------------------------------------------------------------------
// Jets.
//
// A jet over `points` query points and `directions` input directions stores
// row blocks [value; d_1 .. d_m; dd_1 .. dd_m] where d_k is the derivative
// along direction k and dd_k the pure second derivative along it. Every block
// has `points` rows. Order 0 keeps only the value block.

struct JetLayout {
  Index points = 0;
  int directions = 0;
  int order = 0;

  int channels() const { return 1 + (order >= 1 ? directions : 0) + (order >= 2 ? directions : 0); }
  Index rows() const { return points * channels(); }
  int first(int k) const { return 1 + k; }
  int second(int k) const { return 1 + directions + k; }
};

/// Rows of block `channel`.
Var jet_channel(Var x, const JetLayout& layout, int channel);

/// x W + b with the bias added to the value block only.
Var jet_linear(Var x, Var weight, Var bias, const JetLayout& layout);

/// Applies `act` to a jet using the chain rule up to second order.
Var jet_activation(Var x, Activation act, const JetLayout& layout);

/// Elementwise product of two jets (Leibniz rule up to second order).
Var jet_mul(Var a, Var b, const JetLayout& layout);

/// Fixed sparse linear map out.row(r) = sum_k weight(r,k) * table.row(index(r,k)).
/// Each output row has exactly `width` terms; index -1 marks an unused slot.
struct GatherPlan {
  Index out_rows = 0;
  int width = 0;
  std::vector<int> index;
  std::vector<double> weight;
};

Var gather(Var table, std::shared_ptr<const GatherPlan> plan);

}  // namespace pgcan::ad
