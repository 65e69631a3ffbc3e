#include "pgcan/autodiff.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>

namespace pgcan::ad {

const Matrix& Var::value() const { return graph->value(*this); }

Var Graph::leaf(Matrix value, bool requires_grad) {
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Graph::record(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
  bool needs = false;
  for (const Var& v : inputs) needs = needs || nodes_[v.id].requires_grad;
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.requires_grad = needs;
  if (needs) n.backward = std::move(backward);
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

void Graph::backward(Var root) {
  if (root.graph != this) throw std::invalid_argument("backward: root belongs to another graph");
  if (nodes_[root.id].value.size() != 1) throw std::invalid_argument("backward: root must be 1x1");
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad.resize(0, 0);
  }
  Node& r = nodes_[root.id];
  if (!r.requires_grad) return;
  r.grad = Matrix::Ones(1, 1);
  r.has_grad = true;
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, n.grad);
  }
}

Matrix Graph::gradient(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.has_grad) return n.grad;
  return Matrix::Zero(n.value.rows(), n.value.cols());
}

Matrix* Graph::grad_slot(Var v) {
  Node& n = nodes_[v.id];
  if (!n.requires_grad) return nullptr;
  if (!n.has_grad) {
    n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    n.has_grad = true;
  }
  return &n.grad;
}

namespace {

void check_same_shape(Var a, Var b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
  }
}

struct ActivationTerms {
  Matrix s, s1, s2, s3;
};

// Value and derivatives up to `order + 1` of the activation at `y`.
ActivationTerms activation_terms(const Eigen::Ref<const Matrix>& y, Activation act, int order) {
  ActivationTerms t;
  auto Y = y.array();
  switch (act) {
    case Activation::Tanh: {
      t.s = Y.tanh().matrix();
      auto S = t.s.array();
      t.s1 = (1.0 - S * S).matrix();
      if (order >= 1) t.s2 = (-2.0 * S * t.s1.array()).matrix();
      if (order >= 2) t.s3 = (-2.0 * t.s1.array().square() + 4.0 * S * S * t.s1.array()).matrix();
      break;
    }
    case Activation::Sigmoid: {
      t.s = (1.0 / (1.0 + (-Y).exp())).matrix();
      auto S = t.s.array();
      t.s1 = (S * (1.0 - S)).matrix();
      if (order >= 1) t.s2 = (t.s1.array() * (1.0 - 2.0 * S)).matrix();
      if (order >= 2) t.s3 = (t.s2.array() * (1.0 - 2.0 * S) - 2.0 * t.s1.array().square()).matrix();
      break;
    }
    case Activation::Sin: {
      t.s = Y.sin().matrix();
      t.s1 = Y.cos().matrix();
      if (order >= 1) t.s2 = -t.s;
      if (order >= 2) t.s3 = -t.s1;
      break;
    }
    case Activation::Identity: {
      t.s = y;
      t.s1 = Matrix::Ones(y.rows(), y.cols());
      if (order >= 1) t.s2 = Matrix::Zero(y.rows(), y.cols());
      if (order >= 2) t.s3 = Matrix::Zero(y.rows(), y.cols());
      break;
    }
  }
  return t;
}

}  // namespace

Var add(Var a, Var b) {
  check_same_shape(a, b, "add");
  Graph& g = *a.graph;
  return g.record(a.value() + b.value(), {a, b}, [a, b](Graph& g, const Matrix& go) {
    g.accumulate(a, go);
    g.accumulate(b, go);
  });
}

Var sub(Var a, Var b) {
  check_same_shape(a, b, "sub");
  Graph& g = *a.graph;
  return g.record(a.value() - b.value(), {a, b}, [a, b](Graph& g, const Matrix& go) {
    g.accumulate(a, go);
    g.accumulate(b, -go);
  });
}

Var mul(Var a, Var b) {
  check_same_shape(a, b, "mul");
  Graph& g = *a.graph;
  Matrix v = (a.value().array() * b.value().array()).matrix();
  return g.record(std::move(v), {a, b}, [a, b](Graph& g, const Matrix& go) {
    if (g.requires_grad(a)) g.accumulate(a, (go.array() * b.value().array()).matrix());
    if (g.requires_grad(b)) g.accumulate(b, (go.array() * a.value().array()).matrix());
  });
}

Var scale(Var a, double c) {
  Graph& g = *a.graph;
  return g.record(a.value() * c, {a}, [a, c](Graph& g, const Matrix& go) { g.accumulate(a, go * c); });
}

Var add_constant(Var a, const Matrix& c) {
  if (a.rows() != c.rows() || a.cols() != c.cols()) throw std::invalid_argument("add_constant: shape mismatch");
  Graph& g = *a.graph;
  return g.record(a.value() + c, {a}, [a](Graph& g, const Matrix& go) { g.accumulate(a, go); });
}

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  Graph& g = *a.graph;
  Matrix v = a.value() * b.value();
  return g.record(std::move(v), {a, b}, [a, b](Graph& g, const Matrix& go) {
    if (g.requires_grad(a)) g.accumulate(a, go * b.value().transpose());
    if (g.requires_grad(b)) g.accumulate(b, a.value().transpose() * go);
  });
}

Var rows(Var a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw std::out_of_range("rows: range");
  Graph& g = *a.graph;
  return g.record(a.value().middleRows(start, count), {a}, [a, start, count](Graph& g, const Matrix& go) {
    if (Matrix* slot = g.grad_slot(a)) slot->middleRows(start, count) += go;
  });
}

Var cols(Var a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw std::out_of_range("cols: range");
  Graph& g = *a.graph;
  return g.record(a.value().middleCols(start, count), {a}, [a, start, count](Graph& g, const Matrix& go) {
    if (Matrix* slot = g.grad_slot(a)) slot->middleCols(start, count) += go;
  });
}

Var square(Var a) {
  Graph& g = *a.graph;
  return g.record(a.value().array().square().matrix(), {a}, [a](Graph& g, const Matrix& go) {
    g.accumulate(a, (2.0 * go.array() * a.value().array()).matrix());
  });
}

Var sum(Var a) {
  Graph& g = *a.graph;
  Matrix v(1, 1);
  v(0, 0) = a.value().sum();
  return g.record(std::move(v), {a}, [a](Graph& g, const Matrix& go) {
    g.accumulate(a, Matrix::Constant(a.rows(), a.cols(), go(0, 0)));
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw std::invalid_argument("mean: empty input");
  return scale(sum(a), 1.0 / n);
}

Var mean_square(Var a) {
  Graph& g = *a.graph;
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw std::invalid_argument("mean_square: empty input");
  Matrix v(1, 1);
  v(0, 0) = a.value().squaredNorm() / n;
  return g.record(std::move(v), {a}, [a, n](Graph& g, const Matrix& go) {
    g.accumulate(a, a.value() * (2.0 * go(0, 0) / n));
  });
}

Var row_sum(Var a) {
  Graph& g = *a.graph;
  Matrix v = a.value().rowwise().sum();
  return g.record(std::move(v), {a}, [a](Graph& g, const Matrix& go) {
    g.accumulate(a, go.replicate(1, a.cols()));
  });
}

Var activate(Var a, Activation act) {
  Graph& g = *a.graph;
  auto terms = std::make_shared<ActivationTerms>(activation_terms(a.value(), act, 0));
  Matrix v = terms->s;
  return g.record(std::move(v), {a}, [a, terms](Graph& g, const Matrix& go) {
    g.accumulate(a, (go.array() * terms->s1.array()).matrix());
  });
}

Var jet_channel(Var x, const JetLayout& layout, int channel) {
  if (channel < 0 || channel >= layout.channels()) throw std::out_of_range("jet_channel: channel");
  return rows(x, channel * layout.points, layout.points);
}

Var jet_linear(Var x, Var weight, Var bias, const JetLayout& layout) {
  if (x.rows() != layout.rows()) throw std::invalid_argument("jet_linear: layout mismatch");
  if (x.cols() != weight.rows() || bias.rows() != 1 || bias.cols() != weight.cols()) {
    throw std::invalid_argument("jet_linear: weight/bias shape mismatch");
  }
  Graph& g = *x.graph;
  const Index n = layout.points;
  Matrix v = x.value() * weight.value();
  v.topRows(n).rowwise() += bias.value().row(0);
  return g.record(std::move(v), {x, weight, bias}, [x, weight, bias, n](Graph& g, const Matrix& go) {
    if (g.requires_grad(x)) g.accumulate(x, go * weight.value().transpose());
    if (g.requires_grad(weight)) g.accumulate(weight, x.value().transpose() * go);
    if (g.requires_grad(bias)) g.accumulate(bias, go.topRows(n).colwise().sum());
  });
}

Var jet_activation(Var x, Activation act, const JetLayout& layout) {
  if (x.rows() != layout.rows()) throw std::invalid_argument("jet_activation: layout mismatch");
  Graph& g = *x.graph;
  const Index n = layout.points;
  const int m = layout.directions;
  const int order = layout.order;
  const Matrix& X = x.value();
  auto t = std::make_shared<ActivationTerms>(activation_terms(X.topRows(n), act, order));

  Matrix v(X.rows(), X.cols());
  v.topRows(n) = t->s;
  if (order >= 1) {
    for (int k = 0; k < m; ++k) {
      const Index r1 = layout.first(k) * n;
      v.middleRows(r1, n) = (t->s1.array() * X.middleRows(r1, n).array()).matrix();
      if (order >= 2) {
        const Index r2 = layout.second(k) * n;
        auto d = X.middleRows(r1, n).array();
        v.middleRows(r2, n) =
            (t->s2.array() * d * d + t->s1.array() * X.middleRows(r2, n).array()).matrix();
      }
    }
  }

  return g.record(std::move(v), {x}, [x, t, layout](Graph& g, const Matrix& go) {
    Matrix* slot = g.grad_slot(x);
    if (slot == nullptr) return;
    const Index n = layout.points;
    const Matrix& X = x.value();
    auto s1 = t->s1.array();
    Matrix d0 = (go.topRows(n).array() * s1).matrix();
    if (layout.order >= 1) {
      auto s2 = t->s2.array();
      for (int k = 0; k < layout.directions; ++k) {
        const Index r1 = layout.first(k) * n;
        auto Gk = go.middleRows(r1, n).array();
        auto Yk = X.middleRows(r1, n).array();
        d0.array() += Gk * s2 * Yk;
        slot->middleRows(r1, n).array() += Gk * s1;
        if (layout.order >= 2) {
          const Index r2 = layout.second(k) * n;
          auto Gkk = go.middleRows(r2, n).array();
          auto Ykk = X.middleRows(r2, n).array();
          d0.array() += Gkk * (t->s3.array() * Yk * Yk + s2 * Ykk);
          slot->middleRows(r1, n).array() += 2.0 * Gkk * s2 * Yk;
          slot->middleRows(r2, n).array() += Gkk * s1;
        }
      }
    }
    slot->topRows(n) += d0;
  });
}

Var jet_mul(Var a, Var b, const JetLayout& layout) {
  check_same_shape(a, b, "jet_mul");
  if (a.rows() != layout.rows()) throw std::invalid_argument("jet_mul: layout mismatch");
  Graph& g = *a.graph;
  const Index n = layout.points;
  const Matrix& A = a.value();
  const Matrix& B = b.value();
  auto a0 = A.topRows(n).array();
  auto b0 = B.topRows(n).array();
  Matrix v(A.rows(), A.cols());
  v.topRows(n) = (a0 * b0).matrix();
  if (layout.order >= 1) {
    for (int k = 0; k < layout.directions; ++k) {
      const Index r1 = layout.first(k) * n;
      auto ak = A.middleRows(r1, n).array();
      auto bk = B.middleRows(r1, n).array();
      v.middleRows(r1, n) = (ak * b0 + a0 * bk).matrix();
      if (layout.order >= 2) {
        const Index r2 = layout.second(k) * n;
        v.middleRows(r2, n) =
            (A.middleRows(r2, n).array() * b0 + 2.0 * ak * bk + a0 * B.middleRows(r2, n).array()).matrix();
      }
    }
  }
  return g.record(std::move(v), {a, b}, [a, b, layout](Graph& g, const Matrix& go) {
    const Index n = layout.points;
    // The product rule is symmetric: the gradient for one factor uses the
    // other factor's blocks.
    auto backprop = [&](Var self, Var other) {
      Matrix* slot = g.grad_slot(self);
      if (slot == nullptr) return;
      const Matrix& O = other.value();
      auto o0 = O.topRows(n).array();
      slot->topRows(n).array() += go.topRows(n).array() * o0;
      if (layout.order >= 1) {
        for (int k = 0; k < layout.directions; ++k) {
          const Index r1 = layout.first(k) * n;
          auto Gk = go.middleRows(r1, n).array();
          auto ok = O.middleRows(r1, n).array();
          slot->middleRows(r1, n).array() += Gk * o0;
          slot->topRows(n).array() += Gk * ok;
          if (layout.order >= 2) {
            const Index r2 = layout.second(k) * n;
            auto Gkk = go.middleRows(r2, n).array();
            slot->middleRows(r2, n).array() += Gkk * o0;
            slot->middleRows(r1, n).array() += 2.0 * Gkk * ok;
            slot->topRows(n).array() += Gkk * O.middleRows(r2, n).array();
          }
        }
      }
    };
    backprop(a, b);
    backprop(b, a);
  });
}

Var gather(Var table, std::shared_ptr<const GatherPlan> plan) {
  Graph& g = *table.graph;
  const Matrix& T = table.value();
  const Index out_rows = plan->out_rows;
  const int width = plan->width;
  Matrix v = Matrix::Zero(out_rows, T.cols());
  for (Index r = 0; r < out_rows; ++r) {
    const std::size_t base = static_cast<std::size_t>(r) * width;
    for (int k = 0; k < width; ++k) {
      const int idx = plan->index[base + k];
      const double w = plan->weight[base + k];
      if (idx < 0 || w == 0.0) continue;
      v.row(r) += w * T.row(idx);
    }
  }
  return g.record(std::move(v), {table}, [table, plan](Graph& g, const Matrix& go) {
    Matrix* slot = g.grad_slot(table);
    if (slot == nullptr) return;
    const int width = plan->width;
    for (Index r = 0; r < plan->out_rows; ++r) {
      const std::size_t base = static_cast<std::size_t>(r) * width;
      for (int k = 0; k < width; ++k) {
        const int idx = plan->index[base + k];
        const double w = plan->weight[base + k];
        if (idx < 0 || w == 0.0) continue;
        slot->row(idx) += w * go.row(r);
      }
    }
  });
}

}  // namespace pgcan::ad
