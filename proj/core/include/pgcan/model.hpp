#pragma once

#include "pgcan/autodiff.hpp"
#include "pgcan/random.hpp"

#include <Eigen/Core>

#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace pgcan {

using ad::Matrix;
using Vector = Eigen::VectorXd;

/// Axis-aligned box used to map physical coordinates onto the unit box that
/// every model consumes.
struct CoordinateBox {
  Vector lo;
  Vector hi;

  CoordinateBox() = default;
  CoordinateBox(Vector lo_, Vector hi_);
  static CoordinateBox unit(int dims);

  int dims() const { return static_cast<int>(lo.size()); }
  Vector extent() const { return hi - lo; }
  Matrix normalize(const Matrix& physical) const;
  Matrix denormalize(const Matrix& unit) const;
  /// Physical-space direction -> unit-box direction (divides by extent).
  Matrix normalize_directions(const Matrix& physical_dirs) const;
  bool contains(const Vector& p, double tol = 1e-12) const;
};

struct ParameterBlock {
  std::string name;
  Matrix value;
};

/// Points plus the input-space directions along which derivatives are
/// propagated. Coordinates are in the model's unit box.
struct JetSeed {
  Matrix points;
  Matrix directions;
  int order = 0;

  ad::JetLayout layout() const {
    return {points.rows(), static_cast<int>(directions.rows()), order};
  }
};

class BoundModel;

/// Differentiable map from unit-box coordinates to one or more outputs.
///
/// Parameters are stored as named blocks in a fixed order; flatten() walks
/// the blocks in that order, row-major inside each block.
class Model {
 public:
  virtual ~Model() = default;

  virtual std::string kind() const = 0;
  virtual std::unique_ptr<Model> clone() const = 0;

  int input_dim() const { return input_dim_; }
  int output_dim() const { return output_dim_; }

  std::span<ParameterBlock> parameters() { return blocks_; }
  std::span<const ParameterBlock> parameters() const { return blocks_; }
  std::size_t parameter_count() const;

  Vector flatten() const;
  /// Throws ShapeError when `theta` has the wrong length.
  void unflatten(const Vector& theta);

 protected:
  Model(int input_dim, int output_dim) : input_dim_(input_dim), output_dim_(output_dim) {}
  Model(const Model&) = default;
  Model& operator=(const Model&) = default;

  std::size_t add_parameter(std::string name, Matrix init);

  /// Shared per-binding work (e.g. feature convolution); results go into
  /// BoundModel::cache().
  virtual void prepare(BoundModel&) const {}
  /// Maps the input jet (points x input_dim blocks) to the output jet.
  virtual ad::Var evaluate(BoundModel& bound, ad::Var input, const ad::JetLayout& layout) const = 0;

  friend class BoundModel;

 private:
  int input_dim_;
  int output_dim_;
  std::vector<ParameterBlock> blocks_;
};

/// A model's parameters placed on a graph. One binding per optimizer step;
/// several point batches may be applied to the same binding so that shared
/// work (convolved grid features) is built once.
class BoundModel {
 public:
  /// Throws NonFiniteParameterError naming the first non-finite block.
  BoundModel(const Model& model, ad::Graph& graph, bool track_gradients = true);

  ad::Var apply(const JetSeed& seed);

  const Model& model() const { return *model_; }
  ad::Graph& graph() { return *graph_; }
  ad::Var parameter(std::size_t i) const { return params_.at(i); }
  std::vector<ad::Var>& cache() { return cache_; }

  /// Gradient of the graph's last backward root, flattened in parameter order.
  Vector flat_gradient() const;

 private:
  const Model* model_;
  ad::Graph* graph_;
  std::vector<ad::Var> params_;
  std::vector<ad::Var> cache_;
  bool prepared_ = false;
};

/// Builds the constant input jet for a seed.
Matrix input_jet(const JetSeed& seed);

/// Output values, one row per point. Points in unit-box coordinates.
Matrix forward(const Model& model, const Matrix& points);

/// Input derivatives of every output channel.
struct DerivativeBundle {
  Matrix value;
  /// first[i](p, c) = d out_c / d x_i at point p.
  std::vector<Matrix> first;
  /// second[i](p, c) = d^2 out_c / d x_i^2.
  std::vector<Matrix> second;
  /// mixed[{i, j}] for i < j when requested.
  std::map<std::pair<int, int>, Matrix> mixed;
};

/// Exact (autodiff) derivatives of order 1 or 2 in unit-box coordinates.
/// Throws UnsupportedOrderError for any other order.
DerivativeBundle derivatives(const Model& model, const Matrix& points, int order, bool with_mixed = false);

/// Value, gradient and Hessian of a scalar field at one point.
struct SecondOrderSample {
  double value = 0.0;
  Vector gradient;
  Eigen::MatrixXd hessian;
};

using ScalarField = std::function<SecondOrderSample(const Vector& x)>;

/// Parameter-free model wrapping closed-form fields given in physical
/// coordinates; the box maps unit-box inputs back to physical space.
class AnalyticModel final : public Model {
 public:
  AnalyticModel(std::vector<ScalarField> channels, CoordinateBox box, std::string label = "analytic");

  std::string kind() const override { return label_; }
  std::unique_ptr<Model> clone() const override { return std::make_unique<AnalyticModel>(*this); }

 protected:
  ad::Var evaluate(BoundModel& bound, ad::Var input, const ad::JetLayout& layout) const override;

 private:
  std::vector<ScalarField> channels_;
  CoordinateBox box_;
  std::string label_;
};

/// Fills `m` with Glorot-uniform values, limit sqrt(6 / (fan_in + fan_out)).
void glorot_uniform(Matrix& m, Rng& rng);

}  // namespace pgcan
