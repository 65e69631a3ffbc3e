#pragma once

#include "pgcan/model.hpp"
#include "pgcan/random.hpp"
#include "pgcan/reference.hpp"

#include <map>
#include <memory>
#include <string>
#include <vector>

namespace pgcan {

enum class ConditionKind { Dirichlet, PeriodicValue, PeriodicDerivative };

/// Points of one IC/BC specification, in physical coordinates.
///
/// Dirichlet: error = u(points)[channels] - targets.
/// PeriodicValue: error = u(points)[channels] - u(partner)[channels].
/// PeriodicDerivative: same with d/d(axis) of both sides.
struct BoundaryBatch {
  std::string name;
  ConditionKind kind = ConditionKind::Dirichlet;
  /// Counts toward L_IC rather than L_BC.
  bool initial = false;
  std::vector<int> channels{0};
  int axis = 0;
  Matrix points;
  Matrix partner;
  Matrix targets;

  Eigen::Index size() const { return points.rows(); }
};

struct SampleBatch {
  Matrix interior;
  std::vector<BoundaryBatch> boundary;
};

struct SampleCounts {
  int interior = 20000;
  /// Points per boundary specification.
  int boundary = 2000;
  /// Points on the initial slice.
  int initial = 2000;
};

/// A benchmark PDE with its conditions, sampling domain and reference.
class PDEProblem {
 public:
  virtual ~PDEProblem() = default;

  virtual std::string name() const = 0;
  /// Input dimension (space plus time).
  int input_dim() const { return box_.dims(); }
  virtual int output_dim() const { return 1; }
  virtual std::vector<std::string> output_names() const { return {"u"}; }
  virtual bool time_dependent() const { return false; }
  /// Physical-to-unit normalization box (the bounding box for the torus).
  const CoordinateBox& box() const { return box_; }
  const std::map<std::string, double>& parameters() const { return params_; }
  double parameter(const std::string& key) const { return params_.at(key); }

  /// Residuals at physical points, one (points x 1) node per equation.
  /// Graph-based so the loss can be differentiated w.r.t. the parameters.
  virtual std::vector<ad::Var> residual(BoundModel& bound, const Matrix& points) const = 0;
  /// Residual values without parameter gradients, one column per equation.
  Matrix residual_values(const Model& model, const Matrix& points) const;

  /// Uniform interior samples (physical coordinates).
  virtual Matrix sample_interior(int n, Rng& rng) const;
  virtual bool contains(const Vector& point, double tol = 1e-12) const { return box_.contains(point, tol); }
  virtual std::vector<BoundaryBatch> sample_boundary(const SampleCounts& counts, Rng& rng) const = 0;
  SampleBatch sample(const SampleCounts& counts, Rng& rng) const;

  /// Default interior count when a run does not set one.
  virtual int default_interior_points() const { return 20000; }
  /// Dynamic-weight cadence override (0 = use the run default).
  virtual int default_reweight_every() const { return 0; }

  /// Null when no reference is available (e.g. LDC without a lattice file).
  std::shared_ptr<const ReferenceSolution> reference() const { return reference_; }
  void set_reference(std::shared_ptr<const ReferenceSolution> ref) { reference_ = std::move(ref); }
  /// The reference wrapped as a zero-parameter model; ConfigError when the
  /// reference has no closed form or oracle to differentiate.
  std::unique_ptr<Model> reference_model() const;

  /// Points used for the L2_rel metric: a closed n x n lattice over the box
  /// (the torus overrides this with masked cross-sections).
  virtual Matrix evaluation_points(int n) const;

 protected:
  PDEProblem(CoordinateBox box, std::map<std::string, double> params)
      : box_(std::move(box)), params_(std::move(params)) {}

  /// Output jet at physical points with derivatives along physical axes;
  /// directions are the axes listed in `axes`.
  struct PhysicalJet {
    ad::Var jet;
    ad::JetLayout layout;
    /// Block (points x outputs) for channel `c` of the jet.
    ad::Var block(int c) const;
    ad::Var value() const { return block(0); }
    ad::Var first(int k) const { return block(layout.first(k)); }
    ad::Var second(int k) const { return block(layout.second(k)); }
  };
  PhysicalJet physical_jet(BoundModel& bound, const Matrix& points, const std::vector<int>& axes, int order) const;

  CoordinateBox box_;
  std::map<std::string, double> params_;
  std::shared_ptr<const ReferenceSolution> reference_;
};

/// u_t + u u_x - nu u_xx = 0 on [-1,1] x [0,1], u(x,0) = -sin(pi x),
/// periodic value and slope in x.
class BurgersProblem final : public PDEProblem {
 public:
  explicit BurgersProblem(double nu);
  std::string name() const override { return "burgers"; }
  bool time_dependent() const override { return true; }
  std::vector<ad::Var> residual(BoundModel& bound, const Matrix& points) const override;
  std::vector<BoundaryBatch> sample_boundary(const SampleCounts& counts, Rng& rng) const override;
};

/// u_t + beta u_x = 0 on [0,2pi] x [0,1], u(x,0) = sin x, periodic in x.
class ConvectionProblem final : public PDEProblem {
 public:
  explicit ConvectionProblem(double beta);
  std::string name() const override { return "convection"; }
  bool time_dependent() const override { return true; }
  std::vector<ad::Var> residual(BoundModel& bound, const Matrix& points) const override;
  std::vector<BoundaryBatch> sample_boundary(const SampleCounts& counts, Rng& rng) const override;
};

/// lap u + k^2 u = q on [-1,1]^2 with u = 0 on the boundary and
/// q = (k^2 - pi^2 (a1^2 + a2^2)) sin(a1 pi x) sin(a2 pi y).
class HelmholtzProblem final : public PDEProblem {
 public:
  HelmholtzProblem(double a2, double a1 = 1.0, double k = 1.0);
  std::string name() const override { return "helmholtz"; }
  std::vector<ad::Var> residual(BoundModel& bound, const Matrix& points) const override;
  std::vector<BoundaryBatch> sample_boundary(const SampleCounts& counts, Rng& rng) const override;
  int default_reweight_every() const override { return 1; }
  double source(double x, double y) const;
};

/// Steady incompressible Navier-Stokes in [0,1]^2 driven by the lid
/// velocity (A sin(pi x), 0); outputs (u, v, p); residual columns
/// (mass, momentum x, momentum y). The pressure gauge p(0,0) = 0 is a
/// one-point Dirichlet batch.
class CavityProblem final : public PDEProblem {
 public:
  CavityProblem(double A, double rho = 1.0, double mu = 0.01);
  std::string name() const override { return "ldc"; }
  int output_dim() const override { return 3; }
  std::vector<std::string> output_names() const override { return {"u", "v", "p"}; }
  std::vector<ad::Var> residual(BoundModel& bound, const Matrix& points) const override;
  std::vector<BoundaryBatch> sample_boundary(const SampleCounts& counts, Rng& rng) const override;
  int default_interior_points() const override { return 5000; }
};

/// lap u = -f inside the torus (1 - sqrt(x^2 + y^2))^2 + z^2 <= 1/4 with
/// u = sin(pi x y z) on its surface. With `manufactured` the forcing is
/// replaced by the Laplacian of sin(pi x y z), which is then the exact
/// solution; otherwise f = exp(x + y + z).
class TorusPoissonProblem final : public PDEProblem {
 public:
  explicit TorusPoissonProblem(bool manufactured = false);
  std::string name() const override { return "poisson3d"; }
  bool manufactured() const { return manufactured_; }
  std::vector<ad::Var> residual(BoundModel& bound, const Matrix& points) const override;
  Matrix sample_interior(int n, Rng& rng) const override;
  bool contains(const Vector& point, double tol = 1e-12) const override;
  std::vector<BoundaryBatch> sample_boundary(const SampleCounts& counts, Rng& rng) const override;
  Matrix evaluation_points(int n) const override;

  static constexpr double kMajor = 1.0;
  static constexpr double kMinor = 0.5;
  /// (1 - sqrt(x^2 + y^2))^2 + z^2 - r^2; <= 0 inside.
  static double level_set(double x, double y, double z);
  /// Cross-section heights used for evaluation and error maps.
  static const std::vector<double>& slice_heights();

 private:
  bool manufactured_;
};

/// Registry: "burgers", "convection", "helmholtz", "ldc", "poisson3d".
const std::vector<std::string>& problem_names();

/// Default parameters of a problem (e.g. {"nu": 1/pi} for burgers).
std::map<std::string, double> default_problem_parameters(const std::string& name);

/// Builds a problem with `overrides` applied on top of the defaults.
/// Throws ConfigError for unknown names or keys, ParameterError for
/// non-physical values.
std::unique_ptr<PDEProblem> make_problem(const std::string& name, const std::map<std::string, double>& overrides = {});

/// Rejection-sampling acceptance below this aborts with GeometryError.
constexpr double kMinAcceptanceRate = 0.01;

}  // namespace pgcan
