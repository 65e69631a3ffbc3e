#pragma once

#include "pgcan/model.hpp"

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace pgcan {

/// Ground truth on a problem domain, evaluated at physical coordinates.
class ReferenceSolution {
 public:
  virtual ~ReferenceSolution() = default;

  /// "analytic", "oracle" or "file".
  virtual std::string kind() const = 0;
  virtual int channels() const = 0;
  /// One row per point, one column per channel.
  virtual Matrix evaluate(const Matrix& points) const = 0;
  virtual std::string provenance() const = 0;
};

/// Closed-form (or manufactured) fields with exact derivatives.
class AnalyticReference final : public ReferenceSolution {
 public:
  AnalyticReference(std::vector<ScalarField> fields, std::string provenance, std::string kind = "analytic");

  std::string kind() const override { return kind_; }
  int channels() const override { return static_cast<int>(fields_.size()); }
  Matrix evaluate(const Matrix& points) const override;
  std::string provenance() const override { return provenance_; }

  const std::vector<ScalarField>& fields() const { return fields_; }
  /// The reference as a zero-parameter model on `box` (unit-box inputs).
  std::unique_ptr<Model> as_model(const CoordinateBox& box) const;

 private:
  std::vector<ScalarField> fields_;
  std::string provenance_;
  std::string kind_;
};

double convection_exact(double x, double t, double beta);
SecondOrderSample convection_sample(double x, double t, double beta);

/// sin(a1 pi x) sin(a2 pi y).
double helmholtz_exact(double x, double y, double a2, double a1 = 1.0);
SecondOrderSample helmholtz_sample(double x, double y, double a2, double a1 = 1.0);

/// Manufactured torus solution u* = sin(pi x y z) and its Laplacian.
double torus_exact(double x, double y, double z);
double torus_laplacian(double x, double y, double z);
SecondOrderSample torus_sample(double x, double y, double z);

struct ManufacturedSolution {
  ScalarField solution;
  std::function<double(const Vector&)> forcing;  // the Laplacian of the solution
};
ManufacturedSolution poisson_torus_manufactured();

/// Gauss-Hermite rule for weight exp(-z^2). Weights are returned as logs
/// because the extreme ones underflow long before they stop mattering.
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> log_weights;
};
GaussHermiteRule gauss_hermite(int n);

struct OracleValue {
  double value = 0.0;
  /// |u_n - u_2n|.
  double discrepancy = 0.0;
  bool precision_warning = false;
};

/// Viscous Burgers solution with u(x, 0) = -sin(pi x) via the Cole-Hopf
/// integrals, evaluated by Gauss-Hermite quadrature.
class BurgersOracle final : public ReferenceSolution {
 public:
  explicit BurgersOracle(double nu, int nodes = 400);

  std::string kind() const override { return "oracle"; }
  int channels() const override { return 1; }
  Matrix evaluate(const Matrix& points) const override;
  std::string provenance() const override;

  double nu() const { return nu_; }
  int nodes() const { return static_cast<int>(rule_.nodes.size()); }

  double value(double x, double t) const;
  /// Value, gradient and Hessian in (x, t).
  SecondOrderSample sample(double x, double t) const;
  ScalarField field() const;

 private:
  double nu_;
  GaussHermiteRule rule_;
};

/// Single evaluation with a convergence check against twice the nodes;
/// sets precision_warning when they differ by more than `tolerance`.
OracleValue burgers_oracle(double x, double t, double nu, int nodes = 400, double tolerance = 1e-6);

/// N x N lattice over a rectangle, bilinearly interpolated.
class LatticeReference final : public ReferenceSolution {
 public:
  /// values[c] is an N x N matrix indexed (i along x, j along y).
  LatticeReference(double x0, double x1, double y0, double y1, std::vector<Eigen::MatrixXd> values,
                   std::vector<std::string> names, std::string provenance);

  std::string kind() const override { return "file"; }
  int channels() const override { return static_cast<int>(values_.size()); }
  Matrix evaluate(const Matrix& points) const override;
  std::string provenance() const override { return provenance_; }

  int n() const { return static_cast<int>(values_.front().rows()); }
  double x0() const { return x0_; }
  double x1() const { return x1_; }
  double y0() const { return y0_; }
  double y1() const { return y1_; }
  const std::vector<Eigen::MatrixXd>& values() const { return values_; }
  const std::vector<std::string>& names() const { return names_; }
  double node_x(int i) const { return x0_ + (x1_ - x0_) * i / (n() - 1); }
  double node_y(int j) const { return y0_ + (y1_ - y0_) * j / (n() - 1); }

 private:
  double x0_, x1_, y0_, y1_;
  std::vector<Eigen::MatrixXd> values_;
  std::vector<std::string> names_;
  std::string provenance_;
};

constexpr int kMinReferenceLattice = 16;

/// Reads the reference CSV lattice format:
///   N,channels
///   <N>,<channels>
///   x,y,<name_1>,...,<name_channels>
///   N*N data rows, any order
/// Throws CorruptReferenceError on missing or duplicate nodes, malformed
/// rows, or N < 16.
std::shared_ptr<LatticeReference> load_reference(const std::filesystem::path& path);
void write_reference(const std::filesystem::path& path, const LatticeReference& ref);

/// Samples `ref` on an N x N closed lattice over the given rectangle.
std::shared_ptr<LatticeReference> sample_reference(const ReferenceSolution& ref, int n, double x0, double x1,
                                                   double y0, double y1, std::vector<std::string> names);

}  // namespace pgcan
