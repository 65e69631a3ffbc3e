#pragma once

#include "pgcan/architectures.hpp"
#include "pgcan/model.hpp"
#include "pgcan/problems.hpp"
#include "pgcan/reference.hpp"

#include <string>
#include <vector>

namespace pgcan {

/// ||pred - ref||_2 / ||ref||_2. Throws UndefinedMetricError when ||ref|| = 0
/// and ShapeError on a length mismatch.
double l2_relative(const Vector& pred, const Vector& ref);

/// Row-wise Euclidean norm of the first `channels` columns.
Vector magnitude(const Matrix& values, int channels);

/// N x N closed lattice over a rectangle in two chosen coordinates; for 3D
/// problems the remaining coordinate is held at `fixed_value`.
struct Lattice {
  int n = 256;
  int axis_x = 0;
  int axis_y = 1;
  double x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;
  int fixed_axis = -1;
  double fixed_value = 0.0;

  /// Lattice spanning the problem box (first two axes).
  static Lattice over(const PDEProblem& problem, int n);
  /// Physical points, index i * n + j for node (i along x, j along y).
  Matrix points(int dims) const;
  double node_x(int i) const { return x0 + (x1 - x0) * i / (n - 1); }
  double node_y(int j) const { return y0 + (y1 - y0) * j / (n - 1); }
};

/// Signed error field on a lattice. values(i, j) = pred - ref at node (i, j);
/// masked nodes (outside the domain) hold 0 and mask(i, j) = false.
struct ErrorField {
  Lattice lattice;
  std::string channel;
  Eigen::MatrixXd values;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> mask;
};

/// Channel names: an output name ("u", "v", "p") or "magnitude" for the
/// velocity magnitude of a multi-output problem.
ErrorField error_map(const Model& model, const PDEProblem& problem, const ReferenceSolution& reference,
                     const Lattice& lattice, const std::string& channel = "u");

/// Zero-centred power spectrum |DFT|^2; entry (a, b) is frequency
/// (a - floor(N/2), b - floor(N/2)), first index along x.
Eigen::MatrixXd power_spectrum(const Eigen::MatrixXd& field);

struct PSDCurve {
  char direction = 'x';
  std::vector<int> bins;
  /// Bin averages (1/N) sum_v P(s, v).
  std::vector<double> raw;
  /// log10 of raw, floored at kPsdFloor.
  std::vector<double> log_values;
  /// log_values after alignment (equal to log_values until aligned).
  std::vector<double> values;
  /// Set when any bin had exactly zero power and was floored.
  bool raw_zero = false;
};

constexpr double kPsdFloor = 1e-300;

/// Directional PSD for bins s = 1 .. floor(N/2), direction 'x' or 'y'.
PSDCurve directional_psd(const Eigen::MatrixXd& spectrum, char direction);

/// Shifts every curve so all start at the largest first-bin value.
std::vector<PSDCurve> align_psd_curves(std::vector<PSDCurve> curves);

/// max |v - mean(v)| over the (log) values of a curve.
double flatness_score(const std::vector<double>& values);
double flatness_score(const PSDCurve& curve);

/// Mean flatness over 20 seeded 128 x 128 Gaussian-noise fields must stay
/// below this (frozen from that ensemble).
constexpr double kNoiseFlatnessBound = 0.12;

struct ResolutionPoint {
  int n = 0;
  double l2rel = 0.0;
};

/// L2_rel of the model against each lattice reference at its own nodes.
/// Throws ShapeError when a reference is not square or does not cover the
/// same rectangle as the first one.
std::vector<ResolutionPoint> resolution_study(const Model& model, const PDEProblem& problem,
                                              const std::vector<std::shared_ptr<const LatticeReference>>& family,
                                              int channel = 0);

struct FeatureMaps {
  Lattice lattice;
  Eigen::MatrixXd mean_f1;
  Eigen::MatrixXd mean_f2;
};

/// Channel means of both encoder halves on a lattice of the problem box.
FeatureMaps export_feature_maps(const PgcanModel& model, const PDEProblem& problem, const Lattice& lattice);

}  // namespace pgcan
