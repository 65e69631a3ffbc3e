#pragma once

#include "pgcan/autodiff.hpp"
#include "pgcan/model.hpp"
#include "pgcan/random.hpp"

#include <memory>
#include <vector>

namespace pgcan {

/// Shape of a single-resolution parametric grid in the unit box.
struct GridSpec {
  int dims = 2;
  /// Vertices per axis (>= 2 each); cells per axis = vertices - 1.
  std::vector<int> vertices;
  int n_features = 128;
  int n_rep = 2;
  /// PGCAN convolves the vertex features before interpolation; PIXEL does not.
  bool convolve = true;

  static GridSpec uniform(int dims, int vertices_per_axis, int n_features, int n_rep, bool convolve = true);

  /// Throws ConfigError on invalid shapes.
  void validate() const;
  int vertex_count() const;
  int kernel_size() const;  // 3^dims
  int vertex_index(const std::vector<int>& multi) const;
  std::vector<int> vertex_multi_index(int index) const;
  /// Diagonal offset of repetition `rep` in cell units: rep / n_rep.
  double shift(int rep) const { return static_cast<double>(rep) / n_rep; }
  /// Row of vertex `vertex` of repetition `rep` in a feature table.
  int table_row(int rep, int vertex) const { return rep * vertex_count() + vertex; }
};

struct LocalCoords {
  std::vector<int> cell;
  Vector local;   // position inside the cell, [0,1]^d
  Vector warped;  // cosine-warped local position
  /// Axis coordinate clamped onto the lattice (shifted repetitions leave a
  /// sliver of the domain outside their lattice).
  std::vector<bool> clamped;
};

/// 0.5 * (1 - cos(pi x)).
double cosine_warp(double xbar);
/// 0.5 * pi * sin(pi x).
double cosine_warp_derivative(double xbar);
/// 0.5 * pi^2 * cos(pi x).
double cosine_warp_second_derivative(double xbar);

/// Containing cell of a unit-box point for one repetition. Points exactly on
/// an interior face land in the cell whose lower face it is; the domain max
/// clamps to the last cell with local coordinate 1. Throws DomainError when
/// the point is outside [0,1]^d by more than 1e-12.
LocalCoords locate(const GridSpec& spec, const Vector& point, int rep);

/// Trainable state of the encoder: vertex features F0 (one row per
/// (repetition, vertex), one column per feature) and per-feature kernels
/// (one row per kernel tap, one column per feature).
class ParametricGrid {
 public:
  ParametricGrid(GridSpec spec, Rng& rng);
  ParametricGrid(GridSpec spec, Matrix features, Matrix kernels);

  const GridSpec& spec() const { return spec_; }
  Matrix& features() { return features_; }
  const Matrix& features() const { return features_; }
  Matrix& kernels() { return kernels_; }
  const Matrix& kernels() const { return kernels_; }

 private:
  GridSpec spec_;
  Matrix features_;
  Matrix kernels_;
};

/// Default initial values: F0 ~ U(-0.1, 0.1), kernels ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Matrix initial_features(const GridSpec& spec, Rng& rng);
Matrix initial_kernels(const GridSpec& spec, Rng& rng);

/// tanh of the feature-wise 3^d convolution with zero padding, no bias.
Matrix convolve(const GridSpec& spec, const Matrix& features, const Matrix& kernels);
ad::Var convolve(const GridSpec& spec, ad::Var features, ad::Var kernels);

/// Multilinear blend (in warped coordinates) of the cell-corner rows of
/// `table` for repetition `rep`.
Vector interpolate(const GridSpec& spec, const Matrix& table, const LocalCoords& lc, int rep);

struct FeatureVector {
  Vector f;
  Vector f1() const { return f.head(f.size() / 2); }
  Vector f2() const { return f.tail(f.size() - f.size() / 2); }
};

/// Sum over repetitions of the interpolated (convolved, when enabled) features.
FeatureVector encode(const ParametricGrid& grid, const Vector& point);

/// Sparse interpolation weights of a jet seed: row (channel * n + i) of the
/// result holds the weights producing that jet channel at point i from a
/// feature table. Shared by every batch of the same points.
std::shared_ptr<const ad::GatherPlan> interpolation_plan(const GridSpec& spec, const JetSeed& seed);

}  // namespace pgcan
