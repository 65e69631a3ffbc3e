#pragma once

#include "pgcan/architectures.hpp"
#include "pgcan/model.hpp"
#include "pgcan/random.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>

namespace pgcan::testing {

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("pgcan_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

/// Grid lattice spacing of a model in unit-box coordinates (0 for models
/// without a grid). Every repetition's faces lie on multiples of it.
inline double face_spacing(const Model& model) {
  if (const auto* p = dynamic_cast<const PgcanModel*>(&model)) {
    return 1.0 / ((p->grid().vertices[0] - 1) * p->grid().n_rep);
  }
  if (const auto* p = dynamic_cast<const PixelModel*>(&model)) {
    return 1.0 / ((p->grid().vertices[0] - 1) * p->grid().n_rep);
  }
  return 0.0;
}

/// Uniform unit-box points at least `margin` away from every grid face.
inline Matrix face_safe_points(int n, int dims, double spacing, double margin, Rng& rng) {
  Matrix pts(n, dims);
  for (int i = 0; i < n; ++i) {
    for (int d = 0; d < dims; ++d) {
      double u = 0.0;
      for (;;) {
        u = rng.uniform(0.05, 0.95);
        if (spacing <= 0.0) break;
        const double r = std::fmod(u, spacing);
        if (std::min(r, spacing - r) > margin) break;
      }
      pts(i, d) = u;
    }
  }
  return pts;
}

struct FdReport {
  double first = 0.0;
  double second = 0.0;
};

inline double rel_error(double exact, double approx) {
  return std::abs(exact - approx) / std::max({std::abs(exact), std::abs(approx), 1.0});
}

/// Worst relative error (unit floor) of autodiff first and pure second input
/// derivatives against central differences of the forward pass.
inline FdReport fd_check(const Model& model, const Matrix& points, double h = 1e-5) {
  const DerivativeBundle d = derivatives(model, points, 2);
  FdReport r;
  for (int a = 0; a < model.input_dim(); ++a) {
    Matrix plus = points, minus = points;
    plus.col(a).array() += h;
    minus.col(a).array() -= h;
    const Matrix fp = forward(model, plus), fm = forward(model, minus), f0 = forward(model, points);
    for (Eigen::Index p = 0; p < points.rows(); ++p) {
      for (Eigen::Index c = 0; c < f0.cols(); ++c) {
        const double d1 = (fp(p, c) - fm(p, c)) / (2 * h);
        const double d2 = (fp(p, c) - 2 * f0(p, c) + fm(p, c)) / (h * h);
        r.first = std::max(r.first, rel_error(d.first[a](p, c), d1));
        r.second = std::max(r.second, rel_error(d.second[a](p, c), d2));
      }
    }
  }
  return r;
}

inline std::unique_ptr<Model> default_architecture(const std::string& name, int input_dim, int outputs,
                                                   std::uint64_t seed = 0) {
  Rng rng(seed);
  ArchitectureConfig cfg;
  cfg.name = name;
  return build_architecture(cfg, input_dim, outputs, rng);
}

/// Sets every block except those whose name ends with `keep` to zero.
inline void zero_except(Model& model, const std::string& keep) {
  for (auto& b : model.parameters()) {
    if (b.name.size() >= keep.size() && b.name.compare(b.name.size() - keep.size(), keep.size(), keep) == 0) continue;
    b.value.setZero();
  }
}

}  // namespace pgcan::testing
