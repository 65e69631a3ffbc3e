#include "pgcan/evaluation.hpp"

#include "pgcan/errors.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>

namespace pgcan {

double l2_relative(const Vector& pred, const Vector& ref) {
  if (pred.size() != ref.size()) throw ShapeError("l2_relative: vectors differ in length");
  const double denom = ref.norm();
  if (!(denom > 0.0)) throw UndefinedMetricError("l2_relative: reference has zero norm");
  return (pred - ref).norm() / denom;
}

Vector magnitude(const Matrix& values, int channels) {
  if (values.cols() < channels) throw ShapeError("magnitude: not enough channels");
  return values.leftCols(channels).rowwise().norm();
}

// --- lattices -------------------------------------------------------------------

Lattice Lattice::over(const PDEProblem& problem, int n) {
  Lattice l;
  l.n = n;
  const auto& box = problem.box();
  l.x0 = box.lo[0];
  l.x1 = box.hi[0];
  l.y0 = box.lo[1];
  l.y1 = box.hi[1];
  return l;
}

Matrix Lattice::points(int dims) const {
  if (n < 2) throw ConfigError("lattice needs n >= 2");
  if (dims == 3 && fixed_axis < 0) throw ConfigError("3D lattice needs a fixed axis");
  Matrix pts = Matrix::Zero(static_cast<Eigen::Index>(n) * n, dims);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const Eigen::Index r = static_cast<Eigen::Index>(i) * n + j;
      pts(r, axis_x) = node_x(i);
      pts(r, axis_y) = node_y(j);
      if (fixed_axis >= 0) pts(r, fixed_axis) = fixed_value;
    }
  }
  return pts;
}

ErrorField error_map(const Model& model, const PDEProblem& problem, const ReferenceSolution& reference,
                     const Lattice& lattice, const std::string& channel) {
  const auto names = problem.output_names();
  int index = -1;
  if (channel == "magnitude") {
    if (problem.output_dim() < 2) throw ConfigError("velocity magnitude needs a multi-output problem");
  } else {
    const auto it = std::find(names.begin(), names.end(), channel);
    if (it == names.end()) throw ConfigError("problem '" + problem.name() + "' has no output '" + channel + "'");
    index = static_cast<int>(it - names.begin());
  }

  const Matrix all = lattice.points(problem.input_dim());
  std::vector<Eigen::Index> inside;
  for (Eigen::Index r = 0; r < all.rows(); ++r) {
    if (problem.contains(all.row(r).transpose())) inside.push_back(r);
  }
  Matrix pts(static_cast<Eigen::Index>(inside.size()), all.cols());
  for (std::size_t k = 0; k < inside.size(); ++k) pts.row(static_cast<Eigen::Index>(k)) = all.row(inside[k]);

  ErrorField f;
  f.lattice = lattice;
  f.channel = channel;
  f.values = Eigen::MatrixXd::Zero(lattice.n, lattice.n);
  f.mask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(lattice.n, lattice.n, false);
  if (inside.empty()) return f;

  const Matrix pred = forward(model, problem.box().normalize(pts));
  const Matrix ref = reference.evaluate(pts);
  Vector err;
  if (index < 0) {
    err = magnitude(pred, 2) - magnitude(ref, 2);
  } else {
    if (ref.cols() <= index) throw ShapeError("reference lacks channel '" + channel + "'");
    err = pred.col(index) - ref.col(index);
  }
  for (std::size_t k = 0; k < inside.size(); ++k) {
    const int i = static_cast<int>(inside[k] / lattice.n), j = static_cast<int>(inside[k] % lattice.n);
    f.values(i, j) = err[static_cast<Eigen::Index>(k)];
    f.mask(i, j) = true;
  }
  return f;
}

// --- spectra --------------------------------------------------------------------

Eigen::MatrixXd power_spectrum(const Eigen::MatrixXd& field) {
  const int n = static_cast<int>(field.rows());
  if (n < 1 || field.cols() != n) throw ShapeError("power_spectrum: field must be square");
  std::vector<std::complex<double>> in(static_cast<std::size_t>(n) * n), out(in.size());
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y) in[static_cast<std::size_t>(x) * n + y] = field(x, y);
  fftw_plan plan = fftw_plan_dft_2d(n, n, reinterpret_cast<fftw_complex*>(in.data()),
                                    reinterpret_cast<fftw_complex*>(out.data()), FFTW_FORWARD, FFTW_ESTIMATE);
  fftw_execute(plan);
  fftw_destroy_plan(plan);

  const int h = n / 2;
  Eigen::MatrixXd p(n, n);
  for (int a = 0; a < n; ++a) {
    const int u = ((a - h) % n + n) % n;
    for (int b = 0; b < n; ++b) {
      const int v = ((b - h) % n + n) % n;
      p(a, b) = std::norm(out[static_cast<std::size_t>(u) * n + v]);
    }
  }
  return p;
}

PSDCurve directional_psd(const Eigen::MatrixXd& spectrum, char direction) {
  const int n = static_cast<int>(spectrum.rows());
  if (spectrum.cols() != n) throw ShapeError("directional_psd: spectrum must be square");
  if (direction != 'x' && direction != 'y') throw ConfigError("directional_psd: direction must be 'x' or 'y'");
  const int h = n / 2;
  PSDCurve c;
  c.direction = direction;
  for (int s = 1; s <= h; ++s) {
    // Centred index of frequency +s; for even N, +N/2 aliases to -N/2.
    int a = s + h;
    if (a >= n) a -= n;
    const double sum = direction == 'x' ? spectrum.row(a).sum() : spectrum.col(a).sum();
    const double raw = sum / n;
    c.bins.push_back(s);
    c.raw.push_back(raw);
    if (raw <= 0.0) c.raw_zero = true;
    c.log_values.push_back(std::log10(std::max(raw, kPsdFloor)));
  }
  c.values = c.log_values;
  return c;
}

std::vector<PSDCurve> align_psd_curves(std::vector<PSDCurve> curves) {
  if (curves.empty()) return curves;
  double top = -std::numeric_limits<double>::infinity();
  for (const auto& c : curves) {
    if (c.values.empty()) throw ShapeError("align_psd_curves: empty curve");
    top = std::max(top, c.values.front());
  }
  for (auto& c : curves) {
    const double shift = top - c.values.front();
    for (double& v : c.values) v += shift;
  }
  return curves;
}

double flatness_score(const std::vector<double>& values) {
  if (values.empty()) throw ShapeError("flatness_score: empty curve");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double worst = 0.0;
  for (double v : values) worst = std::max(worst, std::abs(v - mean));
  return worst;
}

double flatness_score(const PSDCurve& curve) { return flatness_score(curve.values); }

// --- studies ----------------------------------------------------------------------

std::vector<ResolutionPoint> resolution_study(const Model& model, const PDEProblem& problem,
                                              const std::vector<std::shared_ptr<const LatticeReference>>& family,
                                              int channel) {
  std::vector<ResolutionPoint> out;
  if (family.empty()) return out;
  if (problem.input_dim() != 2) throw ConfigError("resolution_study needs a 2D problem");
  const auto& first = *family.front();
  const double tol = 1e-12;
  for (std::size_t k = 0; k < family.size(); ++k) {
    const auto& ref = *family[k];
    if (std::abs(ref.x0() - first.x0()) > tol || std::abs(ref.x1() - first.x1()) > tol ||
        std::abs(ref.y0() - first.y0()) > tol || std::abs(ref.y1() - first.y1()) > tol) {
      throw ShapeError("resolution_study: reference " + std::to_string(k) + " covers a different rectangle");
    }
    if (k > 0 && ref.n() <= family[k - 1]->n()) {
      throw ShapeError("resolution_study: lattice sizes must increase");
    }
    if (channel >= ref.channels()) throw ShapeError("resolution_study: reference lacks the channel");
    const int n = ref.n();
    Matrix pts(static_cast<Eigen::Index>(n) * n, 2);
    Vector truth(pts.rows());
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const Eigen::Index r = static_cast<Eigen::Index>(i) * n + j;
        pts(r, 0) = ref.node_x(i);
        pts(r, 1) = ref.node_y(j);
        truth[r] = ref.values()[channel](i, j);
      }
    }
    const Matrix pred = forward(model, problem.box().normalize(pts));
    out.push_back({n, l2_relative(pred.col(channel), truth)});
  }
  return out;
}

FeatureMaps export_feature_maps(const PgcanModel& model, const PDEProblem& problem, const Lattice& lattice) {
  const Matrix pts = lattice.points(problem.input_dim());
  const Matrix f = model.encode_features(problem.box().normalize(pts));
  const Eigen::Index half = f.cols() / 2;
  FeatureMaps m;
  m.lattice = lattice;
  m.mean_f1.resize(lattice.n, lattice.n);
  m.mean_f2.resize(lattice.n, lattice.n);
  for (int i = 0; i < lattice.n; ++i) {
    for (int j = 0; j < lattice.n; ++j) {
      const Eigen::Index r = static_cast<Eigen::Index>(i) * lattice.n + j;
      m.mean_f1(i, j) = f.row(r).head(half).mean();
      m.mean_f2(i, j) = f.row(r).tail(f.cols() - half).mean();
    }
  }
  return m;
}

}  // namespace pgcan
