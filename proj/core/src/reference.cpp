#include "pgcan/reference.hpp"

#include "pgcan/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

namespace pgcan {

namespace {
constexpr double kPi = std::numbers::pi;
}

// --- analytic ---------------------------------------------------------------

AnalyticReference::AnalyticReference(std::vector<ScalarField> fields, std::string provenance, std::string kind)
    : fields_(std::move(fields)), provenance_(std::move(provenance)), kind_(std::move(kind)) {
  if (fields_.empty()) throw ConfigError("AnalyticReference: no fields");
}

Matrix AnalyticReference::evaluate(const Matrix& points) const {
  Matrix out(points.rows(), channels());
  for (Eigen::Index p = 0; p < points.rows(); ++p) {
    const Vector x = points.row(p).transpose();
    for (int c = 0; c < channels(); ++c) out(p, c) = fields_[c](x).value;
  }
  return out;
}

std::unique_ptr<Model> AnalyticReference::as_model(const CoordinateBox& box) const {
  return std::make_unique<AnalyticModel>(fields_, box, "exact");
}

double convection_exact(double x, double t, double beta) { return std::sin(x - beta * t); }

SecondOrderSample convection_sample(double x, double t, double beta) {
  const double s = std::sin(x - beta * t);
  const double c = std::cos(x - beta * t);
  SecondOrderSample out;
  out.value = s;
  out.gradient = Vector(2);
  out.gradient << c, -beta * c;
  out.hessian = Eigen::MatrixXd(2, 2);
  out.hessian << -s, beta * s, beta * s, -beta * beta * s;
  return out;
}

double helmholtz_exact(double x, double y, double a2, double a1) {
  return std::sin(a1 * kPi * x) * std::sin(a2 * kPi * y);
}

SecondOrderSample helmholtz_sample(double x, double y, double a2, double a1) {
  const double kx = a1 * kPi, ky = a2 * kPi;
  const double sx = std::sin(kx * x), cx = std::cos(kx * x);
  const double sy = std::sin(ky * y), cy = std::cos(ky * y);
  SecondOrderSample out;
  out.value = sx * sy;
  out.gradient = Vector(2);
  out.gradient << kx * cx * sy, ky * sx * cy;
  out.hessian = Eigen::MatrixXd(2, 2);
  out.hessian << -kx * kx * sx * sy, kx * ky * cx * cy, kx * ky * cx * cy, -ky * ky * sx * sy;
  return out;
}

double torus_exact(double x, double y, double z) { return std::sin(kPi * x * y * z); }

double torus_laplacian(double x, double y, double z) {
  return -kPi * kPi * std::sin(kPi * x * y * z) * (y * y * z * z + x * x * z * z + x * x * y * y);
}

SecondOrderSample torus_sample(double x, double y, double z) {
  const double w = kPi * x * y * z;
  const double s = std::sin(w), c = std::cos(w);
  const Eigen::Vector3d a(x, y, z);
  const Eigen::Vector3d g(kPi * y * z, kPi * x * z, kPi * x * y);  // dw/da
  SecondOrderSample out;
  out.value = s;
  out.gradient = c * g;
  out.hessian = Eigen::MatrixXd(3, 3);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      const double dg = (i == j) ? 0.0 : kPi * a[3 - i - j];
      out.hessian(i, j) = -s * g[i] * g[j] + c * dg;
    }
  }
  return out;
}

ManufacturedSolution poisson_torus_manufactured() {
  ManufacturedSolution m;
  m.solution = [](const Vector& p) { return torus_sample(p[0], p[1], p[2]); };
  m.forcing = [](const Vector& p) { return torus_laplacian(p[0], p[1], p[2]); };
  return m;
}

// --- Gauss-Hermite ------------------------------------------------------------

namespace {

// Orthonormal Hermite recurrence at z, rescaled to avoid overflow. Returns
// p_n, p_{n-1} and the log of the factor removed from both.
struct HermiteEval {
  double pn, pn1, log_scale;
};

HermiteEval hermite(int n, double z) {
  double p1 = 1.0 / std::pow(kPi, 0.25);
  double p2 = 0.0;
  double log_scale = 0.0;
  for (int j = 0; j < n; ++j) {
    const double p3 = p2;
    p2 = p1;
    p1 = z * std::sqrt(2.0 / (j + 1)) * p2 - std::sqrt(static_cast<double>(j) / (j + 1)) * p3;
    if (std::abs(p1) > 1e150) {
      p1 *= 1e-150;
      p2 *= 1e-150;
      log_scale += 150.0 * std::log(10.0);
    }
  }
  return {p1, p2, log_scale};
}

}  // namespace

GaussHermiteRule gauss_hermite(int n) {
  if (n < 1) throw ConfigError("gauss_hermite: need at least one node");
  // Golub-Welsch nodes, polished by Newton on the orthonormal recurrence.
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd sub(std::max(n - 1, 0));
  for (int k = 1; k < n; ++k) sub[k - 1] = std::sqrt(k / 2.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
  GaussHermiteRule rule;
  rule.nodes.resize(n);
  rule.log_weights.resize(n);
  for (int i = 0; i < n; ++i) {
    double z = es.eigenvalues()[i];
    HermiteEval h{};
    for (int it = 0; it < 3; ++it) {
      h = hermite(n, z);
      const double pp = std::sqrt(2.0 * n) * h.pn1;
      z -= h.pn / pp;
    }
    h = hermite(n, z);
    const double pp = std::abs(std::sqrt(2.0 * n) * h.pn1);
    rule.nodes[i] = z;
    rule.log_weights[i] = std::log(2.0) - 2.0 * (std::log(pp) + h.log_scale);
  }
  return rule;
}

// --- Burgers ------------------------------------------------------------------

BurgersOracle::BurgersOracle(double nu, int nodes) : nu_(nu), rule_(gauss_hermite(nodes)) {
  if (!(nu > 0.0)) throw ParameterError("Burgers oracle: nu must be positive");
}

std::string BurgersOracle::provenance() const {
  return "Cole-Hopf integrals, Gauss-Hermite quadrature with " + std::to_string(nodes()) + " nodes";
}

double BurgersOracle::value(double x, double t) const {
  if (t <= 0.0) return -std::sin(kPi * x);
  const double s = std::sqrt(4.0 * nu_ * t);
  const double inv = 1.0 / (2.0 * kPi * nu_);
  const std::size_t n = rule_.nodes.size();
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const double y = x - s * rule_.nodes[i];
    m = std::max(m, rule_.log_weights[i] - std::cos(kPi * y) * inv);
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double y = x - s * rule_.nodes[i];
    const double a = std::exp(rule_.log_weights[i] - std::cos(kPi * y) * inv - m);
    den += a;
    num += a * std::sin(kPi * y);
  }
  return -num / den;
}

SecondOrderSample BurgersOracle::sample(double x, double t) const {
  SecondOrderSample out;
  out.gradient = Vector::Zero(2);
  out.hessian = Eigen::MatrixXd::Zero(2, 2);
  if (t <= 0.0) {
    // Initial slice: spatial derivatives of the IC; u_t from the equation.
    const double u = -std::sin(kPi * x), ux = -kPi * std::cos(kPi * x), uxx = kPi * kPi * std::sin(kPi * x);
    out.value = u;
    out.gradient << ux, -u * ux + nu_ * uxx;
    out.hessian(0, 0) = uxx;
    return out;
  }
  const double nu = nu_;
  const double s = std::sqrt(4.0 * nu * t);
  const double st = 2.0 * nu / s;
  const double stt = -4.0 * nu * nu / (s * s * s);
  const double inv = 1.0 / (2.0 * kPi * nu);
  const std::size_t n = rule_.nodes.size();

  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const double y = x - s * rule_.nodes[i];
    m = std::max(m, rule_.log_weights[i] - std::cos(kPi * y) * inv);
  }

  // Jets (value, d/dx, d/dt, d2/dx2, d2/dxdt, d2/dt2) of
  //   b = sum w f(x - s z)   and   a = sum w f'(x - s z).
  double b[6] = {0, 0, 0, 0, 0, 0};
  double a[6] = {0, 0, 0, 0, 0, 0};
  for (std::size_t i = 0; i < n; ++i) {
    const double z = rule_.nodes[i];
    const double y = x - s * z;
    const double sy = std::sin(kPi * y), cy = std::cos(kPi * y);
    const double w = std::exp(rule_.log_weights[i] - cy * inv - m);  // weight * f / e^m
    const double g1 = sy / (2.0 * nu);
    const double g2 = kPi * cy / (2.0 * nu);
    const double g3 = -kPi * kPi * sy / (2.0 * nu);
    const double f1 = g1;                              // f'/f
    const double f2 = g2 + g1 * g1;                    // f''/f
    const double f3 = g3 + 3.0 * g1 * g2 + g1 * g1 * g1;  // f'''/f
    const double dy_t = -z * st;
    const double dy_tt = -z * stt;

    b[0] += w;
    b[1] += w * f1;
    b[2] += w * f1 * dy_t;
    b[3] += w * f2;
    b[4] += w * f2 * dy_t;
    b[5] += w * (f2 * dy_t * dy_t + f1 * dy_tt);

    a[0] += w * f1;
    a[1] += w * f2;
    a[2] += w * f2 * dy_t;
    a[3] += w * f3;
    a[4] += w * f3 * dy_t;
    a[5] += w * (f3 * dy_t * dy_t + f2 * dy_tt);
  }

  // q = a / b with jet division, then u = -2 nu q.
  const double q = a[0] / b[0];
  const double qx = (a[1] - q * b[1]) / b[0];
  const double qt = (a[2] - q * b[2]) / b[0];
  const double qxx = (a[3] - 2.0 * qx * b[1] - q * b[3]) / b[0];
  const double qxt = (a[4] - qx * b[2] - qt * b[1] - q * b[4]) / b[0];
  const double qtt = (a[5] - 2.0 * qt * b[2] - q * b[5]) / b[0];
  const double k = -2.0 * nu;
  out.value = k * q;
  out.gradient << k * qx, k * qt;
  out.hessian << k * qxx, k * qxt, k * qxt, k * qtt;
  return out;
}

Matrix BurgersOracle::evaluate(const Matrix& points) const {
  if (points.cols() != 2) throw ShapeError("Burgers oracle expects (x, t) points");
  Matrix out(points.rows(), 1);
  for (Eigen::Index p = 0; p < points.rows(); ++p) out(p, 0) = value(points(p, 0), points(p, 1));
  return out;
}

ScalarField BurgersOracle::field() const {
  auto self = std::make_shared<BurgersOracle>(*this);
  return [self](const Vector& p) { return self->sample(p[0], p[1]); };
}

OracleValue burgers_oracle(double x, double t, double nu, int nodes, double tolerance) {
  const double u = BurgersOracle(nu, nodes).value(x, t);
  const double u2 = BurgersOracle(nu, 2 * nodes).value(x, t);
  OracleValue out;
  out.value = u;
  out.discrepancy = std::abs(u - u2);
  out.precision_warning = !(out.discrepancy <= tolerance);
  return out;
}

// --- lattice files ------------------------------------------------------------

LatticeReference::LatticeReference(double x0, double x1, double y0, double y1, std::vector<Eigen::MatrixXd> values,
                                   std::vector<std::string> names, std::string provenance)
    : x0_(x0), x1_(x1), y0_(y0), y1_(y1), values_(std::move(values)), names_(std::move(names)),
      provenance_(std::move(provenance)) {
  if (values_.empty()) throw ConfigError("lattice reference: no channels");
  const Eigen::Index n = values_.front().rows();
  for (const auto& v : values_) {
    if (v.rows() != n || v.cols() != n) throw ShapeError("lattice reference: channels must be N x N");
  }
  if (n < kMinReferenceLattice) {
    throw ConfigError("lattice reference: N = " + std::to_string(n) + " is below the minimum of " +
                      std::to_string(kMinReferenceLattice));
  }
  if (!(x1_ > x0_) || !(y1_ > y0_)) throw ConfigError("lattice reference: empty extent");
  if (names_.size() != values_.size()) {
    names_.clear();
    for (std::size_t c = 0; c < values_.size(); ++c) names_.push_back("c" + std::to_string(c));
  }
}

Matrix LatticeReference::evaluate(const Matrix& points) const {
  if (points.cols() != 2) throw ShapeError("lattice reference expects 2D points");
  const int nn = n();
  const double tol = 1e-9;
  Matrix out(points.rows(), channels());
  for (Eigen::Index p = 0; p < points.rows(); ++p) {
    double fx = (points(p, 0) - x0_) / (x1_ - x0_);
    double fy = (points(p, 1) - y0_) / (y1_ - y0_);
    if (fx < -tol || fx > 1 + tol || fy < -tol || fy > 1 + tol) {
      throw DomainError("lattice reference: point outside the lattice");
    }
    fx = std::clamp(fx, 0.0, 1.0) * (nn - 1);
    fy = std::clamp(fy, 0.0, 1.0) * (nn - 1);
    const int i = std::min(static_cast<int>(fx), nn - 2);
    const int j = std::min(static_cast<int>(fy), nn - 2);
    const double ax = fx - i, ay = fy - j;
    for (int c = 0; c < channels(); ++c) {
      const auto& v = values_[c];
      out(p, c) = (1 - ax) * (1 - ay) * v(i, j) + ax * (1 - ay) * v(i + 1, j) + (1 - ax) * ay * v(i, j + 1) +
                  ax * ay * v(i + 1, j + 1);
    }
  }
  return out;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    cell.erase(0, cell.find_first_not_of(" \t\r"));
    cell.erase(cell.find_last_not_of(" \t\r") + 1);
    out.push_back(cell);
  }
  return out;
}

double parse_double(const std::string& s, const std::filesystem::path& path) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw CorruptReferenceError(path.string() + ": not a number: '" + s + "'");
  }
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::shared_ptr<LatticeReference> load_reference(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorruptReferenceError("cannot open reference file " + path.string());
  std::string line;
  if (!std::getline(in, line) || split_csv(line) != std::vector<std::string>{"N", "channels"}) {
    throw CorruptReferenceError(path.string() + ": expected header 'N,channels'");
  }
  if (!std::getline(in, line)) throw CorruptReferenceError(path.string() + ": missing lattice size");
  const auto sizes = split_csv(line);
  if (sizes.size() != 2) throw CorruptReferenceError(path.string() + ": malformed lattice size line");
  const double nd = parse_double(sizes[0], path), cd = parse_double(sizes[1], path);
  const int n = static_cast<int>(nd), channels = static_cast<int>(cd);
  if (n != nd || channels != cd || channels < 1) throw CorruptReferenceError(path.string() + ": bad N or channels");
  if (n < kMinReferenceLattice) {
    throw CorruptReferenceError(path.string() + ": lattice N = " + std::to_string(n) + " is below the minimum of " +
                                std::to_string(kMinReferenceLattice));
  }
  if (!std::getline(in, line)) throw CorruptReferenceError(path.string() + ": missing column header");
  const auto columns = split_csv(line);
  if (static_cast<int>(columns.size()) != 2 + channels || columns[0] != "x" || columns[1] != "y") {
    throw CorruptReferenceError(path.string() + ": column header must be x,y followed by one name per channel");
  }

  std::vector<std::array<double, 2>> xy;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv(line);
    if (static_cast<int>(cells.size()) != 2 + channels) {
      throw CorruptReferenceError(path.string() + ": row with " + std::to_string(cells.size()) + " fields");
    }
    xy.push_back({parse_double(cells[0], path), parse_double(cells[1], path)});
    std::vector<double> vals;
    for (int c = 0; c < channels; ++c) vals.push_back(parse_double(cells[2 + c], path));
    rows.push_back(std::move(vals));
  }
  if (static_cast<long>(rows.size()) != static_cast<long>(n) * n) {
    throw CorruptReferenceError(path.string() + ": expected " + std::to_string(n * n) + " lattice rows, found " +
                                std::to_string(rows.size()));
  }
  double x0 = xy[0][0], x1 = x0, y0 = xy[0][1], y1 = y0;
  for (const auto& p : xy) {
    x0 = std::min(x0, p[0]);
    x1 = std::max(x1, p[0]);
    y0 = std::min(y0, p[1]);
    y1 = std::max(y1, p[1]);
  }
  if (!(x1 > x0) || !(y1 > y0)) throw CorruptReferenceError(path.string() + ": degenerate lattice extent");

  std::vector<Eigen::MatrixXd> values(channels, Eigen::MatrixXd::Zero(n, n));
  std::vector<char> seen(static_cast<std::size_t>(n) * n, 0);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const double fi = (xy[r][0] - x0) / (x1 - x0) * (n - 1);
    const double fj = (xy[r][1] - y0) / (y1 - y0) * (n - 1);
    const long i = std::lround(fi), j = std::lround(fj);
    if (std::abs(fi - i) > 1e-6 || std::abs(fj - j) > 1e-6) {
      throw CorruptReferenceError(path.string() + ": point off the uniform lattice at row " + std::to_string(r + 4));
    }
    char& flag = seen[static_cast<std::size_t>(i) * n + j];
    if (flag) throw CorruptReferenceError(path.string() + ": duplicate lattice node at row " + std::to_string(r + 4));
    flag = 1;
    for (int c = 0; c < channels; ++c) values[c](i, j) = rows[r][c];
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) {
    throw CorruptReferenceError(path.string() + ": missing lattice nodes");
  }
  std::vector<std::string> names(columns.begin() + 2, columns.end());
  return std::make_shared<LatticeReference>(x0, x1, y0, y1, std::move(values), std::move(names),
                                            "lattice file " + path.filename().string());
}

void write_reference(const std::filesystem::path& path, const LatticeReference& ref) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp);
    if (!out) throw ConfigError("cannot write " + tmp.string());
    out << "N,channels\n" << ref.n() << ',' << ref.channels() << "\nx,y";
    for (const auto& name : ref.names()) out << ',' << name;
    out << '\n';
    for (int j = 0; j < ref.n(); ++j) {
      for (int i = 0; i < ref.n(); ++i) {
        out << format_double(ref.node_x(i)) << ',' << format_double(ref.node_y(j));
        for (const auto& v : ref.values()) out << ',' << format_double(v(i, j));
        out << '\n';
      }
    }
    if (!out) throw ConfigError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::shared_ptr<LatticeReference> sample_reference(const ReferenceSolution& ref, int n, double x0, double x1,
                                                   double y0, double y1, std::vector<std::string> names) {
  Matrix pts(static_cast<Eigen::Index>(n) * n, 2);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      pts(static_cast<Eigen::Index>(i) * n + j, 0) = x0 + (x1 - x0) * i / (n - 1);
      pts(static_cast<Eigen::Index>(i) * n + j, 1) = y0 + (y1 - y0) * j / (n - 1);
    }
  }
  const Matrix vals = ref.evaluate(pts);
  std::vector<Eigen::MatrixXd> values(vals.cols(), Eigen::MatrixXd(n, n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (Eigen::Index c = 0; c < vals.cols(); ++c) values[c](i, j) = vals(static_cast<Eigen::Index>(i) * n + j, c);
  return std::make_shared<LatticeReference>(x0, x1, y0, y1, std::move(values), std::move(names),
                                            "sampled: " + ref.provenance());
}

}  // namespace pgcan
