#include "pgcan/problems.hpp"

#include "pgcan/errors.hpp"

#include <cmath>
#include <numbers>

namespace pgcan {

namespace {

constexpr double kPi = std::numbers::pi;

Matrix column(const std::vector<double>& v) {
  Matrix m(static_cast<Eigen::Index>(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = v[i];
  return m;
}

CoordinateBox box2(double x0, double x1, double y0, double y1) {
  Vector lo(2), hi(2);
  lo << x0, y0;
  hi << x1, y1;
  return {lo, hi};
}

BoundaryBatch make_batch(std::string name, ConditionKind kind, bool initial = false) {
  BoundaryBatch b;
  b.name = std::move(name);
  b.kind = kind;
  b.initial = initial;
  return b;
}

void require_positive(const std::string& problem, const std::string& key, double v) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw ParameterError(problem + ": parameter '" + key + "' must be positive and finite");
  }
}

}  // namespace

// --- base ---------------------------------------------------------------------

ad::Var PDEProblem::PhysicalJet::block(int c) const { return ad::jet_channel(jet, layout, c); }

PDEProblem::PhysicalJet PDEProblem::physical_jet(BoundModel& bound, const Matrix& points,
                                                 const std::vector<int>& axes, int order) const {
  Matrix dirs = Matrix::Zero(static_cast<Eigen::Index>(axes.size()), input_dim());
  for (std::size_t k = 0; k < axes.size(); ++k) dirs(static_cast<Eigen::Index>(k), axes[k]) = 1.0;
  JetSeed seed{box_.normalize(points), box_.normalize_directions(dirs), order};
  return {bound.apply(seed), seed.layout()};
}

Matrix PDEProblem::residual_values(const Model& model, const Matrix& points) const {
  ad::Graph g;
  BoundModel bound(model, g, false);
  const auto r = residual(bound, points);
  Matrix out(points.rows(), static_cast<Eigen::Index>(r.size()));
  for (std::size_t c = 0; c < r.size(); ++c) out.col(static_cast<Eigen::Index>(c)) = r[c].value().col(0);
  return out;
}

Matrix PDEProblem::sample_interior(int n, Rng& rng) const {
  if (n < 0) throw ConfigError("sample count must be non-negative");
  Matrix pts(n, input_dim());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < input_dim(); ++j) pts(i, j) = rng.uniform(box_.lo[j], box_.hi[j]);
  return pts;
}

SampleBatch PDEProblem::sample(const SampleCounts& counts, Rng& rng) const {
  SampleBatch b;
  b.interior = sample_interior(counts.interior, rng);
  b.boundary = sample_boundary(counts, rng);
  return b;
}

std::unique_ptr<Model> PDEProblem::reference_model() const {
  if (auto a = std::dynamic_pointer_cast<const AnalyticReference>(reference_)) return a->as_model(box_);
  if (auto b = std::dynamic_pointer_cast<const BurgersOracle>(reference_)) {
    return std::make_unique<AnalyticModel>(std::vector<ScalarField>{b->field()}, box_, "exact");
  }
  throw ConfigError(name() + ": reference has no differentiable closed form");
}

Matrix PDEProblem::evaluation_points(int n) const {
  if (input_dim() != 2) throw ConfigError(name() + ": no default evaluation lattice for this dimension");
  if (n < 2) throw ConfigError("evaluation lattice needs n >= 2");
  Matrix pts(static_cast<Eigen::Index>(n) * n, 2);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const Eigen::Index r = static_cast<Eigen::Index>(i) * n + j;
      pts(r, 0) = box_.lo[0] + (box_.hi[0] - box_.lo[0]) * i / (n - 1);
      pts(r, 1) = box_.lo[1] + (box_.hi[1] - box_.lo[1]) * j / (n - 1);
    }
  }
  return pts;
}

// --- Burgers ------------------------------------------------------------------

BurgersProblem::BurgersProblem(double nu) : PDEProblem(box2(-1, 1, 0, 1), {{"nu", nu}}) {
  require_positive("burgers", "nu", nu);
  reference_ = std::make_shared<BurgersOracle>(nu);
}

std::vector<ad::Var> BurgersProblem::residual(BoundModel& bound, const Matrix& points) const {
  const auto j = physical_jet(bound, points, {0, 1}, 2);
  const ad::Var u = j.value(), ux = j.first(0), ut = j.first(1), uxx = j.second(0);
  return {ad::add(ut, ad::sub(ad::mul(u, ux), ad::scale(uxx, parameter("nu"))))};
}

std::vector<BoundaryBatch> BurgersProblem::sample_boundary(const SampleCounts& counts, Rng& rng) const {
  BoundaryBatch ic = make_batch("initial", ConditionKind::Dirichlet, true);
  ic.points.resize(counts.initial, 2);
  ic.targets.resize(counts.initial, 1);
  for (int i = 0; i < counts.initial; ++i) {
    const double x = rng.uniform(-1.0, 1.0);
    ic.points.row(i) << x, 0.0;
    ic.targets(i, 0) = -std::sin(kPi * x);
  }
  std::vector<BoundaryBatch> out{ic};
  for (const auto kind : {ConditionKind::PeriodicValue, ConditionKind::PeriodicDerivative}) {
    BoundaryBatch b = make_batch(kind == ConditionKind::PeriodicValue ? "periodic_value" : "periodic_slope", kind);
    b.points.resize(counts.boundary, 2);
    b.partner.resize(counts.boundary, 2);
    for (int i = 0; i < counts.boundary; ++i) {
      const double t = rng.uniform();
      b.points.row(i) << -1.0, t;
      b.partner.row(i) << 1.0, t;
    }
    out.push_back(std::move(b));
  }
  return out;
}

// --- convection ----------------------------------------------------------------

ConvectionProblem::ConvectionProblem(double beta) : PDEProblem(box2(0, 2 * kPi, 0, 1), {{"beta", beta}}) {
  require_positive("convection", "beta", beta);
  reference_ = std::make_shared<AnalyticReference>(
      std::vector<ScalarField>{[beta](const Vector& p) { return convection_sample(p[0], p[1], beta); }},
      "sin(x - beta t)");
}

std::vector<ad::Var> ConvectionProblem::residual(BoundModel& bound, const Matrix& points) const {
  const auto j = physical_jet(bound, points, {0, 1}, 1);
  return {ad::add(j.first(1), ad::scale(j.first(0), parameter("beta")))};
}

std::vector<BoundaryBatch> ConvectionProblem::sample_boundary(const SampleCounts& counts, Rng& rng) const {
  BoundaryBatch ic = make_batch("initial", ConditionKind::Dirichlet, true);
  ic.points.resize(counts.initial, 2);
  ic.targets.resize(counts.initial, 1);
  for (int i = 0; i < counts.initial; ++i) {
    const double x = rng.uniform(0.0, 2 * kPi);
    ic.points.row(i) << x, 0.0;
    ic.targets(i, 0) = std::sin(x);
  }
  BoundaryBatch pv = make_batch("periodic_value", ConditionKind::PeriodicValue);
  pv.points.resize(counts.boundary, 2);
  pv.partner.resize(counts.boundary, 2);
  for (int i = 0; i < counts.boundary; ++i) {
    const double t = rng.uniform();
    pv.points.row(i) << 0.0, t;
    pv.partner.row(i) << 2 * kPi, t;
  }
  return {ic, pv};
}

// --- Helmholtz ----------------------------------------------------------------

HelmholtzProblem::HelmholtzProblem(double a2, double a1, double k)
    : PDEProblem(box2(-1, 1, -1, 1), {{"a1", a1}, {"a2", a2}, {"k", k}}) {
  require_positive("helmholtz", "a1", a1);
  require_positive("helmholtz", "a2", a2);
  if (!std::isfinite(k)) throw ParameterError("helmholtz: parameter 'k' must be finite");
  reference_ = std::make_shared<AnalyticReference>(
      std::vector<ScalarField>{[a1, a2](const Vector& p) { return helmholtz_sample(p[0], p[1], a2, a1); }},
      "manufactured sin(a1 pi x) sin(a2 pi y)", "analytic");
}

double HelmholtzProblem::source(double x, double y) const {
  const double a1 = parameter("a1"), a2 = parameter("a2"), k = parameter("k");
  return (k * k - kPi * kPi * (a1 * a1 + a2 * a2)) * helmholtz_exact(x, y, a2, a1);
}

std::vector<ad::Var> HelmholtzProblem::residual(BoundModel& bound, const Matrix& points) const {
  const auto j = physical_jet(bound, points, {0, 1}, 2);
  Matrix q(points.rows(), 1);
  for (Eigen::Index i = 0; i < points.rows(); ++i) q(i, 0) = -source(points(i, 0), points(i, 1));
  const double k = parameter("k");
  const ad::Var lap = ad::add(j.second(0), j.second(1));
  return {ad::add_constant(ad::add(lap, ad::scale(j.value(), k * k)), q)};
}

std::vector<BoundaryBatch> HelmholtzProblem::sample_boundary(const SampleCounts& counts, Rng& rng) const {
  BoundaryBatch b = make_batch("boundary", ConditionKind::Dirichlet);
  b.points.resize(counts.boundary, 2);
  b.targets = Matrix::Zero(counts.boundary, 1);
  for (int i = 0; i < counts.boundary; ++i) {
    const int side = std::min(static_cast<int>(rng.uniform() * 4.0), 3);
    const double s = rng.uniform(-1.0, 1.0);
    switch (side) {
      case 0: b.points.row(i) << -1.0, s; break;
      case 1: b.points.row(i) << 1.0, s; break;
      case 2: b.points.row(i) << s, -1.0; break;
      default: b.points.row(i) << s, 1.0; break;
    }
  }
  return {b};
}

// --- lid-driven cavity ----------------------------------------------------------

CavityProblem::CavityProblem(double A, double rho, double mu)
    : PDEProblem(box2(0, 1, 0, 1), {{"A", A}, {"mu", mu}, {"rho", rho}}) {
  require_positive("ldc", "A", A);
  require_positive("ldc", "rho", rho);
  require_positive("ldc", "mu", mu);
}

std::vector<ad::Var> CavityProblem::residual(BoundModel& bound, const Matrix& points) const {
  const auto j = physical_jet(bound, points, {0, 1}, 2);
  const double rho = parameter("rho"), mu = parameter("mu");
  auto ch = [](ad::Var block, int c) { return ad::cols(block, c, 1); };
  const ad::Var val = j.value(), dx = j.first(0), dy = j.first(1), dxx = j.second(0), dyy = j.second(1);
  const ad::Var u = ch(val, 0), v = ch(val, 1);
  const ad::Var ux = ch(dx, 0), vx = ch(dx, 1), px = ch(dx, 2);
  const ad::Var uy = ch(dy, 0), vy = ch(dy, 1), py = ch(dy, 2);
  const ad::Var lap_u = ad::add(ch(dxx, 0), ch(dyy, 0));
  const ad::Var lap_v = ad::add(ch(dxx, 1), ch(dyy, 1));

  const ad::Var mass = ad::add(ux, vy);
  const ad::Var adv_u = ad::scale(ad::add(ad::mul(u, ux), ad::mul(v, uy)), rho);
  const ad::Var adv_v = ad::scale(ad::add(ad::mul(u, vx), ad::mul(v, vy)), rho);
  const ad::Var mom_x = ad::sub(ad::add(adv_u, px), ad::scale(lap_u, mu));
  const ad::Var mom_y = ad::sub(ad::add(adv_v, py), ad::scale(lap_v, mu));
  return {mass, mom_x, mom_y};
}

std::vector<BoundaryBatch> CavityProblem::sample_boundary(const SampleCounts& counts, Rng& rng) const {
  BoundaryBatch walls = make_batch("walls", ConditionKind::Dirichlet);
  walls.channels = {0, 1};
  walls.points.resize(counts.boundary, 2);
  walls.targets = Matrix::Zero(counts.boundary, 2);
  for (int i = 0; i < counts.boundary; ++i) {
    const int side = std::min(static_cast<int>(rng.uniform() * 3.0), 2);
    const double s = rng.uniform();
    switch (side) {
      case 0: walls.points.row(i) << 0.0, s; break;
      case 1: walls.points.row(i) << 1.0, s; break;
      default: walls.points.row(i) << s, 0.0; break;
    }
  }
  BoundaryBatch lid = make_batch("lid", ConditionKind::Dirichlet);
  lid.channels = {0, 1};
  lid.points.resize(counts.boundary, 2);
  lid.targets = Matrix::Zero(counts.boundary, 2);
  const double A = parameter("A");
  for (int i = 0; i < counts.boundary; ++i) {
    const double x = rng.uniform();
    lid.points.row(i) << x, 1.0;
    lid.targets(i, 0) = A * std::sin(kPi * x);
  }
  BoundaryBatch gauge = make_batch("pressure_gauge", ConditionKind::Dirichlet);
  gauge.channels = {2};
  gauge.points = Matrix::Zero(1, 2);
  gauge.targets = Matrix::Zero(1, 1);
  return {walls, lid, gauge};
}

// --- torus Poisson --------------------------------------------------------------

TorusPoissonProblem::TorusPoissonProblem(bool manufactured)
    : PDEProblem(CoordinateBox(Eigen::Vector3d(-1.5, -1.5, -0.5), Eigen::Vector3d(1.5, 1.5, 0.5)),
                 {{"manufactured", manufactured ? 1.0 : 0.0}}),
      manufactured_(manufactured) {
  if (manufactured_) {
    reference_ = std::make_shared<AnalyticReference>(
        std::vector<ScalarField>{poisson_torus_manufactured().solution}, "manufactured sin(pi x y z)", "analytic");
  }
}

double TorusPoissonProblem::level_set(double x, double y, double z) {
  const double rho = kMajor - std::sqrt(x * x + y * y);
  return rho * rho + z * z - kMinor * kMinor;
}

bool TorusPoissonProblem::contains(const Vector& p, double tol) const {
  return level_set(p[0], p[1], p[2]) <= tol;
}

const std::vector<double>& TorusPoissonProblem::slice_heights() {
  static const std::vector<double> ys{-1.2, -0.6, 0.0, 0.6, 1.2};
  return ys;
}

std::vector<ad::Var> TorusPoissonProblem::residual(BoundModel& bound, const Matrix& points) const {
  const auto j = physical_jet(bound, points, {0, 1, 2}, 2);
  Matrix f(points.rows(), 1);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const double x = points(i, 0), y = points(i, 1), z = points(i, 2);
    f(i, 0) = manufactured_ ? -torus_laplacian(x, y, z) : std::exp(x + y + z);
  }
  const ad::Var lap = ad::add(ad::add(j.second(0), j.second(1)), j.second(2));
  return {ad::add_constant(lap, f)};
}

Matrix TorusPoissonProblem::sample_interior(int n, Rng& rng) const {
  if (n < 0) throw ConfigError("sample count must be non-negative");
  Matrix pts(n, 3);
  long attempts = 0;
  int accepted = 0;
  while (accepted < n) {
    const double x = rng.uniform(box_.lo[0], box_.hi[0]);
    const double y = rng.uniform(box_.lo[1], box_.hi[1]);
    const double z = rng.uniform(box_.lo[2], box_.hi[2]);
    ++attempts;
    if (level_set(x, y, z) <= 0.0) pts.row(accepted++) << x, y, z;
    if (attempts >= 1000 && static_cast<double>(accepted) / attempts < kMinAcceptanceRate) {
      throw GeometryError("torus rejection sampling acceptance rate below 1%");
    }
  }
  return pts;
}

std::vector<BoundaryBatch> TorusPoissonProblem::sample_boundary(const SampleCounts& counts, Rng& rng) const {
  BoundaryBatch b = make_batch("surface", ConditionKind::Dirichlet);
  b.points.resize(counts.boundary, 3);
  b.targets.resize(counts.boundary, 1);
  for (int i = 0; i < counts.boundary; ++i) {
    const double theta = rng.uniform(0.0, 2 * kPi);
    const double phi = rng.uniform(0.0, 2 * kPi);
    const double r = kMajor + kMinor * std::cos(phi);
    const double x = r * std::cos(theta), y = r * std::sin(theta), z = kMinor * std::sin(phi);
    b.points.row(i) << x, y, z;
    b.targets(i, 0) = torus_exact(x, y, z);
  }
  return {b};
}

Matrix TorusPoissonProblem::evaluation_points(int n) const {
  if (n < 2) throw ConfigError("evaluation lattice needs n >= 2");
  std::vector<double> xs, ys, zs;
  for (double y : slice_heights()) {
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < n; ++k) {
        const double x = box_.lo[0] + (box_.hi[0] - box_.lo[0]) * i / (n - 1);
        const double z = box_.lo[2] + (box_.hi[2] - box_.lo[2]) * k / (n - 1);
        if (level_set(x, y, z) <= 0.0) {
          xs.push_back(x);
          ys.push_back(y);
          zs.push_back(z);
        }
      }
    }
  }
  Matrix pts(static_cast<Eigen::Index>(xs.size()), 3);
  pts.col(0) = column(xs);
  pts.col(1) = column(ys);
  pts.col(2) = column(zs);
  return pts;
}

// --- registry -------------------------------------------------------------------

const std::vector<std::string>& problem_names() {
  static const std::vector<std::string> names{"burgers", "convection", "helmholtz", "ldc", "poisson3d"};
  return names;
}

std::map<std::string, double> default_problem_parameters(const std::string& name) {
  if (name == "burgers") return {{"nu", 1.0 / kPi}};
  if (name == "convection") return {{"beta", 5.0}};
  if (name == "helmholtz") return {{"a1", 1.0}, {"a2", 1.0}, {"k", 1.0}};
  if (name == "ldc") return {{"A", 1.0}, {"mu", 0.01}, {"rho", 1.0}};
  if (name == "poisson3d") return {{"manufactured", 0.0}};
  std::string known;
  for (const auto& n : problem_names()) known += (known.empty() ? "" : ", ") + n;
  throw ConfigError("unknown problem '" + name + "' (known: " + known + ")");
}

std::unique_ptr<PDEProblem> make_problem(const std::string& name, const std::map<std::string, double>& overrides) {
  auto p = default_problem_parameters(name);
  for (const auto& [key, value] : overrides) {
    if (!p.contains(key)) throw ConfigError("problem '" + name + "' has no parameter '" + key + "'");
    p[key] = value;
  }
  if (name == "burgers") return std::make_unique<BurgersProblem>(p["nu"]);
  if (name == "convection") return std::make_unique<ConvectionProblem>(p["beta"]);
  if (name == "helmholtz") return std::make_unique<HelmholtzProblem>(p["a2"], p["a1"], p["k"]);
  if (name == "ldc") return std::make_unique<CavityProblem>(p["A"], p["rho"], p["mu"]);
  const double m = p["manufactured"];
  if (m != 0.0 && m != 1.0) throw ParameterError("poisson3d: 'manufactured' must be 0 or 1");
  return std::make_unique<TorusPoissonProblem>(m == 1.0);
}

}  // namespace pgcan
