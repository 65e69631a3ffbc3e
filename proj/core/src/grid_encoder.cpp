#include "pgcan/grid_encoder.hpp"

#include "pgcan/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace pgcan {

namespace {

constexpr double kDomainTolerance = 1e-12;

int int_pow(int base, int exp) {
  int r = 1;
  for (int i = 0; i < exp; ++i) r *= base;
  return r;
}

// Per-axis placement of a point on one repetition's lattice.
struct AxisPlacement {
  int cell = 0;
  double local = 0.0;
  bool clamped = false;
};

AxisPlacement place_on_axis(double u, int cells, double shift) {
  AxisPlacement a;
  double g = u * cells - shift;
  if (g < 0.0) {
    g = 0.0;
    a.clamped = true;
  } else if (g > cells) {
    g = cells;
    a.clamped = true;
  }
  a.cell = std::min(static_cast<int>(std::floor(g)), cells - 1);
  a.local = g - a.cell;
  return a;
}

double checked_unit_coordinate(double u, int axis) {
  if (!(u >= -kDomainTolerance && u <= 1.0 + kDomainTolerance)) {
    throw DomainError("grid encoder: coordinate " + std::to_string(u) + " on axis " + std::to_string(axis) +
                      " is outside [0, 1]");
  }
  return std::clamp(u, 0.0, 1.0);
}

}  // namespace

GridSpec GridSpec::uniform(int dims, int vertices_per_axis, int n_features, int n_rep, bool convolve) {
  GridSpec s;
  s.dims = dims;
  s.vertices.assign(dims, vertices_per_axis);
  s.n_features = n_features;
  s.n_rep = n_rep;
  s.convolve = convolve;
  return s;
}

void GridSpec::validate() const {
  if (dims < 1 || dims > 4) throw ConfigError("grid: dims must be in [1, 4]");
  if (static_cast<int>(vertices.size()) != dims) throw ConfigError("grid: one vertex count per axis required");
  for (int v : vertices) {
    if (v < 2) throw ConfigError("grid: at least 2 vertices per axis required");
  }
  if (n_features < 1) throw ConfigError("grid: n_features must be >= 1");
  if (n_rep < 1) throw ConfigError("grid: n_rep must be >= 1");
}

int GridSpec::vertex_count() const {
  int n = 1;
  for (int v : vertices) n *= v;
  return n;
}

int GridSpec::kernel_size() const { return int_pow(3, dims); }

int GridSpec::vertex_index(const std::vector<int>& multi) const {
  int idx = 0;
  for (int a = 0; a < dims; ++a) idx = idx * vertices[a] + multi[a];
  return idx;
}

std::vector<int> GridSpec::vertex_multi_index(int index) const {
  std::vector<int> m(dims);
  for (int a = dims - 1; a >= 0; --a) {
    m[a] = index % vertices[a];
    index /= vertices[a];
  }
  return m;
}

double cosine_warp(double xbar) { return 0.5 * (1.0 - std::cos(std::numbers::pi * xbar)); }

double cosine_warp_derivative(double xbar) { return 0.5 * std::numbers::pi * std::sin(std::numbers::pi * xbar); }

double cosine_warp_second_derivative(double xbar) {
  return 0.5 * std::numbers::pi * std::numbers::pi * std::cos(std::numbers::pi * xbar);
}

LocalCoords locate(const GridSpec& spec, const Vector& point, int rep) {
  if (point.size() != spec.dims) throw ShapeError("locate: point dimension mismatch");
  if (rep < 0 || rep >= spec.n_rep) throw std::out_of_range("locate: repetition index");
  LocalCoords lc;
  lc.cell.resize(spec.dims);
  lc.local.resize(spec.dims);
  lc.warped.resize(spec.dims);
  lc.clamped.resize(spec.dims);
  for (int a = 0; a < spec.dims; ++a) {
    const double u = checked_unit_coordinate(point[a], a);
    const AxisPlacement p = place_on_axis(u, spec.vertices[a] - 1, spec.shift(rep));
    lc.cell[a] = p.cell;
    lc.local[a] = p.local;
    lc.warped[a] = cosine_warp(p.local);
    lc.clamped[a] = p.clamped;
  }
  return lc;
}

ParametricGrid::ParametricGrid(GridSpec spec, Rng& rng) : spec_(std::move(spec)) {
  spec_.validate();
  features_ = initial_features(spec_, rng);
  kernels_ = initial_kernels(spec_, rng);
}

ParametricGrid::ParametricGrid(GridSpec spec, Matrix features, Matrix kernels)
    : spec_(std::move(spec)), features_(std::move(features)), kernels_(std::move(kernels)) {
  spec_.validate();
  if (features_.rows() != spec_.n_rep * spec_.vertex_count() || features_.cols() != spec_.n_features) {
    throw ShapeError("ParametricGrid: feature table shape mismatch");
  }
  if (spec_.convolve && (kernels_.rows() != spec_.kernel_size() || kernels_.cols() != spec_.n_features)) {
    throw ShapeError("ParametricGrid: kernel shape mismatch");
  }
}

Matrix initial_features(const GridSpec& spec, Rng& rng) {
  Matrix f(spec.n_rep * spec.vertex_count(), spec.n_features);
  for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = rng.uniform(-0.1, 0.1);
  return f;
}

Matrix initial_kernels(const GridSpec& spec, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(spec.kernel_size()));
  Matrix k(spec.kernel_size(), spec.n_features);
  for (Eigen::Index i = 0; i < k.size(); ++i) k.data()[i] = rng.uniform(-bound, bound);
  return k;
}

namespace {

// neighbours[v * K + k] = vertex reached from v by kernel tap k, or -1 when
// the tap falls outside the lattice (zero padding).
std::vector<int> neighbour_table(const GridSpec& spec) {
  const int V = spec.vertex_count();
  const int K = spec.kernel_size();
  std::vector<int> table(static_cast<std::size_t>(V) * K, -1);
  for (int v = 0; v < V; ++v) {
    const std::vector<int> base = spec.vertex_multi_index(v);
    for (int k = 0; k < K; ++k) {
      std::vector<int> m = base;
      int rest = k;
      bool inside = true;
      for (int a = spec.dims - 1; a >= 0; --a) {
        m[a] += rest % 3 - 1;
        rest /= 3;
        inside = inside && m[a] >= 0 && m[a] < spec.vertices[a];
      }
      if (inside) table[static_cast<std::size_t>(v) * K + k] = spec.vertex_index(m);
    }
  }
  return table;
}

Matrix convolve_linear(const GridSpec& spec, const std::vector<int>& nb, const Matrix& F0, const Matrix& W) {
  const int V = spec.vertex_count();
  const int K = spec.kernel_size();
  Matrix out = Matrix::Zero(F0.rows(), F0.cols());
  for (int p = 0; p < spec.n_rep; ++p) {
    for (int v = 0; v < V; ++v) {
      auto row = out.row(spec.table_row(p, v));
      for (int k = 0; k < K; ++k) {
        const int u = nb[static_cast<std::size_t>(v) * K + k];
        if (u < 0) continue;
        row.array() += F0.row(spec.table_row(p, u)).array() * W.row(k).array();
      }
    }
  }
  return out;
}

}  // namespace

Matrix convolve(const GridSpec& spec, const Matrix& features, const Matrix& kernels) {
  const std::vector<int> nb = neighbour_table(spec);
  return convolve_linear(spec, nb, features, kernels).array().tanh().matrix();
}

ad::Var convolve(const GridSpec& spec, ad::Var features, ad::Var kernels) {
  auto nb = std::make_shared<const std::vector<int>>(neighbour_table(spec));
  ad::Graph& g = *features.graph;
  Matrix pre = convolve_linear(spec, *nb, features.value(), kernels.value());
  ad::Var linear = g.record(std::move(pre), {features, kernels}, [spec, nb, features, kernels](ad::Graph& g, const Matrix& go) {
    const int V = spec.vertex_count();
    const int K = spec.kernel_size();
    Matrix* dF = g.grad_slot(features);
    Matrix* dW = g.grad_slot(kernels);
    const Matrix& F0 = features.value();
    const Matrix& W = kernels.value();
    for (int p = 0; p < spec.n_rep; ++p) {
      for (int v = 0; v < V; ++v) {
        auto gr = go.row(spec.table_row(p, v)).array();
        for (int k = 0; k < K; ++k) {
          const int u = (*nb)[static_cast<std::size_t>(v) * K + k];
          if (u < 0) continue;
          const int src = spec.table_row(p, u);
          if (dF) dF->row(src).array() += gr * W.row(k).array();
          if (dW) dW->row(k).array() += gr * F0.row(src).array();
        }
      }
    }
  });
  return ad::activate(linear, ad::Activation::Tanh);
}

Vector interpolate(const GridSpec& spec, const Matrix& table, const LocalCoords& lc, int rep) {
  Vector f = Vector::Zero(table.cols());
  const int corners = 1 << spec.dims;
  std::vector<int> multi(spec.dims);
  for (int c = 0; c < corners; ++c) {
    double w = 1.0;
    for (int a = 0; a < spec.dims; ++a) {
      const int bit = (c >> a) & 1;
      multi[a] = lc.cell[a] + bit;
      w *= bit ? lc.warped[a] : 1.0 - lc.warped[a];
    }
    f += w * table.row(spec.table_row(rep, spec.vertex_index(multi))).transpose();
  }
  return f;
}

FeatureVector encode(const ParametricGrid& grid, const Vector& point) {
  const GridSpec& spec = grid.spec();
  const Matrix table = spec.convolve ? convolve(spec, grid.features(), grid.kernels()) : grid.features();
  FeatureVector out{Vector::Zero(spec.n_features)};
  for (int p = 0; p < spec.n_rep; ++p) out.f += interpolate(spec, table, locate(spec, point, p), p);
  return out;
}

std::shared_ptr<const ad::GatherPlan> interpolation_plan(const GridSpec& spec, const JetSeed& seed) {
  const ad::JetLayout layout = seed.layout();
  const Eigen::Index n = layout.points;
  const int d = spec.dims;
  if (seed.points.cols() != d) throw ShapeError("interpolation_plan: point dimension mismatch");
  const int corners = 1 << d;

  auto plan = std::make_shared<ad::GatherPlan>();
  plan->out_rows = layout.rows();
  plan->width = spec.n_rep * corners;
  const std::size_t total = static_cast<std::size_t>(plan->out_rows) * plan->width;
  plan->index.assign(total, -1);
  plan->weight.assign(total, 0.0);

  // Per axis: weight of the upper corner and its first/second derivatives
  // w.r.t. the unit-box coordinate; the lower corner is 1 - w.
  std::vector<double> w1(d), dw1(d), ddw1(d);
  std::vector<int> cell(d), multi(d);
  std::vector<double> wc(d), dwc(d), ddwc(d);

  for (Eigen::Index i = 0; i < n; ++i) {
    for (int p = 0; p < spec.n_rep; ++p) {
      for (int a = 0; a < d; ++a) {
        const double u = checked_unit_coordinate(seed.points(i, a), a);
        const int cells = spec.vertices[a] - 1;
        const AxisPlacement ap = place_on_axis(u, cells, spec.shift(p));
        cell[a] = ap.cell;
        w1[a] = cosine_warp(ap.local);
        const double scale = ap.clamped ? 0.0 : static_cast<double>(cells);
        dw1[a] = cosine_warp_derivative(ap.local) * scale;
        ddw1[a] = cosine_warp_second_derivative(ap.local) * scale * scale;
      }
      for (int c = 0; c < corners; ++c) {
        double w = 1.0;
        for (int a = 0; a < d; ++a) {
          const int bit = (c >> a) & 1;
          multi[a] = cell[a] + bit;
          wc[a] = bit ? w1[a] : 1.0 - w1[a];
          dwc[a] = bit ? dw1[a] : -dw1[a];
          ddwc[a] = bit ? ddw1[a] : -ddw1[a];
          w *= wc[a];
        }
        const int row = spec.table_row(p, spec.vertex_index(multi));
        const std::size_t slot = static_cast<std::size_t>(p) * corners + c;

        auto put = [&](int channel, double value) {
          const std::size_t at = (static_cast<std::size_t>(channel) * n + i) * plan->width + slot;
          plan->index[at] = row;
          plan->weight[at] = value;
        };
        put(0, w);
        if (layout.order < 1) continue;

        // Partial derivatives of the product weight: product of the other
        // axes' factors times this axis' derivative.
        auto others = [&](int skip1, int skip2) {
          double r = 1.0;
          for (int a = 0; a < d; ++a) {
            if (a != skip1 && a != skip2) r *= wc[a];
          }
          return r;
        };
        for (int k = 0; k < layout.directions; ++k) {
          double first = 0.0;
          double second = 0.0;
          for (int a = 0; a < d; ++a) {
            const double va = seed.directions(k, a);
            if (va == 0.0) continue;
            first += va * dwc[a] * others(a, a);
            if (layout.order >= 2) {
              second += va * va * ddwc[a] * others(a, a);
              for (int b = 0; b < d; ++b) {
                if (b == a) continue;
                const double vb = seed.directions(k, b);
                if (vb == 0.0) continue;
                second += va * vb * dwc[a] * dwc[b] * others(a, b);
              }
            }
          }
          put(layout.first(k), first);
          if (layout.order >= 2) put(layout.second(k), second);
        }
      }
    }
  }
  return plan;
}

}  // namespace pgcan
