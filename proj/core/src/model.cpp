#include "pgcan/model.hpp"

#include "pgcan/errors.hpp"

#include <algorithm>
#include <cmath>

namespace pgcan {

CoordinateBox::CoordinateBox(Vector lo_, Vector hi_) : lo(std::move(lo_)), hi(std::move(hi_)) {
  if (lo.size() != hi.size()) throw ShapeError("CoordinateBox: lo/hi size mismatch");
  for (Eigen::Index i = 0; i < lo.size(); ++i) {
    if (!(hi[i] > lo[i])) throw ConfigError("CoordinateBox: empty extent on axis " + std::to_string(i));
  }
}

CoordinateBox CoordinateBox::unit(int dims) { return {Vector::Zero(dims), Vector::Ones(dims)}; }

Matrix CoordinateBox::normalize(const Matrix& physical) const {
  if (physical.cols() != lo.size()) throw ShapeError("normalize: dimension mismatch");
  Matrix out = physical;
  const Vector ext = extent();
  for (Eigen::Index j = 0; j < out.cols(); ++j) out.col(j) = (out.col(j).array() - lo[j]) / ext[j];
  return out;
}

Matrix CoordinateBox::denormalize(const Matrix& unit) const {
  if (unit.cols() != lo.size()) throw ShapeError("denormalize: dimension mismatch");
  Matrix out = unit;
  const Vector ext = extent();
  for (Eigen::Index j = 0; j < out.cols(); ++j) out.col(j) = out.col(j).array() * ext[j] + lo[j];
  return out;
}

Matrix CoordinateBox::normalize_directions(const Matrix& physical_dirs) const {
  Matrix out = physical_dirs;
  const Vector ext = extent();
  // d/dx_j = (1/ext_j) d/dxi_j
  for (Eigen::Index j = 0; j < out.cols(); ++j) out.col(j) /= ext[j];
  return out;
}

bool CoordinateBox::contains(const Vector& p, double tol) const {
  for (Eigen::Index i = 0; i < lo.size(); ++i) {
    if (p[i] < lo[i] - tol || p[i] > hi[i] + tol) return false;
  }
  return true;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& b : blocks_) n += static_cast<std::size_t>(b.value.size());
  return n;
}

Vector Model::flatten() const {
  Vector theta(static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index offset = 0;
  for (const auto& b : blocks_) {
    theta.segment(offset, b.value.size()) = Eigen::Map<const Vector>(b.value.data(), b.value.size());
    offset += b.value.size();
  }
  return theta;
}

void Model::unflatten(const Vector& theta) {
  if (static_cast<std::size_t>(theta.size()) != parameter_count()) {
    throw ShapeError("unflatten: expected " + std::to_string(parameter_count()) + " values, got " +
                     std::to_string(theta.size()));
  }
  Eigen::Index offset = 0;
  for (auto& b : blocks_) {
    Eigen::Map<Vector>(b.value.data(), b.value.size()) = theta.segment(offset, b.value.size());
    offset += b.value.size();
  }
}

std::size_t Model::add_parameter(std::string name, Matrix init) {
  blocks_.push_back({std::move(name), std::move(init)});
  return blocks_.size() - 1;
}

BoundModel::BoundModel(const Model& model, ad::Graph& graph, bool track_gradients)
    : model_(&model), graph_(&graph) {
  params_.reserve(model.blocks_.size());
  for (const auto& b : model.blocks_) {
    if (!b.value.allFinite()) throw NonFiniteParameterError(b.name);
    params_.push_back(graph.leaf(b.value, track_gradients));
  }
}

ad::Var BoundModel::apply(const JetSeed& seed) {
  if (seed.points.cols() != model_->input_dim()) {
    throw ShapeError("model '" + model_->kind() + "' expects " + std::to_string(model_->input_dim()) +
                     "-dimensional inputs");
  }
  if (seed.order < 0 || seed.order > 2) throw UnsupportedOrderError("jet order must be 0, 1 or 2");
  if (seed.order > 0 && seed.directions.cols() != model_->input_dim()) {
    throw ShapeError("direction dimension does not match model input");
  }
  if (!prepared_) {
    model_->prepare(*this);
    prepared_ = true;
  }
  ad::Var in = graph_->constant(input_jet(seed));
  return model_->evaluate(*this, in, seed.layout());
}

Vector BoundModel::flat_gradient() const {
  Vector g(static_cast<Eigen::Index>(model_->parameter_count()));
  Eigen::Index offset = 0;
  for (const ad::Var& p : params_) {
    const Matrix grad = graph_->gradient(p);
    g.segment(offset, grad.size()) = Eigen::Map<const Vector>(grad.data(), grad.size());
    offset += grad.size();
  }
  return g;
}

Matrix input_jet(const JetSeed& seed) {
  const ad::JetLayout layout = seed.layout();
  const Eigen::Index n = layout.points;
  Matrix jet = Matrix::Zero(layout.rows(), seed.points.cols());
  jet.topRows(n) = seed.points;
  if (seed.order >= 1) {
    for (int k = 0; k < layout.directions; ++k) {
      jet.middleRows(layout.first(k) * n, n).rowwise() = seed.directions.row(k);
    }
  }
  return jet;
}

namespace {
constexpr Eigen::Index kChunk = 4096;
}

Matrix forward(const Model& model, const Matrix& points) {
  Matrix out(points.rows(), model.output_dim());
  for (Eigen::Index start = 0; start < points.rows(); start += kChunk) {
    const Eigen::Index count = std::min(kChunk, points.rows() - start);
    ad::Graph g;
    BoundModel bound(model, g, false);
    JetSeed seed{points.middleRows(start, count), Matrix(0, model.input_dim()), 0};
    out.middleRows(start, count) = bound.apply(seed).value();
  }
  return out;
}

DerivativeBundle derivatives(const Model& model, const Matrix& points, int order, bool with_mixed) {
  if (order != 1 && order != 2) throw UnsupportedOrderError("derivatives: order must be 1 or 2");
  const int d = model.input_dim();
  const Eigen::Index n = points.rows();

  // Axis directions first; with mixed terms, e_i + e_j for i < j follow and
  // the cross derivative comes from polarization.
  std::vector<std::pair<int, int>> pairs;
  if (order == 2 && with_mixed) {
    for (int i = 0; i < d; ++i)
      for (int j = i + 1; j < d; ++j) pairs.emplace_back(i, j);
  }
  Matrix dirs = Matrix::Zero(d + static_cast<Eigen::Index>(pairs.size()), d);
  for (int i = 0; i < d; ++i) dirs(i, i) = 1.0;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    dirs(d + k, pairs[k].first) = 1.0;
    dirs(d + k, pairs[k].second) = 1.0;
  }

  DerivativeBundle out;
  out.value.resize(n, model.output_dim());
  out.first.assign(d, Matrix(n, model.output_dim()));
  if (order == 2) out.second.assign(d, Matrix(n, model.output_dim()));
  std::vector<Matrix> pair_second(pairs.size(), Matrix(n, model.output_dim()));

  for (Eigen::Index start = 0; start < n; start += kChunk) {
    const Eigen::Index count = std::min(kChunk, n - start);
    ad::Graph g;
    BoundModel bound(model, g, false);
    JetSeed seed{points.middleRows(start, count), dirs, order};
    const ad::JetLayout layout = seed.layout();
    const Matrix& jet = bound.apply(seed).value();
    out.value.middleRows(start, count) = jet.topRows(count);
    for (int i = 0; i < d; ++i) {
      out.first[i].middleRows(start, count) = jet.middleRows(layout.first(i) * count, count);
      if (order == 2) out.second[i].middleRows(start, count) = jet.middleRows(layout.second(i) * count, count);
    }
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      pair_second[k].middleRows(start, count) = jet.middleRows(layout.second(d + static_cast<int>(k)) * count, count);
    }
  }
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto [i, j] = pairs[k];
    out.mixed[pairs[k]] = 0.5 * (pair_second[k] - out.second[i] - out.second[j]);
  }
  return out;
}

AnalyticModel::AnalyticModel(std::vector<ScalarField> channels, CoordinateBox box, std::string label)
    : Model(box.dims(), static_cast<int>(channels.size())),
      channels_(std::move(channels)),
      box_(std::move(box)),
      label_(std::move(label)) {}

ad::Var AnalyticModel::evaluate(BoundModel& bound, ad::Var input, const ad::JetLayout& layout) const {
  const Matrix& in = input.value();
  const Eigen::Index n = layout.points;
  const int d = input_dim();
  const Vector ext = box_.extent();
  Matrix dirs(layout.directions, d);
  for (int k = 0; k < layout.directions; ++k) dirs.row(k) = in.row(layout.first(k) * n);

  Matrix out = Matrix::Zero(layout.rows(), output_dim());
  for (Eigen::Index p = 0; p < n; ++p) {
    Vector x(d);
    for (int i = 0; i < d; ++i) x[i] = box_.lo[i] + in(p, i) * ext[i];
    for (int c = 0; c < output_dim(); ++c) {
      const SecondOrderSample s = channels_[c](x);
      out(p, c) = s.value;
      for (int k = 0; k < layout.directions && layout.order >= 1; ++k) {
        // Unit-box direction v maps to physical direction ext .* v.
        const Vector v = dirs.row(k).transpose().cwiseProduct(ext);
        out(layout.first(k) * n + p, c) = s.gradient.dot(v);
        if (layout.order >= 2) out(layout.second(k) * n + p, c) = v.dot(s.hessian * v);
      }
    }
  }
  return bound.graph().constant(std::move(out));
}

void glorot_uniform(Matrix& m, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-limit, limit);
}

}  // namespace pgcan
