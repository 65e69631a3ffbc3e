#include "pgcan/training.hpp"

#include "pgcan/errors.hpp"
#include "pgcan/evaluation.hpp"

#include <cmath>
#include <limits>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace pgcan {

namespace {

// Jet matrices are several MB; glibc would otherwise mmap/munmap each one.
void keep_large_blocks_on_heap() {
#if defined(__GLIBC__)
  static const bool once = [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return true;
  }();
  (void)once;
#endif
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(lr_decay > 0.0)) throw ConfigError("lr_decay must be positive");
  if (lr_step < 1 || resample_every < 1 || reweight_every < 1 || eval_every < 1) {
    throw ConfigError("lr_step, resample_every, reweight_every and eval_every must be >= 1");
  }
  if (!(ema_alpha > 0.0 && ema_alpha <= 1.0)) throw ConfigError("ema_alpha must lie in (0, 1]");
  if (samples.interior < 1) throw ConfigError("interior sample count must be >= 1");
  if (samples.boundary < 1 || samples.initial < 1) throw ConfigError("boundary/initial sample counts must be >= 1");
  if (!(lambda_bc > 0.0) || !(lambda_ic > 0.0)) throw ConfigError("initial loss weights must be positive");
  if (eval_resolution < 2) throw ConfigError("eval_resolution must be >= 2");
}

// --- losses -------------------------------------------------------------------

namespace {

ad::Var boundary_values(BoundModel& bound, const CoordinateBox& box, const Matrix& points, int axis) {
  if (axis < 0) {
    JetSeed seed{box.normalize(points), Matrix(0, box.dims()), 0};
    return bound.apply(seed);
  }
  Matrix dir = Matrix::Zero(1, box.dims());
  dir(0, axis) = 1.0;
  JetSeed seed{box.normalize(points), box.normalize_directions(dir), 1};
  return ad::jet_channel(bound.apply(seed), seed.layout(), 1);
}

// Sum over the batch's channels of mean squared error.
ad::Var batch_loss(BoundModel& bound, const PDEProblem& problem, const BoundaryBatch& b) {
  const CoordinateBox& box = problem.box();
  ad::Var total;
  if (b.kind == ConditionKind::Dirichlet) {
    const ad::Var out = boundary_values(bound, box, b.points, -1);
    for (std::size_t k = 0; k < b.channels.size(); ++k) {
      const ad::Var err =
          ad::add_constant(ad::cols(out, b.channels[k], 1), -b.targets.col(static_cast<Eigen::Index>(k)));
      const ad::Var term = ad::mean_square(err);
      total = total.valid() ? ad::add(total, term) : term;
    }
  } else {
    const int axis = b.kind == ConditionKind::PeriodicDerivative ? b.axis : -1;
    const ad::Var lhs = boundary_values(bound, box, b.points, axis);
    const ad::Var rhs = boundary_values(bound, box, b.partner, axis);
    for (int c : b.channels) {
      const ad::Var term = ad::mean_square(ad::sub(ad::cols(lhs, c, 1), ad::cols(rhs, c, 1)));
      total = total.valid() ? ad::add(total, term) : term;
    }
  }
  return total;
}

}  // namespace

LossGraph build_loss(BoundModel& bound, const PDEProblem& problem, const SampleBatch& batch) {
  if (batch.interior.rows() == 0) throw ConfigError("empty interior batch");
  LossGraph lg;
  for (const ad::Var& r : problem.residual(bound, batch.interior)) {
    const ad::Var term = ad::mean_square(r);
    lg.pde = lg.pde.valid() ? ad::add(lg.pde, term) : term;
  }
  for (const BoundaryBatch& b : batch.boundary) {
    if (b.size() == 0) continue;
    const ad::Var term = batch_loss(bound, problem, b);
    ad::Var& slot = b.initial ? lg.ic : lg.bc;
    slot = slot.valid() ? ad::add(slot, term) : term;
  }
  lg.has_bc = lg.bc.valid();
  lg.has_ic = lg.ic.valid();
  return lg;
}

LossBreakdown compute_loss(const Model& model, const PDEProblem& problem, const SampleBatch& batch,
                           LossWeights weights) {
  ad::Graph g;
  BoundModel bound(model, g, false);
  const LossGraph lg = build_loss(bound, problem, batch);
  LossBreakdown out;
  out.pde = lg.pde.value()(0, 0);
  out.has_bc = lg.has_bc;
  out.has_ic = lg.has_ic;
  out.bc = lg.has_bc ? lg.bc.value()(0, 0) : 0.0;
  out.ic = lg.has_ic ? lg.ic.value()(0, 0) : 0.0;
  out.lambda_bc = weights.bc;
  out.lambda_ic = weights.ic;
  out.total = out.pde + weights.bc * out.bc + weights.ic * out.ic;
  return out;
}

// --- dynamic weights ------------------------------------------------------------

WeightUpdate dynamic_weights(const Vector& grad_pde, const Vector& grad_i, double lambda_prev, double alpha) {
  if (grad_pde.size() != grad_i.size()) throw ShapeError("dynamic_weights: gradient lengths differ");
  if (grad_pde.size() == 0) throw ShapeError("dynamic_weights: empty gradients");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("dynamic_weights: alpha must lie in (0, 1]");
  WeightUpdate out;
  out.lambda = lambda_prev;
  const double mean_i = grad_i.cwiseAbs().mean();
  if (!(mean_i >= 1e-12)) {
    out.estimate = std::numeric_limits<double>::quiet_NaN();
    out.warning = "degenerate loss gradient (mean |grad| < 1e-12); weight update skipped";
    return out;
  }
  out.estimate = grad_pde.cwiseAbs().maxCoeff() / mean_i;
  out.lambda = (1.0 - alpha) * lambda_prev + alpha * out.estimate;
  out.updated = true;
  return out;
}

// --- optimizer ------------------------------------------------------------------

Adam::Adam(Eigen::Index n, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps), m_(Vector::Zero(n)), v_(Vector::Zero(n)) {}

void Adam::step(Vector& theta, const Vector& grad, double lr) {
  if (theta.size() != m_.size() || grad.size() != m_.size()) throw ShapeError("Adam: size mismatch");
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  theta.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

void Adam::restore(Vector m, Vector v, long t) {
  if (m.size() != m_.size() || v.size() != v_.size()) throw ShapeError("Adam: restored moments have wrong size");
  m_ = std::move(m);
  v_ = std::move(v);
  t_ = t;
}

double learning_rate(const TrainConfig& config, int epoch) {
  return config.lr * std::pow(config.lr_decay, static_cast<double>(epoch / config.lr_step));
}

Rng batch_rng(std::uint64_t seed, std::uint64_t k) {
  // splitmix64 of the pair
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ULL + k + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return Rng(z ^ (z >> 31));
}

// --- evaluation -------------------------------------------------------------------

L2Evaluator::L2Evaluator(const PDEProblem& problem, int resolution) : problem_(&problem) {
  const auto ref = problem.reference();
  if (!ref) return;
  points_ = problem.evaluation_points(resolution);
  unit_points_ = problem.box().normalize(points_);
  reference_ = ref->evaluate(points_);
  available_ = true;
}

L2Report L2Evaluator::operator()(const Model& model) const {
  L2Report out;
  if (!available_) {
    out.headline = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  const Matrix pred = forward(model, unit_points_);
  if (pred.cols() == 1) {
    out.headline = l2_relative(pred.col(0), reference_.col(0));
    return out;
  }
  out.headline = l2_relative(magnitude(pred, 2), magnitude(reference_, 2));
  for (Eigen::Index c = 0; c < pred.cols() && c < reference_.cols(); ++c) {
    try {
      out.channels.push_back(l2_relative(pred.col(c), reference_.col(c)));
    } catch (const UndefinedMetricError&) {
      out.channels.push_back(std::numeric_limits<double>::quiet_NaN());
    }
  }
  return out;
}

// --- loop ---------------------------------------------------------------------------

TrainState initial_state(const Model& model, const TrainConfig& config) {
  TrainState s;
  s.theta = model.flatten();
  s.lambda_bc = config.lambda_bc;
  s.lambda_ic = config.lambda_ic;
  s.adam = Adam(s.theta.size(), config.adam_beta1, config.adam_beta2, config.adam_eps);
  s.epoch = 0;
  s.seed = config.seed;
  return s;
}

TrainState train(Model& model, const PDEProblem& problem, const TrainConfig& config, const TrainHooks& hooks,
                 std::optional<TrainState> resume) {
  config.validate();
  keep_large_blocks_on_heap();
  if (model.input_dim() != problem.input_dim() || model.output_dim() != problem.output_dim()) {
    throw ConfigError("model shape does not match problem '" + problem.name() + "'");
  }
  TrainState state = resume ? std::move(*resume) : initial_state(model, config);
  model.unflatten(state.theta);
  const L2Evaluator evaluator(problem, config.eval_resolution);
  const bool parameters_exist = state.theta.size() > 0;

  std::string last_checkpoint;
  SampleBatch batch;
  long batch_id = -1;

  for (int e = state.epoch;; ++e) {
    const long k = e / config.resample_every;
    if (k != batch_id) {
      Rng rng = batch_rng(config.seed, static_cast<std::uint64_t>(k));
      batch = problem.sample(config.samples, rng);
      batch_id = k;
    }

    ad::Graph g;
    std::optional<BoundModel> bound;
    try {
      bound.emplace(model, g, parameters_exist);
    } catch (const NonFiniteParameterError& err) {
      throw NumericError(std::string(err.what()) + " at epoch " + std::to_string(e) +
                         "; last good checkpoint: " + (last_checkpoint.empty() ? "none" : last_checkpoint));
    }
    const LossGraph lg = build_loss(*bound, problem, batch);
    const double l_pde = lg.pde.value()(0, 0);
    const double l_bc = lg.has_bc ? lg.bc.value()(0, 0) : 0.0;
    const double l_ic = lg.has_ic ? lg.ic.value()(0, 0) : 0.0;
    const double total = l_pde + state.lambda_bc * l_bc + state.lambda_ic * l_ic;
    if (!std::isfinite(total)) {
      throw NumericError("non-finite loss at epoch " + std::to_string(e) +
                         "; last good checkpoint: " + (last_checkpoint.empty() ? "none" : last_checkpoint));
    }

    state.epoch = e;
    if (e % config.eval_every == 0 || e == config.epochs) {
      MetricRow row;
      row.epoch = e;
      row.loss_pde = l_pde;
      row.loss_bc = l_bc;
      row.loss_ic = l_ic;
      row.lambda_bc = state.lambda_bc;
      row.lambda_ic = state.lambda_ic;
      row.lr = learning_rate(config, e);
      const L2Report l2 = evaluator(model);
      row.l2rel = l2.headline;
      row.l2rel_channels = l2.channels;
      state.log.push_back(row);
      if (hooks.on_row) hooks.on_row(row);
      if (hooks.on_checkpoint) {
        const std::string path = hooks.on_checkpoint(model, state);
        if (!path.empty()) last_checkpoint = path;
      }
    }
    if (e >= config.epochs) break;
    if (!parameters_exist) {
      state.epoch = e + 1;
      continue;
    }

    Vector grad;
    const bool reweight = config.dynamic_weights && e % config.reweight_every == 0 && (lg.has_bc || lg.has_ic);
    if (reweight) {
      g.backward(lg.pde);
      const Vector g_pde = bound->flat_gradient();
      grad = g_pde;
      auto update = [&](ad::Var term, double& lambda) {
        g.backward(term);
        const Vector g_i = bound->flat_gradient();
        const WeightUpdate w = dynamic_weights(g_pde, g_i, lambda, config.ema_alpha);
        if (!w.warning.empty() && hooks.on_warning) hooks.on_warning("epoch " + std::to_string(e) + ": " + w.warning);
        lambda = w.lambda;
        grad += lambda * g_i;
      };
      if (lg.has_bc) update(lg.bc, state.lambda_bc);
      if (lg.has_ic) update(lg.ic, state.lambda_ic);
    } else {
      ad::Var t = lg.pde;
      if (lg.has_bc) t = ad::add(t, ad::scale(lg.bc, state.lambda_bc));
      if (lg.has_ic) t = ad::add(t, ad::scale(lg.ic, state.lambda_ic));
      g.backward(t);
      grad = bound->flat_gradient();
    }

    state.adam.step(state.theta, grad, learning_rate(config, e));
    model.unflatten(state.theta);
    state.epoch = e + 1;
  }
  return state;
}

}  // namespace pgcan
