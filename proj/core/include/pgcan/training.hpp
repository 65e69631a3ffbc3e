#pragma once

#include "pgcan/model.hpp"
#include "pgcan/problems.hpp"
#include "pgcan/random.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace pgcan {

struct TrainConfig {
  int epochs = 50000;
  double lr = 1e-3;
  /// Learning rate multiplier applied every `lr_step` epochs.
  double lr_decay = 0.1;
  int lr_step = 10000;
  int resample_every = 100;
  int reweight_every = 100;
  double ema_alpha = 0.1;
  int eval_every = 5000;
  std::uint64_t seed = 0;
  SampleCounts samples;
  bool dynamic_weights = true;
  double lambda_bc = 1.0;
  double lambda_ic = 1.0;
  /// Lattice size for the L2_rel evaluation.
  int eval_resolution = 128;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  /// Throws ConfigError on non-positive cadences, alpha outside (0, 1], etc.
  void validate() const;
};

struct LossWeights {
  double bc = 1.0;
  double ic = 1.0;
};

struct LossBreakdown {
  double pde = 0.0;
  double bc = 0.0;
  double ic = 0.0;
  double lambda_bc = 1.0;
  double lambda_ic = 1.0;
  double total = 0.0;
  bool has_bc = false;
  bool has_ic = false;
};

/// Loss terms as graph nodes (1 x 1) so each can be differentiated alone.
struct LossGraph {
  ad::Var pde;
  ad::Var bc;
  ad::Var ic;
  bool has_bc = false;
  bool has_ic = false;
};

/// L_PDE is the mean over points of the squared residual norm (all
/// equations); each IC/BC batch contributes the mean over its points of the
/// squared error norm, and batches of the same kind are summed. Throws
/// ConfigError on an empty interior batch.
LossGraph build_loss(BoundModel& bound, const PDEProblem& problem, const SampleBatch& batch);
LossBreakdown compute_loss(const Model& model, const PDEProblem& problem, const SampleBatch& batch,
                           LossWeights weights = {});

struct WeightUpdate {
  double lambda = 1.0;
  /// max|grad L_PDE| / mean|grad L_i|; NaN when skipped.
  double estimate = 0.0;
  bool updated = false;
  std::string warning;
};

/// lambda_hat = max|g_pde| / mean|g_i|, lambda = (1 - alpha) lambda_prev +
/// alpha lambda_hat. Skips (keeps lambda_prev, sets a warning) when
/// mean|g_i| < 1e-12.
WeightUpdate dynamic_weights(const Vector& grad_pde, const Vector& grad_i, double lambda_prev, double alpha);

class Adam {
 public:
  Adam() = default;
  Adam(Eigen::Index n, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step(Vector& theta, const Vector& grad, double lr);

  const Vector& first_moment() const { return m_; }
  const Vector& second_moment() const { return v_; }
  long steps() const { return t_; }
  void restore(Vector m, Vector v, long t);

 private:
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  Vector m_, v_;
  long t_ = 0;
};

/// lr * lr_decay^floor(epoch / lr_step).
double learning_rate(const TrainConfig& config, int epoch);

/// Generator for the collocation batch drawn at resample index `k`; batches
/// depend only on (seed, k) so a resumed run sees the same points.
Rng batch_rng(std::uint64_t seed, std::uint64_t k);

struct MetricRow {
  int epoch = 0;
  double loss_pde = 0.0;
  double loss_bc = 0.0;
  double loss_ic = 0.0;
  double lambda_bc = 1.0;
  double lambda_ic = 1.0;
  double lr = 0.0;
  /// NaN when the problem has no reference.
  double l2rel = 0.0;
  /// Per-output L2_rel (only for multi-output problems).
  std::vector<double> l2rel_channels;
};

struct TrainState {
  Vector theta;
  double lambda_bc = 1.0;
  double lambda_ic = 1.0;
  Adam adam;
  int epoch = 0;
  std::uint64_t seed = 0;
  std::vector<MetricRow> log;
};

TrainState initial_state(const Model& model, const TrainConfig& config);

struct TrainHooks {
  std::function<void(const MetricRow&)> on_row;
  /// Called at every logged epoch with the model holding the logged
  /// parameters; returns the written checkpoint path (or empty).
  std::function<std::string(const Model&, const TrainState&)> on_checkpoint;
  std::function<void(const std::string&)> on_warning;
};

/// Runs epochs [state.epoch, config.epochs). Per epoch: resample if due,
/// losses, log + checkpoint if due (before any update of that epoch),
/// dynamic weights if due, Adam step. A final row is logged at
/// config.epochs. Throws NumericError on a non-finite loss, naming the last
/// good checkpoint.
TrainState train(Model& model, const PDEProblem& problem, const TrainConfig& config, const TrainHooks& hooks = {},
                 std::optional<TrainState> resume = std::nullopt);

/// L2_rel of `model` against the problem reference on the evaluation
/// lattice. For several outputs the headline value uses the velocity
/// magnitude of the first two channels and `channels` holds per-output
/// values. Returns NaN headline when there is no reference.
struct L2Report {
  double headline = 0.0;
  std::vector<double> channels;
};
class L2Evaluator {
 public:
  L2Evaluator(const PDEProblem& problem, int resolution);
  bool available() const { return available_; }
  L2Report operator()(const Model& model) const;

 private:
  const PDEProblem* problem_;
  bool available_ = false;
  Matrix points_;
  Matrix unit_points_;
  Matrix reference_;
};

}  // namespace pgcan
