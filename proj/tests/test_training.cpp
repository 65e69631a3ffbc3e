#include "support.hpp"

#include "pgcan/checkpoint.hpp"
#include "pgcan/errors.hpp"
#include "pgcan/training.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace pgcan;
using namespace pgcan::testing;

namespace {

// u on [0, 1] with residual r = u at interior points (or r = 0) and one
// Dirichlet batch at fixed points.
class ToyProblem final : public PDEProblem {
 public:
  ToyProblem(Matrix bc_points, Matrix targets, bool zero_residual)
      : PDEProblem(CoordinateBox::unit(1), {}),
        bc_points_(std::move(bc_points)),
        targets_(std::move(targets)),
        zero_residual_(zero_residual) {}

  std::string name() const override { return "toy"; }
  std::vector<ad::Var> residual(BoundModel& bound, const Matrix& points) const override {
    const ad::Var u = physical_jet(bound, points, {0}, 0).value();
    return {zero_residual_ ? ad::scale(u, 0.0) : u};
  }
  std::vector<BoundaryBatch> sample_boundary(const SampleCounts&, Rng&) const override {
    BoundaryBatch b;
    b.name = "fit";
    b.points = bc_points_;
    b.targets = targets_;
    return {b};
  }

 private:
  Matrix bc_points_, targets_;
  bool zero_residual_;
};

std::unique_ptr<MlpModel> linear_model(double w, double b) {
  Rng rng(0);
  auto m = std::make_unique<MlpModel>(1, 1, std::vector<int>{}, ad::Activation::Tanh, rng);
  m->unflatten((Vector(2) << w, b).finished());
  return m;
}

TrainConfig small_config(int epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.eval_every = 10;
  c.resample_every = 5;
  c.reweight_every = 3;
  c.samples = {64, 16, 16};
  c.eval_resolution = 16;
  return c;
}

}  // namespace

TEST(Loss, ExactModelHasZeroTotal) {
  const Matrix x = Vector::LinSpaced(10, 0.0, 1.0);
  ToyProblem p(x, x, true);
  Rng rng(1);
  const LossBreakdown l = compute_loss(*linear_model(1.0, 0.0), p, p.sample({5, 1, 1}, rng));
  EXPECT_EQ(l.total, 0.0);
  EXPECT_TRUE(l.has_bc);
  EXPECT_FALSE(l.has_ic);
}

TEST(Loss, SingleResidualOfTwo) {
  ToyProblem p(Matrix::Zero(1, 1), Matrix::Constant(1, 1, 2.0), false);
  SampleBatch batch;
  batch.interior = Matrix::Constant(1, 1, 0.5);
  Rng rng(0);
  batch.boundary = p.sample_boundary({}, rng);
  const LossBreakdown l = compute_loss(*linear_model(0.0, 2.0), p, batch);
  EXPECT_DOUBLE_EQ(l.pde, 4.0);
  EXPECT_DOUBLE_EQ(l.bc, 0.0);
}

TEST(Loss, WeightedBoundaryContribution) {
  ToyProblem p((Matrix(2, 1) << 0.0, 1.0).finished(), Matrix::Zero(2, 1), true);
  Rng rng(2);
  const LossBreakdown l = compute_loss(*linear_model(2.0, 1.0), p, p.sample({3, 2, 2}, rng), {2.0, 1.0});
  EXPECT_DOUBLE_EQ(l.bc, 5.0);
  EXPECT_DOUBLE_EQ(l.total - l.pde, 10.0);
  EXPECT_DOUBLE_EQ(l.lambda_bc, 2.0);
}

TEST(Loss, TermsAreNonNegative) {
  const auto problem = make_problem("burgers");
  const auto m = default_architecture("m4", 2, 1);
  Rng rng(3);
  const LossBreakdown l = compute_loss(*m, *problem, problem->sample({100, 50, 50}, rng));
  EXPECT_GE(l.pde, 0.0);
  EXPECT_GT(l.bc, 0.0);
  EXPECT_GT(l.ic, 0.0);
  EXPECT_NEAR(l.total, l.pde + l.bc + l.ic, 1e-12 * l.total);
}

TEST(Loss, EmptyInteriorIsConfigError) {
  ToyProblem p(Matrix::Zero(1, 1), Matrix::Zero(1, 1), true);
  SampleBatch batch;
  batch.interior = Matrix(0, 1);
  EXPECT_THROW(compute_loss(*linear_model(1, 0), p, batch), ConfigError);
}

TEST(DynamicWeights, WorkedExamples) {
  const Vector g_pde = (Vector(3) << 0.2, -1.0, 0.5).finished();
  const Vector g_bc = (Vector(3) << 0.5, -0.5, 0.5).finished();
  EXPECT_NEAR(dynamic_weights(g_pde, g_bc, 7.0, 1.0).lambda, 2.0, 1e-12);

  const Vector c = Vector::Constant(5, 0.3);
  const WeightUpdate same = dynamic_weights(c, c, 4.0, 1.0);
  EXPECT_NEAR(same.estimate, 1.0, 1e-12);
  EXPECT_NEAR(same.lambda, 1.0, 1e-12);

  const Vector g20 = (Vector(2) << 20.0, 1.0).finished();
  const WeightUpdate ema = dynamic_weights(g20, Vector::Ones(2), 10.0, 0.1);
  EXPECT_NEAR(ema.estimate, 20.0, 1e-12);
  EXPECT_NEAR(ema.lambda, 11.0, 1e-12);
}

TEST(DynamicWeights, DegenerateGradientKeepsPreviousWeight) {
  const WeightUpdate w = dynamic_weights(Vector::Ones(3), Vector::Constant(3, 1e-14), 3.5, 0.1);
  EXPECT_FALSE(w.updated);
  EXPECT_EQ(w.lambda, 3.5);
  EXPECT_FALSE(w.warning.empty());
  EXPECT_TRUE(std::isnan(w.estimate));
}

TEST(DynamicWeights, BalanceIdentityOnRealGradients) {
  const auto problem = make_problem("convection");
  auto m = default_architecture("pgcan", 2, 1, 4);
  Rng rng(5);
  const SampleBatch batch = problem->sample({200, 50, 50}, rng);
  ad::Graph g;
  BoundModel bound(*m, g);
  const LossGraph lg = build_loss(bound, *problem, batch);
  g.backward(lg.pde);
  const Vector g_pde = bound.flat_gradient();
  for (ad::Var term : {lg.bc, lg.ic}) {
    g.backward(term);
    const Vector g_i = bound.flat_gradient();
    const WeightUpdate w = dynamic_weights(g_pde, g_i, 1.0, 1.0);
    ASSERT_TRUE(w.updated);
    const double lhs = g_pde.cwiseAbs().maxCoeff(), rhs = w.lambda * g_i.cwiseAbs().mean();
    EXPECT_LE(std::abs(lhs - rhs), 1e-10 * lhs);
  }
}

TEST(Schedule, StepDecay) {
  TrainConfig c;
  EXPECT_DOUBLE_EQ(learning_rate(c, 0), 1e-3);
  EXPECT_DOUBLE_EQ(learning_rate(c, 9999), 1e-3);
  EXPECT_NEAR(learning_rate(c, 10000), 1e-4, 1e-18);
  EXPECT_NEAR(learning_rate(c, 25000), 1e-5, 1e-18);
  EXPECT_NEAR(learning_rate(c, 49999), 1e-7, 1e-20);
}

TEST(Schedule, DefaultsAndValidation) {
  TrainConfig c;
  EXPECT_EQ(c.epochs, 50000);
  EXPECT_EQ(c.resample_every, 100);
  EXPECT_EQ(c.reweight_every, 100);
  EXPECT_EQ(c.ema_alpha, 0.1);
  EXPECT_EQ(c.eval_every, 5000);
  c.validate();
  c.ema_alpha = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.resample_every = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Adam adam(3);
  Vector theta = Vector::Zero(3);
  adam.step(theta, (Vector(3) << 2.0, -0.5, 0.0).finished(), 0.1);
  EXPECT_NEAR(theta(0), -0.1, 1e-8);
  EXPECT_NEAR(theta(1), 0.1, 1e-7);
  EXPECT_EQ(theta(2), 0.0);
  EXPECT_EQ(adam.steps(), 1);
}

TEST(BatchRng, DependsOnlyOnSeedAndIndex) {
  Rng a = batch_rng(3, 7), b = batch_rng(3, 7), c = batch_rng(3, 8), d = batch_rng(4, 7);
  const auto x = a.next();
  EXPECT_EQ(x, b.next());
  EXPECT_NE(x, c.next());
  EXPECT_NE(x, d.next());
}

TEST(Train, ZeroEpochsLeavesStateUnchanged) {
  auto m = default_architecture("vpinn", 2, 1, 6);
  const Vector before = m->flatten();
  const auto problem = make_problem("helmholtz");
  const TrainState s = train(*m, *problem, small_config(0));
  EXPECT_EQ(s.theta, before);
  EXPECT_EQ(m->flatten(), before);
  EXPECT_EQ(s.epoch, 0);
  EXPECT_EQ(s.adam.steps(), 0);
  ASSERT_EQ(s.log.size(), 1u);
  EXPECT_EQ(s.log[0].epoch, 0);
}

TEST(Train, ToyFitConverges) {
  const Matrix x = Vector::LinSpaced(10, 0.0, 1.0);
  ToyProblem p(x, x, true);
  auto m = linear_model(-0.3, 0.4);
  TrainConfig c;
  c.epochs = 2000;
  c.lr = 1e-2;
  c.eval_every = 1000;
  c.dynamic_weights = false;
  c.samples = {4, 10, 10};
  const TrainState s = train(*m, p, c);
  Rng rng(0);
  const LossBreakdown l = compute_loss(*m, p, p.sample(c.samples, rng));
  EXPECT_LT(l.bc, 1e-6);
  EXPECT_EQ(s.epoch, 2000);
}

TEST(Train, LogCadenceAndPositiveWeights) {
  auto m = default_architecture("pgcan", 2, 1, 7);
  const auto problem = make_problem("convection");
  std::vector<int> rows;
  TrainHooks hooks;
  hooks.on_row = [&](const MetricRow& r) { rows.push_back(r.epoch); };
  const TrainState s = train(*m, *problem, small_config(25), hooks);
  EXPECT_EQ(rows, (std::vector<int>{0, 10, 20, 25}));
  for (const auto& r : s.log) {
    EXPECT_GT(r.lambda_bc, 0.0);
    EXPECT_GT(r.lambda_ic, 0.0);
    EXPECT_TRUE(std::isfinite(r.l2rel));
  }
  EXPECT_NE(s.lambda_bc, 1.0);
}

TEST(Train, ReproducibleAndResumable) {
  const auto problem = make_problem("burgers");
  const TrainConfig full = small_config(24);
  auto a = default_architecture("m4", 2, 1, 8);
  auto b = default_architecture("m4", 2, 1, 8);
  const TrainState sa = train(*a, *problem, full);
  const TrainState sb = train(*b, *problem, full);
  EXPECT_EQ(sa.theta, sb.theta);
  ASSERT_EQ(sa.log.size(), sb.log.size());
  for (std::size_t i = 0; i < sa.log.size(); ++i) EXPECT_EQ(sa.log[i].loss_pde, sb.log[i].loss_pde);

  // Stop at 12 (between resample boundaries), checkpoint, reload, finish.
  auto c = default_architecture("m4", 2, 1, 8);
  const TrainState half = train(*c, *problem, small_config(12));
  const auto dir = scratch_dir("resume");
  save_checkpoint(dir / "half.ckpt", *c, half);
  auto d = default_architecture("m4", 2, 1, 99);
  TrainState restored = load_checkpoint(dir / "half.ckpt", *d);
  const TrainState done = train(*d, *problem, full, {}, std::move(restored));
  EXPECT_EQ(done.theta, sa.theta);
  EXPECT_EQ(done.lambda_bc, sa.lambda_bc);
  std::filesystem::remove_all(dir);
}

TEST(Train, NonFiniteParametersRaiseNumericError) {
  auto m = default_architecture("vpinn", 2, 1, 9);
  m->parameters()[0].value(0, 0) = std::numeric_limits<double>::infinity();
  const auto problem = make_problem("helmholtz");
  EXPECT_THROW(train(*m, *problem, small_config(5)), NumericError);
}

TEST(Train, ShapeMismatchIsConfigError) {
  auto m = default_architecture("vpinn", 3, 1);
  const auto problem = make_problem("helmholtz");
  EXPECT_THROW(train(*m, *problem, small_config(1)), ConfigError);
}

TEST(Checkpoint, RoundTripRestoresEverything) {
  auto m = default_architecture("pgcan", 2, 1, 10);
  const auto problem = make_problem("helmholtz");
  const TrainState s = train(*m, *problem, small_config(7));
  const auto dir = scratch_dir("checkpoint");
  save_checkpoint(dir / "a.ckpt", *m, s);
  EXPECT_EQ(slurp(dir / "a.ckpt").substr(0, 8), "PGCANCK1");
  auto fresh = default_architecture("pgcan", 2, 1, 11);
  const TrainState r = load_checkpoint(dir / "a.ckpt", *fresh);
  EXPECT_EQ(fresh->flatten(), m->flatten());
  EXPECT_EQ(r.theta, s.theta);
  EXPECT_EQ(r.adam.first_moment(), s.adam.first_moment());
  EXPECT_EQ(r.adam.second_moment(), s.adam.second_moment());
  EXPECT_EQ(r.adam.steps(), s.adam.steps());
  EXPECT_EQ(r.lambda_bc, s.lambda_bc);
  EXPECT_EQ(r.epoch, s.epoch);
  EXPECT_EQ(r.seed, s.seed);

  auto other = default_architecture("vpinn", 2, 1);
  EXPECT_THROW(load_checkpoint(dir / "a.ckpt", *other), ShapeError);
  std::ofstream(dir / "bad.ckpt") << "not a checkpoint";
  EXPECT_THROW(load_checkpoint(dir / "bad.ckpt", *fresh), ConfigError);
  std::filesystem::remove_all(dir);
}

TEST(L2Evaluator, ExactModelScoresZero) {
  const auto problem = make_problem("helmholtz", {{"a2", 3.0}});
  const L2Evaluator eval(*problem, 32);
  ASSERT_TRUE(eval.available());
  EXPECT_LT(eval(*problem->reference_model()).headline, 1e-14);
  const auto ldc = make_problem("ldc");
  const L2Evaluator none(*ldc, 32);
  EXPECT_FALSE(none.available());
  EXPECT_TRUE(std::isnan(none(*default_architecture("vpinn", 2, 3)).headline));
}
