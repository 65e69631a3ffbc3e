#include "support.hpp"

#include "pgcan/architectures.hpp"
#include "pgcan/errors.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace pgcan;
using namespace pgcan::testing;

namespace {

void expect_count_near(const std::string& name, double target) {
  const auto m = default_architecture(name, 2, 1);
  const double n = static_cast<double>(m->parameter_count());
  EXPECT_LE(std::abs(n - target) / target, 0.15) << name << " has " << n << " parameters";
}

AttentionWeights zero_weights(ad::Graph& g, int in, int width, int layers, double gate_bias) {
  AttentionWeights w;
  w.input_weight = g.leaf(Matrix::Zero(in, width));
  w.input_bias = g.leaf(Matrix::Zero(1, width));
  for (int k = 0; k < layers; ++k) {
    w.gate_weights.push_back(g.leaf(Matrix::Zero(width, width)));
    w.gate_biases.push_back(g.leaf(Matrix::Constant(1, width, gate_bias)));
  }
  w.output_weight = g.leaf(Matrix::Ones(width, 1));
  w.output_bias = g.leaf(Matrix::Constant(1, 1, 0.5));
  return w;
}

}  // namespace

TEST(ParameterCounts, DefaultsNearPublishedSizes) {
  expect_count_near("pgcan", 35000);
  expect_count_near("vpinn", 12000);
  expect_count_near("m4", 7000);
  expect_count_near("pixel", 98000);
}

TEST(ParameterCounts, PgcanDefaultHasNoAdapter) {
  const auto m = default_architecture("pgcan", 2, 1);
  EXPECT_FALSE(dynamic_cast<const PgcanModel&>(*m).has_adapter());
}

TEST(Derivatives, AllArchitecturesMatchFiniteDifferences) {
  for (const auto& name : architecture_names()) {
    const auto m = default_architecture(name, 2, 1, 11);
    Rng rng(12);
    const double h = 1e-5;
    const Matrix pts = face_safe_points(100, 2, face_spacing(*m), 3 * h, rng);
    const FdReport r = fd_check(*m, pts, h);
    EXPECT_LE(r.first, 1e-4) << name;
    EXPECT_LE(r.second, 1e-4) << name;
  }
}

TEST(Derivatives, MultiOutputAndThreeDimensional) {
  for (const auto& name : {"pgcan", "m4"}) {
    const auto m = default_architecture(name, 3, 3, 13);
    Rng rng(14);
    const FdReport r = fd_check(*m, face_safe_points(10, 3, face_spacing(*m), 3e-5, rng));
    EXPECT_LE(r.first, 1e-4) << name;
    EXPECT_LE(r.second, 1e-4) << name;
  }
}

TEST(AttentionDecoder, ClosedGateGivesPhi1) {
  DecoderSpec spec;
  spec.layers = 3;
  spec.width = 2;
  ad::Graph g;
  const ad::JetLayout layout{2, 0, 0};
  const ad::Var in = g.constant(Matrix::Constant(2, 2, 0.3));
  const ad::Var phi1 = g.constant((Matrix(2, 2) << 1, 2, 3, 4).finished());
  const ad::Var phi2 = g.constant((Matrix(2, 2) << -5, -6, -7, -8).finished());
  const ad::Var out = attention_decode(phi1, phi2, in, zero_weights(g, 2, 2, 3, 0.0), spec, layout);
  EXPECT_DOUBLE_EQ(out.value()(0, 0), 3.5);
  EXPECT_DOUBLE_EQ(out.value()(1, 0), 7.5);
}

TEST(AttentionDecoder, OpenGateGivesPhi2) {
  DecoderSpec spec;
  spec.layers = 2;
  spec.width = 2;
  spec.gate = ad::Activation::Sigmoid;
  ad::Graph g;
  const ad::JetLayout layout{2, 0, 0};
  const ad::Var in = g.constant(Matrix::Constant(2, 2, 0.3));
  const ad::Var phi1 = g.constant((Matrix(2, 2) << 1, 2, 3, 4).finished());
  const ad::Var phi2 = g.constant((Matrix(2, 2) << -5, -6, -7, -8).finished());
  const ad::Var out = attention_decode(phi1, phi2, in, zero_weights(g, 2, 2, 2, 60.0), spec, layout);
  EXPECT_DOUBLE_EQ(out.value()(0, 0), -10.5);
  EXPECT_DOUBLE_EQ(out.value()(1, 0), -14.5);
}

TEST(AttentionDecoder, HandComputedSingleLayer) {
  DecoderSpec spec;
  spec.layers = 1;
  spec.width = 2;
  ad::Graph g;
  const ad::JetLayout layout{1, 0, 0};
  const ad::Var in = g.constant((Matrix(1, 1) << 0.5).finished());
  const ad::Var phi1 = g.constant((Matrix(1, 2) << 0.2, -0.1).finished());
  const ad::Var phi2 = g.constant((Matrix(1, 2) << 0.4, 0.3).finished());
  AttentionWeights w;
  w.input_weight = g.leaf((Matrix(1, 2) << 0.1, -0.2).finished());
  w.input_bias = g.leaf((Matrix(1, 2) << 0.05, 0.0).finished());
  w.gate_weights = {g.leaf((Matrix(2, 2) << 0.3, 0.1, -0.2, 0.4).finished())};
  w.gate_biases = {g.leaf((Matrix(1, 2) << 0.0, 0.1).finished())};
  w.output_weight = g.leaf((Matrix(2, 1) << 1.0, -1.0).finished());
  w.output_bias = g.leaf((Matrix(1, 1) << 0.25).finished());
  const double h0 = std::tanh(0.05 + 0.05), h1 = std::tanh(-0.1);
  const double z0 = std::tanh(0.3 * h0 - 0.2 * h1), z1 = std::tanh(0.1 * h0 + 0.4 * h1 + 0.1);
  const double o0 = (1 - z0) * 0.2 + z0 * 0.4, o1 = (1 - z1) * -0.1 + z1 * 0.3;
  const ad::Var out = attention_decode(phi1, phi2, in, w, spec, layout);
  EXPECT_NEAR(out.value()(0, 0), o0 - o1 + 0.25, 1e-15);
}

TEST(AttentionDecoder, WidthMismatchIsConfigError) {
  DecoderSpec spec;
  spec.layers = 1;
  spec.width = 3;
  ad::Graph g;
  const ad::Var x = g.constant(Matrix::Zero(1, 2));
  EXPECT_THROW(attention_decode(x, x, x, zero_weights(g, 2, 3, 1, 0.0), spec, {1, 0, 0}), ConfigError);
}

TEST(Pgcan, ZeroFeaturesAndBiasesGiveOutputBias) {
  auto m = default_architecture("pgcan", 2, 1, 15);
  for (auto& b : m->parameters()) {
    if (b.name == "encoder.features" || b.name.ends_with(".bias")) b.value.setZero();
  }
  Rng rng(16);
  const Matrix pts = face_safe_points(20, 2, 0.0, 0.0, rng);
  EXPECT_EQ(forward(*m, pts).cwiseAbs().maxCoeff(), 0.0);
  for (auto& b : m->parameters()) {
    if (b.name == "decoder.output.bias") b.value.setConstant(0.75);
  }
  EXPECT_TRUE((forward(*m, pts).array() == 0.75).all());
}

TEST(Pgcan, AdapterWhenWidthDiffersFromHalfFeatures) {
  Rng rng(17);
  DecoderSpec dec;
  dec.width = 32;
  PgcanModel m(GridSpec::uniform(2, 9, 128, 2), dec, rng);
  EXPECT_TRUE(m.has_adapter());
  const FdReport r = fd_check(m, face_safe_points(10, 2, face_spacing(m), 3e-5, rng));
  EXPECT_LE(r.first, 1e-4);
  EXPECT_LE(r.second, 1e-4);
}

TEST(Pgcan, GradientOfVertexFeatureIsLocal) {
  Rng rng(18);
  DecoderSpec dec;
  dec.layers = 1;
  dec.width = 4;
  GridSpec spec = GridSpec::uniform(2, 9, 8, 1);
  PgcanModel m(spec, dec, rng);
  const int row = spec.table_row(0, spec.vertex_index({2, 6}));
  for (int n = 0; n < 200; ++n) {
    const Matrix p = (Matrix(1, 2) << rng.uniform(), rng.uniform()).finished();
    ad::Graph g;
    BoundModel bound(m, g);
    const ad::Var out = bound.apply(JetSeed{p, Matrix(0, 2), 0});
    g.backward(ad::sum(out));
    const Matrix grad = g.gradient(bound.parameter(0));
    // The 3x3 convolution spreads a vertex over its neighbours' cells.
    const bool covered = std::abs(p(0, 0) - 2.0 / 8) < 2.0 / 8 && std::abs(p(0, 1) - 6.0 / 8) < 2.0 / 8;
    if (!covered) {
      EXPECT_EQ(grad.row(row).cwiseAbs().maxCoeff(), 0.0);
    }
  }
}

TEST(Vpinn, ZeroWeightsGiveBias) {
  auto m = default_architecture("vpinn", 2, 1);
  zero_except(*m, "output.bias");
  for (auto& b : m->parameters()) {
    if (b.name == "output.bias") b.value.setConstant(-1.25);
  }
  EXPECT_EQ(forward(*m, Matrix::Constant(3, 2, 0.4)), Matrix::Constant(3, 1, -1.25));
}

TEST(Vpinn, SingleNeuronClosedForm) {
  Rng rng(19);
  MlpModel m(1, 1, {1}, ad::Activation::Tanh, rng);
  m.unflatten((Vector(4) << 0.7, -0.1, 1.5, 0.2).finished());
  const Matrix v = forward(m, Matrix::Constant(1, 1, 0.3));
  EXPECT_NEAR(v(0, 0), 1.5 * std::tanh(0.7 * 0.3 - 0.1) + 0.2, 1e-15);
}

TEST(M4, GateClosedReducesToPhi1) {
  auto m = default_architecture("m4", 2, 1, 20);
  for (auto& b : m->parameters()) {
    if (b.name.starts_with("decoder.gate")) b.value.setZero();
  }
  const Matrix pts = (Matrix(1, 2) << 0.3, 0.6).finished();
  const auto& blocks = m->parameters();
  auto block = [&](const std::string& n) -> const Matrix& {
    for (const auto& b : blocks)
      if (b.name == n) return b.value;
    throw std::runtime_error(n);
  };
  const Matrix phi1 = (pts * block("phi1.weight") + block("phi1.bias")).array().tanh().matrix();
  const double expect = (phi1 * block("decoder.output.weight"))(0, 0) + block("decoder.output.bias")(0, 0);
  EXPECT_NEAR(forward(*m, pts)(0, 0), expect, 1e-14);
}

TEST(Pixel, SingleRepetitionIsPlainInterpolationPlusMlp) {
  Rng rng(21);
  const GridSpec spec = GridSpec::uniform(2, 5, 2, 1, false);
  PixelModel m(spec, {}, 1, rng);
  // No hidden layers: output = features . w + b.
  const Matrix& table = m.parameters()[0].value;
  const Vector p = (Vector(2) << 0.25, 0.5).finished();
  const Vector f = interpolate(spec, table, locate(spec, p, 0), 0);
  const Matrix& w = m.parameters()[1].value;
  const double b = m.parameters()[2].value(0, 0);
  EXPECT_NEAR(forward(m, p.transpose())(0, 0), f.dot(w.col(0)) + b, 1e-15);
  // An unshifted vertex reproduces that vertex's features.
  EXPECT_EQ(f, table.row(spec.vertex_index({1, 2})).transpose());
}

TEST(Flatten, RoundTripIsBitwise) {
  for (const auto& name : architecture_names()) {
    auto m = default_architecture(name, 2, 1, 22);
    const Vector theta = m->flatten();
    auto copy = m->clone();
    copy->unflatten(theta);
    EXPECT_EQ(copy->flatten(), theta) << name;
    EXPECT_EQ(static_cast<std::size_t>(theta.size()), m->parameter_count());
  }
}

TEST(Config, ResolvesDefaultsAndRejectsUnknownSettings) {
  ArchitectureConfig c;
  c.name = "vpinn";
  const auto r = resolve_architecture(c);
  EXPECT_EQ(r.layers, 8);
  EXPECT_EQ(r.width, 40);
  c.n_rep = 2;
  EXPECT_THROW(resolve_architecture(c), ConfigError);
  ArchitectureConfig bad;
  bad.name = "resnet";
  EXPECT_THROW(resolve_architecture(bad), ConfigError);
  ArchitectureConfig mismatch;
  mismatch.width = 0;
  Rng rng(0);
  EXPECT_THROW(build_architecture(mismatch, 2, 1, rng), ConfigError);
}

TEST(Config, DynamicWeightDefaults) {
  EXPECT_TRUE(uses_dynamic_weights("pgcan"));
  EXPECT_TRUE(uses_dynamic_weights("m4"));
  EXPECT_FALSE(uses_dynamic_weights("vpinn"));
  EXPECT_FALSE(uses_dynamic_weights("pixel"));
}

TEST(BoundModel, NonFiniteParameterNamesBlock) {
  auto m = default_architecture("vpinn", 2, 1);
  m->parameters()[2].value(0, 0) = std::nan("");
  ad::Graph g;
  try {
    BoundModel b(*m, g);
    FAIL() << "expected NonFiniteParameterError";
  } catch (const NonFiniteParameterError& e) {
    EXPECT_NE(std::string(e.what()).find("hidden1.weight"), std::string::npos) << e.what();
  }
}
