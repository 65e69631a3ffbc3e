#include "support.hpp"

#include "pgcan/errors.hpp"
#include "pgcan/evaluation.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>

using namespace pgcan;
using namespace pgcan::testing;

namespace {

constexpr double kPi = std::numbers::pi;

// Direct O(N^4) zero-centred DFT power, first index along x.
Eigen::MatrixXd naive_power(const Eigen::MatrixXd& img) {
  const int n = static_cast<int>(img.rows());
  const int h = n / 2;
  Eigen::MatrixXd p(n, n);
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      std::complex<double> sum = 0.0;
      for (int x = 0; x < n; ++x)
        for (int y = 0; y < n; ++y)
          sum += img(x, y) * std::polar(1.0, -2 * kPi * ((a - h) * x + (b - h) * y) / n);
      p(a, b) = std::norm(sum);
    }
  }
  return p;
}

Eigen::MatrixXd noise(int n, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd f(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) f(i, j) = rng.normal();
  return f;
}

Eigen::MatrixXd cosine_x(int n, int k) {
  Eigen::MatrixXd f(n, n);
  for (int i = 0; i < n; ++i) f.row(i).setConstant(std::cos(2 * kPi * i * k / n));
  return f;
}

// Helmholtz solution plus a constant, as a model in physical coordinates.
std::unique_ptr<Model> offset_model(const PDEProblem& p, double offset, double scale = 1.0) {
  const double a2 = p.parameter("a2");
  ScalarField f = [=](const Vector& x) {
    SecondOrderSample s = helmholtz_sample(x(0), x(1), a2);
    s.value = scale * s.value + offset;
    s.gradient *= scale;
    s.hessian *= scale;
    return s;
  };
  return std::make_unique<AnalyticModel>(std::vector<ScalarField>{f}, p.box());
}

Matrix& block(Model& m, const std::string& name) {
  for (auto& b : m.parameters())
    if (b.name == name) return b.value;
  throw std::runtime_error("no block " + name);
}

}  // namespace

TEST(L2Relative, Examples) {
  const Vector u = (Vector(3) << 1.0, -2.0, 0.5).finished();
  EXPECT_EQ(l2_relative(u, u), 0.0);
  EXPECT_NEAR(l2_relative(Vector::Zero(3), u), 1.0, 1e-12);
  EXPECT_NEAR(l2_relative((Vector(2) << 1, 1).finished(), (Vector(2) << 1, 0).finished()), 1.0, 1e-12);
}

TEST(L2Relative, Errors) {
  EXPECT_THROW(l2_relative(Vector::Ones(3), Vector::Zero(3)), UndefinedMetricError);
  EXPECT_THROW(l2_relative(Vector::Ones(3), Vector::Ones(4)), ShapeError);
}

TEST(L2Relative, ScaleInvariant) {
  Rng rng(11);
  for (int t = 0; t < 20; ++t) {
    Vector a(16), b(16);
    for (int i = 0; i < 16; ++i) a(i) = rng.normal(), b(i) = rng.normal();
    const double c = rng.uniform(0.1, 10.0);
    EXPECT_NEAR(l2_relative(c * a, c * b), l2_relative(a, b), 1e-12);
    EXPECT_GE(l2_relative(a, b), 0.0);
  }
}

TEST(Magnitude, RowNorms) {
  const Matrix v = (Matrix(2, 3) << 3, 4, 100, 0, -2, 7).finished();
  const Vector m = magnitude(v, 2);
  EXPECT_EQ(m(0), 5.0);
  EXPECT_EQ(m(1), 2.0);
}

TEST(Spectrum, ConstantOnesFourByFour) {
  const Eigen::MatrixXd p = power_spectrum(Eigen::MatrixXd::Ones(4, 4));
  EXPECT_NEAR(p(2, 2), 256.0, 1e-9);
  Eigen::MatrixXd rest = p;
  rest(2, 2) = 0.0;
  EXPECT_LT(rest.cwiseAbs().maxCoeff(), 1e-20);
}

TEST(Spectrum, ZeroImage) { EXPECT_EQ(power_spectrum(Eigen::MatrixXd::Zero(8, 8)).norm(), 0.0); }

TEST(Spectrum, MatchesNaiveDft) {
  for (int n : {5, 6, 8}) {
    const Eigen::MatrixXd img = noise(n, 20 + n);
    const Eigen::MatrixXd fast = power_spectrum(img), slow = naive_power(img);
    EXPECT_LT((fast - slow).cwiseAbs().maxCoeff(), 1e-10 * slow.maxCoeff()) << n;
  }
}

TEST(Spectrum, Parseval) {
  for (int n : {7, 16, 33, 64}) {
    const Eigen::MatrixXd img = noise(n, 100 + n);
    const double lhs = power_spectrum(img).sum(), rhs = double(n) * n * img.squaredNorm();
    EXPECT_NEAR(lhs / rhs, 1.0, 1e-9) << n;
  }
}

TEST(Spectrum, PointSymmetricForRealFields) {
  const int n = 7;
  const Eigen::MatrixXd p = power_spectrum(noise(n, 3));
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) EXPECT_NEAR(p(a, b), p(n - 1 - a, n - 1 - b), 1e-9 * p.maxCoeff());
}

TEST(Spectrum, CosineConcentratesAtPlusMinusK) {
  const int n = 16, k = 3;
  const Eigen::MatrixXd p = power_spectrum(cosine_x(n, k));
  const double peak = std::pow(n * n / 2.0, 2);
  EXPECT_NEAR(p(8 + k, 8), peak, 1e-8 * peak);
  EXPECT_NEAR(p(8 - k, 8), peak, 1e-8 * peak);
  EXPECT_NEAR(p.sum(), 2 * peak, 1e-8 * peak);
}

TEST(DirectionalPsd, CosineHasSingleDominantBin) {
  const int n = 32;
  for (int k : {1, 4, 9, 16}) {
    const PSDCurve c = directional_psd(power_spectrum(cosine_x(n, k)), 'x');
    ASSERT_EQ(c.bins.size(), 16u);
    for (std::size_t s = 0; s < c.bins.size(); ++s) {
      EXPECT_EQ(c.bins[s], int(s) + 1);
      if (c.bins[s] == k) {
        EXPECT_GT(c.raw[s], 1.0);
      } else {
        EXPECT_LT(c.raw[s], 1e-18);
      }
    }
    const PSDCurve y = directional_psd(power_spectrum(cosine_x(n, k)), 'y');
    for (double r : y.raw) EXPECT_LT(r, 1e-18);
  }
}

TEST(DirectionalPsd, ConstantFieldHasNoPowerInBins) {
  const PSDCurve c = directional_psd(power_spectrum(Eigen::MatrixXd::Constant(8, 8, 2.5)), 'x');
  EXPECT_TRUE(c.raw_zero);
  for (double r : c.raw) EXPECT_LT(r, 1e-20);
  for (double v : c.log_values) EXPECT_LE(v, std::log10(1e-20));
}

TEST(DirectionalPsd, AveragesOverOtherAxis) {
  const int n = 6;
  const Eigen::MatrixXd img = noise(n, 5);
  const Eigen::MatrixXd p = power_spectrum(img);
  const PSDCurve x = directional_psd(p, 'x'), y = directional_psd(p, 'y');
  // +s sits at centred index s + N/2; for N = 6 bin 3 wraps to the -3 row.
  for (int s = 1; s <= 3; ++s) {
    const int a = (s + 3) % 6;
    EXPECT_NEAR(x.raw[s - 1], p.row(a).sum() / n, 1e-12);
    EXPECT_NEAR(y.raw[s - 1], p.col(a).sum() / n, 1e-12);
    EXPECT_NEAR(x.log_values[s - 1], std::log10(x.raw[s - 1]), 1e-12);
  }
  EXPECT_THROW(directional_psd(p, 'z'), ConfigError);
  EXPECT_THROW(directional_psd(Eigen::MatrixXd::Zero(4, 5), 'x'), ShapeError);
}

TEST(Align, ArithmeticExample) {
  PSDCurve a, b;
  a.values = {2.0, 1.0, 0.5};
  b.values = {5.0, 4.0, -1.0};
  const auto out = align_psd_curves({a, b});
  EXPECT_EQ(out[0].values, (std::vector<double>{5.0, 4.0, 3.5}));
  EXPECT_EQ(out[1].values, b.values);
}

TEST(Align, SingleCurveAndShapePreserved) {
  const PSDCurve c = directional_psd(power_spectrum(noise(16, 9)), 'x');
  EXPECT_EQ(align_psd_curves({c})[0].values, c.values);
  const PSDCurve d = directional_psd(power_spectrum(0.1 * noise(16, 10)), 'y');
  const auto out = align_psd_curves({c, d});
  EXPECT_NEAR(out[0].values.front(), out[1].values.front(), 1e-12);
  for (std::size_t k = 0; k < out.size(); ++k) {
    const auto& src = k == 0 ? c : d;
    const double shift = out[k].values[0] - src.values[0];
    for (std::size_t s = 0; s < src.values.size(); ++s) EXPECT_NEAR(out[k].values[s] - src.values[s], shift, 1e-12);
  }
}

TEST(Flatness, HandCases) {
  EXPECT_EQ(flatness_score(std::vector<double>{1.5, 1.5, 1.5}), 0.0);
  // mean 0.75, spike deviation 3 (1 - 1/4).
  EXPECT_NEAR(flatness_score(std::vector<double>{0, 0, 0, 3}), 2.25, 1e-15);
  EXPECT_NEAR(flatness_score(std::vector<double>{0, 1, 2, 3}), 1.5, 1e-15);
  EXPECT_THROW(flatness_score(std::vector<double>{}), ShapeError);
}

TEST(Flatness, NoiseEnsembleWithinBound) {
  double total = 0.0;
  for (int s = 0; s < 20; ++s) {
    const Eigen::MatrixXd p = power_spectrum(noise(128, 1000 + s));
    total += flatness_score(directional_psd(p, 'x')) + flatness_score(directional_psd(p, 'y'));
  }
  EXPECT_LE(total / 40, kNoiseFlatnessBound);
}

TEST(Flatness, SmoothFieldIsNotFlat) {
  // A smooth bump concentrates power at low frequency.
  const int n = 64;
  Eigen::MatrixXd f(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) f(i, j) = std::exp(-(std::pow(i - 32.0, 2) + std::pow(j - 32.0, 2)) / 50.0);
  EXPECT_GT(flatness_score(directional_psd(power_spectrum(f), 'x')), 10 * kNoiseFlatnessBound);
}

TEST(ErrorMap, ReferenceAsModelIsZero) {
  const auto p = make_problem("helmholtz");
  const auto m = p->reference_model();
  const ErrorField e = error_map(*m, *p, *p->reference(), Lattice::over(*p, 16));
  EXPECT_EQ(e.values.rows(), 16);
  EXPECT_LT(e.values.cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_TRUE(e.mask.all());
}

TEST(ErrorMap, ConstantOffsetIsConstant) {
  const auto p = make_problem("helmholtz");
  const auto m = offset_model(*p, 0.25);
  const ErrorField e = error_map(*m, *p, *p->reference(), Lattice::over(*p, 12));
  EXPECT_LT((e.values.array() - 0.25).abs().maxCoeff(), 1e-14);
}

TEST(ErrorMap, HandCheckedNodes) {
  const auto p = make_problem("helmholtz");
  const auto m = offset_model(*p, 0.0, 2.0);
  const Lattice lat = Lattice::over(*p, 9);
  const ErrorField e = error_map(*m, *p, *p->reference(), lat);
  // 2u - u = u at (x_i, y_j).
  for (auto [i, j] : {std::pair{2, 3}, std::pair{6, 1}}) {
    EXPECT_NEAR(e.values(i, j), helmholtz_exact(lat.node_x(i), lat.node_y(j), 1.0), 1e-14);
  }
  EXPECT_NEAR(lat.node_x(2), -0.5, 1e-15);
  EXPECT_NEAR(lat.node_y(3), -0.25, 1e-15);
}

TEST(Resolution, IdenticalReferencesGiveConstantCurve) {
  const auto p = make_problem("helmholtz");
  const auto zero = offset_model(*p, 0.0, 0.0);
  std::vector<std::shared_ptr<const LatticeReference>> fam;
  for (int n : {16, 32, 64}) fam.push_back(sample_reference(*p->reference(), n, -1, 1, -1, 1, {"u"}));
  const auto pts = resolution_study(*zero, *p, fam);
  ASSERT_EQ(pts.size(), 3u);
  for (const auto& r : pts) EXPECT_NEAR(r.l2rel, 1.0, 1e-12);
  EXPECT_EQ(pts[2].n, 64);
}

TEST(Resolution, AnalyticSamplingStabilizes) {
  const auto p = make_problem("helmholtz");
  const auto m = offset_model(*p, 0.05);
  std::vector<std::shared_ptr<const LatticeReference>> fam;
  for (int n : {16, 32, 64, 128}) fam.push_back(sample_reference(*p->reference(), n, -1, 1, -1, 1, {"u"}));
  const auto pts = resolution_study(*m, *p, fam);
  for (std::size_t k = 2; k < pts.size(); ++k) {
    EXPECT_LT(std::abs(pts[k].l2rel - pts[k - 1].l2rel), std::abs(pts[k - 1].l2rel - pts[k - 2].l2rel));
  }
}

TEST(Resolution, MismatchedFamiliesRejected) {
  const auto p = make_problem("helmholtz");
  const auto m = p->reference_model();
  const auto a = sample_reference(*p->reference(), 16, -1, 1, -1, 1, {"u"});
  const auto b = sample_reference(*p->reference(), 32, -1, 0.5, -1, 1, {"u"});
  EXPECT_THROW(resolution_study(*m, *p, {a, b}), ShapeError);
  EXPECT_THROW(resolution_study(*m, *p, {a, a}), ShapeError);
}

TEST(FeatureMaps, ZeroFeaturesGiveZeroMaps) {
  const auto p = make_problem("helmholtz");
  Rng rng(12);
  PgcanModel m(GridSpec::uniform(2, 9, 8, 2), DecoderSpec{}, rng);
  block(m, "encoder.features").setZero();
  const FeatureMaps f = export_feature_maps(m, *p, Lattice::over(*p, 10));
  EXPECT_EQ(f.mean_f1.norm(), 0.0);
  EXPECT_EQ(f.mean_f2.norm(), 0.0);
}

TEST(FeatureMaps, ConstantFeaturesGiveTanhTimesRepetitions) {
  const auto p = make_problem("helmholtz");
  Rng rng(13);
  PgcanModel m(GridSpec::uniform(2, 9, 4, 2), DecoderSpec{}, rng);
  block(m, "encoder.features").setConstant(0.04);
  block(m, "encoder.kernels").setOnes();
  // Interior of the box, away from the zero-padded border vertices.
  Lattice lat = Lattice::over(*p, 8);
  lat.x0 = lat.y0 = -0.4;
  lat.x1 = lat.y1 = 0.4;
  const FeatureMaps f = export_feature_maps(m, *p, lat);
  EXPECT_LT((f.mean_f1.array() - 2 * std::tanh(9 * 0.04)).abs().maxCoeff(), 1e-14);
  EXPECT_LT((f.mean_f2.array() - 2 * std::tanh(9 * 0.04)).abs().maxCoeff(), 1e-14);
}

TEST(FeatureMaps, SingleChannelHalvesMatchEncoder) {
  const auto p = make_problem("helmholtz");
  Rng rng(14);
  DecoderSpec dec;
  dec.width = 2;
  PgcanModel m(GridSpec::uniform(2, 9, 2, 2), dec, rng);
  const Lattice lat = Lattice::over(*p, 6);
  const FeatureMaps f = export_feature_maps(m, *p, lat);
  const Matrix enc = m.encode_features(p->box().normalize(lat.points(2)));
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 6; ++j) {
      EXPECT_EQ(f.mean_f1(i, j), enc(i * 6 + j, 0));
      EXPECT_EQ(f.mean_f2(i, j), enc(i * 6 + j, 1));
    }
  }
}
