#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "bfq/calibrate.hpp"
#include "bfq/error.hpp"
#include "support.hpp"

using namespace bfq;

namespace {

double skewness(const CalibrationSet& cal) {
  double n = 0, m1 = 0;
  for (const auto& x : cal.x)
    for (double v : x.span()) m1 += v, ++n;
  m1 /= n;
  double m2 = 0, m3 = 0;
  for (const auto& x : cal.x)
    for (double v : x.span()) {
      const double d = v - m1;
      m2 += d * d;
      m3 += d * d * d;
    }
  m2 /= n;
  m3 /= n;
  return m3 / std::pow(m2, 1.5);
}

TrainConfig no_quant() {
  TrainConfig c;
  c.quant.enabled = false;
  return c;
}

}  // namespace

TEST(ReconLoss, RepresentableValuesAreExact) {
  const auto w = DenseMatrix::identity(2);
  const Transform t(init_identity(2));
  EXPECT_EQ(recon_loss(w, DenseVector{1, -1}, t, QuantConfig{}), 0.0);
}

TEST(ReconLoss, EightBitNearLossless) {
  Rng rng(1);
  const auto w = support::random_matrix(16, 16, rng);
  QuantConfig q;
  q.bits = 8;
  for (const Transform& t : {Transform(init_identity(16)), Transform(init_random(16, 3, 1.0)),
                             Transform(init_hadamard(16))}) {
    const auto x = support::random_vector(16, rng);
    const double y2 = std::pow(norm2(mat_vec(w, x).span()), 2);
    EXPECT_LE(recon_loss(w, x, t, q), 1e-3 * y2);
  }
}

TEST(ReconLoss, DisabledQuantizationIsInvariant) {
  Rng rng(2);
  const auto w = support::random_matrix(8, 24, rng);
  QuantConfig q;
  q.enabled = false;
  CompositeParams c = CompositeParams::identity(3, 8);
  c.q1.skew = {0.4, -0.2, 0.9};
  c.b2 = init_random(8, 5, 1.0);
  const auto x = support::random_vector(24, rng);
  EXPECT_LE(recon_loss(w, x, Transform(c), q), 1e-24);
}

TEST(ReconLoss, ShapeMismatch) {
  try {
    recon_loss(DenseMatrix::identity(4), DenseVector(4), Transform(init_identity(8)),
               QuantConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "shape");
  }
}

TEST(UniformLoss, UniformHistogramIsZero) {
  EXPECT_NEAR(kl_to_uniform(std::vector<double>{.25, .25, .25, .25}), 0.0, 1e-15);
  EXPECT_NEAR(uniform_loss(std::vector<double>{-2, -1, 0, 1}, 1.0, 2, 0.01), 0.0, 1e-12);
}

TEST(UniformLoss, PointMass) {
  EXPECT_NEAR(kl_to_uniform(std::vector<double>{0, 0, 1, 0}), std::log(4.0), 1e-6);
}

TEST(UniformLoss, MatchesRecomputation) {
  Rng rng(3);
  std::vector<double> x(64);
  for (double& v : x) v = rng.normal();
  const double s = compute_scale(x, 2);
  const auto p = soft_histogram(x, s, 2, 0.25);
  double z = 0;
  for (double v : p) z += v + 1e-8;
  double kl = 0;
  for (double v : p) {
    const double q = (v + 1e-8) / z;
    kl += q * std::log(q / 0.25);
  }
  EXPECT_NEAR(uniform_loss(x, s, 2, 0.25), kl, 1e-12);
}

TEST(UniformLoss, GradientMatchesDifferences) {
  Rng rng(4);
  std::vector<double> x(32);
  for (double& v : x) v = rng.normal();
  const double s = compute_scale(x, 3);
  auto fixed = [&](const std::vector<double>& y) { return uniform_loss(y, s, 3, 0.25); };
  auto moving = [&](const std::vector<double>& y) {
    return uniform_loss(y, compute_scale(y, 3), 3, 0.25);
  };
  EXPECT_LE(support::rel_error(uniform_loss_grad(x, s, 3, 0.25, false),
                               support::central_diff(fixed, x)),
            1e-6);
  EXPECT_LE(support::rel_error(uniform_loss_grad(x, s, 3, 0.25, true),
                               support::central_diff(moving, x)),
            1e-6);
}

TEST(TotalLoss, Composition) {
  const auto cal = gen_synthetic(Archetype::PositiveTail, 16, 8, 1);
  const Transform t(init_random(16, 2));
  TrainConfig c;
  c.lambda_uniform = 0.0;
  const auto l0 = total_loss(cal.w, cal.x, t, c);
  EXPECT_EQ(l0.total, l0.recon);
  c.lambda_uniform = 0.3;
  const auto l1 = total_loss(cal.w, cal.x, t, c);
  c.lambda_uniform = 0.6;
  const auto l2 = total_loss(cal.w, cal.x, t, c);
  EXPECT_NEAR(l2.total - l1.total, 0.3 * l1.uniform, 1e-14);
  EXPECT_EQ(l1.recon, l0.recon);
}

TEST(TotalLoss, ZeroReconLeavesUniform) {
  const auto w = DenseMatrix::identity(2);
  const std::vector<DenseVector> xs{DenseVector{1, -1}};
  TrainConfig c;
  c.lambda_uniform = 1.0;
  const auto l = total_loss(w, xs, Transform(init_identity(2)), c);
  EXPECT_EQ(l.recon, 0.0);
  EXPECT_EQ(l.total, l.uniform);
}

TEST(TotalLoss, EmptySamples) {
  try {
    total_loss(DenseMatrix::identity(2), {}, Transform(init_identity(2)), TrainConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "empty");
  }
}

TEST(LossAndGrad, ZeroWithoutQuantization) {
  const auto cal = gen_synthetic(Archetype::Boundary, 32, 4, 3);
  TrainConfig c = no_quant();
  c.lambda_uniform = 0.0;
  const auto lg = loss_and_grad(cal.w, cal.x, Transform(init_random(32, 1, 1.0)), c);
  for (double g : lg.grad) EXPECT_LE(std::abs(g), 1e-12);
}

TEST(LossAndGrad, SmoothSurrogateMatchesDifferences) {
  // Without fake quantization the loss is the uniformity term alone, which is
  // smooth away from ties in max |x_rot|.
  const auto cal = gen_synthetic(Archetype::PositiveTail, 24, 6, 4);
  TrainConfig c = no_quant();
  c.lambda_uniform = 1.0;
  c.factorization = std::make_pair<std::size_t, std::size_t>(3, 8);
  Rng rng(9);
  CompositeParams p = CompositeParams::identity(3, 8);
  for (double& v : p.q1.skew) v = rng.uniform(-0.5, 0.5);
  p.b2 = init_random(8, 2, 1.0);
  const Transform t(p);
  c.scale_gradient = true;
  const auto lg = loss_and_grad(cal.w, cal.x, t, c);
  auto f = [&](const std::vector<double>& theta) {
    return total_loss(cal.w, cal.x, with_flat_params(t, theta), c).total;
  };
  EXPECT_LE(support::rel_error(lg.grad, support::central_diff(f, flat_params(t))), 1e-5);
}

TEST(CosineLr, Examples) {
  EXPECT_EQ(cosine_lr(0, 100, 0.01), 0.01);
  EXPECT_NEAR(cosine_lr(100, 100, 0.01), 0.0, 1e-18);
  EXPECT_NEAR(cosine_lr(50, 100, 0.01), 0.005, 1e-17);
  EXPECT_THROW(cosine_lr(101, 100, 0.01), Error);
  EXPECT_THROW(cosine_lr(-1, 100, 0.01), Error);
}

TEST(Train, ZeroStepsReturnsInit) {
  const auto cal = gen_synthetic(Archetype::Gaussian, 16, 8, 1);
  TrainConfig c;
  c.steps = 0;
  c.init = Init::Hadamard;
  const auto r = train(cal, c);
  ASSERT_NE(r.params.butterfly(), nullptr);
  EXPECT_EQ(*r.params.butterfly(), init_hadamard(16));
  EXPECT_EQ(r.report.loss_curve.size(), 1u);
}

TEST(Train, CurvesAndMonotoneResult) {
  const auto cal = gen_synthetic(Archetype::NegativeRegion, 16, 16, 2);
  TrainConfig c;
  c.steps = 40;
  const auto r = train(cal, c);
  EXPECT_EQ(r.report.loss_curve.size(), 41u);
  EXPECT_EQ(r.report.recon_curve.size(), 41u);
  EXPECT_EQ(r.report.uniform_curve.size(), 41u);
  EXPECT_LE(r.report.loss_curve.back(), r.report.loss_curve.front());
  for (double v : r.report.loss_curve) EXPECT_GE(v, 0.0);
  EXPECT_EQ(total_loss(cal.w, cal.x, r.params, c).total, r.report.loss_curve.back());
}

TEST(Train, Deterministic) {
  const auto cal = gen_synthetic(Archetype::Boundary, 16, 16, 3);
  TrainConfig c;
  c.steps = 20;
  c.init = Init::Random;
  c.seed = 5;
  const auto a = train(cal, c);
  const auto b = train(cal, c);
  EXPECT_EQ(a.report.loss_curve, b.report.loss_curve);
  EXPECT_EQ(flat_params(a.params), flat_params(b.params));
}

TEST(Train, CompositeForNonPowerOfTwo) {
  const auto cal = gen_synthetic(Archetype::PositiveTail, 24, 8, 3);
  TrainConfig c;
  c.steps = 5;
  const auto r = train(cal, c);
  ASSERT_NE(r.params.composite(), nullptr);
  EXPECT_EQ(r.params.composite()->d1, 3u);
  EXPECT_EQ(r.params.composite()->d2, 8u);
}

TEST(Train, DivergenceIsReported) {
  const auto cal = gen_synthetic(Archetype::PositiveTail, 16, 32, 0);
  TrainConfig c;
  c.steps = 5;
  c.lr0 = std::numeric_limits<double>::max();
  try {
    train(cal, c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "diverged");
  }
}

TEST(GenSynthetic, GaussianIsSymmetric) {
  const auto cal = gen_synthetic(Archetype::Gaussian, 64, 157, 1);
  EXPECT_LE(std::abs(skewness(cal)), 0.2);
}

TEST(GenSynthetic, PositiveTailIsSkewed) {
  EXPECT_GT(skewness(gen_synthetic(Archetype::PositiveTail, 64, 157, 1)), 1.0);
  EXPECT_LT(skewness(gen_synthetic(Archetype::NegativeRegion, 64, 157, 1)), -1.0);
}

TEST(GenSynthetic, BoundaryOutliersSitAtTen) {
  const auto cal = gen_synthetic(Archetype::Boundary, 64, 4, 2);
  std::size_t at_ten = 0;
  for (double v : cal.x[0].span()) at_ten += std::abs(v) == 10.0;
  EXPECT_EQ(at_ten, 3u);
}

TEST(GenSynthetic, Deterministic) {
  const auto a = gen_synthetic(Archetype::PositiveTail, 32, 16, 9);
  const auto b = gen_synthetic(Archetype::PositiveTail, 32, 16, 9);
  EXPECT_EQ(a.w, b.w);
  EXPECT_EQ(a.x, b.x);
}

TEST(Archetype, ParseErrorListsNames) {
  try {
    parse_archetype("bogus");
    FAIL();
  } catch (const Error& e) {
    const std::string msg = e.what();
    for (const char* name : {"positive-tail", "negative-region", "boundary", "gaussian"}) {
      EXPECT_NE(msg.find(name), std::string::npos) << name;
    }
  }
}
