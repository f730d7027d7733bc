#include <cmath>
#include <limits>
#include <numbers>

#include <gtest/gtest.h>

#include "lotta/error.hpp"
#include "lotta/outcome.hpp"
#include "lotta/random.hpp"
#include "lotta/stats.hpp"

using namespace lotta;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

OutcomeParams sample_params(double c = 0.5) {
  OutcomeParams p;
  p.edge_left = c - 0.3;
  p.edge_right = c + 0.3;
  p.left = {0.4, 0.8, -2.0, 5.0};
  p.right = {0.9, -0.3, 1.5, -4.0};
  p.noise = {4.0, 2.0, 9.0, 1.0};
  return p;
}

OutcomePriorSpec continuous_spec() {
  OutcomePriorSpec s;
  s.support = SupportBounds{0.02, 0.1, 0.9, 25};
  return s;
}

}  // namespace

TEST(OutcomeMean, LinearWithoutTaylorTerms) {
  auto p = sample_params();
  p.left.quadratic = p.left.cubic = p.right.quadratic = p.right.cubic = 0.0;
  const double c = 0.5;
  EXPECT_DOUBLE_EQ(outcome_mean(p, c, c), p.right.level);
  EXPECT_NEAR(outcome_mean(p, c - 1e-12, c), p.left.level, 1e-11);
  EXPECT_NEAR(outcome_mean(p, 0.05, c), 0.4 + 0.8 * (0.05 - c), 1e-15);
}

TEST(OutcomeMean, RightLevelAtCutoffInEveryMode) {
  const auto p = sample_params();
  EXPECT_DOUBLE_EQ(outcome_mean(p, 0.5, 0.5), p.right.level);
  EXPECT_DOUBLE_EQ(outcome_mean(p, 0.5, 0.5, Smoothing::sigmoid_with(100)), p.right.level);
}

TEST(OutcomeMean, SigmoidDeviationPeaksAtEdges) {
  const auto p = sample_params();
  const double c = 0.5;
  for (bool left : {true, false}) {
    const double edge = left ? p.edge_left : p.edge_right;
    const auto& k = left ? p.left : p.right;
    const double d = edge - c;
    const double at_edge = std::abs(outcome_mean(p, edge, c) -
                                    outcome_mean(p, edge, c, Smoothing::sigmoid_with(100)));
    EXPECT_NEAR(at_edge, 0.5 * std::abs(d * d * (k.quadratic + k.cubic * d)), 1e-12);
    double best = 0.0, arg = 0.0;
    for (int i = 0; i <= 4000; ++i) {
      const double x = left ? i * c / 4000 : c + i * (1 - c) / 4000;
      const double dev =
          std::abs(outcome_mean(p, x, c) - outcome_mean(p, x, c, Smoothing::sigmoid_with(100)));
      if (dev > best) {
        best = dev;
        arg = x;
      }
    }
    EXPECT_NEAR(arg, edge, 0.02);
    EXPECT_NEAR(best, at_edge, 0.1 * at_edge);
  }
}

TEST(OutcomeMean, SmoothingConvergesAwayFromEdges) {
  auto p = sample_params();
  p.edge_left = 0.205;  // midway between grid points
  p.edge_right = 0.795;
  auto max_dev = [&](double s) {
    double m = 0.0;
    for (int i = 0; i <= 100; ++i) {
      const double x = i / 100.0;
      m = std::max(m, std::abs(outcome_mean(p, x, 0.5) -
                               outcome_mean(p, x, 0.5, Smoothing::sigmoid_with(s))));
    }
    return m;
  };
  EXPECT_LT(max_dev(1e4), 1e-3 * max_dev(1e2));
}

TEST(OutcomeMean, TaylorRemainderBound) {
  Rng rng(2);
  for (int i = 0; i < 500; ++i) {
    OutcomeCoefficients k{rng.normal(), rng.normal(), rng.normal(0, 5), rng.normal(0, 5)};
    const double c = 0.5, w = 0.3;
    for (int s = -1; s <= 1; s += 2) {
      const double x = c + s * rng.uniform(0, w);
      EXPECT_LE(std::abs(taylor_remainder(k, x, c)),
                (std::abs(k.quadratic) + std::abs(k.cubic) * w) * (x - c) * (x - c) + 1e-15);
    }
  }
}

TEST(OutcomeSd, PiecewisePrecisions) {
  auto p = sample_params();
  EXPECT_DOUBLE_EQ(outcome_sd(p, 0.6, 0.5), 1.0 / 3.0);
  p.noise.inner_right = 4.0;
  EXPECT_DOUBLE_EQ(outcome_sd(p, 0.6, 0.5), 0.5);
  p.noise.outer_left = p.noise.inner_left;
  EXPECT_DOUBLE_EQ(outcome_sd(p, 0.1, 0.5), outcome_sd(p, 0.4, 0.5));
}

TEST(OutcomeSd, NondecreasingAwayFromCutoff) {
  Rng rng(3);
  const auto spec = continuous_spec();
  for (int i = 0; i < 200; ++i) {
    const double c = rng.uniform(0.3, 0.7);
    const auto p = sample_outcome_prior(c, spec, rng);
    double prev = 0.0;
    for (int k = 0; k <= 100; ++k) {
      const double x = c + k * (1 - c) / 100;
      EXPECT_GE(outcome_sd(p, x, c), prev);
      prev = outcome_sd(p, x, c);
    }
    prev = 0.0;
    for (int k = 1; k <= 100; ++k) {
      const double x = c - k * c / 100;
      EXPECT_GE(outcome_sd(p, x, c), prev);
      prev = outcome_sd(p, x, c);
    }
  }
}

TEST(OutcomePrior, RejectsViolations) {
  const auto spec = continuous_spec();
  auto p = sample_params();
  p.noise.outer_right = p.noise.inner_right + 0.1;
  EXPECT_EQ(log_prior_outcome_continuous(p, 0.5, spec.support, spec), kNegInf);
  p = sample_params();
  p.edge_left = 0.5;
  EXPECT_EQ(log_prior_outcome_continuous(p, 0.5, spec.support, spec), kNegInf);
}

TEST(OutcomePrior, TermwiseRecomputation) {
  const auto spec = continuous_spec();
  Rng rng(4);
  auto norm = [](double x, double sd) {
    return -0.5 * (x / sd) * (x / sd) - std::log(sd * std::sqrt(2 * std::numbers::pi));
  };
  auto gam = [](double x) { return 0.01 * std::log(0.01) - std::lgamma(0.01) + (0.01 - 1) * std::log(x) - 0.01 * x; };
  for (int i = 0; i < 100; ++i) {
    const double c = rng.uniform(0.3, 0.7);
    const auto p = sample_outcome_prior(c, spec, rng);
    const double wl = c - p.edge_left, wr = p.edge_right - c;
    double expected = -std::log(c - 0.02 - 0.1) - std::log(0.9 - c - 0.02);
    expected += norm(p.left.level, 100) + norm(p.left.slope, 100) + norm(p.right.level, 100) +
                norm(p.right.slope, 100);
    expected += norm(p.left.quadratic, 100 / std::sqrt(wl)) + norm(p.left.cubic, 100 / std::sqrt(wl));
    expected += norm(p.right.quadratic, 100 / std::sqrt(wr)) + norm(p.right.cubic, 100 / std::sqrt(wr));
    expected += gam(p.noise.inner_left) + gam(p.noise.inner_right);
    expected += -std::log(p.noise.inner_left) - std::log(p.noise.inner_right);
    EXPECT_NEAR(log_prior_outcome_continuous(p, c, spec.support, spec), expected,
                1e-9 * std::max(1.0, std::abs(expected)));
  }
}

TEST(BinaryTilde, ClosedForms) {
  const auto [a, b] = binary_tilde_transform(0.5, 0.25);
  EXPECT_DOUBLE_EQ(a, 0.0);
  EXPECT_DOUBLE_EQ(b, 1.0);
  EXPECT_NEAR(binary_tilde_transform(0.22, 0.0).first, -1.26567, 1e-5);
  EXPECT_THROW(binary_tilde_transform(0.0, 0.1), Error);
  EXPECT_THROW(binary_tilde_transform(1.0, 0.1), Error);
}

TEST(BinaryTilde, FiniteDifferenceRoundTrip) {
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const double f0 = rng.uniform(0.05, 0.95), f1 = rng.uniform(-1, 1);
    const auto [t0, t1] = binary_tilde_transform(f0, f1);
    EXPECT_NEAR(stats::inv_logit(t0), f0, 1e-12);
    const double h = 1e-6;
    const double fd = (stats::inv_logit(t0 + t1 * h) - stats::inv_logit(t0 - t1 * h)) / (2 * h);
    EXPECT_NEAR(fd, f1, 1e-6);
  }
}

TEST(BinaryMean, AnchorsAndTails) {
  OutcomeParams p;
  p.edge_left = 0.2;
  p.edge_right = 0.8;
  p.left = {0.3, 0.2, 0.0, 0.0};
  p.right = {0.6, 0.1, 0.0, 0.0};
  const double c = 0.5;
  EXPECT_DOUBLE_EQ(outcome_mean_binary(p, c, c), 0.6);
  const auto [t0, t1] = binary_tilde_transform(0.6, 0.1);
  EXPECT_NEAR(outcome_mean_binary(p, 0.8, c), stats::inv_logit(t0 + t1 * 0.3), 1e-15);
  EXPECT_GT(std::abs(outcome_mean_binary(p, 0.8, c) - (0.6 + 0.1 * 0.3)), 1e-6);

  OutcomeParams flat;
  flat.edge_left = 0.2;
  flat.edge_right = 0.8;
  flat.left = {0.5, 0, 0, 0};
  flat.right = {0.5, 0, 0, 0};
  for (int k = 0; k <= 10; ++k) EXPECT_DOUBLE_EQ(outcome_mean_binary(flat, k / 10.0, c), 0.5);
}

TEST(BinaryMean, PriorDrawsStayInsideUnitInterval) {
  OutcomePriorSpec spec = continuous_spec();
  spec.kind = OutcomeKind::binary;
  Rng rng(6);
  for (int i = 0; i < 2000; ++i) {
    const double c = rng.uniform(0.3, 0.7);
    const auto p = sample_outcome_prior(c, spec, rng);
    for (int k = 0; k <= 50; ++k) {
      const double v = outcome_mean_binary(p, k / 50.0, c);
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
  }
}

TEST(BoundedCoupling, JumpBelowLevelGapIsExcluded) {
  OutcomePriorSpec spec = continuous_spec();
  spec.kind = OutcomeKind::bounded;
  spec.bounds = {0.0, 2.0};
  Rng rng(7);
  const double c = 0.5;
  auto p = sample_outcome_prior(c, spec, rng);
  p.left.level = 0.2;
  p.right.level = 1.2;  // gap / (b - a) = 0.5
  EXPECT_EQ(log_prior_outcome(p, c, 0.45, spec), kNegInf);
  EXPECT_TRUE(std::isfinite(log_prior_outcome(p, c, 0.55, spec)));
}

TEST(OutcomeLik, Anchors) {
  OutcomeParams p;
  p.edge_left = 0.2;
  p.edge_right = 0.8;
  p.right = {1.5, 0, 0, 0};
  p.noise = {1, 1, 1, 1};
  const double x[] = {0.6}, y[] = {1.5};
  EXPECT_NEAR(log_lik_outcome(p, x, y, 0.5, OutcomeKind::continuous), -0.918939, 1e-6);

  OutcomeParams b = p;
  b.right = {1.0 - 1e-15, 0, 0, 0};
  const double one[] = {1.0};
  EXPECT_NEAR(log_lik_outcome(b, x, one, 0.5, OutcomeKind::binary), 0.0, 1e-11);
}

TEST(OutcomeLik, MatchesNaiveSum) {
  const auto p = sample_params();
  Rng rng(8);
  std::vector<double> x, y;
  for (int i = 0; i < 200; ++i) {
    x.push_back(rng.uniform());
    y.push_back(outcome_mean(p, x.back(), 0.5) + rng.normal(0, outcome_sd(p, x.back(), 0.5)));
  }
  const auto s = Smoothing::sigmoid_with(100);
  double naive = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double sd = outcome_sd(p, x[i], 0.5);
    const double z = (y[i] - outcome_mean(p, x[i], 0.5, s)) / sd;
    naive += -0.5 * z * z - std::log(sd) - 0.5 * std::log(2 * std::numbers::pi);
  }
  EXPECT_NEAR(log_lik_outcome(p, x, y, 0.5, OutcomeKind::continuous, s), naive, 1e-9);
}
