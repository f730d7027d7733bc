#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "lotta/error.hpp"
#include "lotta/random.hpp"
#include "lotta/sim.hpp"
#include "lotta/treatment.hpp"

using namespace lotta;

namespace {

TreatmentPriorSpec unit_spec() {
  TreatmentPriorSpec s;
  s.eta = 0.2;
  s.cutoff_prior = CutoffPrior::uniform(0.3, 0.7);
  s.bounds = SupportBounds{0.02, 0.1, 0.9, 25};
  s.support = ScoreSupport{0.0, 1.0};
  return s;
}

TreatmentParams step(double c, double base, double j) {
  TreatmentParams p;
  p.cutoff = c;
  p.jump = j;
  p.window_left = 0.1;
  p.window_right = 0.1;
  p.outer_left.intercept = base;
  derive_intercepts(p);
  return p;
}

}  // namespace

TEST(TreatmentProb, StepFunction) {
  const auto p = step(0.5, 0.1, 0.5);
  EXPECT_DOUBLE_EQ(p.prob(0.2), 0.1);
  EXPECT_DOUBLE_EQ(p.prob(0.45), 0.1);
  EXPECT_DOUBLE_EQ(p.prob(0.5), 0.6);
  EXPECT_DOUBLE_EQ(p.prob(0.9), 0.6);
  EXPECT_DOUBLE_EQ(p.left_limit_at_cutoff(), 0.1);
  EXPECT_THROW(treatment_prob(p, 1.5, {0.0, 1.0}), Error);
}

TEST(TreatmentProb, ContinuousAtWindowEdges) {
  Rng rng(1);
  const auto spec = unit_spec();
  for (int i = 0; i < 1000; ++i) {
    const auto p = sample_treatment_prior(spec, rng);
    const double el = p.cutoff - p.window_left;
    const double er = p.cutoff + p.window_right;
    EXPECT_NEAR(p.outer_left.at(el), p.inner_left.at(el), 1e-10);
    EXPECT_NEAR(p.inner_right.at(er), p.outer_right.at(er), 1e-10);
  }
}

TEST(CoefficientBounds, DirectSubstitution) {
  TreatmentParams p;
  p.cutoff = 0.5;
  p.jump = 0.2;
  p.window_left = 0.1;
  p.window_right = 0.1;
  const ScoreSupport s{0.0, 1.0};
  const auto a = coefficient_bounds(p, FreeCoefficient::outer_left_slope, s);
  EXPECT_DOUBLE_EQ(a.lo, 0.0);
  EXPECT_DOUBLE_EQ(a.hi, 2.0);
  p.outer_left.slope = 1.0;
  const auto b = coefficient_bounds(p, FreeCoefficient::outer_left_intercept, s);
  EXPECT_DOUBLE_EQ(b.lo, 0.0);
  EXPECT_NEAR(b.hi, 0.4, 1e-15);
}

TEST(CoefficientBounds, EmptyWhenWindowsLeaveSupport) {
  TreatmentParams p;
  p.cutoff = 0.05;
  p.jump = 0.5;
  p.window_left = 0.1;
  p.window_right = 0.1;
  EXPECT_TRUE(coefficient_bounds(p, FreeCoefficient::outer_left_slope, {0.0, 1.0}).empty());
}

TEST(CoefficientBounds, ChainedSamplingIsAlwaysValid) {
  Rng rng(42);
  const auto spec = unit_spec();
  for (int trial = 0; trial < 10000; ++trial) {
    const auto p = sample_treatment_prior(spec, rng);
    ASSERT_TRUE(std::isfinite(log_prior_treatment(p, spec)));
    EXPECT_NEAR(p.prob(p.cutoff) - p.left_limit_at_cutoff(), p.jump, 1e-10);
    EXPECT_GE(p.jump, spec.eta);
    double prev = -1;
    for (int k = 0; k <= 1000; ++k) {
      const double v = p.prob(k / 1000.0);
      ASSERT_GE(v, -1e-12);
      ASSERT_LE(v, 1 + 1e-12);
      ASSERT_GE(v, prev - 1e-12);
      prev = v;
    }
  }
}

TEST(LogPriorTreatment, RejectsViolations) {
  const auto spec = unit_spec();
  Rng rng(7);
  auto p = sample_treatment_prior(spec, rng);
  auto bad = p;
  bad.inner_left.slope = -0.5;
  derive_intercepts(bad);
  EXPECT_EQ(log_prior_treatment(bad, spec), -std::numeric_limits<double>::infinity());
  bad = p;
  bad.jump = spec.eta - 1e-6;
  derive_intercepts(bad);
  EXPECT_EQ(log_prior_treatment(bad, spec), -std::numeric_limits<double>::infinity());
}

TEST(LogPriorTreatment, MatchesIntervalLengths) {
  const auto spec = unit_spec();
  Rng rng(8);
  for (int i = 0; i < 200; ++i) {
    const auto p = sample_treatment_prior(spec, rng);
    const double c = p.cutoff, j = p.jump, kl = p.window_left, kr = p.window_right;
    const double el = c - kl, er = c + kr;
    // Headroom below 1 at each anchor, over the distance it must cover.
    const double len_a2l = (1 - j) / (el - 0.0);
    const double len_b2l = (1 - j - p.outer_left.slope * el) + p.outer_left.slope * 0.0;
    const double len_a1l = (1 - j - p.outer_left.at(el)) / kl;
    const double len_a1r = (1 - p.left_limit_at_cutoff() - j) / kr;
    const double len_a2r = (1 - p.inner_right.at(er)) / (1.0 - er);
    double expected = 1.0 / (0.7 - 0.3) / (1 - spec.eta);
    expected /= (c - spec.bounds.lower - spec.bounds.d_x);
    expected /= (spec.bounds.upper - c - spec.bounds.d_x);
    expected /= len_a2l * len_b2l * len_a1l * len_a1r * len_a2r;
    EXPECT_NEAR(std::exp(log_prior_treatment(p, spec)) / expected, 1.0, 1e-9);
  }
}

TEST(LogLikTreatment, SinglePoints) {
  auto p = step(0.5, 0.25, 0.5);
  const double x[] = {0.6};
  const int t1[] = {1};
  const int t0[] = {0};
  p = step(0.5, 0.0, 0.5);
  EXPECT_NEAR(log_lik_treatment(p, x, t1), std::log(0.5), 1e-15);
  EXPECT_NEAR(log_lik_treatment(p, x, t1), -0.693147, 1e-6);
  const auto sure = step(0.5, 0.0, 1.0);
  EXPECT_NEAR(log_lik_treatment(sure, x, t1), 0.0, 1e-11);
  EXPECT_LT(log_lik_treatment(sure, x, t0), -20.0);
}

TEST(LogLikTreatment, MatchesNaiveSum) {
  auto spec = sim::scenario("3A");
  spec.n = 100;
  const auto d = sim::gen_dataset(spec, 3);
  TreatmentPriorSpec ps;
  ps.eta = 0.2;
  ps.cutoff_prior = CutoffPrior::uniform(-0.3, 0.3);
  ps.bounds = SupportBounds{0.05, -0.7, 0.6, 25};
  ps.support = {-1.0, 1.0};
  Rng rng(9);
  const auto p = sample_treatment_prior(ps, rng);
  double naive = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    double q = p.prob(d.scores[i]);
    q = std::min(std::max(q, 1e-12), 1 - 1e-12);
    naive += d.treatments[i] == 1 ? std::log(q) : std::log(1 - q);
  }
  EXPECT_NEAR(log_lik_treatment(p, d), naive, 1e-9);
}

TEST(CutoffPrior, DiscreteMixtures) {
  const auto m = CutoffPrior::point_mass_mixture(355, 0.9, 300, 400, 5);
  ASSERT_TRUE(m.index_of(355).has_value());
  EXPECT_NEAR(std::exp(m.log_density(355)), 0.9, 1e-12);
  double total = 0;
  for (double w : m.weights()) total += w;
  EXPECT_NEAR(total, 1.0, 1e-12);
  const auto bb = CutoffPrior::beta_binomial(0, 10, 1, 2, 2);
  EXPECT_EQ(bb.points().size(), 11u);
  EXPECT_NEAR(bb.mean(), 5.0, 1e-12);
  EXPECT_THROW(CutoffPrior::uniform(1, 0), Error);
}

TEST(CutoffPrior, TextRoundTripAndMapping) {
  for (const std::string text : {"uniform:-0.8:0.2", "beta:0:1:2:3", "grid:300:400:5",
                                 "point:0.25"}) {
    const auto p = CutoffPrior::parse(text);
    const auto q = CutoffPrior::parse(p.to_string());
    EXPECT_EQ(p.kind(), q.kind());
    EXPECT_DOUBLE_EQ(p.mean(), q.mean());
  }
  const ScoreScale scale{10.0, -2.0};
  const auto raw = CutoffPrior::uniform(-1.0, 3.0);
  const auto mapped = raw.mapped(scale);
  EXPECT_DOUBLE_EQ(mapped.lower(), 0.1);
  EXPECT_DOUBLE_EQ(mapped.upper(), 0.5);
  EXPECT_NEAR(mapped.unmapped(scale).lower(), -1.0, 1e-12);
}

TEST(CutoffPrior, SampleMoments) {
  const auto p = CutoffPrior::scaled_beta(0.2, 0.6, 2, 5);
  Rng rng(10);
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double v = p.sample(rng);
    s += v;
    s2 += v * v;
  }
  const double mean = s / n;
  EXPECT_NEAR(mean, p.mean(), 4 * std::sqrt(p.variance() / n));
  EXPECT_NEAR(s2 / n - mean * mean, p.variance(), 0.02 * p.variance());
}
