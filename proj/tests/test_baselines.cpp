#include <cmath>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "lotta/baselines.hpp"
#include "lotta/error.hpp"
#include "lotta/random.hpp"
#include "lotta/sim.hpp"
#include "lotta/stats.hpp"

using namespace lotta;

namespace {

Dataset noisy_linear(std::uint64_t seed, int n = 500) {
  Rng rng(seed);
  Dataset d;
  d.support_lo = -1;
  d.support_hi = 1;
  for (int i = 0; i < n; ++i) {
    const double x = rng.uniform(-1, 1);
    d.scores.push_back(x);
    d.treatments.push_back(rng.bernoulli(x >= 0 ? 0.8 : 0.2) ? 1 : 0);
    d.outcomes.push_back(0.5 + x + 0.3 * d.treatments.back() + rng.normal(0, 0.2));
  }
  return d;
}

struct SideFit {
  double intercept, var;
};

// Weighted least squares intercept at the cutoff with HC0 variance.
SideFit oracle_side(const Dataset& d, double c, double h, bool left, bool treatment) {
  std::vector<int> rows;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double u = d.scores[i] - c;
    if ((left ? u < 0 : u >= 0) && std::abs(u) < h) rows.push_back(static_cast<int>(i));
  }
  Eigen::MatrixXd X(rows.size(), 2);
  Eigen::VectorXd y(rows.size()), w(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const double u = d.scores[rows[k]] - c;
    X(k, 0) = 1;
    X(k, 1) = u;
    y[k] = treatment ? d.treatments[rows[k]] : d.outcomes[rows[k]];
    w[k] = 1 - std::abs(u) / h;
  }
  const Eigen::MatrixXd bread = (X.transpose() * w.asDiagonal() * X).inverse();
  const Eigen::VectorXd beta = bread * X.transpose() * w.asDiagonal() * y;
  const Eigen::VectorXd e = y - X * beta;
  const Eigen::VectorXd we = w.cwiseProduct(e);
  const Eigen::MatrixXd meat = X.transpose() * we.cwiseProduct(we).asDiagonal() * X;
  return {beta[0], (bread * meat * bread)(0, 0)};
}

}  // namespace

TEST(Llr, ExactOnPiecewiseLinearData) {
  Dataset d;
  d.support_lo = 0;
  d.support_hi = 1;
  for (int i = 0; i < 200; ++i) {
    const double x = (i + 0.5) / 200;
    d.scores.push_back(x);
    d.treatments.push_back(x >= 0.5);
    d.outcomes.push_back(x < 0.5 ? 1 + 2 * x : 1.7 - x);
  }
  LLRConfig cfg;
  cfg.sharp = true;
  cfg.bandwidth = 0.3;
  const auto e = llr_fit(d, 0.5, cfg);
  EXPECT_NEAR(e.tau_hat, (1.7 - 0.5) - (1 + 1), 1e-10);
  EXPECT_NEAR(e.se, 0.0, 1e-8);
  EXPECT_DOUBLE_EQ(e.treatment_jump, 1.0);
  const auto cubic = cubic_two_sided(d, 0.5, 0.95, true);
  EXPECT_NEAR(cubic.tau_hat, -0.8, 1e-9);
}

TEST(Llr, MatchesWeightedLeastSquaresOracle) {
  const auto d = noisy_linear(1);
  LLRConfig cfg;
  cfg.bandwidth = 0.4;
  const auto e = llr_fit(d, 0.0, cfg);
  const auto yl = oracle_side(d, 0, 0.4, true, false), yr = oracle_side(d, 0, 0.4, false, false);
  const auto tl = oracle_side(d, 0, 0.4, true, true), tr = oracle_side(d, 0, 0.4, false, true);
  EXPECT_NEAR(e.outcome_jump, yr.intercept - yl.intercept, 1e-10);
  EXPECT_NEAR(e.treatment_jump, tr.intercept - tl.intercept, 1e-10);
  EXPECT_NEAR(e.tau_hat, e.outcome_jump / e.treatment_jump, 1e-12);
  EXPECT_NEAR(e.outcome_jump_se, std::sqrt(yl.var + yr.var), 1e-10);
  EXPECT_NEAR(e.treatment_jump_se, std::sqrt(tl.var + tr.var), 1e-10);
  EXPECT_NEAR(e.ci.hi - e.tau_hat, 1.959964 * e.se, 1e-5);
  EXPECT_FALSE(e.unstable);
}

TEST(Llr, RuleOfThumbBandwidth) {
  Rng rng(2);
  Dataset d;
  d.support_lo = -2;
  d.support_hi = 2;
  for (int i = 0; i < 500; ++i) {
    d.scores.push_back(rng.normal(0, 0.25));
    d.treatments.push_back(d.scores.back() >= 0);
    d.outcomes.push_back(0);
  }
  const double h = rule_of_thumb_bandwidth(d, 0.0);
  EXPECT_NEAR(h, 1.06 * stats::sd(d.scores) * std::pow(500.0, -0.2), 1e-12);
  EXPECT_NEAR(h, 0.0764, 0.005);
  Dataset tiny = d;
  tiny.scores.resize(20);
  tiny.treatments.resize(20);
  tiny.outcomes.resize(20);
  EXPECT_THROW(rule_of_thumb_bandwidth(tiny, 0.0), Error);
}

TEST(Llr, BandwidthGrowsToKeepPointsOnEachSide) {
  Dataset d;
  d.support_lo = 0;
  d.support_hi = 1;
  for (int i = 0; i < 200; ++i) {
    const double x = i < 190 ? 0.01 * (i % 50) : 0.6 + 0.03 * (i - 190);
    d.scores.push_back(x);
    d.treatments.push_back(x >= 0.55);
    d.outcomes.push_back(x);
  }
  const double h = rule_of_thumb_bandwidth(d, 0.55);
  int right = 0;
  for (double x : d.scores) right += x >= 0.55 && x - 0.55 < h;
  EXPECT_GE(right, 10);
}

TEST(Llr, FlagsVanishingFirstStage) {
  auto d = noisy_linear(3);
  for (auto& t : d.treatments) t = 1;
  d.treatments[0] = 0;
  LLRConfig cfg;
  cfg.bandwidth = 0.5;
  EXPECT_TRUE(llr_fit(d, 0.0, cfg).unstable);
}

TEST(Plugin, RecoversCutoffOnClearJump) {
  auto spec = sim::scenario("2A");
  const auto raw = sim::gen_dataset(spec, 0);
  PluginConfig cfg;
  cfg.cutoff_prior = CutoffPrior::uniform(-0.8, 0.2);
  cfg.two_constant.draws = 3000;
  const auto est = plugin_estimate(raw, CutoffSource::two_constant_map, cfg);
  EXPECT_NEAR(est.cutoff, 0.0, 0.05);
  EXPECT_GT(est.llr.bandwidth, 0.0);
}
