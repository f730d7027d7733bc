#include <algorithm>
#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "lotta/error.hpp"
#include "lotta/posterior.hpp"
#include "lotta/random.hpp"
#include "lotta/stats.hpp"

using namespace lotta;

namespace {

Draw make_draw(double c, double jump, double left_level, double right_level) {
  Draw d;
  auto& t = d.treatment;
  t.cutoff = c;
  t.jump = jump;
  t.window_left = 0.1;
  t.window_right = 0.1;
  t.outer_left.intercept = 0.1;
  derive_intercepts(t);
  d.outcome.edge_left = c - 0.2;
  d.outcome.edge_right = c + 0.2;
  d.outcome.left.level = left_level;
  d.outcome.right.level = right_level;
  d.tau = (right_level - left_level) / jump;
  return d;
}

}  // namespace

TEST(TauPerDraw, ClosedForms) {
  EXPECT_DOUBLE_EQ(tau_per_draw(make_draw(0.5, 0.4, 0.3, 0.3), false), 0.0);
  EXPECT_NEAR(tau_per_draw(make_draw(0.5, 0.3, 0.4, 0.2), false), -0.6667, 1e-4);
  EXPECT_NEAR(tau_per_draw(make_draw(0.5, 0.6, 0.05, 0.22), false), 0.17 / 0.6, 1e-12);
  EXPECT_NEAR(tau_per_draw(make_draw(0.5, 0.6, 0.05, 0.22), true), 0.17, 1e-12);
}

TEST(MapEstimate, DiscreteAndConstant) {
  std::vector<double> s(150, 2.5);
  EXPECT_DOUBLE_EQ(map_estimate(s, SampleKind::continuous), 2.5);
  std::vector<double> d(10, 350.0);
  d.insert(d.end(), 90, 355.0);
  EXPECT_DOUBLE_EQ(map_estimate(d, SampleKind::discrete), 355.0);
  std::vector<double> tie(50, 1.0);
  tie.insert(tie.end(), 50, 2.0);
  EXPECT_DOUBLE_EQ(map_estimate(tie, SampleKind::discrete), 1.0);
  EXPECT_THROW(map_estimate(std::vector<double>(99, 1.0), SampleKind::discrete), Error);
}

TEST(MapEstimate, PermutationInvariant) {
  Rng rng(1);
  std::vector<double> s(2000);
  for (auto& v : s) v = rng.gamma(3, 1);
  const double a = map_estimate(s, SampleKind::continuous);
  std::reverse(s.begin(), s.end());
  EXPECT_DOUBLE_EQ(map_estimate(s, SampleKind::continuous), a);
}

TEST(Hdi, UniformSpacingTieBreak) {
  std::vector<double> s;
  for (int i = 1; i <= 100; ++i) s.push_back(i);
  const auto h = hdi(s, 0.95);
  EXPECT_DOUBLE_EQ(h.lo, 1.0);
  EXPECT_DOUBLE_EQ(h.hi, 95.0);
  const auto c = hdi(std::vector<double>(200, 3.0), 0.9);
  EXPECT_DOUBLE_EQ(c.lo, 3.0);
  EXPECT_DOUBLE_EQ(c.hi, 3.0);
}

TEST(Hdi, NotWiderThanEqualTailed) {
  Rng rng(2);
  for (int k = 0; k < 50; ++k) {
    std::vector<double> s(500);
    for (auto& v : s) v = k % 2 ? rng.gamma(1.5, 2.0) : rng.normal();
    const auto h = hdi(s, 0.9);
    EXPECT_LE(h.length(), stats::quantile(s, 0.95) - stats::quantile(s, 0.05) + 1e-12);
    const auto inside = std::count_if(s.begin(), s.end(), [&](double v) { return h.contains(v); });
    EXPECT_GE(inside, 450);
  }
}

TEST(Hdi, StandardNormal) {
  Rng rng(3);
  std::vector<double> s(100000);
  for (auto& v : s) v = rng.normal();
  const auto h = hdi(s, 0.95);
  EXPECT_NEAR(h.lo, -1.96, 0.05);
  EXPECT_NEAR(h.hi, 1.96, 0.05);
}

TEST(MapEstimate, StandardNormalMode) {
  // Single-sample KDE modes scatter with sd near 0.06 at this size.
  double sq = 0;
  for (int seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    std::vector<double> s(100000);
    for (auto& v : s) v = rng.normal();
    const double m = map_estimate(s, SampleKind::continuous);
    EXPECT_NEAR(m, 0.0, 0.2);
    sq += m * m;
  }
  EXPECT_LT(std::sqrt(sq / 20), 0.1);
}

TEST(Multimodal, DetectsTwoClusters) {
  Rng rng(4);
  std::vector<double> one(4000), two(4000);
  for (auto& v : one) v = rng.normal();
  for (std::size_t i = 0; i < two.size(); ++i) two[i] = rng.normal(i % 2 ? -3 : 3, 0.5);
  EXPECT_FALSE(multimodal(one));
  EXPECT_TRUE(multimodal(two));
}

TEST(Report, BackTransformsEstimands) {
  PosteriorDraws pd;
  pd.mode = FitMode::joint;
  Rng rng(5);
  std::vector<Draw> chain;
  for (int i = 0; i < 1000; ++i)
    chain.push_back(make_draw(0.4 + 0.01 * rng.normal(), 0.5, 0.1, 0.3 + 0.02 * rng.normal()));
  pd.chains = {chain};
  const ScoreScale ss{200.0, 50.0};
  const OutcomeScale os{3.0};
  const auto r = make_report(pd, ss, os, SampleKind::continuous);
  std::vector<double> tau, c;
  for (const auto& d : chain) {
    tau.push_back(d.tau * 3.0);
    c.push_back(d.treatment.cutoff * 200.0 + 50.0);
  }
  EXPECT_NEAR(r.tau->mean, stats::mean(tau), 1e-9);
  EXPECT_NEAR(r.cutoff.median, stats::median(c), 1e-9);
  EXPECT_NEAR(r.cutoff.hdi.lo, hdi(c).lo, 1e-9);
  EXPECT_TRUE(r.jump.has_value());
  const auto j = r.to_json();
  EXPECT_TRUE(j.contains("tau"));
}

TEST(Report, SnapsToDiscreteSupport) {
  PosteriorDraws pd;
  const ScoreScale ss{7.0, -3.0};
  std::vector<Draw> chain;
  for (int i = 0; i < 200; ++i) chain.push_back(make_draw(ss.to_normalized(0.1), 0.5, 0, 0));
  pd.chains = {chain};
  const double pts[] = {0.1, 0.2};
  for (double c : raw_cutoffs(pd, ss, pts)) EXPECT_EQ(c, 0.1);
}

TEST(FunctionBand, SingleDrawCollapses) {
  const auto d = make_draw(0.5, 0.4, 0.2, 0.5);
  const std::vector<Draw> one = {d};
  const auto grid = linear_grid(0.0, 1.0, 21);
  const auto band = function_band(one, grid, BandTarget::treatment, false, {0.0, 1.0});
  for (std::size_t i = 0; i < grid.size(); ++i) {
    EXPECT_DOUBLE_EQ(band.median[i], d.treatment.prob(grid[i]));
    EXPECT_DOUBLE_EQ(band.lower[i], band.median[i]);
    EXPECT_DOUBLE_EQ(band.upper[i], band.median[i]);
  }
  const auto ob = function_band(one, grid, BandTarget::outcome, false, {0.0, 1.0});
  EXPECT_DOUBLE_EQ(ob.median[10], outcome_mean(d.outcome, 0.5, 0.5));
}

TEST(FunctionBand, WidestWhereCutoffsDisagree) {
  std::vector<Draw> draws = {make_draw(0.4, 0.5, 0, 0), make_draw(0.6, 0.5, 0, 0)};
  const auto grid = linear_grid(0.0, 1.0, 101);
  const auto band = function_band(draws, grid, BandTarget::treatment, false, {0.0, 1.0});
  double widest_at = 0, widest = -1;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    EXPECT_LE(band.lower[i], band.median[i]);
    EXPECT_LE(band.median[i], band.upper[i]);
    EXPECT_GE(band.lower[i], 0.0);
    EXPECT_LE(band.upper[i], 1.0);
    if (band.upper[i] - band.lower[i] > widest + 1e-12) {
      widest = band.upper[i] - band.lower[i];
      widest_at = grid[i];
    }
  }
  EXPECT_GE(widest_at, 0.4 - 1e-12);
  EXPECT_LT(widest_at, 0.6);
  EXPECT_NEAR(widest, 0.95 * 0.5, 1e-12);
}

TEST(JointCTau, CountsAndClusters) {
  Rng rng(6);
  std::vector<double> c, tau;
  for (int i = 0; i < 3000; ++i) {
    const bool a = i % 3 == 0;
    c.push_back(a ? 0.2 : 0.3);
    tau.push_back(rng.normal(a ? -1.0 : 2.0, 0.1));
  }
  const auto s = joint_c_tau(c, tau, SampleKind::discrete);
  ASSERT_EQ(s.groups.size(), 2u);
  EXPECT_EQ(s.groups[0].count + s.groups[1].count, 3000u);
  EXPECT_NEAR(s.groups[0].median, -1.0, 0.02);
  EXPECT_NEAR(s.groups[1].median, 2.0, 0.02);
  EXPECT_NEAR(s.groups[0].share, 1.0 / 3, 1e-12);

  std::vector<double> cc(4000), tt(4000);
  for (std::size_t i = 0; i < cc.size(); ++i) {
    cc[i] = rng.uniform();
    tt[i] = rng.normal();
  }
  const auto b = joint_c_tau(cc, tt, SampleKind::continuous, 20);
  ASSERT_EQ(b.groups.size(), 20u);
  std::size_t total = 0;
  for (const auto& g : b.groups) {
    total += g.count;
    EXPECT_NEAR(g.median, 0.0, 0.25);
    EXPECT_LE(g.whisker_lo, g.q1);
    EXPECT_GE(g.whisker_hi, g.q3);
  }
  EXPECT_EQ(total, 4000u);
}

TEST(Csv, HistogramAndBand) {
  std::vector<double> d(100, 1.0);
  d.insert(d.end(), 300, 2.0);
  std::ostringstream out;
  write_histogram_csv(out, d, SampleKind::discrete);
  EXPECT_EQ(out.str(), "value,density\n1,0.25\n2,0.75\n");
  FunctionBand band;
  band.grid = {0.0};
  band.median = {0.5};
  band.lower = {0.25};
  band.upper = {0.75};
  std::ostringstream b;
  write_band_csv(b, band);
  EXPECT_EQ(b.str().substr(0, 20), "grid,median,lo,hi\n0,");
}
