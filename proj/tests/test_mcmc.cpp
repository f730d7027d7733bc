#include <cmath>
#include <limits>
#include <sstream>

#include <gtest/gtest.h>

#include "lotta/adaptive.hpp"
#include "lotta/error.hpp"
#include "lotta/mcmc.hpp"
#include "lotta/random.hpp"
#include "lotta/sim.hpp"
#include "lotta/stats.hpp"

using namespace lotta;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

NormalizedData scenario_data(const std::string& name, int rep = 0, int n = 500) {
  auto spec = sim::scenario(name);
  spec.n = n;
  const auto d = sim::gen_dataset(spec, rep);
  return normalize(d.scores, d.outcomes, d.treatments, OutcomeKind::continuous);
}

SamplerConfig small_config(FitMode mode = FitMode::joint, std::uint64_t seed = 1) {
  SamplerConfig c;
  c.chains = 2;
  c.burn_in = 500;
  c.adapt = 300;
  c.draws = 500;
  c.threads = 1;
  c.seed = seed;
  c.mode = mode;
  return c;
}

Dataset step_data(double lo_p, double hi_p, double at, std::uint64_t seed, int n = 400) {
  Rng rng(seed);
  Dataset d;
  for (int i = 0; i < n; ++i) {
    const double x = (i + 0.5) / n;
    d.scores.push_back(x);
    d.treatments.push_back(rng.bernoulli(x < at ? lo_p : hi_p) ? 1 : 0);
    d.outcomes.push_back(0.0);
  }
  return d;
}

}  // namespace

TEST(LogPosterior, InfeasibleState) {
  const auto nd = scenario_data("2A");
  const auto spec = make_model_spec(nd.data, 0.2, CutoffPrior::uniform(0.2, 0.7));
  Rng rng(1);
  State s;
  s.treatment = sample_treatment_prior(spec.treatment, rng);
  s.outcome = sample_outcome_prior(s.treatment.cutoff, spec.outcome, rng);
  s.treatment.jump = 0.1;
  derive_intercepts(s.treatment);
  EXPECT_EQ(log_posterior(s, nd.data, spec, FitMode::joint), kNegInf);
}

TEST(LogPosterior, Additivity) {
  const auto nd = scenario_data("2A");
  const auto spec = make_model_spec(nd.data, 0.2, CutoffPrior::uniform(0.2, 0.7));
  Rng rng(2);
  const auto smooth = Smoothing::sigmoid_with(100.0);
  for (int i = 0; i < 50; ++i) {
    State s;
    s.treatment = sample_treatment_prior(spec.treatment, rng);
    const double c = s.treatment.cutoff;
    s.outcome = sample_outcome_prior(c, spec.outcome, rng);
    const double joint = log_posterior(s, nd.data, spec, FitMode::joint);
    State t = s;
    t.has_outcome = false;
    const double treat = log_posterior(t, nd.data, spec, FitMode::treatment_only);
    const double out_prior = log_prior_outcome(s.outcome, c, s.treatment.jump, spec.outcome);
    const double out_lik = log_lik_outcome(s.outcome, nd.data, c, smooth);
    EXPECT_NEAR(joint - treat, out_prior + out_lik, 1e-9 * std::abs(joint));
    const double sum = log_prior_treatment(s.treatment, spec.treatment) +
                       log_lik_treatment(s.treatment, nd.data) + out_prior + out_lik;
    EXPECT_NEAR(joint, sum, 1e-9 * std::abs(sum));
  }
}

TEST(InitChains, StartsNearObviousStep) {
  int near = 0;
  const int seeds = 20;
  for (int seed = 1; seed <= seeds; ++seed) {
    Dataset d = step_data(0.0, 1.0, 0.5, seed);
    const auto spec = make_model_spec(d, 0.2, CutoffPrior::uniform(0.2, 0.8));
    auto cfg = small_config(FitMode::joint, seed);
    cfg.chains = 1;
    const auto init = init_chains(d, spec, cfg);
    if (std::abs(init[0].treatment.cutoff - 0.5) <= 0.1) ++near;
  }
  EXPECT_GE(near, 18);
}

TEST(InitChains, ModeAndDeterminism) {
  const auto nd = scenario_data("2A");
  const auto spec = make_model_spec(nd.data, 0.2, CutoffPrior::uniform(0.2, 0.7));
  const auto only = init_chains(nd.data, spec, small_config(FitMode::treatment_only));
  for (const auto& s : only) EXPECT_FALSE(s.has_outcome);
  const auto a = init_chains(nd.data, spec, small_config());
  const auto b = init_chains(nd.data, spec, small_config());
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    Draw da{a[k].treatment, a[k].outcome, 0.0}, db{b[k].treatment, b[k].outcome, 0.0};
    EXPECT_EQ(scalar_values(da, true), scalar_values(db, true));
  }
}

TEST(Run, DeterministicAndValid) {
  const auto nd = scenario_data("2A", 1, 300);
  const auto spec = make_model_spec(nd.data, 0.2, CutoffPrior::uniform(0.2, 0.7));
  const auto a = run(nd.data, spec, small_config());
  const auto b = run(nd.data, spec, small_config());
  ASSERT_EQ(a.draws.total(), 1000u);
  const auto fa = a.draws.flattened(), fb = b.draws.flattened();
  for (std::size_t i = 0; i < fa.size(); ++i) {
    ASSERT_EQ(scalar_values(fa[i], true), scalar_values(fb[i], true));
    State s{fa[i].treatment, fa[i].outcome, true};
    ASSERT_TRUE(std::isfinite(log_posterior(s, nd.data, spec, FitMode::joint)));
  }
  for (double r : a.diagnostics.rhat) EXPECT_GE(r, 0.99);
}

TEST(Run, ConcentratesOnTrueCutoff) {
  // True cutoff 0 sits at normalized position -min / range.
  const auto nd = scenario_data("2A", 2);
  const auto spec = make_model_spec(nd.data, 0.2,
                                    CutoffPrior::uniform(-0.8, 0.2).mapped(nd.score_scale));
  auto cfg = small_config();
  cfg.burn_in = 1500;
  cfg.draws = 1500;
  const auto fit = run(nd.data, spec, cfg);
  const auto c = fit.draws.pooled("c");
  EXPECT_NEAR(nd.score_scale.to_raw(stats::median(c)), 0.0, 0.05);
}

TEST(AdaptiveProposal, TinyStepsAreAlwaysAccepted) {
  AdaptiveProposal prop("x", {1e-9});
  Rng rng(3);
  Eigen::VectorXd x(1), y;
  x[0] = 0.3;
  int accepted = 0;
  for (int i = 0; i < 2000; ++i) {
    prop.propose(x, y, rng);
    const double log_ratio = -0.5 * (y[0] * y[0] - x[0] * x[0]);
    const bool ok = std::log(rng.uniform()) < log_ratio;
    if (ok) {
      x = y;
      ++accepted;
    }
    prop.update(x, ok, false);
  }
  EXPECT_GE(accepted, 1995);
}

TEST(AdaptiveProposal, AdaptsTowardTarget) {
  AdaptiveProposal prop("x", {50.0});
  Rng rng(4);
  Eigen::VectorXd x(1), y;
  x[0] = 0.0;
  for (int i = 0; i < 5000; ++i) {
    prop.propose(x, y, rng);
    const bool ok = std::log(rng.uniform()) < -0.5 * (y[0] * y[0] - x[0] * x[0]);
    if (ok) x = y;
    prop.update(x, ok, true);
  }
  EXPECT_LT(prop.scale(0), 10.0);
}

TEST(TwoConstant, DetailedBalanceOnTwoPoints) {
  const Dataset d = step_data(0.3, 0.6, 0.5, 5, 60);
  const auto prior = CutoffPrior::discrete({0.45, 0.55}, {0.5, 0.5});
  GridOracleSpec g;
  g.cutoffs = prior.points();
  g.cutoff_log_prior = {std::log(0.5), std::log(0.5)};
  std::vector<double> grid;
  for (int i = 0; i < 400; ++i) grid.push_back((i + 0.5) / 400);
  g.grids = {grid, grid};
  g.log_density = [&](double c, std::span<const double> th) {
    if (th[1] - th[0] < 0.2) return kNegInf;
    double ll = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double q = d.scores[i] < c ? th[0] : th[1];
      ll += d.treatments[i] ? std::log(q) : std::log1p(-q);
    }
    return ll;
  };
  const auto exact = grid_oracle_posterior(g).cutoff_pmf;
  TwoConstantConfig cfg;
  cfg.draws = 100000;
  cfg.seed = 6;
  const auto post = two_constant_posterior(d, prior, 0.2, cfg);
  double share = 0;
  for (double c : post.cutoff) share += c == 0.45 ? 1.0 : 0.0;
  share /= post.cutoff.size();
  EXPECT_LE(std::abs(share - exact[0]), 0.02);
}

TEST(TwoConstant, PerfectSeparation) {
  Dataset d = step_data(0.0, 1.0, 0.5, 7);
  const auto prior = CutoffPrior::discrete_uniform(0.3, 0.7, 0.01);
  TwoConstantConfig cfg;
  cfg.draws = 5000;
  const auto post = two_constant_posterior(d, prior, 0.2, cfg);
  std::vector<double> pts(post.cutoff.begin(), post.cutoff.end());
  std::sort(pts.begin(), pts.end());
  EXPECT_NEAR(stats::median(pts), 0.5, 1e-12);
}

TEST(TwoConstant, FlagsEtaAboveTrueJump) {
  Dataset d = step_data(0.4, 0.6, 0.5, 8, 600);
  TwoConstantConfig cfg;
  cfg.draws = 5000;
  const auto post = two_constant_posterior(d, CutoffPrior::uniform(0.2, 0.8), 0.5, cfg);
  EXPECT_TRUE(post.jump_at_lower_bound);
  const auto fine = two_constant_posterior(step_data(0.1, 0.9, 0.5, 8, 600),
                                           CutoffPrior::uniform(0.2, 0.8), 0.2, cfg);
  EXPECT_FALSE(fine.jump_at_lower_bound);
}

TEST(GridOracle, SymmetryFlatnessAndCap) {
  GridOracleSpec g;
  g.cutoffs = {0.4, 0.6};
  g.cutoff_log_prior = {0.0, 0.0};
  g.grids = {{0.5}};
  g.log_density = [](double c, std::span<const double>) { return -std::abs(c - 0.5); };
  auto r = grid_oracle_posterior(g);
  EXPECT_NEAR(r.cutoff_pmf[0], 0.5, 1e-12);
  EXPECT_NEAR(r.cutoff_pmf[1], 0.5, 1e-12);

  g.cutoffs = {0.1, 0.2, 0.3, 0.4};
  g.cutoff_log_prior.assign(4, std::log(0.25));
  g.grids = {{0.1, 0.2, 0.3}, {0.5, 0.6}};
  g.log_density = [](double, std::span<const double>) { return 0.0; };
  r = grid_oracle_posterior(g);
  for (double p : r.cutoff_pmf) EXPECT_NEAR(p, 0.25, 1e-12);
  EXPECT_EQ(r.table.size(), 4u * 3u * 2u);

  g.max_evaluations = 10;
  EXPECT_THROW(grid_oracle_posterior(g), Error);
}

TEST(CutRun, DegenerateCutoffMatchesJoint) {
  // At n=300 the upper bound sits too close to 0 for the windows to fit.
  const auto nd = scenario_data("2A", 3);
  const double c0 = nd.score_scale.to_normalized(0.0);
  const auto spec = make_model_spec(nd.data, 0.2, CutoffPrior::point_mass(c0));
  auto cfg = small_config(FitMode::cut);
  cfg.burn_in = 1000;
  cfg.draws = 2000;
  const auto cut = cut_run(nd.data, spec, cfg);
  cfg.mode = FitMode::joint;
  const auto joint = run(nd.data, spec, cfg);
  for (const auto& d : cut.flattened()) ASSERT_EQ(d.treatment.cutoff, c0);
  const auto tc = cut.pooled("tau"), tj = joint.draws.pooled("tau");
  const double se = std::sqrt(stats::variance(tc) / 200 + stats::variance(tj) / 200);
  EXPECT_NEAR(stats::mean(tc), stats::mean(tj), 4 * se);
}

TEST(Diagnostics, RhatAndEss) {
  EXPECT_DOUBLE_EQ(split_rhat({{1, 1, 1, 1}, {1, 1, 1, 1}}), 1.0);
  Rng rng(9);
  std::vector<std::vector<double>> iid(4, std::vector<double>(2000));
  for (auto& c : iid)
    for (auto& v : c) v = rng.normal();
  EXPECT_NEAR(split_rhat(iid), 1.0, 0.01);
  EXPECT_NEAR(effective_sample_size(iid), 8000, 1200);
  std::vector<std::vector<double>> shifted = iid;
  for (auto& v : shifted[0]) v += 3;
  EXPECT_GT(split_rhat(shifted), 1.05);
}

TEST(DrawsCsv, RoundTrip) {
  const auto nd = scenario_data("2A", 4, 300);
  const auto spec = make_model_spec(nd.data, 0.2, CutoffPrior::uniform(0.2, 0.7));
  auto cfg = small_config();
  cfg.draws = 50;
  const auto fit = run(nd.data, spec, cfg);
  std::stringstream ss;
  write_draws_csv(ss, fit.draws, nd.score_scale, nd.outcome_scale);
  const auto back = read_draws_csv(ss, FitMode::joint, false);
  const auto a = fit.draws.flattened(), b = back.flattened();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    EXPECT_EQ(scalar_values(a[i], true), scalar_values(b[i], true));
}

TEST(Config, Validation) {
  SamplerConfig c;
  c.chains = 0;
  EXPECT_THROW(c.validate(), Error);
  EXPECT_EQ(parse_fit_mode("treatment-only"), FitMode::treatment_only);
  EXPECT_THROW(parse_fit_mode("both"), Error);
}
