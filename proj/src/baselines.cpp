#include "lotta/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>
#include <fmt/format.h>

#include "lotta/error.hpp"
#include "lotta/posterior.hpp"
#include "lotta/stats.hpp"

namespace lotta {

namespace {

struct SideFit {
  double y0 = 0.0;  // intercepts at the cutoff
  double t0 = 0.0;
  double var_y = 0.0;
  double var_t = 0.0;
  double cov_yt = 0.0;
  std::size_t n = 0;
};

// Weighted polynomial fit of outcome and treatment on one side, with HC0
// sandwich variances of the two intercepts and their covariance.
SideFit fit_side(const Dataset& data, double cutoff, bool left, int degree,
                 const std::function<double(double)>& weight) {
  std::vector<std::size_t> rows;
  std::vector<double> w;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double x = data.scores[i];
    if ((x < cutoff) != left) continue;
    const double wi = weight(x - cutoff);
    if (wi > 0.0) {
      rows.push_back(i);
      w.push_back(wi);
    }
  }
  const auto p = static_cast<Eigen::Index>(degree + 1);
  if (rows.size() < std::max<std::size_t>(kMinSidePoints, static_cast<std::size_t>(p)))
    throw Error(fmt::format("too few points on the {} side of {} ({})", left ? "left" : "right",
                            cutoff, rows.size()));
  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd X(n, p);
  Eigen::VectorXd y(n), t(n), W(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto i = rows[static_cast<std::size_t>(r)];
    const double d = data.scores[i] - cutoff;
    double v = 1.0;
    for (Eigen::Index k = 0; k < p; ++k, v *= d) X(r, k) = v;
    y[r] = data.outcomes[i];
    t[r] = data.treatments[i];
    W[r] = w[static_cast<std::size_t>(r)];
  }
  const Eigen::MatrixXd XtW = X.transpose() * W.asDiagonal();
  const Eigen::MatrixXd bread = (XtW * X).inverse();
  const Eigen::VectorXd by = bread * (XtW * y);
  const Eigen::VectorXd bt = bread * (XtW * t);
  const Eigen::VectorXd ey = y - X * by;
  const Eigen::VectorXd et = t - X * bt;
  // Row 0 of bread * X' W, so each intercept is a linear combination of data.
  const Eigen::RowVectorXd a = bread.row(0) * XtW;
  SideFit f;
  f.y0 = by[0];
  f.t0 = bt[0];
  f.var_y = (a.array().square() * ey.transpose().array().square()).sum();
  f.var_t = (a.array().square() * et.transpose().array().square()).sum();
  f.cov_yt = (a.array().square() * (ey.array() * et.array()).transpose()).sum();
  f.n = rows.size();
  return f;
}

LLREstimate combine(const SideFit& l, const SideFit& r, double level, bool sharp) {
  LLREstimate e;
  e.outcome_jump = r.y0 - l.y0;
  const double var_n = l.var_y + r.var_y;
  e.outcome_jump_se = std::sqrt(var_n);
  e.n_left = l.n;
  e.n_right = r.n;
  if (sharp) {
    e.tau_hat = e.outcome_jump;
    e.se = e.outcome_jump_se;
  } else {
    const double num = e.outcome_jump;
    const double den = r.t0 - l.t0;
    const double var_d = l.var_t + r.var_t;
    const double cov = l.cov_yt + r.cov_yt;
    e.treatment_jump = den;
    e.treatment_jump_se = std::sqrt(var_d);
    e.unstable = std::abs(den) < kUnstableJump;
    e.tau_hat = num / den;
    const double v = var_n / (den * den) + num * num * var_d / std::pow(den, 4) -
                     2.0 * num * cov / std::pow(den, 3);
    e.se = std::sqrt(std::max(0.0, v));
  }
  const double z =
      boost::math::quantile(boost::math::normal_distribution<double>(), 0.5 * (1.0 + level));
  e.ci = {e.tau_hat - z * e.se, e.tau_hat + z * e.se};
  return e;
}

}  // namespace

nlohmann::json LLREstimate::to_json() const {
  return {{"tau_hat", tau_hat},
          {"se", se},
          {"ci", {ci.lo, ci.hi}},
          {"outcome_jump", outcome_jump},
          {"outcome_jump_se", outcome_jump_se},
          {"treatment_jump", treatment_jump},
          {"treatment_jump_se", treatment_jump_se},
          {"n_left", n_left},
          {"n_right", n_right},
          {"bandwidth", bandwidth},
          {"unstable", unstable}};
}

double rule_of_thumb_bandwidth(const Dataset& data, double cutoff) {
  if (data.size() < 50) throw Error("rule-of-thumb bandwidth needs at least 50 points");
  const double n = static_cast<double>(data.size());
  double h = 1.06 * stats::sd(data.scores) * std::pow(n, -0.2);
  std::vector<double> left, right;
  for (double x : data.scores) (x < cutoff ? left : right).push_back(std::abs(x - cutoff));
  for (auto* side : {&left, &right}) {
    if (side->size() < kMinSidePoints)
      throw Error(fmt::format("fewer than {} points on one side of {}", kMinSidePoints, cutoff));
    std::nth_element(side->begin(), side->begin() + (kMinSidePoints - 1), side->end());
    // Triangular weights vanish at distance h, so stay just beyond the 10th point.
    const double need = (*side)[kMinSidePoints - 1] * (1.0 + 1e-9) + 1e-12;
    h = std::max(h, need);
  }
  return h;
}

LLREstimate llr_fit(const Dataset& data, double cutoff, const LLRConfig& config) {
  const double h = config.bandwidth ? *config.bandwidth : rule_of_thumb_bandwidth(data, cutoff);
  if (!(h > 0.0)) throw Error("bandwidth must be positive");
  const auto kernel = [h](double d) { return std::max(0.0, 1.0 - std::abs(d) / h); };
  const auto l = fit_side(data, cutoff, true, 1, kernel);
  const auto r = fit_side(data, cutoff, false, 1, kernel);
  LLREstimate e = combine(l, r, config.level, config.sharp);
  e.bandwidth = h;
  return e;
}

LLREstimate cubic_two_sided(const Dataset& data, double cutoff, double level, bool sharp) {
  const auto flat = [](double) { return 1.0; };
  const auto l = fit_side(data, cutoff, true, 3, flat);
  const auto r = fit_side(data, cutoff, false, 3, flat);
  LLREstimate e = combine(l, r, level, sharp);
  e.bandwidth = std::numeric_limits<double>::infinity();
  return e;
}

PluginEstimate plugin_estimate(const Dataset& data, CutoffSource source,
                               const PluginConfig& config) {
  const auto kind =
      config.cutoff_prior.is_discrete() ? SampleKind::discrete : SampleKind::continuous;
  PluginEstimate out;
  if (source == CutoffSource::two_constant_map) {
    const auto bounds = compute_support_bounds(data);
    const auto draws =
        two_constant_posterior(data, config.cutoff_prior, config.eta, config.two_constant, &bounds);
    out.cutoff = map_estimate(draws.cutoff, kind);
  } else {
    auto cfg = config.sampler;
    cfg.mode = FitMode::treatment_only;
    const auto spec = make_model_spec(data, config.eta, config.cutoff_prior);
    const auto fit = run(data, spec, cfg);
    out.cutoff = map_estimate(fit.draws.pooled("c"), kind);
  }
  out.llr = llr_fit(data, out.cutoff, config.llr);
  return out;
}

}  // namespace lotta
