#include "lotta/outcome.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "lotta/error.hpp"
#include "lotta/stats.hpp"

namespace lotta {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kProbClip = 1e-12;
const double kLogSqrt2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

double log_normal(double x, double sd) {
  const double z = x / sd;
  return -0.5 * z * z - std::log(sd) - kLogSqrt2Pi;
}

double log_gamma_density(double x, double shape, double rate) {
  if (!(x > 0.0)) return kNegInf;
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

double log_uniform(double x, double lo, double hi) {
  if (!(hi > lo) || x < lo || x > hi) return kNegInf;
  return -std::log(hi - lo);
}

const OutcomeCoefficients& side(const OutcomeParams& p, double x, double c) {
  return x < c ? p.left : p.right;
}

double linear(const OutcomeCoefficients& k, double d) { return k.level + k.slope * d; }

double trimmed(const OutcomeCoefficients& k, double d) {
  return d * d * (k.quadratic + k.cubic * d);
}

bool windows_ok(const OutcomeParams& p, double c, const SupportBounds& s) {
  return p.edge_left > s.lower && p.edge_left < c - s.d_x && p.edge_right > c + s.d_x &&
         p.edge_right < s.upper;
}

}  // namespace

double tail_weight(const OutcomeParams& p, double x, double c, Smoothing smoothing) {
  if (!smoothing.sigmoid) {
    if (x < c) return x <= p.edge_left ? 1.0 : 0.0;
    return x >= p.edge_right ? 1.0 : 0.0;
  }
  const double z = x < c ? smoothing.s * (p.edge_left - x) : smoothing.s * (x - p.edge_right);
  return stats::inv_logit(z);
}

double outcome_mean(const OutcomeParams& p, double x, double c, Smoothing smoothing) {
  const auto& k = side(p, x, c);
  const double d = x - c;
  return linear(k, d) + tail_weight(p, x, c, smoothing) * trimmed(k, d);
}

double outcome_sd(const OutcomeParams& p, double x, double c) {
  double precision = 0.0;
  if (x < c)
    precision = x >= p.edge_left ? p.noise.inner_left : p.noise.outer_left;
  else
    precision = x <= p.edge_right ? p.noise.inner_right : p.noise.outer_right;
  return 1.0 / std::sqrt(precision);
}

std::pair<double, double> binary_tilde_transform(double f0, double f1) {
  if (!(f0 > 0.0 && f0 < 1.0)) throw Error("binary level must lie strictly in (0, 1)");
  return {std::log(f0 / (1.0 - f0)), f1 / (f0 * (1.0 - f0))};
}

double outcome_mean_binary(const OutcomeParams& p, double x, double c, Smoothing smoothing) {
  const auto& k = side(p, x, c);
  const double d = x - c;
  const double g = tail_weight(p, x, c, smoothing);
  const double lin = linear(k, d);
  if (g == 0.0) return lin;
  const auto [t0, t1] = binary_tilde_transform(k.level, k.slope);
  // Far tails round to exactly 0 or 1 in double; keep the mean interior.
  const double tail = std::clamp(stats::inv_logit(t0 + t1 * d + trimmed(k, d)),
                                 std::numeric_limits<double>::min(), std::nextafter(1.0, 0.0));
  return (1.0 - g) * lin + g * tail;
}

double taylor_remainder(const OutcomeCoefficients& k, double x, double c) {
  return trimmed(k, x - c);
}

Interval binary_slope_bounds(double level, double edge, double c, double epsilon) {
  const double w = edge - c;
  const double a = (1.0 - epsilon - level) / w;
  const double b = (epsilon - level) / w;
  return {std::min(a, b), std::max(a, b)};
}

double log_prior_outcome_continuous(const OutcomeParams& p, double c,
                                    const SupportBounds& support,
                                    const OutcomePriorSpec& spec) {
  if (!windows_ok(p, c, support)) return kNegInf;
  double lp = log_uniform(p.edge_left, support.lower, c - support.d_x) +
              log_uniform(p.edge_right, c + support.d_x, support.upper);
  const double sd_l = spec.coef_sd / std::sqrt(c - p.edge_left);
  const double sd_r = spec.coef_sd / std::sqrt(p.edge_right - c);
  lp += log_normal(p.left.level, spec.coef_sd) + log_normal(p.left.slope, spec.coef_sd);
  lp += log_normal(p.right.level, spec.coef_sd) + log_normal(p.right.slope, spec.coef_sd);
  lp += log_normal(p.left.quadratic, sd_l) + log_normal(p.left.cubic, sd_l);
  lp += log_normal(p.right.quadratic, sd_r) + log_normal(p.right.cubic, sd_r);
  lp += log_gamma_density(p.noise.inner_left, spec.gamma_shape, spec.gamma_rate);
  lp += log_gamma_density(p.noise.inner_right, spec.gamma_shape, spec.gamma_rate);
  if (lp == kNegInf) return kNegInf;
  lp += log_uniform(p.noise.outer_left, 0.0, p.noise.inner_left);
  lp += log_uniform(p.noise.outer_right, 0.0, p.noise.inner_right);
  if (!(p.noise.outer_left > 0.0) || !(p.noise.outer_right > 0.0)) return kNegInf;
  return lp;
}

double log_prior_outcome(const OutcomeParams& p, double c, double jump,
                         const OutcomePriorSpec& spec) {
  if (spec.kind == OutcomeKind::continuous)
    return log_prior_outcome_continuous(p, c, spec.support, spec);

  const auto& s = spec.support;
  if (!windows_ok(p, c, s)) return kNegInf;
  double lp = log_uniform(p.edge_left, s.lower, c - s.d_x) +
              log_uniform(p.edge_right, c + s.d_x, s.upper);
  const double sd_l = spec.coef_sd / std::sqrt(c - p.edge_left);
  const double sd_r = spec.coef_sd / std::sqrt(p.edge_right - c);
  lp += log_normal(p.left.quadratic, sd_l) + log_normal(p.left.cubic, sd_l);
  lp += log_normal(p.right.quadratic, sd_r) + log_normal(p.right.cubic, sd_r);

  double a = 0.0;
  double b = 1.0;
  if (spec.kind == OutcomeKind::bounded) {
    a = spec.bounds.lower;
    b = spec.bounds.upper;
    lp += log_uniform(p.left.level, a, b) + log_uniform(p.right.level, a, b);
    lp += log_normal(p.left.slope, spec.coef_sd) + log_normal(p.right.slope, spec.coef_sd);
    lp += log_gamma_density(p.noise.inner_left, spec.gamma_shape, spec.gamma_rate);
    lp += log_gamma_density(p.noise.inner_right, spec.gamma_shape, spec.gamma_rate);
    if (lp == kNegInf) return kNegInf;
    lp += log_uniform(p.noise.outer_left, 0.0, p.noise.inner_left);
    lp += log_uniform(p.noise.outer_right, 0.0, p.noise.inner_right);
    if (!(p.noise.outer_left > 0.0) || !(p.noise.outer_right > 0.0)) return kNegInf;
  } else {
    if (!(p.left.level > 0.0 && p.left.level < 1.0) ||
        !(p.right.level > 0.0 && p.right.level < 1.0))
      return kNegInf;
    const auto il = binary_slope_bounds(p.left.level, p.edge_left, c, spec.epsilon);
    const auto ir = binary_slope_bounds(p.right.level, p.edge_right, c, spec.epsilon);
    lp += log_uniform(p.left.slope, il.lo, il.hi) + log_uniform(p.right.slope, ir.lo, ir.hi);
  }
  if (lp == kNegInf) return kNegInf;

  if (spec.couple_jump && std::isfinite(jump)) {
    const double lb = std::max(spec.eta, std::abs(p.right.level - p.left.level) / (b - a));
    if (!(lb < 1.0) || jump < lb) return kNegInf;
    lp += std::log1p(-spec.eta) - std::log1p(-lb);
  }
  return lp;
}

double log_lik_outcome(const OutcomeParams& p, std::span<const double> scores,
                       std::span<const double> outcomes, double c, OutcomeKind kind,
                       Smoothing smoothing) {
  double ll = 0.0;
  if (kind == OutcomeKind::binary) {
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const double q =
          std::clamp(outcome_mean_binary(p, scores[i], c, smoothing), kProbClip, 1.0 - kProbClip);
      ll += outcomes[i] > 0.5 ? std::log(q) : std::log1p(-q);
    }
    return ll;
  }
  // Per-region precisions and log normalizers, hoisted out of the loop.
  const auto& nz = p.noise;
  const double w[4] = {nz.inner_left, nz.outer_left, nz.inner_right, nz.outer_right};
  double half_log_w[4];
  for (int k = 0; k < 4; ++k) half_log_w[k] = 0.5 * std::log(w[k]) - kLogSqrt2Pi;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double x = scores[i];
    const int region = x < c ? (x >= p.edge_left ? 0 : 1) : (x <= p.edge_right ? 2 : 3);
    const double r = outcomes[i] - outcome_mean(p, x, c, smoothing);
    ll += half_log_w[region] - 0.5 * w[region] * r * r;
  }
  return ll;
}

double log_lik_outcome(const OutcomeParams& p, const Dataset& data, double c,
                       Smoothing smoothing) {
  return log_lik_outcome(p, data.scores, data.outcomes, c, data.outcome_kind, smoothing);
}

OutcomeParams sample_outcome_prior(double c, const OutcomePriorSpec& spec, Rng& rng) {
  const auto& s = spec.support;
  if (!(c - s.d_x > s.lower) || !(c + s.d_x < s.upper))
    throw Error("cutoff leaves no room for the outcome windows");
  OutcomeParams p;
  p.edge_left = rng.uniform(s.lower, c - s.d_x);
  p.edge_right = rng.uniform(c + s.d_x, s.upper);
  const double sd_l = spec.coef_sd / std::sqrt(c - p.edge_left);
  const double sd_r = spec.coef_sd / std::sqrt(p.edge_right - c);
  p.left.quadratic = rng.normal(0.0, sd_l);
  p.left.cubic = rng.normal(0.0, sd_l);
  p.right.quadratic = rng.normal(0.0, sd_r);
  p.right.cubic = rng.normal(0.0, sd_r);
  switch (spec.kind) {
    case OutcomeKind::continuous:
    case OutcomeKind::bounded: {
      if (spec.kind == OutcomeKind::bounded) {
        p.left.level = rng.uniform(spec.bounds.lower, spec.bounds.upper);
        p.right.level = rng.uniform(spec.bounds.lower, spec.bounds.upper);
      } else {
        p.left.level = rng.normal(0.0, spec.coef_sd);
        p.right.level = rng.normal(0.0, spec.coef_sd);
      }
      p.left.slope = rng.normal(0.0, spec.coef_sd);
      p.right.slope = rng.normal(0.0, spec.coef_sd);
      p.noise.inner_left = rng.gamma(spec.gamma_shape, spec.gamma_rate);
      p.noise.inner_right = rng.gamma(spec.gamma_shape, spec.gamma_rate);
      p.noise.outer_left = p.noise.inner_left * (1.0 - rng.uniform());
      p.noise.outer_right = p.noise.inner_right * (1.0 - rng.uniform());
      break;
    }
    case OutcomeKind::binary: {
      p.left.level = 1.0 - rng.uniform();
      p.right.level = 1.0 - rng.uniform();
      if (p.left.level >= 1.0) p.left.level = 0.5;
      if (p.right.level >= 1.0) p.right.level = 0.5;
      const auto il = binary_slope_bounds(p.left.level, p.edge_left, c, spec.epsilon);
      const auto ir = binary_slope_bounds(p.right.level, p.edge_right, c, spec.epsilon);
      p.left.slope = rng.uniform(il.lo, il.hi);
      p.right.slope = rng.uniform(ir.lo, ir.hi);
      break;
    }
  }
  return p;
}

}  // namespace lotta
